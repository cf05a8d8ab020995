// End-to-end tests for the `path` binary (located via PATH_CLI_BINARY).
// Each command runs as a real subprocess; stdout/stderr/exit codes are part
// of the contract under test.
#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "path/common.hpp"
#include "path/config.hpp"
#include "path/corpus.hpp"
#include "path/evaluation.hpp"
#include "path/reranker.hpp"
#include "support/synthetic_task.hpp"
#include "support/temp_dir.hpp"

using namespace path;
using testsupport::TempDir;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args, const TempDir& io) {
    static int counter = 0;
    const std::string out_path = io.file("stdout_" + std::to_string(counter) + ".txt");
    const std::string err_path = io.file("stderr_" + std::to_string(counter) + ".txt");
    ++counter;

    std::string cmd = PATH_CLI_BINARY;
    for (const std::string& arg : args) cmd += " '" + arg + "'";
    cmd += " >" + out_path + " 2>" + err_path;
    const int raw = std::system(cmd.c_str());

    CliResult result;
    result.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    result.out = read_file(out_path);
    result.err = read_file(err_path);
    return result;
}

// The small synthetic task written out as the on-disk fixtures the CLI
// consumes: corpus JSONL, TREC qrels + query sidecar, a mock-LM script, and
// a config file.
struct CliFixture {
    TempDir dir{"cli"};
    testsupport::SyntheticTask task;
    std::string corpus_path = dir.file("corpus.jsonl");
    std::string qrels_path = dir.file("qrels.txt");
    std::string queries_path = dir.file("queries.jsonl");
    std::string script_path = dir.file("mock_lm.json");
    std::string config_path = dir.file("run.cfg");

    CliFixture() {
        testsupport::TaskConfig cfg;
        cfg.doc_count = 400;
        cfg.topic_count = 4;
        cfg.validation_queries = 6;
        cfg.mixed_test_queries = 4;
        cfg.hard_test_queries = 4;
        task = testsupport::make_task(cfg);

        save_corpus(task.corpus, corpus_path);
        save_judgments(task.validation, qrels_path, queries_path);
        write_file(script_path, script_json().dump(2) + "\n");
        write_file(config_path,
                   "# small-run knobs shared by the CLI tests\n"
                   "[prompt]\n"
                   "instruction = \"" + task.instruction_bad + "\"\n"
                   "\n"
                   "[path]\n"
                   "trials = 2\n"
                   "dprime_size = 40\n"
                   "\n"
                   "[mining]\n"
                   "m = 4\n"
                   "window_lo = 2\n"
                   "window_hi = 30\n");
    }

    nlohmann::json script_json() const {
        auto mode_name = [](MockMode mode) {
            switch (mode) {
                case MockMode::Fixed: return "fixed";
                case MockMode::EchoHead: return "echo_head";
                case MockMode::JunkHash: return "junk_hash";
            }
            return "echo_head";
        };
        nlohmann::json rules = nlohmann::json::array();
        for (const MockRule& rule : task.script.rules) {
            nlohmann::json j = {{"contains", rule.contains},
                                {"mode", mode_name(rule.mode)},
                                {"k", rule.k}};
            if (!rule.text.empty()) j["text"] = rule.text;
            rules.push_back(j);
        }
        return {{"rules", rules}};
    }

    std::vector<std::string> data_flags() const {
        return {"--corpus", corpus_path, "--qrels", qrels_path, "--queries", queries_path};
    }

    // Rebuilds what the CLI builds internally, for oracle comparisons.
    Bm25Index local_index() const { return Bm25Index::build(load_corpus(corpus_path), {}, {}); }
};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    TempDir io("cli_usage");
    CHECK(run_cli({}, io).code == 2);
    CHECK(run_cli({"index", "--bogus-flag"}, io).code == 2);
    CHECK(run_cli({"no-such-command"}, io).code == 2);

    CliResult help = run_cli({"--help"}, io);
    CHECK(help.code == 0);
    CHECK(help.out.find("optimize") != std::string::npos);
    CHECK(help.out.find("baseline") != std::string::npos);
}

TEST_CASE("index builds, persists, and reports") {
    CliFixture fx;
    const std::string out_dir = fx.dir.file("index_out");
    CliResult r = run_cli({"index", "--corpus", fx.corpus_path, "--out-dir", out_dir}, fx.dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("indexed 400 documents") != std::string::npos);

    Bm25Index loaded = Bm25Index::load(out_dir + "/index.json");
    CHECK(loaded == fx.local_index());

    nlohmann::json manifest = nlohmann::json::parse(read_file(out_dir + "/index_manifest.json"));
    CHECK(manifest.at("command") == "index");
    CHECK(manifest.at("doc_count").get<size_t>() == 400);
    CHECK(manifest.at("inputs").at("corpus").at("digest").get<std::string>() ==
          digest_hex(read_file(fx.corpus_path)));

    SUBCASE("token-free documents are flagged on stderr") {
        TempDir scratch("cli_zero");
        Corpus odd({{"d1", "normal words"}, {"d2", "?!?"}}, "odd");
        save_corpus(odd, scratch.file("odd.jsonl"));
        CliResult warn = run_cli({"index", "--corpus", scratch.file("odd.jsonl"), "--out-dir",
                                  scratch.file("out")},
                                 fx.dir);
        CHECK(warn.code == 0);
        CHECK(warn.err.find("\"d2\"") != std::string::npos);
        CHECK(warn.err.find("zero tokens") != std::string::npos);
    }
    SUBCASE("a missing corpus is a configuration error") {
        CliResult bad = run_cli({"index", "--out-dir", fx.dir.file("nope")}, fx.dir);
        CHECK(bad.code == 2);
        CHECK(bad.err.find("config error") != std::string::npos);
    }
}

TEST_CASE("generate emits deterministic triplets") {
    CliFixture fx;
    const std::string out1 = fx.dir.file("gen1");
    const std::string out2 = fx.dir.file("gen2");
    const std::vector<std::string> base = {
        "generate", "--corpus",  fx.corpus_path, "--config", fx.config_path,
        "--mock-lm", fx.script_path, "--seed", "5"};

    CliResult r1 = run_cli(concat(base, {"--out-dir", out1}), fx.dir);
    REQUIRE(r1.code == 0);
    CHECK(r1.out.find("generated 40 queries from 40 passages") != std::string::npos);

    CliResult r2 = run_cli(concat(base, {"--out-dir", out2}), fx.dir);
    REQUIRE(r2.code == 0);
    CHECK(read_file(out1 + "/triplets.tsv") == read_file(out2 + "/triplets.tsv"));
    CHECK(read_file(out1 + "/lm_requests.jsonl") == read_file(out2 + "/lm_requests.jsonl"));

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(out1 + "/generate_manifest.json"));
    CHECK(manifest.at("generation").at("generated").get<size_t>() == 40);
    CHECK(manifest.at("triplets_digest").get<std::string>() ==
          digest_hex(read_file(out1 + "/triplets.tsv")));

    SUBCASE("the seed matters") {
        const std::string out3 = fx.dir.file("gen3");
        CliResult r3 = run_cli({"generate", "--corpus", fx.corpus_path, "--config",
                                fx.config_path, "--mock-lm", fx.script_path, "--seed", "6",
                                "--out-dir", out3},
                               fx.dir);
        REQUIRE(r3.code == 0);
        CHECK(read_file(out1 + "/triplets.tsv") != read_file(out3 + "/triplets.tsv"));
    }
    SUBCASE("no corpus anywhere is a configuration error") {
        CliResult bad = run_cli({"generate", "--mock-lm", fx.script_path, "--out-dir",
                                 fx.dir.file("gen_bad")},
                                fx.dir);
        CHECK(bad.code == 2);
        CHECK(bad.err.find("no corpus given") != std::string::npos);
    }
}

TEST_CASE("train consumes triplets and persists a checkpoint") {
    CliFixture fx;
    const std::string gen_dir = fx.dir.file("gen");
    REQUIRE(run_cli({"generate", "--corpus", fx.corpus_path, "--config", fx.config_path,
                     "--mock-lm", fx.script_path, "--seed", "5", "--out-dir", gen_dir},
                    fx.dir)
                .code == 0);

    const std::string train_dir = fx.dir.file("train");
    CliResult r = run_cli(concat({"train", "--config", fx.config_path, "--seed", "5",
                                  "--triplets", gen_dir + "/triplets.tsv", "--out-dir",
                                  train_dir},
                                 fx.data_flags()),
                          fx.dir);
    REQUIRE(r.code == 0);

    RerankerModel model = load_checkpoint(train_dir + "/checkpoint.json");
    CHECK(model.meta.steps == 80);  // 40 triplet groups, batch 1, 2 epochs
    CHECK(model.meta.source == "triplets");

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(train_dir + "/train_manifest.json"));
    CHECK(manifest.at("steps").get<uint64_t>() == 80);
    CHECK(manifest.at("selected_score").get<double>() == model.meta.selected_score);

    SUBCASE("the triplet file is mandatory") {
        CliResult bad =
            run_cli(concat({"train", "--out-dir", fx.dir.file("t2")}, fx.data_flags()), fx.dir);
        CHECK(bad.code == 2);
        CHECK(bad.err.find("--triplets") != std::string::npos);
    }
}

TEST_CASE("eval scores checkpoints and run files alike") {
    CliFixture fx;
    const std::string gen_dir = fx.dir.file("gen");
    const std::string train_dir = fx.dir.file("train");
    REQUIRE(run_cli({"generate", "--corpus", fx.corpus_path, "--config", fx.config_path,
                     "--mock-lm", fx.script_path, "--seed", "5", "--out-dir", gen_dir},
                    fx.dir)
                .code == 0);
    REQUIRE(run_cli(concat({"train", "--config", fx.config_path, "--seed", "5", "--triplets",
                            gen_dir + "/triplets.tsv", "--out-dir", train_dir},
                           fx.data_flags()),
                    fx.dir)
                .code == 0);

    SUBCASE("checkpoint evaluation matches the in-process oracle") {
        const std::string eval_dir = fx.dir.file("eval_ckpt");
        CliResult r = run_cli(concat({"eval", "--checkpoint", train_dir + "/checkpoint.json",
                                      "--out-dir", eval_dir},
                                     fx.data_flags()),
                              fx.dir);
        REQUIRE(r.code == 0);
        CHECK(r.out.find("mean ndcg@10") != std::string::npos);

        Bm25Index index = fx.local_index();
        JudgmentSet judgments =
            load_judgments(fx.qrels_path, fx.queries_path, load_corpus(fx.corpus_path));
        EvalReport expected = avg_ndcg(load_checkpoint(train_dir + "/checkpoint.json"),
                                       judgments, index, EvalConfig{});
        nlohmann::json report =
            nlohmann::json::parse(read_file(eval_dir + "/eval_report.json"));
        CHECK(report.at("mean_ndcg").get<double>() ==
              doctest::Approx(expected.mean_ndcg).epsilon(1e-12));
    }
    SUBCASE("run-file evaluation matches the in-process oracle") {
        Bm25Index index = fx.local_index();
        JudgmentSet judgments =
            load_judgments(fx.qrels_path, fx.queries_path, load_corpus(fx.corpus_path));
        std::vector<RankedList> runs;
        for (const std::string& qid : judgments.query_ids()) {
            runs.push_back(index.retrieve(judgments.text_of(qid), 50, qid));
        }
        const std::string run_path = fx.dir.file("bm25.run");
        write_run(runs, run_path, "bm25");

        const std::string eval_dir = fx.dir.file("eval_run");
        CliResult r = run_cli(concat({"eval", "--run", run_path, "--out-dir", eval_dir},
                                     fx.data_flags()),
                              fx.dir);
        REQUIRE(r.code == 0);

        EvalReport expected = eval_run(runs, judgments, EvalConfig{});
        nlohmann::json report =
            nlohmann::json::parse(read_file(eval_dir + "/eval_report.json"));
        CHECK(report.at("mean_ndcg").get<double>() ==
              doctest::Approx(expected.mean_ndcg).epsilon(1e-12));
    }
    SUBCASE("exactly one scoring source must be given") {
        CliResult neither =
            run_cli(concat({"eval", "--out-dir", fx.dir.file("e1")}, fx.data_flags()), fx.dir);
        CHECK(neither.code == 2);
        CliResult both = run_cli(concat({"eval", "--checkpoint",
                                         train_dir + "/checkpoint.json", "--run",
                                         fx.dir.file("missing.run"), "--out-dir",
                                         fx.dir.file("e2")},
                                        fx.data_flags()),
                                 fx.dir);
        CHECK(both.code == 2);
        CHECK(both.err.find("exactly one") != std::string::npos);
    }
    SUBCASE("an NDCG cutoff beyond the rerank depth is rejected") {
        const std::string bad_cfg = fx.dir.file("bad_eval.cfg");
        write_file(bad_cfg, "[eval]\nk = 60\n");
        CliResult r = run_cli(concat({"eval", "--config", bad_cfg, "--checkpoint",
                                      train_dir + "/checkpoint.json", "--out-dir",
                                      fx.dir.file("e3")},
                                     fx.data_flags()),
                              fx.dir);
        CHECK(r.code == 2);
    }
    SUBCASE("a missing checkpoint file is a runtime error") {
        CliResult r = run_cli(concat({"eval", "--checkpoint", fx.dir.file("ghost.json"),
                                      "--out-dir", fx.dir.file("e4")},
                                     fx.data_flags()),
                              fx.dir);
        CHECK(r.code == 1);
    }
}

TEST_CASE("baseline trains directly on the judgments") {
    CliFixture fx;
    const std::string out_dir = fx.dir.file("baseline");
    CliResult r = run_cli(concat({"baseline", "--config", fx.config_path, "--seed", "5",
                                  "--out-dir", out_dir},
                                 fx.data_flags()),
                          fx.dir);
    REQUIRE(r.code == 0);

    RerankerModel model = load_checkpoint(out_dir + "/checkpoint.json");
    CHECK(model.meta.source == "judgments");
    CHECK(model.meta.steps == 60);  // 6 positive queries, batch 1, 10 epochs
    CHECK(model.meta.selected_step == model.meta.steps);

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(out_dir + "/baseline_manifest.json"));
    CHECK(manifest.at("final_score").get<double>() == model.meta.selected_score);
}

TEST_CASE("optimize runs the full loop against the mock endpoint") {
    CliFixture fx;
    const std::string out_dir = fx.dir.file("opt");
    const std::vector<std::string> cmd = concat({"optimize", "--config", fx.config_path,
                                                 "--mock-lm", fx.script_path, "--seed", "7",
                                                 "--jobs", "2", "--out-dir", out_dir},
                                                fx.data_flags());

    CliResult r = run_cli(cmd, fx.dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("selected attempt 1") != std::string::npos);
    CHECK(r.out.find(fx.task.instruction_good) != std::string::npos);

    nlohmann::json manifest = nlohmann::json::parse(read_file(out_dir + "/manifest.json"));
    CHECK(manifest.at("selected_index").get<size_t>() == 1);
    CHECK(manifest.at("attempts").size() == 3);  // initial + 2 trials
    CHECK(file_exists(out_dir + "/attempt_1/checkpoint.json"));

    nlohmann::json wrapper =
        nlohmann::json::parse(read_file(out_dir + "/optimize_manifest.json"));
    CHECK(wrapper.at("selected_index").get<size_t>() == 1);
    CHECK(wrapper.at("outputs").at("selected_checkpoint").get<std::string>() ==
          "attempt_1/checkpoint.json");

    SUBCASE("re-running resumes from the ledger instead of redoing work") {
        const std::string ledger_before = read_file(out_dir + "/ledger.jsonl");
        CliResult again = run_cli(cmd, fx.dir);
        REQUIRE(again.code == 0);
        CHECK(again.out.find("selected attempt 1") != std::string::npos);
        CHECK(read_file(out_dir + "/ledger.jsonl") == ledger_before);
    }
}
