#include "path/cli.hpp"

#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "path/common.hpp"
#include "path/config.hpp"
#include "path/optimizer.hpp"
#include "path/rng.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace path {

namespace {

struct Args {
    std::string config_path;
    std::string mock_lm;
    std::string out_dir = "path_out";
    std::optional<uint64_t> seed;
    std::optional<size_t> jobs;

    std::string corpus;
    std::string qrels;
    std::string queries;
    std::string index_file;
    std::string triplets;
    std::string checkpoint;
    std::string run_file;
};

RunConfig resolve_config(const Args& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.jobs) cfg.jobs = *args.jobs;
    if (!args.corpus.empty()) cfg.corpus_path = args.corpus;
    if (!args.qrels.empty()) cfg.qrels_path = args.qrels;
    if (!args.queries.empty()) cfg.queries_path = args.queries;
    cfg.resolve();
    return cfg;
}

struct DataBundle {
    Corpus corpus;
    Bm25Index index;
};

// Either loads a prebuilt index (--index) or builds one from the corpus file.
DataBundle load_data(const Args& args, const RunConfig& cfg) {
    DataBundle data;
    if (!args.index_file.empty()) {
        data.index = Bm25Index::load(args.index_file);
        data.corpus = Corpus(data.index.docs(), data.index.corpus_digest());
        return data;
    }
    if (cfg.corpus_path.empty()) {
        throw ConfigError("no corpus given: pass --corpus/--index or set corpus.path");
    }
    data.corpus = load_corpus(cfg.corpus_path, cfg.corpus_format);
    data.index = Bm25Index::build(data.corpus, cfg.tokenizer, cfg.bm25);
    return data;
}

JudgmentSet load_judgment_set(const RunConfig& cfg, const Corpus& corpus) {
    if (cfg.qrels_path.empty() || cfg.queries_path.empty()) {
        throw ConfigError("judgments required: pass --qrels and --queries "
                          "or set corpus.qrels / corpus.queries");
    }
    return load_judgments(cfg.qrels_path, cfg.queries_path, corpus, cfg.positive_floor);
}

std::unique_ptr<LmClient> make_lm(const Args& args, const RunConfig& cfg) {
    if (!args.mock_lm.empty()) {
        return std::make_unique<MockLm>(load_mock_script(args.mock_lm));
    }
    return std::make_unique<HttpLm>(cfg.http);
}

nlohmann::json input_entry(const std::string& file_path) {
    return {{"path", file_path}, {"digest", digest_hex(read_file(file_path))}};
}

void write_command_manifest(const std::string& out_dir,
                            const std::string& command,
                            const RunConfig& cfg,
                            nlohmann::json inputs,
                            nlohmann::json outputs,
                            nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["command"] = command;
    manifest["config"] = cfg.to_json();
    manifest["inputs"] = std::move(inputs);
    manifest["outputs"] = std::move(outputs);
    for (auto& [key, value] : extra.items()) manifest[key] = value;
    write_file(out_dir + "/" + command + "_manifest.json", manifest.dump(2) + "\n");
}

void cmd_index(const Args& args) {
    RunConfig cfg = resolve_config(args);
    if (cfg.corpus_path.empty()) {
        throw ConfigError("index: pass --corpus or set corpus.path");
    }
    Corpus corpus = load_corpus(cfg.corpus_path, cfg.corpus_format);
    Bm25Index index = Bm25Index::build(corpus, cfg.tokenizer, cfg.bm25);
    ensure_dir(args.out_dir);
    index.save(args.out_dir + "/index.json");
    for (const std::string& doc_id : index.zero_length_doc_ids()) {
        std::fprintf(stderr, "warning: document \"%s\" tokenizes to zero tokens\n",
                     doc_id.c_str());
    }
    write_command_manifest(args.out_dir, "index", cfg,
                           {{"corpus", input_entry(cfg.corpus_path)}},
                           {{"index", "index.json"}},
                           {{"doc_count", index.doc_count()},
                            {"avg_doc_length", index.avg_doc_length()},
                            {"zero_length_doc_ids", index.zero_length_doc_ids()}});
    std::printf("indexed %zu documents (avg length %.3f) -> %s/index.json\n", index.doc_count(),
                index.avg_doc_length(), args.out_dir.c_str());
}

void cmd_generate(const Args& args) {
    RunConfig cfg = resolve_config(args);
    DataBundle data = load_data(args, cfg);
    std::unique_ptr<LmClient> lm = make_lm(args, cfg);
    ensure_dir(args.out_dir);
    RequestLog log(args.out_dir + "/lm_requests.jsonl", lm->deterministic());

    Rng dprime_rng(Rng::derive_seed(cfg.seed, fnv1a64("dprime")));
    const std::vector<Document>& docs = data.index.docs();
    const size_t sample_size = std::min(cfg.path.dprime_size, docs.size());
    std::vector<Document> passages;
    for (size_t i : dprime_rng.sample_indices(docs.size(), sample_size)) {
        passages.push_back(docs[i]);
    }

    GenerationResult gen =
        generate_queries(cfg.prompt, passages, *lm, cfg.generation_request(), &log, cfg.jobs);
    TripletResult triplets = build_triplets(gen.queries, data.index, cfg.mining,
                                            Rng::derive_seed(cfg.seed, fnv1a64("mining")));
    write_triplets(triplets.triplets, args.out_dir + "/triplets.tsv");

    nlohmann::json inputs;
    if (!args.index_file.empty()) {
        inputs["index"] = input_entry(args.index_file);
    } else {
        inputs["corpus"] = input_entry(cfg.corpus_path);
    }
    write_command_manifest(
        args.out_dir, "generate", cfg, std::move(inputs),
        {{"triplets", "triplets.tsv"}, {"lm_requests", "lm_requests.jsonl"}},
        {{"generation",
          {{"requested", gen.summary.requested},
           {"generated", gen.summary.generated},
           {"dropped", gen.summary.dropped},
           {"fallback_parses", gen.summary.fallback_parses}}},
         {"mining",
          {{"window_extended", triplets.counters.window_extended},
           {"random_filled", triplets.counters.random_filled}}},
         {"triplets_digest", digest_hex(read_file(args.out_dir + "/triplets.tsv"))}});
    std::printf("generated %zu queries from %zu passages (%zu dropped, %zu fallback parses); "
                "%zu triplets -> %s/triplets.tsv\n",
                gen.summary.generated, gen.summary.requested, gen.summary.dropped,
                gen.summary.fallback_parses, triplets.triplets.size(), args.out_dir.c_str());
}

void cmd_train(const Args& args) {
    RunConfig cfg = resolve_config(args);
    if (args.triplets.empty()) throw ConfigError("train: pass --triplets <tsv>");
    DataBundle data = load_data(args, cfg);
    JudgmentSet validation = load_judgment_set(cfg, data.corpus);
    std::vector<TrainingTriplet> triplets = read_triplets(args.triplets);

    RerankerModel model =
        train(init_model(cfg.model, Rng::derive_seed(cfg.seed, fnv1a64("model-init"))), triplets,
              cfg.trainer, validation, data.index, cfg.eval);
    ensure_dir(args.out_dir);
    save_checkpoint(model, args.out_dir + "/checkpoint.json");

    write_command_manifest(args.out_dir, "train", cfg,
                           {{"triplets", input_entry(args.triplets)},
                            {"qrels", input_entry(cfg.qrels_path)},
                            {"queries", input_entry(cfg.queries_path)}},
                           {{"checkpoint", "checkpoint.json"}},
                           {{"steps", model.meta.steps},
                            {"selected_step", model.meta.selected_step},
                            {"selected_score", model.meta.selected_score}});
    std::printf("trained %llu steps; selected step %llu (validation ndcg %.6f) -> "
                "%s/checkpoint.json\n",
                static_cast<unsigned long long>(model.meta.steps),
                static_cast<unsigned long long>(model.meta.selected_step),
                model.meta.selected_score, args.out_dir.c_str());
}

void cmd_eval(const Args& args) {
    RunConfig cfg = resolve_config(args);
    if (args.checkpoint.empty() == args.run_file.empty()) {
        throw ConfigError("eval: pass exactly one of --checkpoint or --run");
    }
    DataBundle data = load_data(args, cfg);
    JudgmentSet judgments = load_judgment_set(cfg, data.corpus);

    EvalReport report;
    nlohmann::json inputs = {{"qrels", input_entry(cfg.qrels_path)},
                             {"queries", input_entry(cfg.queries_path)}};
    if (!args.checkpoint.empty()) {
        RerankerModel model = load_checkpoint(args.checkpoint);
        report = avg_ndcg(model, judgments, data.index, cfg.eval);
        inputs["checkpoint"] = input_entry(args.checkpoint);
    } else {
        report = eval_run(read_run(args.run_file), judgments, cfg.eval);
        inputs["run"] = input_entry(args.run_file);
    }
    ensure_dir(args.out_dir);
    report.save(args.out_dir + "/eval_report.json");
    write_command_manifest(args.out_dir, "eval", cfg, std::move(inputs),
                           {{"report", "eval_report.json"}},
                           {{"mean_ndcg", report.mean_ndcg}});
    std::printf("mean ndcg@%zu = %.6f over %zu queries -> %s/eval_report.json\n", cfg.eval.k,
                report.mean_ndcg, report.per_query.size(), args.out_dir.c_str());
}

void cmd_optimize(const Args& args) {
    RunConfig cfg = resolve_config(args);
    DataBundle data = load_data(args, cfg);
    JudgmentSet judgments = load_judgment_set(cfg, data.corpus);
    std::unique_ptr<LmClient> lm = make_lm(args, cfg);

    PathModuleConfigs modules;
    modules.mining = cfg.mining;
    modules.trainer = cfg.trainer;
    modules.eval = cfg.eval;
    modules.model = cfg.model;
    modules.generation_request = cfg.generation_request();
    modules.proposal_request = cfg.proposal_request();

    PathResult result =
        run_path(data.index, judgments, cfg.prompt, cfg.path, modules, *lm, args.out_dir);

    nlohmann::json inputs = {{"qrels", input_entry(cfg.qrels_path)},
                             {"queries", input_entry(cfg.queries_path)}};
    if (!args.index_file.empty()) {
        inputs["index"] = input_entry(args.index_file);
    } else {
        inputs["corpus"] = input_entry(cfg.corpus_path);
    }
    write_command_manifest(args.out_dir, "optimize", cfg, std::move(inputs),
                           {{"run_manifest", "manifest.json"},
                            {"ledger", "ledger.jsonl"},
                            {"selected_checkpoint",
                             result.attempts[result.selected_index].checkpoint_path}},
                           {{"selected_index", result.selected_index},
                            {"selected_score", result.selected.meta.selected_score}});
    std::printf("selected attempt %zu (validation ndcg %.6f), instruction: %s\n",
                result.selected_index, result.selected.meta.selected_score,
                result.attempts[result.selected_index].prompt.instruction.c_str());
}

void cmd_baseline(const Args& args) {
    RunConfig cfg = resolve_config(args);
    DataBundle data = load_data(args, cfg);
    JudgmentSet judgments = load_judgment_set(cfg, data.corpus);

    TrainerConfig trainer = cfg.trainer;
    trainer.seed = Rng::derive_seed(cfg.seed, fnv1a64("baseline"));
    RerankerModel model =
        train_on_judgments(judgments, cfg.model, trainer, cfg.mining, data.index, cfg.eval);
    ensure_dir(args.out_dir);
    save_checkpoint(model, args.out_dir + "/checkpoint.json");
    write_command_manifest(args.out_dir, "baseline", cfg,
                           {{"qrels", input_entry(cfg.qrels_path)},
                            {"queries", input_entry(cfg.queries_path)}},
                           {{"checkpoint", "checkpoint.json"}},
                           {{"steps", model.meta.steps},
                            {"final_score", model.meta.selected_score}});
    std::printf("baseline trained %llu steps (final validation ndcg %.6f) -> "
                "%s/checkpoint.json\n",
                static_cast<unsigned long long>(model.meta.steps), model.meta.selected_score,
                args.out_dir.c_str());
}

void add_common_flags(CLI::App* cmd, Args& args) {
    cmd->add_option("--config", args.config_path, "Config file (TOML-style subset)");
    cmd->add_option("--seed", args.seed, "Master seed (overrides config)");
    cmd->add_option("--jobs", args.jobs, "Concurrent LM requests (overrides config)");
    cmd->add_option("--mock-lm", args.mock_lm, "Mock LM script; replaces the HTTP endpoint");
    cmd->add_option("--out-dir", args.out_dir, "Run directory for outputs and manifests");
    cmd->add_option("--corpus", args.corpus, "Corpus JSONL (overrides config)");
    cmd->add_option("--qrels", args.qrels, "TREC qrels file (overrides config)");
    cmd->add_option("--queries", args.queries, "Query-text sidecar JSONL (overrides config)");
    cmd->add_option("--index", args.index_file, "Prebuilt index file (skips corpus build)");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"PATH: prompt-optimized synthetic training for pointwise rerankers"};
    app.require_subcommand(1);
    Args args;

    CLI::App* index = app.add_subcommand("index", "Build and persist a BM25 index");
    add_common_flags(index, args);

    CLI::App* generate =
        app.add_subcommand("generate", "Generate synthetic queries and training triplets");
    add_common_flags(generate, args);

    CLI::App* train_cmd = app.add_subcommand("train", "Train a reranker on a triplet file");
    add_common_flags(train_cmd, args);
    train_cmd->add_option("--triplets", args.triplets, "Triplet TSV to train on");

    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or run file");
    add_common_flags(eval_cmd, args);
    eval_cmd->add_option("--checkpoint", args.checkpoint, "Reranker checkpoint to evaluate");
    eval_cmd->add_option("--run", args.run_file, "TREC run file to evaluate");

    CLI::App* optimize =
        app.add_subcommand("optimize", "Full prompt-optimization loop over trials");
    add_common_flags(optimize, args);

    CLI::App* baseline =
        app.add_subcommand("baseline", "Train directly on the relevance judgments");
    add_common_flags(baseline, args);

    try {
        app.parse(argc, argv);
        if (index->parsed()) cmd_index(args);
        if (generate->parsed()) cmd_generate(args);
        if (train_cmd->parsed()) cmd_train(args);
        if (eval_cmd->parsed()) cmd_eval(args);
        if (optimize->parsed()) cmd_optimize(args);
        if (baseline->parsed()) cmd_baseline(args);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace path
