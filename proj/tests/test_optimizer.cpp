#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "path/common.hpp"
#include "path/optimizer.hpp"
#include "support/synthetic_task.hpp"
#include "support/temp_dir.hpp"

using namespace path;
using testsupport::TempDir;

namespace {

// A task small enough for unit tests: four topics, 400 documents, a handful
// of judged queries per split.
testsupport::SyntheticTask small_task() {
    testsupport::TaskConfig cfg;
    cfg.doc_count = 400;
    cfg.topic_count = 4;
    cfg.validation_queries = 6;
    cfg.mixed_test_queries = 4;
    cfg.hard_test_queries = 4;
    return testsupport::make_task(cfg);
}

PathConfig small_path_config() {
    PathConfig cfg;
    cfg.trials = 3;
    cfg.depth = 1;
    cfg.include_initial = true;
    cfg.dprime_size = 60;
    cfg.seed = 7;
    cfg.jobs = 2;
    return cfg;
}

PathModuleConfigs small_modules() {
    PathModuleConfigs modules;
    modules.mining = MiningConfig{4, 2, 30};
    return modules;
}

// Counts LM traffic so resume tests can prove that completed attempts are
// not re-run.
class CountingLm final : public LmClient {
public:
    explicit CountingLm(MockLmScript script) : inner_(std::move(script)) {}
    LmResponse complete(const LmRequest& request) override {
        ++calls_;
        return inner_.complete(request);
    }
    bool deterministic() const override { return true; }
    size_t calls() const { return calls_; }

private:
    MockLm inner_;
    size_t calls_ = 0;
};

// Collects the user message of every proposal request, keyed by attempt
// index, from a run's request log.
std::map<size_t, std::string> proposal_prompts(const std::string& log_path) {
    std::map<size_t, std::string> out;
    std::istringstream in(read_file(log_path));
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.at("parse_status").get<std::string>() != "proposal") continue;
        const std::string passage_id = j.at("passage_id").get<std::string>();
        const size_t index = std::stoul(passage_id.substr(passage_id.find(':') + 1));
        out[index] = j.at("prompt").back().at("content").get<std::string>();
    }
    return out;
}

}  // namespace

TEST_CASE("optimizer configuration is validated") {
    PathConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.attempt_count() == 11);  // 10 trials + the initial instruction
    cfg.include_initial = false;
    CHECK(cfg.attempt_count() == 10);

    cfg = PathConfig{};
    cfg.trials = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = PathConfig{};
    cfg.depth = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = PathConfig{};
    cfg.depth = 2;
    cfg.breadth = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.breadth = 20;  // exceeds the 10-trial budget
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.depth = 1;  // breadth is a depth-2 knob only
    CHECK_NOTHROW(cfg.validate());
    cfg = PathConfig{};
    cfg.dprime_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = PathConfig{};
    cfg.jobs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("meta-prompt wording is stable") {
    SUBCASE("depth 1 shows the current instruction") {
        PromptTemplate current;
        current.instruction = "Write a question.";
        CHECK(depth1_meta_prompt(current) ==
              "Here is the current instruction for generating a search query from a "
              "passage:\n\n"
              "Instruction: Write a question.\n\n"
              "Write a new instruction that leads to higher accuracy. "
              "Respond with only the instruction text.");
    }
    SUBCASE("depth 2 lists scored attempts ascending, best last") {
        auto attempt = [](bool ok, double score, const char* text) {
            AttemptRecord a;
            a.ok = ok;
            a.score = score;
            a.prompt.instruction = text;
            return a;
        };
        std::vector<AttemptRecord> ledger = {
            attempt(true, 0.8, "B"),
            attempt(false, 0.9, "X"),  // failed: excluded even with a high score
            attempt(true, 0.3, "A"),
            attempt(true, 0.5, "C"),
        };
        CHECK(depth2_meta_prompt(ledger) ==
              "Here are previous instructions for generating a search query from a "
              "passage, with their validation scores (higher is better):\n\n"
              "Instruction #1 (score 0.300): A\n"
              "Instruction #2 (score 0.500): C\n"
              "Instruction #3 (score 0.800): B\n\n"
              "Write a new instruction that leads to higher accuracy. "
              "Respond with only the instruction text.");
    }
    SUBCASE("the proposal system prompt is fixed") {
        CHECK(std::string(kProposalSystemPrompt) ==
              "You optimize instructions for a system that writes search queries from "
              "passages.");
    }
}

TEST_CASE("instruction proposals") {
    PromptTemplate initial;
    initial.instruction = "Ask something.";
    initial.input_field_name = "Snippet";
    initial.output_prefix = "Q:";
    initial.cot_enabled = false;
    LmRequest defaults;

    SUBCASE("the proposed instruction replaces only the instruction field") {
        MockLmScript script;
        script.rules = {{"Write a new instruction", MockMode::Fixed, 0, "Copy the title."}};
        MockLm lm(script);
        PromptTemplate proposed = propose_prompt_depth1(initial, lm, defaults, nullptr, 1);
        CHECK(proposed.instruction == "Copy the title.");
        CHECK(proposed.input_field_name == "Snippet");
        CHECK(proposed.output_prefix == "Q:");
        CHECK(proposed.cot_enabled == false);
    }
    SUBCASE("surrounding quotes are stripped") {
        MockLmScript script;
        script.rules = {
            {"Write a new instruction", MockMode::Fixed, 0, "\"Quote the headline.\"  "}};
        MockLm lm(script);
        CHECK(propose_prompt_depth1(initial, lm, defaults, nullptr, 1).instruction ==
              "Quote the headline.");
    }
    SUBCASE("an empty proposal is retried once") {
        class FlakyProposer final : public LmClient {
        public:
            LmResponse complete(const LmRequest&) override {
                ++calls_;
                LmResponse r;
                r.text = calls_ == 1 ? "   " : "Lead with the main entity.";
                return r;
            }
            bool deterministic() const override { return true; }
            size_t calls_ = 0;
        };
        FlakyProposer lm;
        PromptTemplate proposed = propose_prompt_depth1(initial, lm, defaults, nullptr, 3);
        CHECK(proposed.instruction == "Lead with the main entity.");
        CHECK(lm.calls_ == 2);
    }
    SUBCASE("two empty proposals fail the trial") {
        MockLmScript script;
        script.rules = {{"Write a new instruction", MockMode::Fixed, 0, ""}};
        MockLm lm(script);
        CHECK_THROWS_AS(propose_prompt_depth1(initial, lm, defaults, nullptr, 2), TrialError);
    }
    SUBCASE("depth 2 needs at least one scored attempt") {
        MockLmScript script;
        script.rules = {{"", MockMode::Fixed, 0, "Anything."}};
        MockLm lm(script);
        AttemptRecord failed;
        failed.ok = false;
        CHECK_THROWS_AS(propose_prompt_depth2(initial, {failed}, lm, defaults, nullptr, 1),
                        Error);
    }
}

TEST_CASE("the optimization loop selects the best-scoring instruction") {
    testsupport::SyntheticTask task = small_task();
    Bm25Index index = Bm25Index::build(task.corpus, {}, {});
    PathConfig cfg = small_path_config();
    PathModuleConfigs modules = small_modules();

    PromptTemplate initial;
    initial.instruction = task.instruction_bad;

    TempDir dir1("opt_run1");
    MockLm lm(task.script);
    PathResult result = run_path(index, task.validation, initial, cfg, modules, lm, dir1.str());

    // Attempt 0 ran the weak starting instruction; the scripted proposals all
    // switch to the strong one, so the earliest proposal wins its tie.
    REQUIRE(result.attempts.size() == 4);
    CHECK(result.selected_index == 1);
    CHECK(result.attempts[0].ok);
    CHECK(result.attempts[0].prompt.instruction == task.instruction_bad);
    for (size_t i = 1; i < 4; ++i) {
        CHECK(result.attempts[i].ok);
        CHECK(result.attempts[i].prompt.instruction == task.instruction_good);
    }
    CHECK(result.attempts[1].score > result.attempts[0].score);
    CHECK(result.attempts[1].score > 0.8);
    CHECK(result.attempts[0].score < 0.5);
    CHECK(result.selected.meta.selected_score == doctest::Approx(result.attempts[1].score));

    SUBCASE("attempt records carry the data-path counters") {
        // Junk queries retrieve nothing, so every negative was a random fill;
        // echo queries pin the positive at rank 1, so the window suffices.
        CHECK(result.attempts[0].generation.generated == 60);
        CHECK(result.attempts[0].generation.dropped == 0);
        CHECK(result.attempts[0].mining.random_filled == 60 * modules.mining.m);
        CHECK(result.attempts[1].mining.random_filled == 0);
        CHECK(result.attempts[1].mining.window_extended == 0);
    }
    SUBCASE("artifacts land under the run directory") {
        for (const AttemptRecord& a : result.attempts) {
            CHECK(file_exists(dir1.str() + "/" + a.triplets_path));
            CHECK(file_exists(dir1.str() + "/" + a.checkpoint_path));
            CHECK(a.triplets_digest ==
                  digest_hex(read_file(dir1.str() + "/" + a.triplets_path)));
        }
        std::istringstream ledger(read_file(result.ledger_path));
        std::string line;
        size_t lines = 0;
        while (std::getline(ledger, line)) {
            if (!trim(line).empty()) ++lines;
        }
        CHECK(lines == 5);  // header + one record per attempt

        nlohmann::json manifest = nlohmann::json::parse(read_file(result.manifest_path));
        CHECK(manifest.at("selected_index").get<size_t>() == 1);
        CHECK(manifest.at("attempts").size() == 4);
        CHECK(manifest.at("dprime").at("size").get<size_t>() == 60);
        CHECK(manifest.at("config_digest").get<std::string>().size() == 16);
    }
    SUBCASE("an identical run in a fresh directory reproduces every artifact") {
        TempDir dir2("opt_run2");
        MockLm lm2(task.script);
        PathResult again =
            run_path(index, task.validation, initial, cfg, modules, lm2, dir2.str());
        CHECK(read_file(again.manifest_path) == read_file(result.manifest_path));
        CHECK(read_file(dir2.str() + "/lm_requests.jsonl") ==
              read_file(dir1.str() + "/lm_requests.jsonl"));
        for (size_t i = 0; i < 4; ++i) {
            CHECK(read_file(dir2.str() + "/" + again.attempts[i].triplets_path) ==
                  read_file(dir1.str() + "/" + result.attempts[i].triplets_path));
            CHECK(read_file(dir2.str() + "/" + again.attempts[i].checkpoint_path) ==
                  read_file(dir1.str() + "/" + result.attempts[i].checkpoint_path));
        }
    }
    SUBCASE("a completed run resumes as a no-op") {
        CountingLm idle(task.script);
        PathResult again =
            run_path(index, task.validation, initial, cfg, modules, idle, dir1.str());
        CHECK(idle.calls() == 0);
        CHECK(again.selected_index == 1);
        CHECK(again.attempts.size() == 4);
    }
    SUBCASE("a partial ledger resumes from the first missing attempt") {
        TempDir dir3("opt_resume");
        // Keep the header and attempt 0, plus attempt 0's artifacts.
        std::istringstream ledger(read_file(result.ledger_path));
        std::string header, attempt0;
        std::getline(ledger, header);
        std::getline(ledger, attempt0);
        write_file(dir3.str() + "/ledger.jsonl", header + "\n" + attempt0 + "\n");
        std::filesystem::copy(dir1.str() + "/attempt_0", dir3.str() + "/attempt_0",
                              std::filesystem::copy_options::recursive);

        CountingLm counting(task.script);
        PathResult resumed =
            run_path(index, task.validation, initial, cfg, modules, counting, dir3.str());
        CHECK(counting.calls() == 3 * 60 + 3);  // three proposals, three trials
        CHECK(read_file(resumed.manifest_path) == read_file(result.manifest_path));
    }
    SUBCASE("a ledger from another configuration is refused") {
        PathConfig other = cfg;
        other.trials = 2;
        MockLm lm3(task.script);
        try {
            run_path(index, task.validation, initial, other, modules, lm3, dir1.str());
            FAIL("expected a configuration-digest mismatch");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("use a fresh --out-dir") != std::string::npos);
        }
    }
}

TEST_CASE("failed trials are recorded and skipped") {
    testsupport::SyntheticTask task = small_task();
    Bm25Index index = Bm25Index::build(task.corpus, {}, {});
    PathConfig cfg = small_path_config();
    PathModuleConfigs modules = small_modules();
    PromptTemplate initial;
    initial.instruction = task.instruction_bad;

    SUBCASE("generation failures fail only their own attempt") {
        // Proposals switch to an instruction whose completions are empty, so
        // every proposed trial drops all its queries and fails; attempt 0
        // survives and wins by default.
        MockLmScript script;
        script.rules = {
            {"Write a new instruction", MockMode::Fixed, 0, "break"},
            {"break", MockMode::Fixed, 0, ""},
            {task.instruction_bad, MockMode::JunkHash, 8, ""},
        };
        TempDir dir("opt_broken_gen");
        MockLm lm(script);
        PathResult result =
            run_path(index, task.validation, initial, cfg, modules, lm, dir.str());
        CHECK(result.selected_index == 0);
        REQUIRE(result.attempts.size() == 4);
        for (size_t i = 1; i < 4; ++i) {
            CHECK_FALSE(result.attempts[i].ok);
            CHECK(result.attempts[i].failure.find("dropped") != std::string::npos);
            CHECK(result.attempts[i].checkpoint_path.empty());
        }
    }
    SUBCASE("proposal failures fail only their own attempt") {
        MockLmScript script;
        script.rules = {
            {"Write a new instruction", MockMode::Fixed, 0, ""},
            {task.instruction_bad, MockMode::JunkHash, 8, ""},
        };
        TempDir dir("opt_broken_prop");
        MockLm lm(script);
        PathConfig one = cfg;
        one.trials = 1;
        PathResult result =
            run_path(index, task.validation, initial, one, modules, lm, dir.str());
        CHECK(result.selected_index == 0);
        REQUIRE(result.attempts.size() == 2);
        CHECK_FALSE(result.attempts[1].ok);
        CHECK(result.attempts[1].failure.find("empty instruction") != std::string::npos);
    }
    SUBCASE("a run with no successful attempt reports failure") {
        MockLmScript script;
        script.rules = {
            {"Write a new instruction", MockMode::Fixed, 0, "break"},
            {"break", MockMode::Fixed, 0, ""},
        };
        TempDir dir("opt_all_fail");
        MockLm lm(script);
        PathConfig none = cfg;
        none.include_initial = false;
        none.trials = 2;
        try {
            run_path(index, task.validation, initial, none, modules, lm, dir.str());
            FAIL("expected the run to fail outright");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("every attempt failed") != std::string::npos);
        }
    }
}

TEST_CASE("depth-2 rounds condition on the scores of earlier rounds") {
    testsupport::SyntheticTask task = small_task();
    Bm25Index index = Bm25Index::build(task.corpus, {}, {});
    PathModuleConfigs modules = small_modules();
    PromptTemplate initial;
    initial.instruction = task.instruction_bad;

    SUBCASE("later rounds see earlier results; rounds share a snapshot") {
        PathConfig cfg = small_path_config();
        cfg.trials = 4;
        cfg.depth = 2;
        cfg.breadth = 2;
        TempDir dir("opt_depth2");
        MockLm lm(task.script);
        PathResult result =
            run_path(index, task.validation, initial, cfg, modules, lm, dir.str());
        REQUIRE(result.attempts.size() == 5);
        CHECK(result.selected_index == 1);

        std::map<size_t, std::string> prompts =
            proposal_prompts(dir.str() + "/lm_requests.jsonl");
        REQUIRE(prompts.size() == 4);
        // Round one (attempts 1-2) conditions on attempt 0 alone.
        CHECK(prompts.at(1) == prompts.at(2));
        CHECK(prompts.at(1).find("Instruction #1") != std::string::npos);
        CHECK(prompts.at(1).find("Instruction #2") == std::string::npos);
        // Round two (attempts 3-4) sees all three earlier attempts, sorted
        // ascending by score with the strongest instruction last.
        CHECK(prompts.at(3) == prompts.at(4));
        CHECK(prompts.at(3).find("Instruction #3") != std::string::npos);
        size_t weak_pos = prompts.at(3).find(task.instruction_bad);
        size_t strong_pos = prompts.at(3).rfind(task.instruction_good);
        REQUIRE(weak_pos != std::string::npos);
        REQUIRE(strong_pos != std::string::npos);
        CHECK(weak_pos < strong_pos);
    }
    SUBCASE("without scored history the first round falls back to rewriting") {
        PathConfig cfg = small_path_config();
        cfg.trials = 2;
        cfg.depth = 2;
        cfg.breadth = 2;
        cfg.include_initial = false;
        TempDir dir("opt_depth2_cold");
        MockLm lm(task.script);
        PathResult result =
            run_path(index, task.validation, initial, cfg, modules, lm, dir.str());
        REQUIRE(result.attempts.size() == 2);

        std::map<size_t, std::string> prompts =
            proposal_prompts(dir.str() + "/lm_requests.jsonl");
        REQUIRE(prompts.size() == 2);
        for (const auto& entry : prompts) {
            CHECK(entry.second.rfind("Here is the current instruction", 0) == 0);
        }
    }
}

TEST_CASE("held-out evaluation refuses tuned queries") {
    Corpus corpus({{"d1", "apple banana"}, {"d2", "cherry"}}, "tiny");
    Bm25Index index = Bm25Index::build(corpus, {}, {});
    RerankerModel model = init_model({}, 1);

    JudgmentSet validation({{"q1", "d1", 1.0}}, {{"q1", "apple"}}, 1.0);
    JudgmentSet overlapping({{"q1", "d1", 1.0}, {"q2", "d2", 1.0}},
                            {{"q1", "apple"}, {"q2", "cherry"}}, 1.0);
    JudgmentSet disjoint({{"q2", "d2", 1.0}}, {{"q2", "cherry"}}, 1.0);

    try {
        evaluate_final(model, overlapping, validation, index, EvalConfig{});
        FAIL("expected the overlap to be rejected");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("\"q1\"") != std::string::npos);
    }

    EvalReport report = evaluate_final(model, disjoint, validation, index, EvalConfig{},
                                       "cafe0123");
    CHECK(report.ledger_digest == "cafe0123");
    CHECK(report.per_query.size() == 1);
}
