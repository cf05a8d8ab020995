#pragma once

#include <cstdint>
#include <string>

#include "path/bm25.hpp"
#include "path/evaluation.hpp"
#include "path/lm.hpp"
#include "path/optimizer.hpp"
#include "path/reranker.hpp"
#include "path/synthesis.hpp"

#include <nlohmann/json.hpp>

namespace path {

// Resolved settings for a run: defaults, overridden by a config file,
// overridden by CLI flags — the echo of the final values lands in every
// manifest. The file uses a TOML-style subset: [section] headers and
// key = value lines where a value is a quoted string, number, or true/false.
// Unknown sections or keys are errors, so typos can't silently fall back to
// defaults.
struct RunConfig {
    // [corpus]
    std::string corpus_path;
    std::string qrels_path;
    std::string queries_path;
    std::string corpus_format = "jsonl";
    double positive_floor = 1.0;

    // [bm25]
    Bm25Params bm25;
    TokenizerConfig tokenizer;

    // [lm]
    HttpLmConfig http;
    std::string lm_model = "gpt-3.5-turbo";
    double temperature = 0.7;
    double proposal_temperature = 1.0;
    int max_tokens = 256;

    // [prompt]
    PromptTemplate prompt{
        "Generate a search query that the passage is the best answer to.",
        "Passage", "Query:", true};

    // [mining]
    MiningConfig mining;

    // [trainer]
    TrainerConfig trainer;
    ModelConfig model;

    // [eval]
    EvalConfig eval;

    // [path]
    PathConfig path;

    // [external]
    std::string external_command;  // whitespace-split into argv
    int external_timeout_seconds = 21600;

    // [run]
    uint64_t seed = 0;
    size_t jobs = 1;

    // Pushes run-level seed/jobs into the nested configs that carry their own
    // copies. Call after all overrides are applied.
    void resolve();

    nlohmann::json to_json() const;

    LmRequest generation_request() const;
    LmRequest proposal_request() const;
};

RunConfig load_config(const std::string& file_path);
RunConfig parse_config(const std::string& content, const std::string& origin);

}  // namespace path
