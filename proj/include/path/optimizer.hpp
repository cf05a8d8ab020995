#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "path/bm25.hpp"
#include "path/corpus.hpp"
#include "path/evaluation.hpp"
#include "path/lm.hpp"
#include "path/reranker.hpp"
#include "path/synthesis.hpp"

namespace path {

struct AttemptRecord {
    size_t index = 0;
    bool ok = false;
    PromptTemplate prompt;
    double score = 0.0;             // validation AvgNDCG of the trial's checkpoint
    std::string checkpoint_path;    // relative to the run directory
    std::string triplets_path;      // relative to the run directory
    std::string triplets_digest;
    GenerationSummary generation;
    MiningCounters mining;
    std::string failure;            // reason, when !ok
};

struct PathConfig {
    size_t trials = 10;        // prompt proposals (attempt 0 is extra, see below)
    size_t depth = 1;          // 1: independent proposals; 2: score-conditioned rounds
    size_t breadth = 5;        // proposals per round at depth 2
    bool include_initial = true;  // evaluate the starting instruction as attempt 0
    size_t dprime_size = 1000;    // passages sampled once and shared by all trials
    uint64_t seed = 0;
    size_t jobs = 1;

    void validate() const;
    size_t attempt_count() const { return trials + (include_initial ? 1 : 0); }
};

// Everything a trial needs besides the prompt.
struct PathModuleConfigs {
    MiningConfig mining;
    TrainerConfig trainer;
    EvalConfig eval;
    ModelConfig model;
    LmRequest generation_request;  // LM settings for query generation
    LmRequest proposal_request;    // LM settings for instruction proposals
};

// Meta-prompt builders (wording is part of the artifact contract; see
// docs/prompts.md). Depth 1 shows only the current instruction; depth 2 lists
// prior scored instructions sorted ascending by score, best last.
std::string depth1_meta_prompt(const PromptTemplate& current);
std::string depth2_meta_prompt(const std::vector<AttemptRecord>& scored_attempts);
extern const char* const kProposalSystemPrompt;

// Ask the LM for a replacement instruction; structural template fields are
// preserved. An empty proposal is retried once, then the trial fails.
PromptTemplate propose_prompt_depth1(const PromptTemplate& initial,
                                     LmClient& lm,
                                     const LmRequest& request_defaults,
                                     RequestLog* log,
                                     size_t attempt_index);
PromptTemplate propose_prompt_depth2(const PromptTemplate& initial,
                                     const std::vector<AttemptRecord>& ledger,
                                     LmClient& lm,
                                     const LmRequest& request_defaults,
                                     RequestLog* log,
                                     size_t attempt_index);

struct PathResult {
    RerankerModel selected;
    size_t selected_index = 0;
    std::vector<AttemptRecord> attempts;
    std::string manifest_path;
    std::string ledger_path;
};

// The full optimization loop: sample D' once, then per attempt propose an
// instruction (attempt 0 reuses the initial one when include_initial), write
// queries/triplets, train, and record the validation score. Failed trials are
// recorded and skipped; the best-scoring attempt wins (ties -> lowest index).
// Appends attempts to <out_dir>/ledger.jsonl as they finish and resumes from
// it when re-run with the same configuration; writes <out_dir>/manifest.json
// on completion.
PathResult run_path(const Bm25Index& index,
                    const JudgmentSet& judgments,
                    const PromptTemplate& initial,
                    const PathConfig& cfg,
                    const PathModuleConfigs& modules,
                    LmClient& lm,
                    const std::string& out_dir);

// Held-out scoring of the selected reranker. Refuses to run when the test
// queries overlap the validation queries the optimizer tuned against.
EvalReport evaluate_final(const RerankerModel& selected,
                          const JudgmentSet& test,
                          const JudgmentSet& validation,
                          const Bm25Index& index,
                          const EvalConfig& cfg,
                          const std::string& ledger_digest = "");

}  // namespace path
