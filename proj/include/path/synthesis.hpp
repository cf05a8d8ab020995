#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "path/bm25.hpp"
#include "path/corpus.hpp"
#include "path/lm.hpp"

namespace path {

struct SyntheticQuery {
    std::string text;
    std::string source_doc_id;
    std::string template_hash_hex;
    bool fallback_parse = false;
};

struct GenerationSummary {
    size_t requested = 0;
    size_t generated = 0;
    size_t dropped = 0;
    size_t fallback_parses = 0;
};

struct GenerationResult {
    std::vector<SyntheticQuery> queries;  // input passage order, drops removed
    GenerationSummary summary;
};

// One query per passage. Passages whose completion yields no query text are
// dropped and counted; a drop rate above half the batch aborts with
// TrialError (the prompt is considered broken). Query text is collapsed to
// single-line/single-space so it survives the TSV triplet format.
// jobs > 1 issues LM calls concurrently; outputs and log records keep input
// order either way.
GenerationResult generate_queries(const PromptTemplate& tmpl,
                                  const std::vector<Document>& passages,
                                  LmClient& lm,
                                  const LmRequest& request_defaults,
                                  RequestLog* log = nullptr,
                                  size_t jobs = 1);

struct MiningConfig {
    size_t m = 19;          // negatives per query
    size_t window_lo = 21;  // 1-based rank window, inclusive
    size_t window_hi = 100;

    void validate() const;
};

// Counts how often the rank-window pool was too small and what filled the gap.
struct MiningCounters {
    size_t window_extended = 0;   // queries whose pool drew on ranks beyond window_hi
    size_t random_filled = 0;     // negatives drawn uniformly from the whole corpus

    MiningCounters& operator+=(const MiningCounters& other) {
        window_extended += other.window_extended;
        random_filled += other.random_filled;
        return *this;
    }
};

// Samples cfg.m distinct negative doc ids for (query, positive): uniformly
// from the BM25 rank window [window_lo, window_hi] (positive excluded), then
// from ranks beyond the window, then from the whole corpus — each fallback
// counted.
std::vector<std::string> mine_negatives(const Bm25Index& index,
                                        const std::string& query,
                                        const std::string& positive_doc_id,
                                        const MiningConfig& cfg,
                                        uint64_t seed,
                                        MiningCounters* counters = nullptr);

struct TrainingTriplet {
    std::string query_text;
    std::string positive_doc_id;
    std::string negative_doc_id;
    uint32_t group_index = 0;

    bool operator==(const TrainingTriplet&) const = default;
};

struct TripletResult {
    std::vector<TrainingTriplet> triplets;  // m contiguous rows per group
    MiningCounters counters;
};

// One group of cfg.m triplets per query, groups in query order. Per-group
// seeds are derived from `seed`, so the output is deterministic and
// independent of evaluation order.
TripletResult build_triplets(const std::vector<SyntheticQuery>& queries,
                             const Bm25Index& index,
                             const MiningConfig& cfg,
                             uint64_t seed);

// Baseline data path: one group per positive judgment, (gold query text,
// judged doc) as the positive pair.
TripletResult build_triplets_from_judgments(const JudgmentSet& judgments,
                                            const Bm25Index& index,
                                            const MiningConfig& cfg,
                                            uint64_t seed);

// TSV interchange format, header line included:
//   query_text \t positive_doc_id \t negative_doc_id \t group_index
void write_triplets(const std::vector<TrainingTriplet>& triplets, const std::string& file_path);
std::vector<TrainingTriplet> read_triplets(const std::string& file_path);

}  // namespace path
