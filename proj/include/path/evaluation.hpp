#pragma once

#include <map>
#include <string>
#include <vector>

#include "path/bm25.hpp"
#include "path/corpus.hpp"

namespace path {

struct RerankerModel;  // reranker.hpp; broken out to keep headers acyclic

enum class GainKind { Linear, Exponential };

std::string gain_name(GainKind gain);
GainKind gain_from_name(const std::string& name);

struct EvalConfig {
    size_t k = 10;            // NDCG cutoff
    size_t rerank_depth = 50; // first-stage candidates handed to the reranker
    GainKind gain = GainKind::Linear;

    void validate() const;  // k <= rerank_depth
};

// Graded NDCG@k. DCG sums gain(grade)/log2(rank+1) over the first k retrieved
// entries; IDCG ranks *all* judged documents ideally (so missing a judged
// positive at the first stage costs score). Unjudged documents count as grade
// 0; no judged gain at all scores 0.
double ndcg_at_k(const RankedList& ranking,
                 const std::vector<RelevanceJudgment>& judged,
                 size_t k,
                 GainKind gain);

struct QueryEval {
    std::string query_id;
    double ndcg = 0.0;
    size_t candidates = 0;        // first-stage candidates seen
    bool zero_candidates = false;
};

struct EvalReport {
    EvalConfig config;
    std::vector<QueryEval> per_query;  // sorted by query_id
    double mean_ndcg = 0.0;
    size_t zero_positive_queries = 0;  // queries with no judged-positive gain retrieved
    std::string ledger_digest;         // optional provenance echo

    void save(const std::string& file_path) const;
};

// Mean NDCG@k over every query in the judgment set: BM25 retrieves
// rerank_depth candidates, the model reorders them, NDCG@k is computed per
// query. Queries BM25 finds nothing for score 0 and are flagged.
EvalReport avg_ndcg(const RerankerModel& model,
                    const JudgmentSet& judgments,
                    const Bm25Index& index,
                    const EvalConfig& cfg);

// Same metric for rankings produced elsewhere (external trainers, raw runs).
// Judged queries missing from the run score 0.
EvalReport eval_run(const std::vector<RankedList>& runs,
                    const JudgmentSet& judgments,
                    const EvalConfig& cfg);

// TREC run format: `query_id Q0 doc_id rank score tag`, scores with 6
// decimals, ranks 1-based and consistent with descending score.
void write_run(const std::vector<RankedList>& runs,
               const std::string& file_path,
               const std::string& run_tag);
std::vector<RankedList> read_run(const std::string& file_path);

}  // namespace path
