#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace path {

struct Document {
    std::string doc_id;
    std::string text;

    bool operator==(const Document&) const = default;
};

// Immutable after load. Iteration order is the input order, so the digest
// detects reorderings of otherwise identical content.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<Document> docs, std::string source_digest);

    size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    const Document& at(size_t ordinal) const { return docs_.at(ordinal); }
    const std::vector<Document>& documents() const { return docs_; }
    const std::string& source_digest() const { return source_digest_; }

    const Document* find(const std::string& doc_id) const;
    std::optional<size_t> ordinal_of(const std::string& doc_id) const;
    bool contains(const std::string& doc_id) const { return find(doc_id) != nullptr; }

    bool operator==(const Corpus& other) const {
        return docs_ == other.docs_ && source_digest_ == other.source_digest_;
    }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, size_t> by_id_;
    std::string source_digest_;
};

struct RelevanceJudgment {
    std::string query_id;
    std::string doc_id;
    double grade = 0.0;

    bool operator==(const RelevanceJudgment&) const = default;
};

// Judgments grouped by query, plus the query-text sidecar. Grades below
// positive_floor stay in the set (they still count for NDCG gains) but are
// excluded from the positive pool that seeds sampling and training.
class JudgmentSet {
public:
    JudgmentSet() = default;
    JudgmentSet(std::vector<RelevanceJudgment> judgments,
                std::map<std::string, std::string> query_texts,
                double positive_floor);

    const std::vector<RelevanceJudgment>& judgments() const { return judgments_; }
    double positive_floor() const { return positive_floor_; }
    size_t size() const { return judgments_.size(); }
    bool empty() const { return judgments_.empty(); }

    // Distinct query ids in first-appearance order.
    const std::vector<std::string>& query_ids() const { return query_order_; }
    // Distinct query ids that have at least one judgment with grade >= floor.
    std::vector<std::string> positive_query_ids() const;
    // Judgments with grade >= floor, in input order.
    std::vector<RelevanceJudgment> positive_judgments() const;

    std::vector<RelevanceJudgment> judgments_for(const std::string& query_id) const;
    const std::string& text_of(const std::string& query_id) const;
    bool has_query(const std::string& query_id) const;

private:
    std::vector<RelevanceJudgment> judgments_;
    std::map<std::string, std::string> query_texts_;
    std::vector<std::string> query_order_;
    double positive_floor_ = 1.0;
};

// JSONL corpus: one object per line with exactly `doc_id` and `text`.
Corpus load_corpus(const std::string& file_path, const std::string& format = "jsonl");
void save_corpus(const Corpus& corpus, const std::string& file_path);

// TREC qrels (`query_id 0 doc_id grade`) plus a queries sidecar JSONL with
// `query_id` and `text`. Every judged doc must resolve in the corpus and every
// judged query must have a text entry.
JudgmentSet load_judgments(const std::string& qrels_path,
                           const std::string& queries_path,
                           const Corpus& corpus,
                           double positive_floor = 1.0);

// n distinct positive query ids, uniform without replacement; all judgments
// for the chosen queries are retained.
JudgmentSet sample_judgments(const JudgmentSet& set, size_t n, uint64_t seed);

// min(size, |corpus|) distinct documents, uniform without replacement, in
// draw order.
std::vector<Document> sample_documents(const Corpus& corpus, size_t size, uint64_t seed);

// Reproducibility manifest for a document sample (digest + chosen ids).
void write_sample_manifest(const Corpus& corpus,
                           const std::vector<Document>& sample,
                           uint64_t seed,
                           const std::string& file_path);

void save_judgments(const JudgmentSet& set,
                    const std::string& qrels_path,
                    const std::string& queries_path);

}  // namespace path
