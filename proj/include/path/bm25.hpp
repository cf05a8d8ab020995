#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "path/corpus.hpp"

namespace path {

// Token pattern is fixed: maximal ASCII alphanumeric runs. No stemming or
// stopwords; anything non-alphanumeric separates tokens.
struct TokenizerConfig {
    bool lowercase = true;

    bool operator==(const TokenizerConfig&) const = default;
};

std::vector<std::string> tokenize(const TokenizerConfig& cfg, std::string_view text);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    bool operator==(const Bm25Params&) const = default;
};

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const RankedEntry&) const = default;
};

// Scores non-increasing; ties broken by ascending doc_id; no duplicates.
struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;

    bool operator==(const RankedList&) const = default;
};

struct Posting {
    uint32_t ordinal = 0;
    uint32_t tf = 0;
};

// Inverted index with BM25 scoring:
//   score(q,d) = sum_t idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len(d)/avgdl))
//   idf(t)     = ln(1 + (N - df + 0.5) / (df + 0.5))
// The sum runs over query tokens with multiplicity. Immutable after build.
class Bm25Index {
public:
    static Bm25Index build(const Corpus& corpus, TokenizerConfig tok, Bm25Params params);

    RankedList retrieve(std::string_view query, size_t k, const std::string& query_id = "") const;

    size_t doc_count() const { return docs_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    uint32_t doc_length(size_t ordinal) const { return doc_lengths_.at(ordinal); }
    const Document& doc(size_t ordinal) const { return docs_.at(ordinal); }
    const std::vector<Document>& docs() const { return docs_; }
    const Document* find_doc(const std::string& doc_id) const;
    std::optional<size_t> ordinal_of(const std::string& doc_id) const;

    size_t df(const std::string& term) const;
    double idf(const std::string& term) const;
    const std::vector<Posting>* postings(const std::string& term) const;

    const TokenizerConfig& tokenizer() const { return tokenizer_; }
    const Bm25Params& params() const { return params_; }
    const std::string& corpus_digest() const { return corpus_digest_; }
    const std::vector<std::string>& zero_length_doc_ids() const { return zero_length_doc_ids_; }

    void save(const std::string& file_path) const;
    static Bm25Index load(const std::string& file_path);

    bool operator==(const Bm25Index& other) const;

private:
    void rebuild_ordinal_map();

    std::vector<Document> docs_;
    std::unordered_map<std::string, size_t> ordinal_by_id_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    TokenizerConfig tokenizer_;
    Bm25Params params_;
    std::string corpus_digest_;
    std::vector<std::string> zero_length_doc_ids_;
};

// Sorts (score desc, doc_id asc) and truncates to k. Input must not contain
// duplicate doc_ids.
RankedList make_ranked_list(std::string query_id,
                            std::vector<RankedEntry> entries,
                            size_t k);

}  // namespace path
