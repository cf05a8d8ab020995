#include "path/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

#include "path/common.hpp"
#include "path/rng.hpp"

using nlohmann::json;

namespace path {

Corpus::Corpus(std::vector<Document> docs, std::string source_digest)
    : docs_(std::move(docs)), source_digest_(std::move(source_digest)) {
    by_id_.reserve(docs_.size());
    for (size_t i = 0; i < docs_.size(); ++i) {
        auto [it, inserted] = by_id_.emplace(docs_[i].doc_id, i);
        if (!inserted) {
            throw IoError("duplicate doc_id in corpus: " + docs_[i].doc_id);
        }
    }
}

const Document* Corpus::find(const std::string& doc_id) const {
    auto it = by_id_.find(doc_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::optional<size_t> Corpus::ordinal_of(const std::string& doc_id) const {
    auto it = by_id_.find(doc_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

Corpus load_corpus(const std::string& file_path, const std::string& format) {
    if (format != "jsonl") {
        throw ConfigError("unsupported corpus format: " + format);
    }
    const std::string raw = read_file(file_path);
    std::vector<Document> docs;
    std::istringstream in(raw);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& ex) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": malformed JSON line: " + ex.what());
        }
        if (!obj.is_object() || !obj.contains("doc_id") || !obj.contains("text") ||
            obj.size() != 2 || !obj["doc_id"].is_string() || !obj["text"].is_string()) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": expected an object with exactly doc_id and text strings");
        }
        Document d{obj["doc_id"].get<std::string>(), obj["text"].get<std::string>()};
        if (trim(d.text).empty()) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": empty text for doc_id " + d.doc_id);
        }
        docs.push_back(std::move(d));
    }
    if (docs.empty()) {
        throw IoError(file_path + ": empty corpus");
    }
    // Duplicate detection with a line-aware message before Corpus ctor runs.
    {
        std::set<std::string> seen;
        for (const auto& d : docs) {
            if (!seen.insert(d.doc_id).second) {
                throw IoError(file_path + ": duplicate doc_id: " + d.doc_id);
            }
        }
    }
    return Corpus(std::move(docs), digest_hex(raw));
}

void save_corpus(const Corpus& corpus, const std::string& file_path) {
    std::string out;
    for (const auto& d : corpus.documents()) {
        json obj;
        obj["doc_id"] = d.doc_id;
        obj["text"] = d.text;
        out += obj.dump();
        out += '\n';
    }
    write_file(file_path, out);
}

JudgmentSet::JudgmentSet(std::vector<RelevanceJudgment> judgments,
                         std::map<std::string, std::string> query_texts,
                         double positive_floor)
    : judgments_(std::move(judgments)),
      query_texts_(std::move(query_texts)),
      positive_floor_(positive_floor) {
    std::set<std::string> seen;
    for (const auto& j : judgments_) {
        if (seen.insert(j.query_id).second) {
            query_order_.push_back(j.query_id);
        }
        if (!query_texts_.count(j.query_id)) {
            throw IoError("no query text for query_id: " + j.query_id);
        }
    }
}

std::vector<std::string> JudgmentSet::positive_query_ids() const {
    std::set<std::string> positive;
    for (const auto& j : judgments_) {
        if (j.grade >= positive_floor_) positive.insert(j.query_id);
    }
    std::vector<std::string> out;
    for (const auto& qid : query_order_) {
        if (positive.count(qid)) out.push_back(qid);
    }
    return out;
}

std::vector<RelevanceJudgment> JudgmentSet::positive_judgments() const {
    std::vector<RelevanceJudgment> out;
    for (const auto& j : judgments_) {
        if (j.grade >= positive_floor_) out.push_back(j);
    }
    return out;
}

std::vector<RelevanceJudgment> JudgmentSet::judgments_for(const std::string& query_id) const {
    std::vector<RelevanceJudgment> out;
    for (const auto& j : judgments_) {
        if (j.query_id == query_id) out.push_back(j);
    }
    return out;
}

const std::string& JudgmentSet::text_of(const std::string& query_id) const {
    auto it = query_texts_.find(query_id);
    if (it == query_texts_.end()) {
        throw IoError("unknown query_id: " + query_id);
    }
    return it->second;
}

bool JudgmentSet::has_query(const std::string& query_id) const {
    return std::find(query_order_.begin(), query_order_.end(), query_id) != query_order_.end();
}

JudgmentSet load_judgments(const std::string& qrels_path,
                           const std::string& queries_path,
                           const Corpus& corpus,
                           double positive_floor) {
    std::map<std::string, std::string> texts;
    {
        const std::string raw = read_file(queries_path);
        std::istringstream in(raw);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::exception& ex) {
                throw IoError(queries_path + ":" + std::to_string(line_no) +
                              ": malformed JSON line: " + ex.what());
            }
            if (!obj.is_object() || !obj.contains("query_id") || !obj.contains("text") ||
                !obj["query_id"].is_string() || !obj["text"].is_string()) {
                throw IoError(queries_path + ":" + std::to_string(line_no) +
                              ": expected an object with query_id and text strings");
            }
            texts[obj["query_id"].get<std::string>()] = obj["text"].get<std::string>();
        }
    }

    std::vector<RelevanceJudgment> judgments;
    {
        const std::string raw = read_file(qrels_path);
        std::istringstream in(raw);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto fields = split_ws(line);
            if (fields.size() != 4) {
                throw IoError(qrels_path + ":" + std::to_string(line_no) +
                              ": expected 4 whitespace-separated fields, got " +
                              std::to_string(fields.size()));
            }
            RelevanceJudgment j;
            j.query_id = fields[0];
            j.doc_id = fields[2];
            try {
                size_t pos = 0;
                j.grade = std::stod(fields[3], &pos);
                if (pos != fields[3].size()) throw std::invalid_argument(fields[3]);
            } catch (const std::exception&) {
                throw IoError(qrels_path + ":" + std::to_string(line_no) +
                              ": bad grade: " + fields[3]);
            }
            if (j.grade < 0.0) {
                throw IoError(qrels_path + ":" + std::to_string(line_no) +
                              ": negative grade: " + fields[3]);
            }
            if (!corpus.contains(j.doc_id)) {
                throw IoError(qrels_path + ":" + std::to_string(line_no) +
                              ": doc_id not in corpus: " + j.doc_id);
            }
            if (!texts.count(j.query_id)) {
                throw IoError(qrels_path + ":" + std::to_string(line_no) +
                              ": no query text for query_id: " + j.query_id);
            }
            judgments.push_back(std::move(j));
        }
    }
    return JudgmentSet(std::move(judgments), std::move(texts), positive_floor);
}

JudgmentSet sample_judgments(const JudgmentSet& set, size_t n, uint64_t seed) {
    auto positives = set.positive_query_ids();
    if (n > positives.size()) {
        throw Error("sample_judgments: requested " + std::to_string(n) +
                    " queries but only " + std::to_string(positives.size()) +
                    " positive queries are available");
    }
    Rng rng(seed);
    auto picked = rng.sample_indices(positives.size(), n);
    std::set<std::string> chosen;
    for (size_t idx : picked) chosen.insert(positives[idx]);

    std::vector<RelevanceJudgment> kept;
    std::map<std::string, std::string> texts;
    for (const auto& j : set.judgments()) {
        if (chosen.count(j.query_id)) {
            kept.push_back(j);
            texts[j.query_id] = set.text_of(j.query_id);
        }
    }
    return JudgmentSet(std::move(kept), std::move(texts), set.positive_floor());
}

std::vector<Document> sample_documents(const Corpus& corpus, size_t size, uint64_t seed) {
    if (size < 1) {
        throw Error("sample_documents: size must be >= 1");
    }
    if (corpus.empty()) {
        throw Error("sample_documents: empty corpus");
    }
    Rng rng(seed);
    auto picked = rng.sample_indices(corpus.size(), size);
    std::vector<Document> out;
    out.reserve(picked.size());
    for (size_t idx : picked) out.push_back(corpus.at(idx));
    return out;
}

void write_sample_manifest(const Corpus& corpus,
                           const std::vector<Document>& sample,
                           uint64_t seed,
                           const std::string& file_path) {
    json m;
    m["corpus_digest"] = corpus.source_digest();
    m["seed"] = seed;
    m["size"] = sample.size();
    json ids = json::array();
    for (const auto& d : sample) ids.push_back(d.doc_id);
    m["doc_ids"] = std::move(ids);
    write_file(file_path, m.dump(2) + "\n");
}

void save_judgments(const JudgmentSet& set,
                    const std::string& qrels_path,
                    const std::string& queries_path) {
    std::string qrels;
    for (const auto& j : set.judgments()) {
        std::string grade = format_fixed(j.grade, 6);
        // Integral grades are written bare to stay byte-compatible with
        // standard qrels files.
        if (j.grade == static_cast<double>(static_cast<long long>(j.grade))) {
            grade = std::to_string(static_cast<long long>(j.grade));
        }
        qrels += j.query_id + " 0 " + j.doc_id + " " + grade + "\n";
    }
    write_file(qrels_path, qrels);

    std::string queries;
    for (const auto& qid : set.query_ids()) {
        json obj;
        obj["query_id"] = qid;
        obj["text"] = set.text_of(qid);
        queries += obj.dump();
        queries += '\n';
    }
    write_file(queries_path, queries);
}

}  // namespace path
