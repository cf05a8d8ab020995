#include "path/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "path/common.hpp"

#include <nlohmann/json.hpp>

namespace path {

namespace {

bool is_token_char(unsigned char c) {
    return std::isalnum(c) != 0;
}

}  // namespace

std::vector<std::string> tokenize(const TokenizerConfig& cfg, std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_token_char(c)) {
            current.push_back(cfg.lowercase ? static_cast<char>(std::tolower(c))
                                            : static_cast<char>(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Bm25Index Bm25Index::build(const Corpus& corpus, TokenizerConfig tok, Bm25Params params) {
    if (!(params.k1 > 0.0) || params.b < 0.0 || params.b > 1.0) {
        throw ConfigError("bm25: k1 must be > 0 and b in [0,1], got k1=" +
                          format_fixed(params.k1, 3) + " b=" + format_fixed(params.b, 3));
    }
    Bm25Index index;
    index.tokenizer_ = tok;
    index.params_ = params;
    index.corpus_digest_ = corpus.source_digest();
    index.docs_ = corpus.documents();
    index.doc_lengths_.reserve(index.docs_.size());

    uint64_t total_length = 0;
    for (size_t ord = 0; ord < index.docs_.size(); ++ord) {
        const Document& doc = index.docs_[ord];
        std::vector<std::string> tokens = tokenize(tok, doc.text);
        if (tokens.empty()) index.zero_length_doc_ids_.push_back(doc.doc_id);
        index.doc_lengths_.push_back(static_cast<uint32_t>(tokens.size()));
        total_length += tokens.size();

        std::unordered_map<std::string, uint32_t> counts;
        for (const std::string& t : tokens) ++counts[t];
        for (const auto& [term, tf] : counts) {
            index.postings_[term].push_back(Posting{static_cast<uint32_t>(ord), tf});
        }
    }
    // Postings were appended in ordinal order per term already, but make the
    // invariant explicit rather than rely on map iteration details.
    for (auto& [term, plist] : index.postings_) {
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.ordinal < b.ordinal; });
    }
    index.avg_doc_length_ =
        index.docs_.empty() ? 0.0
                            : static_cast<double>(total_length) / static_cast<double>(index.docs_.size());
    index.rebuild_ordinal_map();
    return index;
}

void Bm25Index::rebuild_ordinal_map() {
    ordinal_by_id_.clear();
    ordinal_by_id_.reserve(docs_.size());
    for (size_t ord = 0; ord < docs_.size(); ++ord) ordinal_by_id_.emplace(docs_[ord].doc_id, ord);
}

const Document* Bm25Index::find_doc(const std::string& doc_id) const {
    auto ord = ordinal_of(doc_id);
    return ord ? &docs_[*ord] : nullptr;
}

std::optional<size_t> Bm25Index::ordinal_of(const std::string& doc_id) const {
    auto it = ordinal_by_id_.find(doc_id);
    if (it == ordinal_by_id_.end()) return std::nullopt;
    return it->second;
}

size_t Bm25Index::df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(const std::string& term) const {
    const double n = static_cast<double>(docs_.size());
    const double d = static_cast<double>(df(term));
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

const std::vector<Posting>* Bm25Index::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

RankedList Bm25Index::retrieve(std::string_view query, size_t k, const std::string& query_id) const {
    RankedList result;
    result.query_id = query_id;
    std::vector<std::string> terms = tokenize(tokenizer_, query);
    if (terms.empty()) return result;  // no tokens -> empty ranking, not an error

    std::vector<double> scores(docs_.size(), 0.0);
    for (const std::string& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double w = idf(term);
        for (const Posting& p : it->second) {
            const double tf = static_cast<double>(p.tf);
            const double len = static_cast<double>(doc_lengths_[p.ordinal]);
            const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avg_doc_length_);
            scores[p.ordinal] += w * tf * (params_.k1 + 1.0) / (tf + norm);
        }
    }

    std::vector<RankedEntry> entries;
    for (size_t ord = 0; ord < docs_.size(); ++ord) {
        if (scores[ord] > 0.0) entries.push_back(RankedEntry{docs_[ord].doc_id, scores[ord]});
    }
    return make_ranked_list(query_id, std::move(entries), k);
}

RankedList make_ranked_list(std::string query_id, std::vector<RankedEntry> entries, size_t k) {
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (entries.size() > k) entries.resize(k);
    RankedList list;
    list.query_id = std::move(query_id);
    list.entries = std::move(entries);
    return list;
}

void Bm25Index::save(const std::string& file_path) const {
    nlohmann::json j;
    j["version"] = 1;
    j["params"] = {{"k1", params_.k1}, {"b", params_.b}};
    j["tokenizer"] = {{"lowercase", tokenizer_.lowercase}};
    j["corpus_digest"] = corpus_digest_;
    j["avg_doc_length"] = avg_doc_length_;
    j["doc_lengths"] = doc_lengths_;
    j["zero_length_doc_ids"] = zero_length_doc_ids_;
    nlohmann::json docs = nlohmann::json::array();
    for (const Document& d : docs_) {
        docs.push_back({{"doc_id", d.doc_id}, {"text", d.text}});
    }
    j["documents"] = std::move(docs);
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, plist] : postings_) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Posting& p : plist) arr.push_back({p.ordinal, p.tf});
        postings[term] = std::move(arr);
    }
    j["postings"] = std::move(postings);
    write_file(file_path, j.dump(2) + "\n");
}

Bm25Index Bm25Index::load(const std::string& file_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("bm25 index " + file_path + ": " + e.what());
    }
    if (!j.is_object() || j.value("version", 0) != 1) {
        throw IoError("bm25 index " + file_path + ": unsupported or missing version");
    }
    Bm25Index index;
    try {
        index.params_.k1 = j.at("params").at("k1").get<double>();
        index.params_.b = j.at("params").at("b").get<double>();
        index.tokenizer_.lowercase = j.at("tokenizer").at("lowercase").get<bool>();
        index.corpus_digest_ = j.at("corpus_digest").get<std::string>();
        index.avg_doc_length_ = j.at("avg_doc_length").get<double>();
        index.doc_lengths_ = j.at("doc_lengths").get<std::vector<uint32_t>>();
        index.zero_length_doc_ids_ = j.at("zero_length_doc_ids").get<std::vector<std::string>>();
        for (const auto& d : j.at("documents")) {
            index.docs_.push_back(Document{d.at("doc_id").get<std::string>(),
                                           d.at("text").get<std::string>()});
        }
        for (const auto& [term, arr] : j.at("postings").items()) {
            std::vector<Posting>& plist = index.postings_[term];
            for (const auto& pair : arr) {
                plist.push_back(Posting{pair.at(0).get<uint32_t>(), pair.at(1).get<uint32_t>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bm25 index " + file_path + ": " + e.what());
    }
    if (index.doc_lengths_.size() != index.docs_.size()) {
        throw IoError("bm25 index " + file_path + ": doc_lengths/documents size mismatch");
    }
    index.rebuild_ordinal_map();
    return index;
}

bool Bm25Index::operator==(const Bm25Index& other) const {
    auto postings_equal = [](const Posting& a, const Posting& b) {
        return a.ordinal == b.ordinal && a.tf == b.tf;
    };
    if (postings_.size() != other.postings_.size()) return false;
    for (auto it = postings_.begin(), jt = other.postings_.begin(); it != postings_.end();
         ++it, ++jt) {
        if (it->first != jt->first) return false;
        if (!std::equal(it->second.begin(), it->second.end(), jt->second.begin(),
                        jt->second.end(), postings_equal)) {
            return false;
        }
    }
    return docs_ == other.docs_ && doc_lengths_ == other.doc_lengths_ &&
           avg_doc_length_ == other.avg_doc_length_ && tokenizer_ == other.tokenizer_ &&
           params_ == other.params_ && corpus_digest_ == other.corpus_digest_ &&
           zero_length_doc_ids_ == other.zero_length_doc_ids_;
}

}  // namespace path
