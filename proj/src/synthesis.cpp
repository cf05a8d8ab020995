#include "path/synthesis.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "path/common.hpp"
#include "path/rng.hpp"

namespace path {

namespace {

struct GenerationSlot {
    bool dropped = false;
    SyntheticQuery query;
    LmLogRecord record;
};

GenerationSlot generate_one(const PromptTemplate& tmpl,
                            const Document& passage,
                            LmClient& lm,
                            const LmRequest& defaults,
                            const std::string& hash_hex) {
    GenerationSlot slot;
    LmRequest request = defaults;
    request.messages = render_prompt(tmpl, passage.text);
    LmResponse response = lm.complete(request);

    slot.record.template_hash_hex = hash_hex;
    slot.record.passage_id = passage.doc_id;
    slot.record.model = request.model;
    slot.record.temperature = request.temperature;
    slot.record.max_tokens = request.max_tokens;
    slot.record.prompt = request.messages;
    slot.record.completion = response.text;
    slot.record.attempts = response.attempts;

    try {
        ParsedQuery parsed = parse_query(tmpl, response.text);
        slot.query.text = collapse_ws(parsed.text);
        slot.query.source_doc_id = passage.doc_id;
        slot.query.template_hash_hex = hash_hex;
        slot.query.fallback_parse = parsed.fallback;
        slot.record.parse_status = parsed.fallback ? "fallback" : "parsed";
    } catch (const LmError&) {
        slot.dropped = true;
        slot.record.parse_status = "empty";
    }
    return slot;
}

}  // namespace

GenerationResult generate_queries(const PromptTemplate& tmpl,
                                  const std::vector<Document>& passages,
                                  LmClient& lm,
                                  const LmRequest& request_defaults,
                                  RequestLog* log,
                                  size_t jobs) {
    if (passages.empty()) throw Error("generate_queries: no passages");
    const std::string hash_hex = to_hex(template_hash(tmpl));

    std::vector<GenerationSlot> slots(passages.size());
    if (jobs <= 1) {
        for (size_t i = 0; i < passages.size(); ++i) {
            slots[i] = generate_one(tmpl, passages[i], lm, request_defaults, hash_hex);
        }
    } else {
        // Static round-robin partition; slots are reassembled by index, so the
        // output is identical to the sequential path.
        std::vector<std::thread> workers;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        const size_t worker_count = std::min(jobs, passages.size());
        for (size_t w = 0; w < worker_count; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (size_t i = w; i < passages.size(); i += worker_count) {
                        slots[i] = generate_one(tmpl, passages[i], lm, request_defaults, hash_hex);
                    }
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (std::thread& t : workers) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    GenerationResult result;
    result.summary.requested = passages.size();
    for (GenerationSlot& slot : slots) {
        if (log) log->append(slot.record);
        if (slot.dropped) {
            ++result.summary.dropped;
        } else {
            if (slot.query.fallback_parse) ++result.summary.fallback_parses;
            result.queries.push_back(std::move(slot.query));
        }
    }
    result.summary.generated = result.queries.size();
    if (result.summary.dropped * 2 > result.summary.requested) {
        throw TrialError("query generation dropped " + std::to_string(result.summary.dropped) +
                         " of " + std::to_string(result.summary.requested) +
                         " passages (over half); the prompt is not producing usable queries");
    }
    return result;
}

void MiningConfig::validate() const {
    if (window_lo < 1 || window_hi < window_lo) {
        throw ConfigError("mining: rank window [" + std::to_string(window_lo) + ", " +
                          std::to_string(window_hi) + "] is not a valid 1-based range");
    }
    if (m < 1 || m > window_hi - window_lo + 1) {
        throw ConfigError("mining: m=" + std::to_string(m) + " must lie in [1, " +
                          std::to_string(window_hi - window_lo + 1) + "] for window [" +
                          std::to_string(window_lo) + ", " + std::to_string(window_hi) + "]");
    }
}

std::vector<std::string> mine_negatives(const Bm25Index& index,
                                        const std::string& query,
                                        const std::string& positive_doc_id,
                                        const MiningConfig& cfg,
                                        uint64_t seed,
                                        MiningCounters* counters) {
    cfg.validate();
    if (index.doc_count() < cfg.m + 1) {
        throw Error("mine_negatives: corpus has " + std::to_string(index.doc_count()) +
                    " documents, need at least m+1 = " + std::to_string(cfg.m + 1));
    }
    Rng rng(seed);

    // One deep retrieval covers both the window and the beyond-window
    // extension (zero-score documents never appear at any depth).
    RankedList ranked = index.retrieve(query, index.doc_count());
    std::vector<std::string> pool;
    for (size_t rank = cfg.window_lo; rank <= cfg.window_hi && rank <= ranked.entries.size();
         ++rank) {
        const std::string& id = ranked.entries[rank - 1].doc_id;
        if (id != positive_doc_id) pool.push_back(id);
    }
    if (pool.size() < cfg.m) {
        const size_t before = pool.size();
        for (size_t rank = cfg.window_hi + 1; rank <= ranked.entries.size(); ++rank) {
            const std::string& id = ranked.entries[rank - 1].doc_id;
            if (id != positive_doc_id) pool.push_back(id);
        }
        if (counters && pool.size() > before) ++counters->window_extended;
    }

    std::vector<std::string> negatives;
    if (pool.size() >= cfg.m) {
        for (size_t i : rng.sample_indices(pool.size(), cfg.m)) negatives.push_back(pool[i]);
        return negatives;
    }

    // Whole pool plus uniform corpus fill for the remainder.
    negatives = pool;
    std::unordered_set<std::string> taken(negatives.begin(), negatives.end());
    taken.insert(positive_doc_id);
    while (negatives.size() < cfg.m) {
        const std::string& id = index.doc(rng.uniform_below(index.doc_count())).doc_id;
        if (taken.insert(id).second) {
            negatives.push_back(id);
            if (counters) ++counters->random_filled;
        }
    }
    return negatives;
}

namespace {

TripletResult triplets_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                  const Bm25Index& index,
                                  const MiningConfig& cfg,
                                  uint64_t seed) {
    TripletResult result;
    result.triplets.reserve(pairs.size() * cfg.m);
    for (size_t g = 0; g < pairs.size(); ++g) {
        const auto& [query_text, positive] = pairs[g];
        std::vector<std::string> negatives = mine_negatives(
            index, query_text, positive, cfg, Rng::derive_seed(seed, g), &result.counters);
        for (const std::string& negative : negatives) {
            result.triplets.push_back(
                TrainingTriplet{query_text, positive, negative, static_cast<uint32_t>(g)});
        }
    }
    return result;
}

}  // namespace

TripletResult build_triplets(const std::vector<SyntheticQuery>& queries,
                             const Bm25Index& index,
                             const MiningConfig& cfg,
                             uint64_t seed) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(queries.size());
    for (const SyntheticQuery& q : queries) pairs.emplace_back(q.text, q.source_doc_id);
    return triplets_from_pairs(pairs, index, cfg, seed);
}

TripletResult build_triplets_from_judgments(const JudgmentSet& judgments,
                                            const Bm25Index& index,
                                            const MiningConfig& cfg,
                                            uint64_t seed) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const RelevanceJudgment& j : judgments.positive_judgments()) {
        pairs.emplace_back(collapse_ws(judgments.text_of(j.query_id)), j.doc_id);
    }
    if (pairs.empty()) {
        throw Error("build_triplets_from_judgments: no judgments at or above the positive floor");
    }
    return triplets_from_pairs(pairs, index, cfg, seed);
}

void write_triplets(const std::vector<TrainingTriplet>& triplets, const std::string& file_path) {
    std::string out = "query_text\tpositive_doc_id\tnegative_doc_id\tgroup_index\n";
    for (const TrainingTriplet& t : triplets) {
        if (t.query_text.find_first_of("\t\n") != std::string::npos ||
            t.positive_doc_id.find_first_of("\t\n") != std::string::npos ||
            t.negative_doc_id.find_first_of("\t\n") != std::string::npos) {
            throw IoError("triplet fields must not contain tabs or newlines (group " +
                          std::to_string(t.group_index) + ")");
        }
        out += t.query_text;
        out += '\t';
        out += t.positive_doc_id;
        out += '\t';
        out += t.negative_doc_id;
        out += '\t';
        out += std::to_string(t.group_index);
        out += '\n';
    }
    write_file(file_path, out);
}

std::vector<TrainingTriplet> read_triplets(const std::string& file_path) {
    std::istringstream in(read_file(file_path));
    std::string line;
    size_t line_no = 0;
    std::vector<TrainingTriplet> triplets;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != "query_text\tpositive_doc_id\tnegative_doc_id\tgroup_index") {
                throw IoError(file_path + ":1: missing or wrong triplet header");
            }
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4) {
            throw IoError(file_path + ":" + std::to_string(line_no) + ": expected 4 columns, got " +
                          std::to_string(fields.size()));
        }
        TrainingTriplet t;
        t.query_text = fields[0];
        t.positive_doc_id = fields[1];
        t.negative_doc_id = fields[2];
        auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(),
                                         t.group_index);
        if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size()) {
            throw IoError(file_path + ":" + std::to_string(line_no) + ": bad group index \"" +
                          fields[3] + "\"");
        }
        if (t.positive_doc_id == t.negative_doc_id) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": positive and negative doc ids are equal");
        }
        if (!triplets.empty()) {
            const TrainingTriplet& prev = triplets.back();
            if (t.group_index < prev.group_index) {
                throw IoError(file_path + ":" + std::to_string(line_no) +
                              ": group indices must be non-decreasing");
            }
            if (t.group_index == prev.group_index &&
                (t.query_text != prev.query_text || t.positive_doc_id != prev.positive_doc_id)) {
                throw IoError(file_path + ":" + std::to_string(line_no) +
                              ": rows of group " + std::to_string(t.group_index) +
                              " disagree on query or positive doc");
            }
        }
        triplets.push_back(std::move(t));
    }
    return triplets;
}

}  // namespace path
