#include "path/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "path/common.hpp"
#include "path/reranker.hpp"

#include <nlohmann/json.hpp>

namespace path {

std::string gain_name(GainKind gain) {
    return gain == GainKind::Linear ? "linear" : "exponential";
}

GainKind gain_from_name(const std::string& name) {
    if (name == "linear") return GainKind::Linear;
    if (name == "exponential") return GainKind::Exponential;
    throw ConfigError("eval: unknown gain \"" + name + "\" (expected linear | exponential)");
}

void EvalConfig::validate() const {
    if (k < 1) throw ConfigError("eval: k must be >= 1");
    if (k > rerank_depth) {
        throw ConfigError("eval: cutoff k=" + std::to_string(k) +
                          " exceeds rerank depth " + std::to_string(rerank_depth));
    }
}

namespace {

double gain_of(GainKind gain, double grade) {
    return gain == GainKind::Linear ? grade : std::exp2(grade) - 1.0;
}

}  // namespace

double ndcg_at_k(const RankedList& ranking,
                 const std::vector<RelevanceJudgment>& judged,
                 size_t k,
                 GainKind gain) {
    std::unordered_map<std::string, double> grade_of;
    std::vector<double> ideal_gains;
    ideal_gains.reserve(judged.size());
    for (const RelevanceJudgment& j : judged) {
        grade_of[j.doc_id] = j.grade;
        ideal_gains.push_back(gain_of(gain, j.grade));
    }
    std::sort(ideal_gains.begin(), ideal_gains.end(), std::greater<>());

    double idcg = 0.0;
    for (size_t i = 0; i < ideal_gains.size() && i < k; ++i) {
        idcg += ideal_gains[i] / std::log2(static_cast<double>(i) + 2.0);
    }
    if (idcg <= 0.0) return 0.0;

    double dcg = 0.0;
    for (size_t i = 0; i < ranking.entries.size() && i < k; ++i) {
        auto it = grade_of.find(ranking.entries[i].doc_id);
        if (it == grade_of.end()) continue;  // unjudged counts as grade 0
        dcg += gain_of(gain, it->second) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

namespace {

EvalReport assemble_report(const EvalConfig& cfg, std::vector<QueryEval> per_query) {
    EvalReport report;
    report.config = cfg;
    std::sort(per_query.begin(), per_query.end(),
              [](const QueryEval& a, const QueryEval& b) { return a.query_id < b.query_id; });
    double total = 0.0;
    for (const QueryEval& q : per_query) {
        total += q.ndcg;
        if (q.ndcg == 0.0) ++report.zero_positive_queries;
    }
    report.mean_ndcg = per_query.empty() ? 0.0 : total / static_cast<double>(per_query.size());
    report.per_query = std::move(per_query);
    return report;
}

}  // namespace

EvalReport avg_ndcg(const RerankerModel& model,
                    const JudgmentSet& judgments,
                    const Bm25Index& index,
                    const EvalConfig& cfg) {
    cfg.validate();
    std::vector<QueryEval> per_query;
    for (const std::string& query_id : judgments.query_ids()) {
        const std::string& text = judgments.text_of(query_id);
        RankedList candidates = index.retrieve(text, cfg.rerank_depth, query_id);
        QueryEval q;
        q.query_id = query_id;
        q.candidates = candidates.entries.size();
        if (candidates.entries.empty()) {
            q.zero_candidates = true;
        } else {
            RankedList reranked = rerank(model, text, candidates, index);
            q.ndcg = ndcg_at_k(reranked, judgments.judgments_for(query_id), cfg.k, cfg.gain);
        }
        per_query.push_back(std::move(q));
    }
    return assemble_report(cfg, std::move(per_query));
}

EvalReport eval_run(const std::vector<RankedList>& runs,
                    const JudgmentSet& judgments,
                    const EvalConfig& cfg) {
    cfg.validate();
    std::unordered_map<std::string, const RankedList*> run_of;
    for (const RankedList& run : runs) run_of[run.query_id] = &run;
    std::vector<QueryEval> per_query;
    for (const std::string& query_id : judgments.query_ids()) {
        QueryEval q;
        q.query_id = query_id;
        auto it = run_of.find(query_id);
        if (it == run_of.end() || it->second->entries.empty()) {
            q.zero_candidates = true;
        } else {
            q.candidates = it->second->entries.size();
            q.ndcg = ndcg_at_k(*it->second, judgments.judgments_for(query_id), cfg.k, cfg.gain);
        }
        per_query.push_back(std::move(q));
    }
    return assemble_report(cfg, std::move(per_query));
}

void EvalReport::save(const std::string& file_path) const {
    nlohmann::json j;
    j["config"] = {{"k", config.k},
                   {"rerank_depth", config.rerank_depth},
                   {"gain", gain_name(config.gain)}};
    j["mean_ndcg"] = mean_ndcg;
    j["zero_positive_queries"] = zero_positive_queries;
    if (!ledger_digest.empty()) j["ledger_digest"] = ledger_digest;
    nlohmann::json rows = nlohmann::json::array();
    for (const QueryEval& q : per_query) {
        rows.push_back({{"query_id", q.query_id},
                        {"ndcg", q.ndcg},
                        {"candidates", q.candidates},
                        {"zero_candidates", q.zero_candidates}});
    }
    j["per_query"] = std::move(rows);
    write_file(file_path, j.dump(2) + "\n");
}

void write_run(const std::vector<RankedList>& runs,
               const std::string& file_path,
               const std::string& run_tag) {
    std::string out;
    for (const RankedList& run : runs) {
        for (size_t i = 0; i < run.entries.size(); ++i) {
            const RankedEntry& e = run.entries[i];
            out += run.query_id;
            out += " Q0 ";
            out += e.doc_id;
            out += ' ';
            out += std::to_string(i + 1);
            out += ' ';
            out += format_fixed(e.score, 6);
            out += ' ';
            out += run_tag;
            out += '\n';
        }
    }
    write_file(file_path, out);
}

std::vector<RankedList> read_run(const std::string& file_path) {
    std::istringstream in(read_file(file_path));
    std::string line;
    size_t line_no = 0;
    std::vector<RankedList> runs;
    std::unordered_map<std::string, size_t> run_index;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_ws(line);
        if (fields.size() != 6) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": expected 6 whitespace-separated fields, got " +
                          std::to_string(fields.size()));
        }
        if (fields[1] != "Q0") {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": second field must be Q0, got \"" + fields[1] + "\"");
        }
        size_t rank = 0;
        double score = 0.0;
        try {
            rank = std::stoul(fields[3]);
            score = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw IoError(file_path + ":" + std::to_string(line_no) + ": bad rank or score");
        }
        auto [it, inserted] = run_index.emplace(fields[0], runs.size());
        if (inserted) {
            runs.push_back(RankedList{fields[0], {}});
        } else if (it->second != runs.size() - 1) {
            throw IoError(file_path + ":" + std::to_string(line_no) + ": lines for query \"" +
                          fields[0] + "\" are not contiguous");
        }
        RankedList& run = runs[it->second];
        if (rank != run.entries.size() + 1) {
            throw IoError(file_path + ":" + std::to_string(line_no) + ": rank " +
                          std::to_string(rank) + " out of sequence (expected " +
                          std::to_string(run.entries.size() + 1) + ")");
        }
        if (!run.entries.empty() && score > run.entries.back().score) {
            throw IoError(file_path + ":" + std::to_string(line_no) +
                          ": score increases with rank, run is not sorted");
        }
        for (const RankedEntry& e : run.entries) {
            if (e.doc_id == fields[2]) {
                throw IoError(file_path + ":" + std::to_string(line_no) + ": doc \"" + fields[2] +
                              "\" listed twice for query \"" + fields[0] + "\"");
            }
        }
        run.entries.push_back(RankedEntry{fields[2], score});
    }
    return runs;
}

}  // namespace path
