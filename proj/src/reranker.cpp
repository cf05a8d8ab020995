#include "path/reranker.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <thread>
#include <unordered_map>

#include <sys/wait.h>
#include <unistd.h>

#include "path/common.hpp"
#include "path/rng.hpp"

#include <nlohmann/json.hpp>

namespace path {

const std::array<const char*, kFeatureDim> kFeatureNames = {
    "bm25", "tfidf_cosine", "query_coverage", "doc_coverage", "length_ratio", "log_doc_length"};

FeatureVector extract_features(const std::string& query,
                               const Document& doc,
                               const Bm25Index& index) {
    FeatureVector f{};
    const std::vector<std::string> q_tokens = tokenize(index.tokenizer(), query);
    const std::vector<std::string> d_tokens = tokenize(index.tokenizer(), doc.text);

    std::unordered_map<std::string, double> q_tf, d_tf;
    for (const std::string& t : q_tokens) ++q_tf[t];
    for (const std::string& t : d_tokens) ++d_tf[t];

    const Bm25Params& p = index.params();
    const double avgdl = index.avg_doc_length();
    const double dlen = static_cast<double>(d_tokens.size());

    // 0: BM25 (same formula retrieve() applies, summed over query tokens with
    // multiplicity).
    if (avgdl > 0.0) {
        const double norm = p.k1 * (1.0 - p.b + p.b * dlen / avgdl);
        for (const std::string& t : q_tokens) {
            auto it = d_tf.find(t);
            if (it == d_tf.end()) continue;
            f[0] += index.idf(t) * it->second * (p.k1 + 1.0) / (it->second + norm);
        }
    }

    // 1: tf-idf cosine over the two bags.
    double dot = 0.0, q_norm = 0.0, d_norm = 0.0;
    for (const auto& [t, tf] : q_tf) {
        const double w = tf * index.idf(t);
        q_norm += w * w;
        auto it = d_tf.find(t);
        if (it != d_tf.end()) dot += w * (it->second * index.idf(t));
    }
    for (const auto& [t, tf] : d_tf) {
        const double w = tf * index.idf(t);
        d_norm += w * w;
    }
    if (q_norm > 0.0 && d_norm > 0.0) f[1] = dot / (std::sqrt(q_norm) * std::sqrt(d_norm));

    // 2/3: distinct-token coverage each way.
    if (!q_tf.empty()) {
        size_t hit = 0;
        for (const auto& [t, tf] : q_tf) hit += d_tf.count(t);
        f[2] = static_cast<double>(hit) / static_cast<double>(q_tf.size());
    }
    if (!d_tf.empty()) {
        size_t hit = 0;
        for (const auto& [t, tf] : d_tf) hit += q_tf.count(t);
        f[3] = static_cast<double>(hit) / static_cast<double>(d_tf.size());
    }

    // 4/5: length shape.
    f[4] = static_cast<double>(q_tokens.size()) / std::max(1.0, dlen);
    f[5] = std::log1p(dlen);
    return f;
}

std::string model_kind_name(ModelKind kind) {
    return kind == ModelKind::Linear ? "linear" : "mlp";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "linear") return ModelKind::Linear;
    if (name == "mlp") return ModelKind::Mlp;
    throw ConfigError("model: unknown kind \"" + name + "\" (expected linear | mlp)");
}

size_t param_count(const ModelConfig& cfg) {
    if (cfg.kind == ModelKind::Linear) return kFeatureDim + 1;
    return cfg.hidden * kFeatureDim + cfg.hidden + cfg.hidden + 1;
}

RerankerModel init_model(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.kind == ModelKind::Mlp && cfg.hidden < 1) {
        throw ConfigError("model: mlp hidden width must be >= 1");
    }
    RerankerModel model;
    model.config = cfg;
    model.params.assign(param_count(cfg), 0.0);
    model.meta.seed = seed;
    if (cfg.kind == ModelKind::Mlp) {
        Rng rng(seed);
        // All but the output bias get uniform(-0.1, 0.1).
        for (size_t i = 0; i + 1 < model.params.size(); ++i) {
            model.params[i] = rng.uniform01() * 0.2 - 0.1;
        }
    }
    return model;
}

namespace {

// Mlp parameter layout: W1 (hidden x dim, row-major), b1, w2, b2.
struct MlpView {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;

    MlpView(const std::vector<double>& params, size_t hidden)
        : w1(params.data()),
          b1(params.data() + hidden * kFeatureDim),
          w2(params.data() + hidden * kFeatureDim + hidden),
          b2(params.data() + hidden * kFeatureDim + 2 * hidden) {}
};

double forward(const ModelConfig& cfg,
               const std::vector<double>& params,
               const FeatureVector& f,
               std::vector<double>* hidden_out = nullptr) {
    if (cfg.kind == ModelKind::Linear) {
        double s = params[kFeatureDim];  // bias
        for (size_t i = 0; i < kFeatureDim; ++i) s += params[i] * f[i];
        return s;
    }
    const MlpView v(params, cfg.hidden);
    if (hidden_out) hidden_out->resize(cfg.hidden);
    double s = *v.b2;
    for (size_t h = 0; h < cfg.hidden; ++h) {
        double z = v.b1[h];
        for (size_t i = 0; i < kFeatureDim; ++i) z += v.w1[h * kFeatureDim + i] * f[i];
        const double a = std::tanh(z);
        if (hidden_out) (*hidden_out)[h] = a;
        s += v.w2[h] * a;
    }
    return s;
}

// Accumulates coeff * d(score)/d(params) into grad.
void accumulate_score_gradient(const ModelConfig& cfg,
                               const std::vector<double>& params,
                               const FeatureVector& f,
                               const std::vector<double>& hidden_act,
                               double coeff,
                               std::vector<double>& grad) {
    if (cfg.kind == ModelKind::Linear) {
        for (size_t i = 0; i < kFeatureDim; ++i) grad[i] += coeff * f[i];
        grad[kFeatureDim] += coeff;
        return;
    }
    const MlpView v(params, cfg.hidden);
    const size_t w2_off = cfg.hidden * kFeatureDim + cfg.hidden;
    const size_t b2_off = w2_off + cfg.hidden;
    for (size_t h = 0; h < cfg.hidden; ++h) {
        const double a = hidden_act[h];
        grad[w2_off + h] += coeff * a;
        const double dz = coeff * v.w2[h] * (1.0 - a * a);
        for (size_t i = 0; i < kFeatureDim; ++i) grad[h * kFeatureDim + i] += dz * f[i];
        grad[cfg.hidden * kFeatureDim + h] += dz;
    }
    grad[b2_off] += coeff;
}

}  // namespace

double score(const RerankerModel& model, const FeatureVector& features) {
    return forward(model.config, model.params, features);
}

double score(const RerankerModel& model,
             const std::string& query,
             const Document& doc,
             const Bm25Index& index) {
    return forward(model.config, model.params, extract_features(query, doc, index));
}

namespace {

void check_finite_scores(double positive, const std::vector<double>& negatives) {
    if (negatives.empty()) throw Error("lce: need at least one negative score");
    if (!std::isfinite(positive)) throw Error("lce: positive score is not finite");
    for (double s : negatives) {
        if (!std::isfinite(s)) throw Error("lce: negative score is not finite");
    }
}

}  // namespace

double lce_loss(double positive_score, const std::vector<double>& negative_scores) {
    check_finite_scores(positive_score, negative_scores);
    double max_score = positive_score;
    for (double s : negative_scores) max_score = std::max(max_score, s);
    double denom = std::exp(positive_score - max_score);
    for (double s : negative_scores) denom += std::exp(s - max_score);
    return std::log(denom) - (positive_score - max_score);
}

std::vector<double> lce_gradient(double positive_score,
                                 const std::vector<double>& negative_scores) {
    check_finite_scores(positive_score, negative_scores);
    double max_score = positive_score;
    for (double s : negative_scores) max_score = std::max(max_score, s);
    std::vector<double> p(negative_scores.size() + 1);
    p[0] = std::exp(positive_score - max_score);
    double denom = p[0];
    for (size_t j = 0; j < negative_scores.size(); ++j) {
        p[j + 1] = std::exp(negative_scores[j] - max_score);
        denom += p[j + 1];
    }
    for (double& v : p) v /= denom;
    p[0] -= 1.0;  // softmax minus the one-hot target
    return p;
}

void TrainerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("trainer: learning_rate must be positive and finite");
    }
    if (!(warmup_ratio > 0.0) || !(warmup_ratio < 1.0)) {
        throw ConfigError("trainer: warmup_ratio must lie strictly between 0 and 1");
    }
    if (epochs < 1) throw ConfigError("trainer: epochs must be >= 1");
    if (batch < 1) throw ConfigError("trainer: batch must be >= 1");
    if (!(validate_every > 0.0) || validate_every > 1.0) {
        throw ConfigError("trainer: validate_every must lie in (0, 1]");
    }
    const double per_epoch = 1.0 / validate_every;
    if (std::abs(per_epoch - std::round(per_epoch)) > 1e-9) {
        throw ConfigError("trainer: validate_every must divide an epoch evenly (got " +
                          format_fixed(validate_every, 6) + ")");
    }
    if (max_steps && *max_steps < 1) throw ConfigError("trainer: max_steps must be >= 1");
}

namespace {

struct Group {
    FeatureVector positive;
    std::vector<FeatureVector> negatives;
};

std::vector<Group> cache_group_features(const std::vector<TrainingTriplet>& triplets,
                                        const Bm25Index& index) {
    std::vector<Group> groups;
    // (query, doc) pairs repeat across rows of a group; extract each once.
    size_t row = 0;
    while (row < triplets.size()) {
        const uint32_t g = triplets[row].group_index;
        Group group;
        const Document* positive = index.find_doc(triplets[row].positive_doc_id);
        if (!positive) {
            throw Error("train: positive doc \"" + triplets[row].positive_doc_id +
                        "\" is not in the index");
        }
        group.positive = extract_features(triplets[row].query_text, *positive, index);
        while (row < triplets.size() && triplets[row].group_index == g) {
            const Document* negative = index.find_doc(triplets[row].negative_doc_id);
            if (!negative) {
                throw Error("train: negative doc \"" + triplets[row].negative_doc_id +
                            "\" is not in the index");
            }
            group.negatives.push_back(
                extract_features(triplets[row].query_text, *negative, index));
            ++row;
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

struct AdamState {
    std::vector<double> m, v;
    uint64_t t = 0;
};

void apply_update(OptimizerKind kind,
                  std::vector<double>& params,
                  const std::vector<double>& grad,
                  double lr,
                  AdamState& adam) {
    if (kind == OptimizerKind::Sgd) {
        for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (adam.m.empty()) {
        adam.m.assign(params.size(), 0.0);
        adam.v.assign(params.size(), 0.0);
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.t));
    for (size_t i = 0; i < params.size(); ++i) {
        adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
        adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (adam.m[i] / bc1) / (std::sqrt(adam.v[i] / bc2) + eps);
    }
}

}  // namespace

RerankerModel train(const RerankerModel& model_init,
                    const std::vector<TrainingTriplet>& triplets,
                    const TrainerConfig& cfg,
                    const JudgmentSet& validation,
                    const Bm25Index& index,
                    const EvalConfig& eval_cfg) {
    cfg.validate();
    eval_cfg.validate();
    if (triplets.empty()) throw Error("train: empty triplet set");
    if (validation.empty()) throw Error("train: empty validation judgment set");
    if (model_init.params.size() != param_count(model_init.config)) {
        throw Error("train: model parameter count does not match its config");
    }

    const std::vector<Group> groups = cache_group_features(triplets, index);
    const uint64_t group_count = groups.size();
    const uint64_t steps_per_epoch = (group_count + cfg.batch - 1) / cfg.batch;
    uint64_t total_steps = steps_per_epoch * cfg.epochs;
    if (cfg.max_steps) total_steps = std::min(total_steps, *cfg.max_steps);
    const uint64_t warmup_steps =
        static_cast<uint64_t>(std::llround(cfg.warmup_ratio * static_cast<double>(total_steps)));

    // Validation boundaries: validations_per_epoch evenly spaced steps per
    // epoch (rounded when groups don't split evenly), plus the final step.
    const uint64_t validations_per_epoch =
        static_cast<uint64_t>(std::llround(1.0 / cfg.validate_every));
    std::vector<uint64_t> boundaries;
    for (uint64_t v = 1; v <= validations_per_epoch * cfg.epochs; ++v) {
        const uint64_t step = static_cast<uint64_t>(std::llround(
            static_cast<double>(v) * static_cast<double>(steps_per_epoch) /
            static_cast<double>(validations_per_epoch)));
        if (step >= 1 && step <= total_steps &&
            (boundaries.empty() || step > boundaries.back())) {
            boundaries.push_back(step);
        }
    }
    if (boundaries.empty() || boundaries.back() != total_steps) boundaries.push_back(total_steps);

    RerankerModel model = model_init;
    model.meta = TrainingMeta{};
    model.meta.seed = cfg.seed;
    model.meta.warmup_steps = warmup_steps;
    model.meta.source = "triplets";

    std::vector<double> best_params;
    double best_score = 0.0;
    uint64_t best_step = 0;

    auto run_validation = [&](uint64_t step) {
        const EvalReport report = avg_ndcg(model, validation, index, eval_cfg);
        model.meta.validation_curve.push_back(ValidationPoint{step, report.mean_ndcg});
        if (best_params.empty() || report.mean_ndcg >= best_score) {  // ties -> latest
            best_params = model.params;
            best_score = report.mean_ndcg;
            best_step = step;
        }
    };
    run_validation(0);

    AdamState adam;
    std::vector<double> grad(model.params.size());
    std::vector<double> group_grad(model.params.size());
    std::vector<double> hidden_act;
    uint64_t step = 0;
    size_t next_boundary = 0;
    for (size_t epoch = 0; step < total_steps; ++epoch) {
        Rng epoch_rng(Rng::derive_seed(cfg.seed, 0x9e3779b9u + epoch));
        const std::vector<size_t> order = epoch_rng.sample_indices(group_count, group_count);
        for (uint64_t b = 0; b < steps_per_epoch && step < total_steps; ++b) {
            ++step;
            std::fill(grad.begin(), grad.end(), 0.0);
            const size_t lo = b * cfg.batch;
            const size_t hi = std::min<size_t>(lo + cfg.batch, group_count);
            for (size_t gi = lo; gi < hi; ++gi) {
                const Group& group = groups[order[gi]];
                std::vector<double> neg_scores(group.negatives.size());
                const double pos_score =
                    forward(model.config, model.params, group.positive, &hidden_act);
                std::vector<double> pos_hidden = hidden_act;
                for (size_t j = 0; j < group.negatives.size(); ++j) {
                    neg_scores[j] = forward(model.config, model.params, group.negatives[j]);
                }
                const double loss = lce_loss(pos_score, neg_scores);
                if (!std::isfinite(loss)) {
                    throw Error("train: loss became non-finite at step " + std::to_string(step) +
                                " (group " + std::to_string(order[gi]) +
                                "); lower the learning rate");
                }
                const std::vector<double> coeffs = lce_gradient(pos_score, neg_scores);
                std::fill(group_grad.begin(), group_grad.end(), 0.0);
                accumulate_score_gradient(model.config, model.params, group.positive, pos_hidden,
                                          coeffs[0], group_grad);
                for (size_t j = 0; j < group.negatives.size(); ++j) {
                    forward(model.config, model.params, group.negatives[j], &hidden_act);
                    accumulate_score_gradient(model.config, model.params, group.negatives[j],
                                              hidden_act, coeffs[j + 1], group_grad);
                }
                for (size_t i = 0; i < grad.size(); ++i) grad[i] += group_grad[i];
            }
            const double scale = 1.0 / static_cast<double>(hi - lo);
            for (double& g : grad) g *= scale;
            const double lr_factor =
                (warmup_steps > 0 && step <= warmup_steps)
                    ? static_cast<double>(step) / static_cast<double>(warmup_steps)
                    : 1.0;
            apply_update(cfg.optimizer, model.params, grad, cfg.learning_rate * lr_factor, adam);

            if (next_boundary < boundaries.size() && boundaries[next_boundary] == step) {
                run_validation(step);
                ++next_boundary;
            }
        }
    }

    model.meta.steps = total_steps;
    if (cfg.selection == CheckpointSelection::BestValidation) {
        model.params = std::move(best_params);
        model.meta.selected_score = best_score;
        model.meta.selected_step = best_step;
    } else {
        model.meta.selected_score = model.meta.validation_curve.back().score;
        model.meta.selected_step = model.meta.validation_curve.back().step;
    }
    return model;
}

RerankerModel train_on_judgments(const JudgmentSet& judgments,
                                 const ModelConfig& model_cfg,
                                 TrainerConfig cfg,
                                 const MiningConfig& mining,
                                 const Bm25Index& index,
                                 const EvalConfig& eval_cfg) {
    TripletResult data = build_triplets_from_judgments(judgments, index, mining,
                                                       Rng::derive_seed(cfg.seed, 0x6a09e667u));
    const uint64_t group_count = data.triplets.empty() ? 0 : data.triplets.back().group_index + 1;
    // Budget rule: the smaller of 2000 steps and 10 epochs over the few
    // groups the judgments yield.
    const uint64_t steps_per_epoch = (group_count + cfg.batch - 1) / cfg.batch;
    cfg.epochs = 10;
    cfg.max_steps = std::min<uint64_t>(2000, steps_per_epoch * cfg.epochs);
    cfg.selection = CheckpointSelection::Final;

    RerankerModel model =
        train(init_model(model_cfg, cfg.seed), data.triplets, cfg, judgments, index, eval_cfg);
    model.meta.source = "judgments";
    return model;
}

RankedList rerank(const RerankerModel& model,
                  const std::string& query,
                  const RankedList& candidates,
                  const Bm25Index& index) {
    std::vector<RankedEntry> entries;
    entries.reserve(candidates.entries.size());
    for (const RankedEntry& e : candidates.entries) {
        const Document* doc = index.find_doc(e.doc_id);
        if (!doc) throw Error("rerank: candidate doc \"" + e.doc_id + "\" is not in the index");
        entries.push_back(RankedEntry{e.doc_id, score(model, query, *doc, index)});
    }
    return make_ranked_list(candidates.query_id, std::move(entries), entries.size());
}

void save_checkpoint(const RerankerModel& model, const std::string& file_path) {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = model_kind_name(model.config.kind);
    j["hidden"] = model.config.hidden;
    j["feature_names"] = kFeatureNames;
    j["params"] = model.params;
    nlohmann::json curve = nlohmann::json::array();
    for (const ValidationPoint& p : model.meta.validation_curve) {
        curve.push_back({{"step", p.step}, {"score", p.score}});
    }
    j["training"] = {{"seed", model.meta.seed},
                     {"steps", model.meta.steps},
                     {"warmup_steps", model.meta.warmup_steps},
                     {"source", model.meta.source},
                     {"selected_score", model.meta.selected_score},
                     {"selected_step", model.meta.selected_step},
                     {"validation_curve", std::move(curve)}};
    write_file(file_path, j.dump(2) + "\n");
}

RerankerModel load_checkpoint(const std::string& file_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("checkpoint " + file_path + ": " + e.what());
    }
    if (!j.is_object() || j.value("version", 0) != 1) {
        throw IoError("checkpoint " + file_path + ": unsupported or missing version");
    }
    RerankerModel model;
    try {
        model.config.kind = model_kind_from_name(j.at("kind").get<std::string>());
        model.config.hidden = j.at("hidden").get<size_t>();
        const auto names = j.at("feature_names").get<std::vector<std::string>>();
        for (size_t i = 0; i < kFeatureDim; ++i) {
            if (i >= names.size() || names[i] != kFeatureNames[i]) {
                throw IoError("checkpoint " + file_path +
                              ": feature layout does not match this build");
            }
        }
        model.params = j.at("params").get<std::vector<double>>();
        const nlohmann::json& t = j.at("training");
        model.meta.seed = t.at("seed").get<uint64_t>();
        model.meta.steps = t.at("steps").get<uint64_t>();
        model.meta.warmup_steps = t.at("warmup_steps").get<uint64_t>();
        model.meta.source = t.at("source").get<std::string>();
        model.meta.selected_score = t.at("selected_score").get<double>();
        model.meta.selected_step = t.at("selected_step").get<uint64_t>();
        for (const auto& p : t.at("validation_curve")) {
            model.meta.validation_curve.push_back(
                ValidationPoint{p.at("step").get<uint64_t>(), p.at("score").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + file_path + ": " + e.what());
    }
    if (model.params.size() != param_count(model.config)) {
        throw IoError("checkpoint " + file_path + ": expected " +
                      std::to_string(param_count(model.config)) + " parameters, found " +
                      std::to_string(model.params.size()));
    }
    return model;
}

std::vector<RankedList> external_train(const ExternalTrainerConfig& cfg,
                                       const std::string& triplets_path,
                                       const JudgmentSet& validation,
                                       const Bm25Index& index,
                                       const EvalConfig& eval_cfg,
                                       const std::string& work_dir) {
    if (cfg.command.empty()) throw ConfigError("external trainer: empty command");
    eval_cfg.validate();
    ensure_dir(work_dir);

    const std::string queries_path = work_dir + "/queries.jsonl";
    std::string queries_out;
    for (const std::string& query_id : validation.query_ids()) {
        nlohmann::json q = {{"query_id", query_id}, {"text", validation.text_of(query_id)}};
        queries_out += q.dump() + "\n";
    }
    write_file(queries_path, queries_out);

    const std::string candidates_path = work_dir + "/candidates.run";
    std::vector<RankedList> candidates;
    for (const std::string& query_id : validation.query_ids()) {
        candidates.push_back(
            index.retrieve(validation.text_of(query_id), eval_cfg.rerank_depth, query_id));
    }
    write_run(candidates, candidates_path, "bm25");

    const std::string out_path = work_dir + "/external.run";
    std::vector<std::string> argv = cfg.command;
    argv.insert(argv.end(), {"--triplets", triplets_path, "--queries", queries_path,
                             "--candidates", candidates_path, "--out", out_path});

    std::vector<char*> c_argv;
    for (std::string& a : argv) c_argv.push_back(a.data());
    c_argv.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) throw Error("external trainer: fork failed: " + std::string(strerror(errno)));
    if (pid == 0) {
        execvp(c_argv[0], c_argv.data());
        std::fprintf(stderr, "exec %s: %s\n", c_argv[0], strerror(errno));
        _exit(127);
    }

    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(cfg.timeout_seconds);
    int status = 0;
    while (true) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw Error("external trainer: waitpid failed: " + std::string(strerror(errno)));
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw ProtocolError("external trainer timed out after " +
                                std::to_string(cfg.timeout_seconds) + "s");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const std::string detail = WIFEXITED(status)
                                       ? "exit code " + std::to_string(WEXITSTATUS(status))
                                       : "killed by signal " + std::to_string(WTERMSIG(status));
        throw ProtocolError("external trainer failed (" + detail + ")");
    }
    if (!file_exists(out_path)) {
        throw ProtocolError("external trainer exited 0 but wrote no run file at " + out_path);
    }
    try {
        return read_run(out_path);
    } catch (const IoError& e) {
        throw ProtocolError(std::string("external trainer run file invalid: ") + e.what());
    }
}

}  // namespace path
