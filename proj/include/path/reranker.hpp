#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "path/bm25.hpp"
#include "path/corpus.hpp"
#include "path/evaluation.hpp"
#include "path/synthesis.hpp"

namespace path {

// Fixed feature layout. Formulas (tokens via the index's tokenizer, idf and
// avgdl from the index):
//   0 bm25       BM25 score of (query, doc) under the index parameters
//   1 cosine     tf-idf cosine: w(t) = tf(t)*idf(t) per side, dot / (|q||d|)
//   2 q_coverage |distinct query tokens found in doc| / |distinct query tokens|
//   3 d_coverage |distinct doc tokens found in query| / |distinct doc tokens|
//   4 len_ratio  query tokens / max(1, doc tokens)
//   5 log_len    ln(1 + doc tokens)
// Empty token sets produce 0 for the affected features, never NaN.
inline constexpr size_t kFeatureDim = 6;
extern const std::array<const char*, kFeatureDim> kFeatureNames;

using FeatureVector = std::array<double, kFeatureDim>;

FeatureVector extract_features(const std::string& query,
                               const Document& doc,
                               const Bm25Index& index);

enum class ModelKind { Linear, Mlp };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
    ModelKind kind = ModelKind::Linear;
    size_t hidden = 16;  // Mlp only

    bool operator==(const ModelConfig&) const = default;
};

size_t param_count(const ModelConfig& cfg);

struct ValidationPoint {
    uint64_t step = 0;
    double score = 0.0;

    bool operator==(const ValidationPoint&) const = default;
};

struct TrainingMeta {
    uint64_t seed = 0;
    uint64_t steps = 0;
    uint64_t warmup_steps = 0;
    std::string source = "init";  // init | triplets | judgments
    double selected_score = 0.0;  // validation score of this checkpoint
    uint64_t selected_step = 0;
    std::vector<ValidationPoint> validation_curve;
};

// Pointwise scorer: score(model, query, doc) reads nothing but the pair (and
// static corpus statistics), so candidates never influence each other.
struct RerankerModel {
    ModelConfig config;
    std::vector<double> params;
    TrainingMeta meta;
};

// Linear models start at exactly zero (the indifferent scorer); Mlp layers
// start uniform in [-0.1, 0.1), seeded.
RerankerModel init_model(const ModelConfig& cfg, uint64_t seed);

double score(const RerankerModel& model, const FeatureVector& features);
double score(const RerankerModel& model,
             const std::string& query,
             const Document& doc,
             const Bm25Index& index);

// Grouped softmax cross-entropy with one positive:
//   loss = -ln( exp(s+) / (exp(s+) + sum_j exp(s-_j)) )
// computed with max-subtraction. Gradient is softmax - onehot: d/ds+ = p+ - 1,
// d/ds-_j = p_j; returned with the positive in slot 0.
double lce_loss(double positive_score, const std::vector<double>& negative_scores);
std::vector<double> lce_gradient(double positive_score,
                                 const std::vector<double>& negative_scores);

enum class OptimizerKind { Sgd, Adam };
enum class CheckpointSelection { BestValidation, Final };

struct TrainerConfig {
    double learning_rate = 5e-5;
    double warmup_ratio = 0.1;   // fraction of total steps spent ramping up
    size_t epochs = 2;
    double validate_every = 0.5; // fraction of an epoch between validations
    size_t batch = 1;            // groups per optimizer step
    uint64_t seed = 0;
    std::optional<uint64_t> max_steps;  // hard cap, checked before each step
    OptimizerKind optimizer = OptimizerKind::Sgd;
    CheckpointSelection selection = CheckpointSelection::BestValidation;

    void validate() const;
};

// Minibatch gradient descent over triplet groups with linear warmup then a
// constant rate. Validation AvgNDCG is computed for the initial model, at
// every validate_every boundary, and at the final step; the returned
// checkpoint is the curve's argmax (ties -> latest) unless cfg.selection says
// Final. The full curve lands in the returned model's metadata.
RerankerModel train(const RerankerModel& model_init,
                    const std::vector<TrainingTriplet>& triplets,
                    const TrainerConfig& cfg,
                    const JudgmentSet& validation,
                    const Bm25Index& index,
                    const EvalConfig& eval_cfg);

// Direct training on the judgments themselves: one group per positive
// judgment, capped at min(2000 steps, 10 epochs), final checkpoint returned.
// The handful of labels is both train set and validation curve input.
RerankerModel train_on_judgments(const JudgmentSet& judgments,
                                 const ModelConfig& model_cfg,
                                 TrainerConfig cfg,
                                 const MiningConfig& mining,
                                 const Bm25Index& index,
                                 const EvalConfig& eval_cfg);

// Reorders the candidates by model score (doc_id breaks ties); the set of
// documents is preserved exactly.
RankedList rerank(const RerankerModel& model,
                  const std::string& query,
                  const RankedList& candidates,
                  const Bm25Index& index);

void save_checkpoint(const RerankerModel& model, const std::string& file_path);
RerankerModel load_checkpoint(const std::string& file_path);

struct ExternalTrainerConfig {
    std::vector<std::string> command;  // argv prefix, e.g. {"python3", "trainer.py"}
    int timeout_seconds = 21600;
    std::string run_tag = "external";
};

// Drives an out-of-process trainer:
//   command --triplets <tsv> --queries <jsonl> --candidates <trec run> --out <trec run>
// The helper writes the validation queries and their BM25 candidates under
// work_dir, runs the command (exit 0 required, timeout enforced), and returns
// the parsed output run for eval_run().
std::vector<RankedList> external_train(const ExternalTrainerConfig& cfg,
                                       const std::string& triplets_path,
                                       const JudgmentSet& validation,
                                       const Bm25Index& index,
                                       const EvalConfig& eval_cfg,
                                       const std::string& work_dir);

}  // namespace path
