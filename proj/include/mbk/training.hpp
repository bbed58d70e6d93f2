#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbk/data.hpp"
#include "mbk/model.hpp"
#include "mbk/objectives.hpp"

namespace mbk {

enum class Strategy { akt, jkt, pkt };
Strategy strategy_from(const std::string& name);
std::string to_string(Strategy s);

enum class StageLoss { kt_layers, pd, combined };

struct Stage {
    std::string name;
    StageLoss kind = StageLoss::kt_layers;
    std::vector<std::int64_t> kt_layers;
    /// Name-prefix -> learning-rate multiplier; longest match wins, unmatched
    /// parameters are untouched. Multiplier 0 hard-freezes (bitwise).
    std::vector<std::pair<std::string, double>> lr_multipliers;
    std::int64_t steps = 0;

    double multiplier_for(const std::string& param_name) const;
};

struct StagePlan {
    Strategy strategy = Strategy::pkt;
    std::vector<Stage> stages;

    std::int64_t total_steps() const;
    void validate(std::int64_t num_layers) const;
};

/// Builds the stage plan for one of the three knowledge-transfer strategies.
/// akt: a single combined stage; jkt: joint layer-wise transfer then
/// distillation; pkt: one stage per layer (lower layers soft-frozen at
/// `soft_multiplier`, layers above untouched) then distillation. A
/// kt_steps_total not divisible by L puts the remainder on the final
/// transfer stage.
StagePlan plan(Strategy strategy, std::int64_t num_layers, std::int64_t kt_steps_total,
               std::int64_t pd_steps, double soft_multiplier = 0.1);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double warmup_frac = 0.1;  // linear warmup over this fraction of each stage
};

struct TrainOptions {
    std::uint64_t seed = 1;
    std::int64_t batch_size = 16;
    std::int64_t seq_len = 64;
    AdamConfig adam;
    double dropout = 0.0;
    /// When positive, run() returns after this many optimizer steps; together
    /// with TrainState this gives checkpoint/resume.
    std::int64_t max_steps = 0;
};

struct LossRecord {
    std::int64_t step = 0;  // global across stages
    std::string stage;
    double loss = 0.0;
    double fmt = 0.0;
    double at = 0.0;
    double mlm = 0.0;
    double kd = 0.0;
    double nsp = 0.0;
};

/// Optimizer moments plus cursor; serializing and restoring this reproduces
/// the identical loss sequence.
struct TrainState {
    std::int64_t global_step = 0;
    std::size_t stage_index = 0;
    std::int64_t stage_step = 0;
    std::int64_t adam_t = 0;
    std::vector<std::vector<double>> m;  // first moment, per parameter
    std::vector<std::vector<double>> v;  // second moment, per parameter

    void save(const std::string& path) const;
    static TrainState load(const std::string& path);
};

struct TrainResult {
    std::vector<LossRecord> history;
};

/// Standard MLM+NSP pre-training of a teacher-family model. steps == 0
/// returns the freshly initialized model unchanged.
Model pretrain_teacher(const ModelConfig& config, const Corpus& corpus, std::int64_t steps,
                       const TrainOptions& options);

/// Copies the embedding stack and the MLM/NSP/pooler heads from teacher to
/// student, bitwise. Throws CopyError listing every mismatched tensor.
void copy_embedding_and_classifier(const Model& teacher, Model& student);

/// Executes the stages in order, mutating the student. The teacher is
/// treated as a constant reference throughout. Aborts with TrainAbort on a
/// non-finite loss. When `state` is supplied, training resumes from it and
/// it is kept up to date.
TrainResult run(const StagePlan& planned, const Model& teacher, Model& student,
                const Corpus& corpus, const TransferWeights& weights, const TrainOptions& options,
                TrainState* state = nullptr);

/// Mean transfer loss over all layers on a probe batch; the scalar used to
/// gauge how closely the student matches the teacher.
double mean_kt_loss(const Model& teacher, const Model& student, const Corpus& corpus,
                    const TransferWeights& weights, std::int64_t batch, std::int64_t seq_len,
                    std::uint64_t seed);

/// Fraction of masked positions whose argmax prediction equals the label.
double masked_accuracy(const Model& model, const Corpus& corpus, std::int64_t batches,
                       std::int64_t batch, std::int64_t seq_len, std::uint64_t seed);

void write_history_csv(const std::vector<LossRecord>& history, const std::string& path);

/// The training configuration document: strategy, budgets, transfer weights,
/// optimizer fields, seed, synthetic-corpus parameters and model
/// configurations. Unknown keys are rejected.
struct TrainDoc {
    TrainOptions options;
    TransferWeights weights;
    Strategy strategy = Strategy::pkt;
    std::int64_t kt_steps = 400;
    std::int64_t pd_steps = 400;
    std::int64_t steps = 2000;  // teacher pre-training budget
    double soft_freeze_multiplier = 0.1;
    std::uint64_t corpus_seed = 7;
    std::int64_t corpus_vocab = 64;
    std::int64_t corpus_docs = 64;
    std::optional<ModelConfig> model;    // teacher pre-training target
    std::optional<ModelConfig> student;  // transfer target

    static TrainDoc from_json(const std::string& text);
    std::string to_json() const;
    Corpus make_corpus() const { return generate_corpus(corpus_seed, corpus_vocab, corpus_docs); }
};

}  // namespace mbk
