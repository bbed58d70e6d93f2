#include "mbk/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace mbk {

Strategy strategy_from(const std::string& name) {
    if (name == "akt") return Strategy::akt;
    if (name == "jkt") return Strategy::jkt;
    if (name == "pkt") return Strategy::pkt;
    throw LookupError("unknown strategy '" + name + "'; valid strategies: akt jkt pkt");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::akt:
            return "akt";
        case Strategy::jkt:
            return "jkt";
        case Strategy::pkt:
            return "pkt";
    }
    return "?";
}

double Stage::multiplier_for(const std::string& param_name) const {
    std::size_t best_len = 0;
    double best = 0.0;
    bool matched = false;
    for (const auto& [prefix, mult] : lr_multipliers) {
        if (param_name.rfind(prefix, 0) == 0 && (!matched || prefix.size() >= best_len)) {
            matched = true;
            best_len = prefix.size();
            best = mult;
        }
    }
    return matched ? best : 0.0;
}

std::int64_t StagePlan::total_steps() const {
    std::int64_t n = 0;
    for (const auto& s : stages) {
        n += s.steps;
    }
    return n;
}

void StagePlan::validate(std::int64_t num_layers) const {
    std::unordered_set<std::string> names;
    for (const auto& s : stages) {
        if (s.steps < 1) {
            throw ConfigError("stage '" + s.name + "' has non-positive step budget");
        }
        if (!names.insert(s.name).second) {
            throw ConfigError("duplicate stage name '" + s.name + "'");
        }
    }
    if (strategy == Strategy::pkt) {
        if (stages.size() != static_cast<std::size_t>(num_layers) + 1 ||
            stages.back().kind != StageLoss::pd) {
            throw ConfigError("pkt plan must be L transfer stages followed by one pd stage");
        }
    }
}

StagePlan plan(Strategy strategy, std::int64_t num_layers, std::int64_t kt_steps_total,
               std::int64_t pd_steps, double soft_multiplier) {
    if (num_layers < 1 || kt_steps_total < 1 || pd_steps < 1) {
        throw ConfigError("plan: num_layers and step budgets must be positive");
    }
    if (soft_multiplier < 0.0) {
        throw ConfigError("plan: soft_multiplier must be non-negative");
    }
    StagePlan p;
    p.strategy = strategy;
    std::vector<std::int64_t> all_layers(static_cast<std::size_t>(num_layers));
    for (std::int64_t i = 0; i < num_layers; ++i) {
        all_layers[static_cast<std::size_t>(i)] = i;
    }

    switch (strategy) {
        case Strategy::akt: {
            Stage s;
            s.name = "akt";
            s.kind = StageLoss::combined;
            s.kt_layers = all_layers;
            s.lr_multipliers = {{"", 1.0}};
            s.steps = kt_steps_total + pd_steps;
            p.stages.push_back(std::move(s));
            break;
        }
        case Strategy::jkt: {
            Stage kt;
            kt.name = "kt.joint";
            kt.kind = StageLoss::kt_layers;
            kt.kt_layers = all_layers;
            kt.lr_multipliers = {{"embedding.", 1.0}, {"layer.", 1.0}};
            kt.steps = kt_steps_total;
            p.stages.push_back(std::move(kt));
            Stage pd;
            pd.name = "pd";
            pd.kind = StageLoss::pd;
            pd.lr_multipliers = {{"", 1.0}};
            pd.steps = pd_steps;
            p.stages.push_back(std::move(pd));
            break;
        }
        case Strategy::pkt: {
            const std::int64_t base = kt_steps_total / num_layers;
            const std::int64_t remainder = kt_steps_total % num_layers;
            if (base < 1) {
                throw ConfigError("plan: kt_steps_total smaller than the number of layers");
            }
            for (std::int64_t layer = 0; layer < num_layers; ++layer) {
                Stage s;
                s.name = "kt.layer" + std::to_string(layer + 1);
                s.kind = StageLoss::kt_layers;
                s.kt_layers = {layer};
                s.lr_multipliers.emplace_back("embedding.", soft_multiplier);
                for (std::int64_t lower = 0; lower < layer; ++lower) {
                    s.lr_multipliers.emplace_back("layer." + std::to_string(lower) + ".",
                                                  soft_multiplier);
                }
                s.lr_multipliers.emplace_back("layer." + std::to_string(layer) + ".", 1.0);
                s.steps = layer + 1 == num_layers ? base + remainder : base;
                p.stages.push_back(std::move(s));
            }
            Stage pd;
            pd.name = "pd";
            pd.kind = StageLoss::pd;
            pd.lr_multipliers = {{"", 1.0}};
            pd.steps = pd_steps;
            p.stages.push_back(std::move(pd));
            break;
        }
    }
    p.validate(num_layers);
    return p;
}

namespace {

/// Adam with per-stage learning-rate multipliers and linear warmup inside
/// each stage. Parameters whose multiplier is zero are skipped entirely.
class Adam {
public:
    Adam(std::vector<Parameter>& params, const AdamConfig& cfg, TrainState& state)
        : params_(params), cfg_(cfg), state_(state) {
        if (state_.m.size() != params.size()) {
            state_.m.assign(params.size(), {});
            state_.v.assign(params.size(), {});
            for (std::size_t i = 0; i < params.size(); ++i) {
                state_.m[i].assign(params[i].value->data.size(), 0.0);
                state_.v[i].assign(params[i].value->data.size(), 0.0);
            }
        }
    }

    void step(const Stage& stage, std::int64_t stage_step, std::int64_t stage_total) {
        ++state_.adam_t;
        const auto warmup =
            std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                          std::ceil(cfg_.warmup_frac *
                                                    static_cast<double>(stage_total))));
        const double warm_scale =
            std::min(1.0, static_cast<double>(stage_step + 1) / static_cast<double>(warmup));
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.adam_t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.adam_t));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i].value;
            const double mult = stage.multiplier_for(params_[i].name);
            if (mult == 0.0 || p.grad.empty()) {
                continue;
            }
            const double lr = cfg_.lr * mult * warm_scale;
            auto& m = state_.m[i];
            auto& v = state_.v[i];
            for (std::size_t j = 0; j < p.data.size(); ++j) {
                const double g = p.grad[j];
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                p.data[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
            }
        }
    }

private:
    std::vector<Parameter>& params_;
    AdamConfig cfg_;
    TrainState& state_;
};

/// Student (or teacher) MLM logits restricted to the masked positions,
/// decoded against the tied token embedding table.
TensorPtr mlm_logits_at(const Model& model, const ForwardResult& r,
                        const std::vector<std::int64_t>& positions) {
    auto hidden = gather_rows(r.last_hidden, positions);
    auto transformed = linear(hidden, model.param("mlm.w"), model.param("mlm.b"));
    transformed = model.config().activation_kind == ActivationKind::gelu ? gelu(transformed)
                                                                         : relu(transformed);
    return matmul_nt(transformed, model.param("embedding.token"));
}

struct StepLoss {
    TensorPtr loss;
    double fmt = 0.0;
    double at = 0.0;
    double mlm = 0.0;
    double kd = 0.0;
    double nsp = 0.0;
};

StepLoss batch_loss(const Stage& stage, const Model& teacher, const Model& student,
                    const PretrainBatch& batch, const TransferWeights& weights,
                    const ForwardOptions& student_fwd_opts) {
    StepLoss out;
    const double inv_b = 1.0 / static_cast<double>(batch.batch);
    std::vector<TensorPtr> terms;
    for (std::int64_t b = 0; b < batch.batch; ++b) {
        const auto tokens = batch.tokens_of(b);
        const auto segments = batch.segments_of(b);
        const auto mask = batch.mask_of(b);
        ForwardOptions teacher_opts;
        teacher_opts.attention_mask = &mask;
        ForwardOptions student_opts = student_fwd_opts;
        student_opts.attention_mask = &mask;

        const auto teacher_result = teacher.forward(tokens, segments, teacher_opts);
        const auto student_result = student.forward(tokens, segments, student_opts);

        if (stage.kind == StageLoss::kt_layers || stage.kind == StageLoss::combined) {
            for (std::int64_t layer : stage.kt_layers) {
                const auto l = static_cast<std::size_t>(layer);
                auto f = fmt_loss(teacher_result.trace.feature_maps[l],
                                  student_result.trace.feature_maps[l], weights.fmt_stats_weight);
                auto a = at_loss(teacher_result.trace.attentions[l],
                                 student_result.trace.attentions[l]);
                out.fmt += f->data[0] * inv_b;
                out.at += a->data[0] * inv_b;
                terms.push_back(scale(f, weights.fmt_weight));
                terms.push_back(scale(a, weights.at_weight));
            }
        }
        if (stage.kind == StageLoss::pd || stage.kind == StageLoss::combined) {
            const auto& positions = batch.mlm_positions[static_cast<std::size_t>(b)];
            const auto& labels = batch.mlm_labels[static_cast<std::size_t>(b)];
            auto teacher_probs = softmax(mlm_logits_at(teacher, teacher_result, positions), -1);
            auto student_logits = mlm_logits_at(student, student_result, positions);
            auto mlm = cross_entropy_labels(student_logits, labels);
            auto kd = cross_entropy_soft(student_logits, teacher_probs);
            auto nsp = cross_entropy_labels(
                student_result.nsp_logits,
                {batch.nsp_labels[static_cast<std::size_t>(b)]});
            out.mlm += mlm->data[0] * inv_b;
            out.kd += kd->data[0] * inv_b;
            out.nsp += nsp->data[0] * inv_b;
            terms.push_back(combine_pd(mlm, kd, nsp, weights.alpha));
        }
    }
    TensorPtr total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        total = add(total, terms[i]);
    }
    out.loss = scale(total, inv_b);
    return out;
}

void check_pair(const Model& teacher, const Model& student) {
    if (teacher.config().num_layers != student.config().num_layers) {
        throw ConfigError("teacher has " + std::to_string(teacher.config().num_layers) +
                          " layers, student " + std::to_string(student.config().num_layers));
    }
    if (teacher.config().h_inter != student.config().h_inter) {
        throw ConfigError("teacher h_inter " + std::to_string(teacher.config().h_inter) +
                          " differs from student h_inter " +
                          std::to_string(student.config().h_inter) +
                          "; layer-wise transfer requires matched feature map sizes");
    }
}

}  // namespace

Model pretrain_teacher(const ModelConfig& config, const Corpus& corpus, std::int64_t steps,
                       const TrainOptions& options) {
    if (config.block_kind != BlockKind::classic &&
        config.block_kind != BlockKind::inverted_bottleneck) {
        throw ConfigError("pretrain_teacher: config must be classic or inverted_bottleneck, got " +
                          to_string(config.block_kind));
    }
    if (steps < 0) {
        throw ConfigError("pretrain_teacher: negative step budget");
    }
    Model model = Model::build(config, options.seed);
    if (steps == 0) {
        return model;
    }
    Stage stage;
    stage.name = "pretrain";
    stage.kind = StageLoss::pd;
    stage.lr_multipliers = {{"", 1.0}};
    stage.steps = steps;

    TrainState state;
    Adam adam(model.params(), options.adam, state);
    for (std::int64_t step = 0; step < steps; ++step) {
        const auto batch =
            make_batch(corpus, options.batch_size, options.seq_len,
                       Rng::stream(options.seed, "data", static_cast<std::uint64_t>(step)).state());
        model.zero_grads();
        std::vector<TensorPtr> terms;
        for (std::int64_t b = 0; b < batch.batch; ++b) {
            const auto tokens = batch.tokens_of(b);
            const auto segments = batch.segments_of(b);
            const auto mask = batch.mask_of(b);
            Rng dropout_rng = Rng::stream(options.seed, "dropout",
                                          static_cast<std::uint64_t>(step * batch.batch + b));
            ForwardOptions fwd;
            fwd.attention_mask = &mask;
            fwd.dropout = options.dropout;
            fwd.dropout_rng = options.dropout > 0.0 ? &dropout_rng : nullptr;
            const auto r = model.forward(tokens, segments, fwd);
            auto logits = mlm_logits_at(model, r, batch.mlm_positions[static_cast<std::size_t>(b)]);
            auto mlm = cross_entropy_labels(logits, batch.mlm_labels[static_cast<std::size_t>(b)]);
            auto nsp = cross_entropy_labels(r.nsp_logits,
                                            {batch.nsp_labels[static_cast<std::size_t>(b)]});
            terms.push_back(add(mlm, nsp));
        }
        TensorPtr total = terms.front();
        for (std::size_t i = 1; i < terms.size(); ++i) {
            total = add(total, terms[i]);
        }
        total = scale(total, 1.0 / static_cast<double>(batch.batch));
        if (!std::isfinite(total->data[0])) {
            throw TrainAbort("pretrain_teacher: non-finite loss at step " + std::to_string(step),
                             stage.name, step);
        }
        backward(total);
        adam.step(stage, step, steps);
    }
    return model;
}

void copy_embedding_and_classifier(const Model& teacher, Model& student) {
    static const char* kPrefixes[] = {"embedding.", "pooler.", "mlm.", "nsp."};
    auto in_scope = [](const std::string& name) {
        for (const char* p : kPrefixes) {
            if (name.rfind(p, 0) == 0) {
                return true;
            }
        }
        return false;
    };
    std::string mismatches;
    for (const auto& tp : teacher.params()) {
        if (!in_scope(tp.name)) {
            continue;
        }
        if (!student.has_param(tp.name)) {
            mismatches += " " + tp.name + " (missing in student)";
            continue;
        }
        if (student.param(tp.name)->shape != tp.value->shape) {
            mismatches += " " + tp.name + " (" + shape_str(tp.value->shape) + " vs " +
                          shape_str(student.param(tp.name)->shape) + ")";
        }
    }
    for (const auto& sp : student.params()) {
        if (in_scope(sp.name) && !teacher.has_param(sp.name)) {
            mismatches += " " + sp.name + " (missing in teacher)";
        }
    }
    if (!mismatches.empty()) {
        throw CopyError("copy_embedding_and_classifier: incompatible tensors:" + mismatches);
    }
    for (auto& sp : student.params()) {
        if (in_scope(sp.name)) {
            sp.value->data = teacher.param(sp.name)->data;
        }
    }
}

TrainResult run(const StagePlan& planned, const Model& teacher, Model& student,
                const Corpus& corpus, const TransferWeights& weights, const TrainOptions& options,
                TrainState* state) {
    check_pair(teacher, student);
    weights.validate();
    planned.validate(student.config().num_layers);

    // Freeze a private copy of the teacher; the caller's model stays intact
    // and no gradient can ever reach teacher parameters.
    Model frozen = teacher.clone();
    frozen.set_trainable(false);
    student.set_trainable(true);

    TrainState local;
    TrainState& st = state ? *state : local;
    Adam adam(student.params(), options.adam, st);

    TrainResult result;
    std::int64_t steps_this_call = 0;
    for (; st.stage_index < planned.stages.size(); ++st.stage_index, st.stage_step = 0) {
        const Stage& stage = planned.stages[st.stage_index];
        for (; st.stage_step < stage.steps; ++st.stage_step, ++st.global_step) {
            if (options.max_steps > 0 && steps_this_call == options.max_steps) {
                return result;
            }
            const auto batch = make_batch(
                corpus, options.batch_size, options.seq_len,
                Rng::stream(options.seed, "data", static_cast<std::uint64_t>(st.global_step))
                    .state());
            Rng dropout_rng =
                Rng::stream(options.seed, "dropout", static_cast<std::uint64_t>(st.global_step));
            ForwardOptions fwd;
            fwd.dropout = options.dropout;
            fwd.dropout_rng = options.dropout > 0.0 ? &dropout_rng : nullptr;

            student.zero_grads();
            StepLoss step_loss;
            try {
                step_loss = batch_loss(stage, frozen, student, batch, weights, fwd);
            } catch (const DomainError& e) {
                // Numeric blowups inside the forward pass surface as aborted
                // training, with the offending stage and step attached.
                throw TrainAbort("run: " + std::string(e.what()), stage.name, st.stage_step);
            }
            const double value = step_loss.loss->data[0];
            if (!std::isfinite(value)) {
                throw TrainAbort("run: non-finite loss in stage '" + stage.name + "' at step " +
                                 std::to_string(st.stage_step),
                                 stage.name, st.stage_step);
            }
            backward(step_loss.loss);
            adam.step(stage, st.stage_step, stage.steps);
            ++steps_this_call;

            LossRecord rec;
            rec.step = st.global_step;
            rec.stage = stage.name;
            rec.loss = value;
            rec.fmt = step_loss.fmt;
            rec.at = step_loss.at;
            rec.mlm = step_loss.mlm;
            rec.kd = step_loss.kd;
            rec.nsp = step_loss.nsp;
            result.history.push_back(std::move(rec));
        }
    }
    return result;
}

double mean_kt_loss(const Model& teacher, const Model& student, const Corpus& corpus,
                    const TransferWeights& weights, std::int64_t batch, std::int64_t seq_len,
                    std::uint64_t seed) {
    check_pair(teacher, student);
    Model frozen = teacher.clone();
    frozen.set_trainable(false);
    Model probe = student.clone();
    probe.set_trainable(false);

    const auto data = make_batch(corpus, batch, seq_len, Rng::stream(seed, "probe").state());
    const std::int64_t layers = teacher.config().num_layers;
    double acc = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
        const auto tokens = data.tokens_of(b);
        const auto segments = data.segments_of(b);
        const auto mask = data.mask_of(b);
        ForwardOptions fwd;
        fwd.attention_mask = &mask;
        const auto tr = frozen.forward(tokens, segments, fwd);
        const auto sr = probe.forward(tokens, segments, fwd);
        for (std::int64_t l = 0; l < layers; ++l) {
            acc += layer_kt_loss(tr.trace, sr.trace, l, weights)->data[0];
        }
    }
    return acc / static_cast<double>(batch * layers);
}

double masked_accuracy(const Model& model, const Corpus& corpus, std::int64_t batches,
                       std::int64_t batch, std::int64_t seq_len, std::uint64_t seed) {
    Model probe = model.clone();
    probe.set_trainable(false);
    std::int64_t hits = 0;
    std::int64_t total = 0;
    for (std::int64_t i = 0; i < batches; ++i) {
        const auto data = make_batch(corpus, batch, seq_len,
                                     Rng::stream(seed, "eval", static_cast<std::uint64_t>(i))
                                         .state());
        for (std::int64_t b = 0; b < batch; ++b) {
            const auto tokens = data.tokens_of(b);
            const auto segments = data.segments_of(b);
            const auto mask = data.mask_of(b);
            ForwardOptions fwd;
            fwd.attention_mask = &mask;
            const auto r = probe.forward(tokens, segments, fwd);
            const auto& positions = data.mlm_positions[static_cast<std::size_t>(b)];
            const auto& labels = data.mlm_labels[static_cast<std::size_t>(b)];
            const auto logits = mlm_logits_at(probe, r, positions);
            const auto vocab = static_cast<std::size_t>(logits->shape[1]);
            for (std::size_t k = 0; k < positions.size(); ++k) {
                const double* row = logits->data.data() + k * vocab;
                const auto best = std::max_element(row, row + vocab) - row;
                hits += best == labels[k] ? 1 : 0;
                ++total;
            }
        }
    }
    return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

void TrainState::save(const std::string& path) const {
    Archive a;
    const double meta[4] = {static_cast<double>(global_step), static_cast<double>(stage_index),
                            static_cast<double>(stage_step), static_cast<double>(adam_t)};
    a.put_f64("state.meta", {4}, meta);
    for (std::size_t i = 0; i < m.size(); ++i) {
        a.put_f64("state.m." + std::to_string(i), {static_cast<std::int64_t>(m[i].size())},
                  m[i].data());
        a.put_f64("state.v." + std::to_string(i), {static_cast<std::int64_t>(v[i].size())},
                  v[i].data());
    }
    a.save_file(path);
}

TrainState TrainState::load(const std::string& path) {
    const Archive a = Archive::load_file(path);
    const auto* meta = a.find("state.meta");
    if (!meta) {
        throw IoError("train state: missing meta entry");
    }
    const auto md = meta->as_f64();
    TrainState st;
    st.global_step = static_cast<std::int64_t>(md.at(0));
    st.stage_index = static_cast<std::size_t>(md.at(1));
    st.stage_step = static_cast<std::int64_t>(md.at(2));
    st.adam_t = static_cast<std::int64_t>(md.at(3));
    for (std::size_t i = 0;; ++i) {
        const auto* em = a.find("state.m." + std::to_string(i));
        const auto* ev = a.find("state.v." + std::to_string(i));
        if (!em || !ev) {
            break;
        }
        st.m.push_back(em->as_f64());
        st.v.push_back(ev->as_f64());
    }
    return st;
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                         const char* where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || key == k;
        }
        if (!ok) {
            throw ConfigError(std::string("training config: unknown key '") + key + "' in " +
                              where);
        }
    }
}

}  // namespace

TrainDoc TrainDoc::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("training config: document must be a JSON object");
    }
    reject_unknown_keys(j,
                        {"seed", "batch_size", "seq_len", "lr", "warmup_frac", "adam_beta1",
                         "adam_beta2", "adam_eps", "dropout", "strategy", "kt_steps", "pd_steps",
                         "steps", "soft_freeze_multiplier", "weights", "corpus", "model",
                         "student"},
                        "document");
    TrainDoc d;
    try {
        if (j.contains("seed")) d.options.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("batch_size")) d.options.batch_size = j.at("batch_size").get<std::int64_t>();
        if (j.contains("seq_len")) d.options.seq_len = j.at("seq_len").get<std::int64_t>();
        if (j.contains("lr")) d.options.adam.lr = j.at("lr").get<double>();
        if (j.contains("warmup_frac")) d.options.adam.warmup_frac = j.at("warmup_frac").get<double>();
        if (j.contains("adam_beta1")) d.options.adam.beta1 = j.at("adam_beta1").get<double>();
        if (j.contains("adam_beta2")) d.options.adam.beta2 = j.at("adam_beta2").get<double>();
        if (j.contains("adam_eps")) d.options.adam.eps = j.at("adam_eps").get<double>();
        if (j.contains("dropout")) d.options.dropout = j.at("dropout").get<double>();
        if (j.contains("strategy")) d.strategy = strategy_from(j.at("strategy").get<std::string>());
        if (j.contains("kt_steps")) d.kt_steps = j.at("kt_steps").get<std::int64_t>();
        if (j.contains("pd_steps")) d.pd_steps = j.at("pd_steps").get<std::int64_t>();
        if (j.contains("steps")) d.steps = j.at("steps").get<std::int64_t>();
        if (j.contains("soft_freeze_multiplier"))
            d.soft_freeze_multiplier = j.at("soft_freeze_multiplier").get<double>();
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            reject_unknown_keys(w, {"fmt_weight", "at_weight", "alpha", "fmt_stats_weight"},
                                "weights");
            if (w.contains("fmt_weight")) d.weights.fmt_weight = w.at("fmt_weight").get<double>();
            if (w.contains("at_weight")) d.weights.at_weight = w.at("at_weight").get<double>();
            if (w.contains("alpha")) d.weights.alpha = w.at("alpha").get<double>();
            if (w.contains("fmt_stats_weight"))
                d.weights.fmt_stats_weight = w.at("fmt_stats_weight").get<double>();
        }
        if (j.contains("corpus")) {
            const auto& c = j.at("corpus");
            reject_unknown_keys(c, {"seed", "vocab_size", "num_docs"}, "corpus");
            if (c.contains("seed")) d.corpus_seed = c.at("seed").get<std::uint64_t>();
            if (c.contains("vocab_size")) d.corpus_vocab = c.at("vocab_size").get<std::int64_t>();
            if (c.contains("num_docs")) d.corpus_docs = c.at("num_docs").get<std::int64_t>();
        }
        if (j.contains("model")) {
            d.model = ModelConfig::from_json(j.at("model").dump());
        }
        if (j.contains("student")) {
            d.student = ModelConfig::from_json(j.at("student").dump());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: bad field value: ") + e.what());
    }
    d.weights.validate();
    return d;
}

std::string TrainDoc::to_json() const {
    nlohmann::json j;
    j["seed"] = options.seed;
    j["batch_size"] = options.batch_size;
    j["seq_len"] = options.seq_len;
    j["lr"] = options.adam.lr;
    j["warmup_frac"] = options.adam.warmup_frac;
    j["adam_beta1"] = options.adam.beta1;
    j["adam_beta2"] = options.adam.beta2;
    j["adam_eps"] = options.adam.eps;
    j["dropout"] = options.dropout;
    j["strategy"] = to_string(strategy);
    j["kt_steps"] = kt_steps;
    j["pd_steps"] = pd_steps;
    j["steps"] = steps;
    j["soft_freeze_multiplier"] = soft_freeze_multiplier;
    j["weights"] = {{"fmt_weight", weights.fmt_weight},
                    {"at_weight", weights.at_weight},
                    {"alpha", weights.alpha},
                    {"fmt_stats_weight", weights.fmt_stats_weight}};
    j["corpus"] = {{"seed", corpus_seed}, {"vocab_size", corpus_vocab}, {"num_docs", corpus_docs}};
    if (model) {
        j["model"] = nlohmann::json::parse(model->to_json());
    }
    if (student) {
        j["student"] = nlohmann::json::parse(student->to_json());
    }
    return j.dump(2);
}

void write_history_csv(const std::vector<LossRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << "step,stage,loss,fmt,at,mlm,kd,nsp\n";
    out.precision(12);
    for (const auto& r : history) {
        out << r.step << ',' << r.stage << ',' << r.loss << ',' << r.fmt << ',' << r.at << ','
            << r.mlm << ',' << r.kd << ',' << r.nsp << '\n';
    }
}

}  // namespace mbk
