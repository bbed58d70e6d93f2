#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mbk/bench.hpp"
#include "mbk/flops.hpp"
#include "mbk/manifest.hpp"
#include "mbk/model.hpp"
#include "mbk/quantize.hpp"
#include "mbk/training.hpp"

namespace fs = std::filesystem;
using namespace mbk;

namespace {

ModelConfig resolve_model_config(const std::string& preset_name, const std::string& config_path) {
    if (!preset_name.empty() && !config_path.empty()) {
        throw ConfigError("give either --preset or --config, not both");
    }
    if (!preset_name.empty()) {
        return preset(preset_name);
    }
    if (!config_path.empty()) {
        return ModelConfig::from_json(read_file_bytes(config_path));
    }
    throw ConfigError("one of --preset or --config is required");
}

void print_param_report(const ModelConfig& config, const ParamReport& r) {
    std::printf("model: %s blocks, %lld layers\n", to_string(config.block_kind).c_str(),
                static_cast<long long>(config.num_layers));
    std::printf("%-28s %15s\n", "component", "parameters");
    std::printf("%-28s %15lld\n", "embedding", static_cast<long long>(r.embedding));
    std::printf("%-28s %15lld\n", "per-layer bottleneck", static_cast<long long>(r.layer_bottleneck));
    std::printf("%-28s %15lld\n", "per-layer MHA", static_cast<long long>(r.layer_mha));
    std::printf("%-28s %15lld\n", "per-layer FFN stack", static_cast<long long>(r.layer_ffn));
    std::printf("%-28s %15lld\n", "all layers",
                static_cast<long long>(r.num_layers * r.layer_total()));
    std::printf("%-28s %15lld\n", "heads (pooler/MLM/NSP)", static_cast<long long>(r.heads));
    std::printf("%-28s %15lld\n", "backbone (no heads)", static_cast<long long>(r.backbone()));
    std::printf("%-28s %15lld\n", "total", static_cast<long long>(r.total));
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out + ": " + ec.message());
    }
}

void print_stage_summaries(const std::vector<LossRecord>& history) {
    std::string stage;
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= history.size(); ++i) {
        if (i == history.size() || history[i].stage != stage) {
            if (!stage.empty()) {
                const auto& first = history[begin];
                const auto& last = history[i - 1];
                double mean = 0.0;
                for (std::size_t k = begin; k < i; ++k) {
                    mean += history[k].loss;
                }
                mean /= static_cast<double>(i - begin);
                std::printf("stage %-12s steps %5zu  first %.6f  last %.6f  mean %.6f\n",
                            stage.c_str(), i - begin, first.loss, last.loss, mean);
            }
            if (i < history.size()) {
                stage = history[i].stage;
                begin = i;
            }
        }
    }
}

int cmd_params(const std::string& preset_name, const std::string& config_path) {
    const auto config = resolve_model_config(preset_name, config_path);
    print_param_report(config, count_params(config));
    return 0;
}

int cmd_train_teacher(const std::string& config_path, std::int64_t steps_override,
                      std::uint64_t seed_override, bool seed_given, const std::string& out) {
    auto doc = TrainDoc::from_json(read_file_bytes(config_path));
    if (!doc.model) {
        throw ConfigError("train-teacher: config must carry a \"model\" section");
    }
    if (steps_override >= 0) {
        doc.steps = steps_override;
    }
    if (seed_given) {
        doc.options.seed = seed_override;
    }
    ensure_out_dir(out);
    const auto corpus = doc.make_corpus();
    std::printf("pre-training %s teacher for %lld steps (batch %lld, T %lld)\n",
                to_string(doc.model->block_kind).c_str(), static_cast<long long>(doc.steps),
                static_cast<long long>(doc.options.batch_size),
                static_cast<long long>(doc.options.seq_len));
    Model teacher = pretrain_teacher(*doc.model, corpus, doc.steps, doc.options);
    const std::string ckpt = out + "/teacher.tbk";
    teacher.save_checkpoint(ckpt);

    RunManifest manifest;
    manifest.command = "train-teacher";
    manifest.config_json = doc.to_json();
    manifest.seed = doc.options.seed;
    manifest.inputs_hash = content_hash({read_file_bytes(config_path)});
    manifest.outputs = {ckpt, ckpt + ".json"};
    manifest.write(out + "/manifest.json");
    std::printf("wrote %s\n", ckpt.c_str());
    return 0;
}

int cmd_transfer(const std::string& config_path, const std::string& teacher_path,
                 const std::string& strategy_name, std::int64_t kt_steps, std::int64_t pd_steps,
                 std::int64_t layers_override, std::uint64_t seed_override, bool seed_given,
                 const std::string& out) {
    if (teacher_path.empty()) {
        throw ConfigError("transfer: --teacher checkpoint is required");
    }
    auto doc = TrainDoc::from_json(read_file_bytes(config_path));
    if (!doc.student) {
        throw ConfigError("transfer: config must carry a \"student\" section");
    }
    if (!strategy_name.empty()) {
        doc.strategy = strategy_from(strategy_name);
    }
    if (kt_steps >= 0) {
        doc.kt_steps = kt_steps;
    }
    if (pd_steps >= 0) {
        doc.pd_steps = pd_steps;
    }
    if (seed_given) {
        doc.options.seed = seed_override;
    }
    const Model teacher = Model::load_checkpoint(teacher_path);
    if (layers_override > 0 && layers_override != teacher.config().num_layers) {
        throw ConfigError("transfer: --layers " + std::to_string(layers_override) +
                          " does not match the teacher checkpoint (" +
                          std::to_string(teacher.config().num_layers) + " layers)");
    }
    ensure_out_dir(out);
    const auto corpus = doc.make_corpus();

    Model student = Model::build(*doc.student, doc.options.seed);
    if (doc.strategy != Strategy::akt) {
        copy_embedding_and_classifier(teacher, student);
    }
    const auto planned = plan(doc.strategy, student.config().num_layers, doc.kt_steps,
                              doc.pd_steps, doc.soft_freeze_multiplier);
    std::printf("strategy %s: %zu stages, %lld total steps\n", to_string(doc.strategy).c_str(),
                planned.stages.size(), static_cast<long long>(planned.total_steps()));
    const auto result = run(planned, teacher, student, corpus, doc.weights, doc.options);
    print_stage_summaries(result.history);

    const std::string ckpt = out + "/student.tbk";
    const std::string csv = out + "/loss_history.csv";
    student.save_checkpoint(ckpt);
    write_history_csv(result.history, csv);

    RunManifest manifest;
    manifest.command = "transfer";
    manifest.config_json = doc.to_json();
    manifest.seed = doc.options.seed;
    manifest.inputs_hash =
        content_hash({read_file_bytes(config_path), read_file_bytes(teacher_path)});
    manifest.outputs = {ckpt, ckpt + ".json", csv};
    manifest.write(out + "/manifest.json");
    std::printf("wrote %s and %s\n", ckpt.c_str(), csv.c_str());
    return 0;
}

int cmd_distill(const std::string& config_path, const std::string& teacher_path,
                const std::string& student_path, std::int64_t pd_steps,
                std::uint64_t seed_override, bool seed_given, const std::string& out) {
    if (teacher_path.empty()) {
        throw ConfigError("distill: --teacher checkpoint is required");
    }
    auto doc = TrainDoc::from_json(read_file_bytes(config_path));
    if (pd_steps >= 0) {
        doc.pd_steps = pd_steps;
    }
    if (seed_given) {
        doc.options.seed = seed_override;
    }
    const Model teacher = Model::load_checkpoint(teacher_path);
    Model student = [&] {
        if (!student_path.empty()) {
            return Model::load_checkpoint(student_path);
        }
        if (!doc.student) {
            throw ConfigError("distill: give --student or a \"student\" config section");
        }
        Model s = Model::build(*doc.student, doc.options.seed);
        copy_embedding_and_classifier(teacher, s);
        return s;
    }();
    ensure_out_dir(out);
    const auto corpus = doc.make_corpus();

    StagePlan pd_only;
    pd_only.strategy = Strategy::jkt;  // free-form plan, validated generically
    Stage stage;
    stage.name = "pd";
    stage.kind = StageLoss::pd;
    stage.lr_multipliers = {{"", 1.0}};
    stage.steps = doc.pd_steps;
    pd_only.stages.push_back(stage);

    const auto result = run(pd_only, teacher, student, corpus, doc.weights, doc.options);
    print_stage_summaries(result.history);

    const std::string ckpt = out + "/student.tbk";
    const std::string csv = out + "/loss_history.csv";
    student.save_checkpoint(ckpt);
    write_history_csv(result.history, csv);

    RunManifest manifest;
    manifest.command = "distill";
    manifest.config_json = doc.to_json();
    manifest.seed = doc.options.seed;
    std::vector<std::string> inputs = {read_file_bytes(config_path),
                                       read_file_bytes(teacher_path)};
    if (!student_path.empty()) {
        inputs.push_back(read_file_bytes(student_path));
    }
    manifest.inputs_hash = content_hash(inputs);
    manifest.outputs = {ckpt, ckpt + ".json", csv};
    manifest.write(out + "/manifest.json");
    return 0;
}

int cmd_bench(const std::string& preset_name, const std::string& config_path,
              std::int64_t seq_len, std::int64_t repeats, std::uint64_t seed,
              const std::string& out) {
    const auto config = resolve_model_config(preset_name, config_path);
    ensure_out_dir(out);
    const auto report = bench_op_variants(config, seq_len, repeats, seed);
    const std::string csv = out + "/bench.csv";
    write_bench_csv(report, csv);
    std::printf("%-22s %12s %12s %12s %15s\n", "variant", "median_s", "p10_s", "p90_s", "flops");
    for (const auto& v : report.variants) {
        std::printf("%-22s %12.6f %12.6f %12.6f %15lld\n",
                    (to_string(v.norm_kind) + "&" + to_string(v.activation_kind)).c_str(),
                    v.median_s, v.p10_s, v.p90_s, static_cast<long long>(v.flops));
    }
    RunManifest manifest;
    manifest.command = "bench";
    manifest.config_json = config.to_json();
    manifest.seed = seed;
    manifest.inputs_hash = content_hash({config.to_json()});
    manifest.outputs = {csv};
    manifest.write(out + "/manifest.json");
    std::printf("wrote %s\n", csv.c_str());
    return 0;
}

int cmd_quantize(const std::string& checkpoint, const std::string& out) {
    const Model model = Model::load_checkpoint(checkpoint);
    ensure_out_dir(out);
    const auto quantized = QuantizedModel::from_model(model);
    const auto report = quantized.size_report();
    const std::string qpath = out + "/model_int8.tbk";
    quantized.to_archive().save_file(qpath);
    std::ofstream cfg(qpath + ".json");
    cfg << model.config().to_json() << '\n';
    std::printf("size ratio: %.3f (float32 %zu bytes -> int8 %zu bytes)\n", report.ratio,
                report.float32_bytes, report.quantized_bytes);

    RunManifest manifest;
    manifest.command = "quantize";
    manifest.config_json = model.config().to_json();
    manifest.seed = 0;
    manifest.inputs_hash = content_hash({read_file_bytes(checkpoint)});
    manifest.outputs = {qpath, qpath + ".json"};
    manifest.write(out + "/manifest.json");
    return 0;
}

int cmd_dump_attention(const std::string& checkpoint, std::int64_t seq_len, std::uint64_t seed,
                       const std::string& out) {
    Model model = Model::load_checkpoint(checkpoint);
    model.set_trainable(false);
    if (seq_len > model.config().max_positions) {
        throw ConfigError("dump-attention: --seq-len exceeds max_positions");
    }
    ensure_out_dir(out);
    auto rng = Rng::stream(seed, "dump-attention");
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(seq_len));
    for (auto& t : tokens) {
        t = static_cast<std::int32_t>(rng.next_range(5, model.config().vocab_size));
    }
    std::vector<std::int32_t> segments(tokens.size(), 0);
    const auto result = model.forward(tokens, segments);

    Archive archive;
    for (std::size_t l = 0; l < result.trace.attentions.size(); ++l) {
        const auto& attn = result.trace.attentions[l];
        char name[32];
        std::snprintf(name, sizeof name, "layer%02zu.attn", l);
        archive.put_f64(name, attn->shape, attn->data.data());
    }
    const std::string path = out + "/attentions.tbk";
    archive.save_file(path);

    RunManifest manifest;
    manifest.command = "dump-attention";
    manifest.config_json = model.config().to_json();
    manifest.seed = seed;
    manifest.inputs_hash = content_hash({read_file_bytes(checkpoint)});
    manifest.outputs = {path};
    manifest.write(out + "/manifest.json");
    std::printf("wrote %s (%zu layers)\n", path.c_str(), result.trace.attentions.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mbk - compact transformer engineering kit"};
    app.require_subcommand(1);

    std::string preset_name, config_path, teacher_path, student_path, strategy_name, checkpoint;
    std::string out = "out";
    std::int64_t steps = -1, kt_steps = -1, pd_steps = -1, layers = -1;
    std::int64_t seq_len = 128, repeats = 31;
    std::uint64_t seed = 1;
    bool seed_given = false;

    auto* params = app.add_subcommand("params", "print the parameter-count breakdown");
    params->add_option("--preset", preset_name);
    params->add_option("--config", config_path);

    auto* train = app.add_subcommand("train-teacher", "pre-train a teacher on the synthetic corpus");
    train->add_option("--config", config_path)->required();
    train->add_option("--steps", steps);
    train->add_option("--seed", seed)->each([&](const std::string&) { seed_given = true; });
    train->add_option("--out", out);

    auto* transfer = app.add_subcommand("transfer", "layer-wise knowledge transfer to a student");
    transfer->add_option("--config", config_path)->required();
    transfer->add_option("--teacher", teacher_path);
    transfer->add_option("--strategy", strategy_name);
    transfer->add_option("--kt-steps", kt_steps);
    transfer->add_option("--pd-steps", pd_steps);
    transfer->add_option("--layers", layers);
    transfer->add_option("--seed", seed)->each([&](const std::string&) { seed_given = true; });
    transfer->add_option("--out", out);

    auto* distill = app.add_subcommand("distill", "pre-training distillation only");
    distill->add_option("--config", config_path)->required();
    distill->add_option("--teacher", teacher_path);
    distill->add_option("--student", student_path);
    distill->add_option("--pd-steps", pd_steps);
    distill->add_option("--seed", seed)->each([&](const std::string&) { seed_given = true; });
    distill->add_option("--out", out);

    auto* bench = app.add_subcommand("bench", "latency of the norm/activation variants");
    bench->add_option("--preset", preset_name);
    bench->add_option("--config", config_path);
    bench->add_option("--seq-len", seq_len);
    bench->add_option("--repeats", repeats);
    bench->add_option("--seed", seed);
    bench->add_option("--out", out);

    auto* quant = app.add_subcommand("quantize", "weight-only int8 quantization of a checkpoint");
    quant->add_option("--checkpoint", checkpoint)->required();
    quant->add_option("--out", out);

    auto* dump = app.add_subcommand("dump-attention", "write per-layer attention maps");
    dump->add_option("--checkpoint", checkpoint)->required();
    dump->add_option("--seq-len", seq_len);
    dump->add_option("--seed", seed);
    dump->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (params->parsed()) {
            return cmd_params(preset_name, config_path);
        }
        if (train->parsed()) {
            return cmd_train_teacher(config_path, steps, seed, seed_given, out);
        }
        if (transfer->parsed()) {
            return cmd_transfer(config_path, teacher_path, strategy_name, kt_steps, pd_steps,
                                layers, seed, seed_given, out);
        }
        if (distill->parsed()) {
            return cmd_distill(config_path, teacher_path, student_path, pd_steps, seed, seed_given,
                               out);
        }
        if (bench->parsed()) {
            return cmd_bench(preset_name, config_path, seq_len, repeats, seed, out);
        }
        if (quant->parsed()) {
            return cmd_quantize(checkpoint, out);
        }
        if (dump->parsed()) {
            return cmd_dump_attention(checkpoint, seq_len, seed, out);
        }
    } catch (const TrainAbort& e) {
        std::cerr << "error: " << e.what() << " (stage " << e.stage << ", step " << e.step
                  << ")\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
