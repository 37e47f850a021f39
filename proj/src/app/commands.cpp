#include "trl3d/app/commands.hpp"

#include <fstream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "trl3d/app/csv.hpp"
#include "trl3d/app/experiments.hpp"
#include "trl3d/core/checkpoint.hpp"

namespace trl3d {

namespace fs = std::filesystem;

namespace {

const std::vector<std::size_t> kCheckpointPercents{0, 50, 100};

Dataset require_dataset(const RunConfig& cfg, const std::string& kind) {
    const std::string& dir = cfg.str("data_dir");
    if (dir.empty()) throw std::invalid_argument("data_dir is not set");
    if (!fs::exists(fs::path(dir) / "manifest.json")) throw std::invalid_argument("missing dataset at " + dir);
    Dataset ds = load_dataset(dir);
    if (ds.config.kind != kind) {
        throw std::invalid_argument("dataset at " + dir + " is of kind '" + ds.config.kind + "', expected '" + kind + "'");
    }
    return ds;
}

/// Backbone settings come from the config; image geometry must match the dataset.
BackboneConfig model_for(const RunConfig& cfg, const Dataset& ds) {
    BackboneConfig b = backbone_config(cfg);
    if (ds.config.render.height != b.image_size || ds.config.render.patch != b.patch_size) {
        throw std::invalid_argument("dataset images (" + std::to_string(ds.config.render.height) + "px, patch " +
                                    std::to_string(ds.config.render.patch) + ") differ from data.image_size/patch_size");
    }
    return b;
}

Model load_model(const RunConfig& cfg, const BackboneConfig& b, const std::string& checkpoint) {
    Model model(b, cfg.u64("seed"));
    if (!checkpoint.empty()) model.load(load_checkpoint(checkpoint));
    return model;
}

std::string checkpoint_name(std::size_t percent) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "checkpoint_%03zu.bin", percent);
    return buf;
}

void write_losses(const std::vector<double>& losses, const fs::path& path) {
    CsvWriter csv({"step", "loss"});
    for (std::size_t i = 0; i < losses.size(); ++i) csv.row({std::to_string(i + 1), fmt(losses[i])});
    csv.save(path);
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = generate_dataset(data_config(cfg));
    save_dataset(ds, out);
    log << "wrote " << ds.sequences.size() << " sequences (" << ds.config.kind << ") to " << out.string() << "\n";
    return 0;
}

int cmd_train_classify(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "classify");
    Model model(model_for(cfg, ds), cfg.u64("seed"));
    const std::vector<double> losses = train_classifier(model, ds, train_options(cfg));
    save_checkpoint(out / "checkpoint.bin", model.parameters());
    write_losses(losses, out / "loss.csv");
    CsvWriter acc({"split", "accuracy", "samples"});
    for (const std::string split : {"train", "test", "test_unseen"}) {
        const double a = classification_accuracy(model, ds, split);
        acc.row({split, fmt(a), std::to_string(ds.select(split).size())});
        log << split << " accuracy " << fmt(a) << "\n";
    }
    acc.save(out / "accuracy.csv");
    return 0;
}

int cmd_train_align(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "align");
    Model model(model_for(cfg, ds), cfg.u64("seed"));
    const TrainOptions opt = train_options(cfg);
    std::vector<std::size_t> steps;
    for (std::size_t p : kCheckpointPercents) steps.push_back(opt.steps * p / 100);
    auto hook = [&](std::size_t step, const Model& m) {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i] == step) save_checkpoint(out / checkpoint_name(kCheckpointPercents[i]), m.parameters());
        }
    };
    const std::vector<double> losses = train_alignment(model, ds, opt, tcn_config(cfg), steps, hook);
    save_checkpoint(out / "checkpoint.bin", model.parameters());
    write_losses(losses, out / "loss.csv");
    log << "final tcn loss " << (losses.empty() ? std::string("n/a") : fmt(losses.back())) << "\n";
    return 0;
}

int cmd_eval_align(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "align");
    const Model model = load_model(cfg, model_for(cfg, ds), cfg.str("checkpoint"));
    CsvWriter summary({"split", "direction", "pairs", "alignment_error", "cycle_error", "kendall_tau"});
    for (const std::string split : {"test_seen", "test_unseen"}) {
        const auto rows = evaluate_alignment_split(model, ds, split);
        CsvWriter csv({"pair_id", "N", "direction", "alignment_error", "cycle_error", "kendall_tau"});
        double sums[2][3] = {};
        for (const auto& r : rows) {
            const AlignmentReport* reps[2] = {&r.a_to_b, &r.b_to_a};
            const char* names[2] = {"a_to_b", "b_to_a"};
            for (int d = 0; d < 2; ++d) {
                csv.row({std::to_string(r.pair_id), std::to_string(r.frames), names[d], fmt(reps[d]->alignment_error),
                         fmt(reps[d]->cycle_error), fmt(reps[d]->kendall_tau)});
                sums[d][0] += reps[d]->alignment_error;
                sums[d][1] += reps[d]->cycle_error;
                sums[d][2] += reps[d]->kendall_tau;
            }
        }
        csv.save(out / ("align_" + split + ".csv"));
        const double n = static_cast<double>(rows.size());
        for (int d = 0; d < 2; ++d) {
            summary.row({split, d == 0 ? "a_to_b" : "b_to_a", std::to_string(rows.size()), fmt(sums[d][0] / n),
                         fmt(sums[d][1] / n), fmt(sums[d][2] / n)});
        }
        log << split << ": alignment_error " << fmt(sums[0][0] / n) << ", kendall_tau " << fmt(sums[0][2] / n) << "\n";
    }
    summary.save(out / "summary.csv");
    return 0;
}

int cmd_eval_depth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "align");
    const BackboneConfig b = model_for(cfg, ds);
    const std::string split = cfg.str("eval.split");
    const std::string ckpt = cfg.str("checkpoint");
    if (ckpt.empty()) throw std::invalid_argument("checkpoint is not set");
    const Model trained = load_model(cfg, b, ckpt);
    const Model untrained = load_model(cfg, b, "");
    CsvWriter csv({"model", "split", "fisher_r", "frames", "coverage"});
    auto add = [&](const std::string& name, const DepthCorrelation& d) {
        csv.row({name, split, fmt(d.fisher_r), std::to_string(d.frames), fmt(d.coverage)});
        log << name << " depth r " << fmt(d.fisher_r) << "\n";
    };
    add("trained", depth_correlation(trained, ds, split));
    add("untrained", depth_correlation(untrained, ds, split));
    add("random", depth_correlation(untrained, ds, split, mix_seed(cfg.u64("seed"), 0xD0)));
    csv.save(out / "depth.csv");
    return 0;
}

int cmd_eval_camera(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "align");
    const BackboneConfig b = model_for(cfg, ds);
    const std::string split = cfg.str("eval.split");
    std::vector<std::string> ckpts = cfg.words("checkpoints");
    if (ckpts.empty() && !cfg.str("checkpoint").empty()) ckpts.push_back(cfg.str("checkpoint"));
    if (ckpts.empty()) throw std::invalid_argument("set checkpoint or checkpoints");
    CsvWriter csv({"checkpoint", "pair_id", "position_disparity", "orientation_disparity"});
    CsvWriter summary({"checkpoint", "pairs", "position_disparity", "orientation_disparity"});
    for (std::size_t c = 0; c < ckpts.size(); ++c) {
        const Model model = load_model(cfg, b, ckpts[c]);
        const auto rows = evaluate_camera_split(model, ds, split);
        double pos = 0.0, ori = 0.0;
        const std::string label = fs::path(ckpts[c]).filename().string();
        for (const auto& r : rows) {
            csv.row({label, std::to_string(r.pair_id), fmt(r.report.position_disparity),
                     fmt(r.report.orientation_disparity)});
            pos += r.report.position_disparity;
            ori += r.report.orientation_disparity;
        }
        const double n = static_cast<double>(rows.size());
        summary.row({label, std::to_string(rows.size()), fmt(pos / n), fmt(ori / n)});
        log << label << ": position " << fmt(pos / n) << ", orientation " << fmt(ori / n) << "\n";
    }
    csv.save(out / "camera.csv");
    summary.save(out / "camera_summary.csv");
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    GradcheckOptions opt;
    opt.entries = cfg.count("gradcheck.entries");
    opt.step = cfg.real("gradcheck.step");
    opt.tolerance = cfg.real("gradcheck.tolerance");
    opt.batch = cfg.count("gradcheck.batch");
    opt.seed = cfg.u64("seed");
    const auto rows = gradcheck(backbone_config(cfg), opt);
    CsvWriter csv({"parameter", "checks", "kink_resamples", "max_rel_error", "result"});
    bool all = true;
    for (const auto& r : rows) {
        csv.row({r.name, std::to_string(r.checks), std::to_string(r.resamples), fmt(r.max_rel_error), r.pass ? "PASS" : "FAIL"});
        log << (r.pass ? "PASS " : "FAIL ") << r.name << " " << fmt(r.max_rel_error) << "\n";
        all = all && r.pass;
    }
    csv.save(out / "gradcheck.csv");
    if (!all) throw std::runtime_error("gradient check failed for at least one parameter");
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const Dataset ds = require_dataset(cfg, "classify");
    std::vector<std::uint64_t> seeds;
    for (auto s : cfg.counts("ablate.seeds")) seeds.push_back(s);
    if (seeds.empty()) throw std::invalid_argument("ablate.seeds is empty");
    const auto variants = cfg.words("ablate.variants");
    const auto rows = run_ablation(model_for(cfg, ds), ds, train_options(cfg), variants, seeds);
    CsvWriter csv({"variant", "seed", "parameters", "test_accuracy", "unseen_accuracy"});
    for (const auto& r : rows) {
        csv.row({r.variant, std::to_string(r.seed), std::to_string(r.parameters), fmt(r.test_accuracy),
                 fmt(r.unseen_accuracy)});
        log << r.variant << " seed " << r.seed << ": test " << fmt(r.test_accuracy) << ", unseen "
            << fmt(r.unseen_accuracy) << "\n";
    }
    csv.save(out / "ablation.csv");
    return 0;
}

using Handler = int (*)(const RunConfig&, const fs::path&, std::ostream&);

struct Entry {
    const char* name;
    Handler fn;
};

const Entry kCommands[] = {
    {"gen-data", cmd_gen_data},       {"train-classify", cmd_train_classify}, {"train-align", cmd_train_align},
    {"eval-align", cmd_eval_align},   {"eval-depth", cmd_eval_depth},         {"eval-camera", cmd_eval_camera},
    {"gradcheck", cmd_gradcheck},     {"ablate", cmd_ablate},
};

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& e : kCommands) v.emplace_back(e.name);
        return v;
    }();
    return names;
}

std::string run_manifest(const std::string& command, const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["library_version"] = kLibraryVersion;
    nlohmann::ordered_json c;
    for (const auto& key : RunConfig::known_keys()) c[key] = cfg.str(key);
    j["config"] = c;
    return j.dump(2) + "\n";
}

int run_command(const std::string& command, const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    for (const auto& e : kCommands) {
        if (command != e.name) continue;
        fs::create_directories(out);
        {
            std::ofstream os(out / "run.json", std::ios::binary);
            os << run_manifest(command, cfg);
        }
        return e.fn(cfg, out, log);
    }
    throw std::invalid_argument("unknown command '" + command + "'");
}

}  // namespace trl3d
