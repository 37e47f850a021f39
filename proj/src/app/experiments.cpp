#include "trl3d/app/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "trl3d/core/ops.hpp"

namespace trl3d {

namespace {

constexpr std::uint64_t kBatchStream = 0xB47C00;
constexpr std::uint64_t kTripletStream = 0x7C0000;
constexpr std::uint64_t kGradcheckStream = 0x6C0000;
constexpr double kMaxAbsR = 1.0 - 1e-12;

CoordMode parse_coord_mode(const std::string& s) {
    if (s == "depth") return CoordMode::depth;
    if (s == "direct_xyz") return CoordMode::direct_xyz;
    throw ConfigError("config: layer.coord_mode must be depth or direct_xyz, got " + s);
}

FusionMode parse_fusion_mode(const std::string& s) {
    if (s == "embedding") return FusionMode::embedding;
    if (s == "concat") return FusionMode::concat;
    throw ConfigError("config: layer.fusion_mode must be embedding or concat, got " + s);
}

VideoStrategy parse_video_strategy(const std::string& s) {
    if (s == "divided") return VideoStrategy::divided;
    if (s == "joint") return VideoStrategy::joint;
    throw ConfigError("config: layer.video_strategy must be divided or joint, got " + s);
}

InsertKind parse_insert_kind(const std::string& s) {
    if (s == "trl3d") return InsertKind::trl3d;
    if (s == "mlp_control") return InsertKind::mlp_control;
    throw ConfigError("config: model.insert_kind must be trl3d or mlp_control, got " + s);
}

Embeddings to_embeddings(const Tensor& t) {
    const std::size_t rows = t.shape()[0], cols = t.shape()[1];
    Embeddings e(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    auto d = t.data();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[i * cols + j];
    }
    return e;
}

std::vector<Tensor> trainable(const Model& model) { return tensors_of(model.parameters()); }

std::vector<const SampleSequence*> split_sequences(const Dataset& ds, const std::string& split) {
    std::vector<const SampleSequence*> out;
    for (const auto& s : ds.sequences) {
        if (s.split == split) out.push_back(&s);
    }
    if (out.empty()) throw std::invalid_argument("dataset has no split '" + split + "'");
    return out;
}

void require_pseudo_depth(const ModelOutput& out) {
    if (out.layers.empty() || !out.layers.front().pseudo_depth.defined()) {
        throw std::invalid_argument("model has no 3DTRL with pseudo-depth (check insert_at and coord_mode)");
    }
}

}  // namespace

DataConfig data_config(const RunConfig& cfg) {
    DataConfig d;
    d.kind = cfg.str("data.kind");
    d.seed = cfg.u64("data.seed");
    d.render.height = d.render.width = cfg.count("data.image_size");
    d.render.patch = cfg.count("data.patch_size");
    d.render.intrinsics.focal = cfg.real("data.focal");
    d.rig.distance = cfg.real("data.camera_distance");
    d.rig.min_elevation = cfg.real("data.min_elevation");
    d.rig.max_elevation = cfg.real("data.max_elevation");
    d.rig.sectors = cfg.count("data.camera_sectors");
    d.backdrop = cfg.flag("data.backdrop");
    d.train_per_class = cfg.count("data.train_per_class");
    d.test_per_class = cfg.count("data.test_per_class");
    d.frames = cfg.count("data.frames");
    d.train_pairs = cfg.count("data.train_pairs");
    d.test_pairs = cfg.count("data.test_pairs");
    d.orbit_sweep = cfg.real("data.orbit_sweep");
    d.validate();
    return d;
}

BackboneConfig backbone_config(const RunConfig& cfg) {
    BackboneConfig b;
    b.image_size = cfg.count("data.image_size");
    b.patch_size = cfg.count("data.patch_size");
    b.channels = 1;
    b.depth = cfg.count("model.depth");
    b.heads = cfg.count("model.heads");
    b.embed_dim = cfg.count("model.embed_dim");
    b.mlp_ratio = cfg.count("model.mlp_ratio");
    b.insert_at = cfg.counts("model.insert_at");
    b.insert_kind = parse_insert_kind(cfg.str("model.insert_kind"));
    b.num_classes = cfg.str("data.kind") == "align" ? 0 : cfg.count("model.num_classes");
    b.layer.embed_dim = b.embed_dim;
    b.layer.focal = cfg.real("layer.focal");
    b.layer.coord_mode = parse_coord_mode(cfg.str("layer.coord_mode"));
    b.layer.fusion_mode = parse_fusion_mode(cfg.str("layer.fusion_mode"));
    b.layer.video_strategy = parse_video_strategy(cfg.str("layer.video_strategy"));
    b.layer.stem_hidden = cfg.count("layer.stem_hidden");
    b.validate();
    return b;
}

TcnConfig tcn_config(const RunConfig& cfg) {
    TcnConfig t;
    t.positive_window = cfg.count("tcn.positive_window");
    t.margin = cfg.real("tcn.margin");
    t.negatives_per_anchor = cfg.count("tcn.negatives_per_anchor");
    t.validate();
    return t;
}

TrainOptions train_options(const RunConfig& cfg) {
    TrainOptions o;
    o.optimizer = cfg.str("optim.kind");
    if (o.optimizer != "adam" && o.optimizer != "sgd") throw ConfigError("config: optim.kind must be adam or sgd");
    o.lr = cfg.real("optim.lr");
    o.momentum = cfg.real("optim.momentum");
    o.schedule = cfg.str("optim.schedule");
    if (o.schedule != "constant" && o.schedule != "cosine") {
        throw ConfigError("config: optim.schedule must be constant or cosine");
    }
    o.steps = cfg.count("optim.steps");
    o.batch = cfg.count("optim.batch");
    o.seed = cfg.u64("seed");
    if (!(o.lr > 0.0) || o.momentum < 0.0 || o.momentum >= 1.0 || o.batch == 0) {
        throw ConfigError("config: optimiser needs lr > 0, momentum in [0, 1) and batch > 0");
    }
    return o;
}

double scheduled_lr(const TrainOptions& opt, std::size_t step) {
    if (opt.schedule == "constant" || opt.steps == 0) return opt.lr;
    const double progress = static_cast<double>(step) / static_cast<double>(opt.steps);
    return 0.5 * opt.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::unique_ptr<Optimizer> make_optimizer(const Model& model, const TrainOptions& opt) {
    if (opt.optimizer == "sgd") return std::make_unique<Sgd>(trainable(model), opt.lr, opt.momentum);
    return std::make_unique<Adam>(trainable(model), opt.lr);
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v{"baseline", "mlp", "trl3d", "direct_xyz", "concat"};
    return v;
}

BackboneConfig apply_variant(BackboneConfig cfg, const std::string& variant) {
    if (variant == "baseline") {
        cfg.insert_at.clear();
    } else if (variant == "mlp") {
        cfg.insert_kind = InsertKind::mlp_control;
    } else if (variant == "trl3d") {
        cfg.insert_kind = InsertKind::trl3d;
    } else if (variant == "direct_xyz") {
        cfg.insert_kind = InsertKind::trl3d;
        cfg.layer.coord_mode = CoordMode::direct_xyz;
    } else if (variant == "concat") {
        cfg.insert_kind = InsertKind::trl3d;
        cfg.layer.fusion_mode = FusionMode::concat;
    } else {
        throw ConfigError("unknown ablation variant '" + variant + "'");
    }
    if (variant != "baseline" && cfg.insert_at.empty()) {
        throw ConfigError("ablation variant '" + variant + "' needs a non-empty model.insert_at");
    }
    return cfg;
}

Tensor stack_images(const std::vector<const ViewSample*>& views) {
    if (views.empty()) throw std::invalid_argument("stack_images: no images");
    Shape s = views.front()->image.shape();
    std::vector<double> data;
    data.reserve(views.size() * views.front()->image.numel());
    for (const auto* v : views) {
        if (v->image.shape() != s) throw std::invalid_argument("stack_images: images differ in shape");
        auto d = v->image.data();
        data.insert(data.end(), d.begin(), d.end());
    }
    s.insert(s.begin(), views.size());
    return Tensor(std::move(s), std::move(data));
}

Tensor stack_frames(const SampleSequence& seq) {
    std::vector<const ViewSample*> views;
    for (const auto& f : seq.frames) views.push_back(&f);
    return stack_images(views);
}

std::vector<double> train_classifier(Model& model, const Dataset& ds, const TrainOptions& opt) {
    if (model.config().num_classes == 0) throw std::invalid_argument("train_classifier: model has no class head");
    const auto train = split_sequences(ds, "train");
    auto optimizer = make_optimizer(model, opt);
    Rng rng(mix_seed(opt.seed, kBatchStream));
    std::vector<std::size_t> order(train.size());
    std::size_t cursor = order.size();
    std::vector<double> losses;
    for (std::size_t step = 0; step < opt.steps; ++step) {
        std::vector<const ViewSample*> views;
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < std::min(opt.batch, train.size()); ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
                cursor = 0;
            }
            const SampleSequence* s = train[order[cursor++]];
            views.push_back(&s->frames.front());
            labels.push_back(s->class_id);
        }
        Tensor loss = cross_entropy(model.forward(stack_images(views)).output, labels);
        losses.push_back(loss.item());
        loss.backward();
        optimizer->set_lr(scheduled_lr(opt, step));
        optimizer->step();
    }
    return losses;
}

double classification_accuracy(const Model& model, const Dataset& ds, const std::string& split) {
    const auto seqs = split_sequences(ds, split);
    NoGradGuard guard;
    std::size_t correct = 0;
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < seqs.size(); start += kChunk) {
        std::vector<const ViewSample*> views;
        const std::size_t end = std::min(seqs.size(), start + kChunk);
        for (std::size_t i = start; i < end; ++i) views.push_back(&seqs[i]->frames.front());
        const Tensor logits = model.forward(stack_images(views)).output;
        const std::size_t k = logits.shape()[1];
        auto d = logits.data();
        for (std::size_t i = start; i < end; ++i) {
            const double* row = d.data() + (i - start) * k;
            const auto pred = static_cast<std::size_t>(std::max_element(row, row + k) - row);
            if (pred == seqs[i]->class_id) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(seqs.size());
}

std::vector<double> train_alignment(Model& model, const Dataset& ds, const TrainOptions& opt, const TcnConfig& tcn,
                                    const std::vector<std::size_t>& hook_steps, const StepHook& hook) {
    if (model.config().num_classes != 0) throw std::invalid_argument("train_alignment: model must output embeddings");
    const auto a_views = ds.select("train", "a");
    const auto b_views = ds.select("train", "b");
    if (a_views.empty() || a_views.size() != b_views.size()) {
        throw std::invalid_argument("train_alignment: dataset has no training pairs");
    }
    auto optimizer = make_optimizer(model, opt);
    auto maybe_hook = [&](std::size_t step) {
        if (hook && std::find(hook_steps.begin(), hook_steps.end(), step) != hook_steps.end()) hook(step, model);
    };
    std::vector<double> losses;
    maybe_hook(0);
    for (std::size_t step = 0; step < opt.steps; ++step) {
        const std::size_t pair = step % a_views.size();
        Rng rng(mix_seed(opt.seed, kTripletStream + step));
        const Tensor ea = model.forward_clip(stack_frames(*a_views[pair])).output;
        const Tensor eb = model.forward_clip(stack_frames(*b_views[pair])).output;
        Tensor loss = scale(add(tcn_loss(ea, eb, tcn, rng), tcn_loss(eb, ea, tcn, rng)), 0.5);
        losses.push_back(loss.item());
        loss.backward();
        optimizer->set_lr(scheduled_lr(opt, step));
        optimizer->step();
        maybe_hook(step + 1);
    }
    return losses;
}

Embeddings embed_sequence(const Model& model, const SampleSequence& seq) {
    NoGradGuard guard;
    return to_embeddings(model.forward_clip(stack_frames(seq)).output);
}

std::vector<PairAlignment> evaluate_alignment_split(const Model& model, const Dataset& ds, const std::string& split) {
    const auto a_views = ds.select(split, "a");
    const auto b_views = ds.select(split, "b");
    if (a_views.empty() || a_views.size() != b_views.size()) {
        throw std::invalid_argument("dataset has no alignment pairs in split '" + split + "'");
    }
    std::vector<PairAlignment> rows;
    for (std::size_t i = 0; i < a_views.size(); ++i) {
        const Embeddings u = embed_sequence(model, *a_views[i]);
        const Embeddings v = embed_sequence(model, *b_views[i]);
        rows.push_back({a_views[i]->group, static_cast<std::size_t>(u.rows()), evaluate_alignment(u, v),
                        evaluate_alignment(v, u)});
    }
    return rows;
}

AlignmentSummary summarize(const std::vector<PairAlignment>& rows) {
    AlignmentSummary s;
    if (rows.empty()) return s;
    for (const auto& r : rows) {
        s.alignment_error += r.a_to_b.alignment_error;
        s.cycle_error += r.a_to_b.cycle_error;
        s.kendall_tau += r.a_to_b.kendall_tau;
    }
    const double n = static_cast<double>(rows.size());
    s.alignment_error /= n;
    s.cycle_error /= n;
    s.kendall_tau /= n;
    return s;
}

DepthCorrelation depth_correlation(const Model& model, const Dataset& ds, const std::string& split,
                                   std::optional<std::uint64_t> random_seed) {
    NoGradGuard guard;
    std::vector<double> rs;
    std::size_t lit = 0, total = 0;
    std::optional<Rng> noise;
    if (random_seed) noise.emplace(*random_seed);
    for (const SampleSequence* seq : split_sequences(ds, split)) {
        Tensor depth;
        if (!noise) {
            const ModelOutput out = model.forward_clip(stack_frames(*seq));
            require_pseudo_depth(out);
            depth = out.layers.front().pseudo_depth;
        }
        for (std::size_t f = 0; f < seq->frames.size(); ++f) {
            auto gt = seq->frames[f].gt_depth.data();
            std::vector<double> pred, truth;
            for (std::size_t k = 0; k < gt.size(); ++k) {
                ++total;
                if (!std::isfinite(gt[k])) continue;
                ++lit;
                truth.push_back(gt[k]);
                pred.push_back(noise ? noise->uniform() : depth.data()[f * gt.size() + k]);
            }
            if (truth.size() < 3) continue;
            try {
                rs.push_back(std::clamp(pearson_r(pred, truth), -kMaxAbsR, kMaxAbsR));
            } catch (const std::invalid_argument&) {
                // Constant prediction or depth on this frame: no correlation defined.
            }
        }
    }
    DepthCorrelation out;
    out.frames = rs.size();
    out.coverage = total ? static_cast<double>(lit) / static_cast<double>(total) : 0.0;
    out.fisher_r = rs.empty() ? 0.0 : fisher_mean_r(rs);
    return out;
}

std::vector<CameraExtrinsics> estimate_sequence_cameras(const Model& model, const SampleSequence& seq) {
    NoGradGuard guard;
    const ModelOutput out = model.forward_clip(stack_frames(seq));
    if (out.layers.empty() || !out.layers.front().camera) {
        throw std::invalid_argument("model has no 3DTRL camera estimator (check insert_at and coord_mode)");
    }
    return out.layers.front().extrinsics();
}

std::vector<PairDisparity> evaluate_camera_split(const Model& model, const Dataset& ds, const std::string& split) {
    const auto moving = ds.select(split, "b");
    if (moving.empty()) throw std::invalid_argument("dataset has no moving-camera sequences in split '" + split + "'");
    std::vector<PairDisparity> rows;
    for (const SampleSequence* seq : moving) {
        std::vector<CameraExtrinsics> gt;
        for (const auto& f : seq->frames) gt.push_back(f.extrinsics);
        rows.push_back({seq->group, camera_eval(estimate_sequence_cameras(model, *seq), gt)});
    }
    return rows;
}

std::vector<GradcheckRow> gradcheck(const BackboneConfig& cfg, const GradcheckOptions& opt) {
    Model model(cfg, opt.seed);
    Rng rng(mix_seed(opt.seed, kGradcheckStream));
    const ParamList params = model.parameters();
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        for (auto& x : handle.mutable_data()) x += rng.uniform(-0.05, 0.05);
    }

    const std::size_t side = cfg.image_size;
    std::vector<double> pixels(opt.batch * side * side * cfg.channels);
    for (auto& p : pixels) p = rng.uniform();
    const Tensor images({opt.batch, side, side, cfg.channels}, std::move(pixels));
    std::vector<std::size_t> labels;
    std::vector<double> target;
    if (cfg.num_classes) {
        for (std::size_t b = 0; b < opt.batch; ++b) labels.push_back(rng.below(cfg.num_classes));
    } else {
        for (std::size_t i = 0; i < opt.batch * cfg.embed_dim; ++i) target.push_back(rng.normal());
    }
    auto loss_fn = [&]() {
        const Tensor out = model.forward(images).output;
        if (cfg.num_classes) return cross_entropy(out, labels);
        return sum(mul(out, Tensor(out.shape(), target)));
    };

    for (const auto& [name, t] : params) {
        Tensor handle = t;
        handle.zero_grad();
    }
    Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> grads;
    for (const auto& [name, t] : params) {
        if (t.has_grad()) {
            auto g = t.grad();
            grads.emplace_back(g.begin(), g.end());
        } else {
            grads.emplace_back(t.numel(), 0.0);
        }
    }

    NoGradGuard guard;
    // A probe pair is usable only when both sides keep the relu sign pattern
    // of the unperturbed model; otherwise it straddles a kink.
    ActivationPatternRecorder recorder;
    loss_fn();
    const std::uint64_t base_pattern = recorder.fingerprint();
    struct Probe {
        double slope;
        bool smooth;
    };
    auto probe = [&](const std::function<void(double)>& shift, double h) {
        shift(h);
        recorder.reset();
        const double lp = loss_fn().item();
        const bool plus_ok = recorder.fingerprint() == base_pattern;
        shift(-h);
        recorder.reset();
        const double lm = loss_fn().item();
        const bool minus_ok = recorder.fingerprint() == base_pattern;
        shift(0.0);
        return Probe{(lp - lm) / (2.0 * h), plus_ok && minus_ok};
    };
    auto rel_error = [&](double analytic, double numeric) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.denominator_floor});
        return std::abs(analytic - numeric) / denom;
    };
    std::vector<GradcheckRow> rows;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor t = params[p].second;
        auto d = t.mutable_data();
        GradcheckRow row;
        row.name = params[p].first;
        for (std::size_t e = 0; e < opt.entries; ++e) {
            Probe pr{};
            std::size_t idx = 0;
            for (std::size_t attempt = 0; attempt < opt.max_resamples; ++attempt) {
                idx = rng.below(d.size());
                const double orig = d[idx];
                pr = probe([&](double h) { d[idx] = orig + h; }, opt.step);
                if (pr.smooth) break;
                ++row.resamples;
            }
            row.max_rel_error = std::max(row.max_rel_error, rel_error(grads[p][idx], pr.slope));
            ++row.checks;
        }
        // Random +-1 direction over the whole tensor; the step shrinks when
        // fresh directions keep crossing kinks.
        const std::vector<double> saved(d.begin(), d.end());
        std::vector<double> dir(d.size());
        double analytic = 0.0;
        Probe pr{};
        double h = opt.step;
        for (std::size_t attempt = 0; attempt < opt.max_resamples; ++attempt) {
            analytic = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                dir[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
                analytic += grads[p][i] * dir[i];
            }
            pr = probe(
                [&](double s) {
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] = saved[i] + s * dir[i];
                },
                h);
            if (pr.smooth) break;
            ++row.resamples;
            if (attempt % 4 == 3) h *= 0.5;
        }
        std::copy(saved.begin(), saved.end(), d.begin());
        row.max_rel_error = std::max(row.max_rel_error, rel_error(analytic, pr.slope));
        ++row.checks;
        row.pass = row.max_rel_error < opt.tolerance;
        rows.push_back(row);
    }
    return rows;
}

std::vector<AblationRow> run_ablation(const BackboneConfig& base, const Dataset& ds, const TrainOptions& opt,
                                      const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds) {
    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        const BackboneConfig cfg = apply_variant(base, variant);
        for (std::uint64_t seed : seeds) {
            Model model(cfg, seed);
            TrainOptions o = opt;
            o.seed = seed;
            train_classifier(model, ds, o);
            rows.push_back({variant, seed, count_parameters(model.parameters()),
                            classification_accuracy(model, ds, "test"),
                            classification_accuracy(model, ds, "test_unseen")});
        }
    }
    return rows;
}

}  // namespace trl3d
