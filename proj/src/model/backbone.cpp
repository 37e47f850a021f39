#include "trl3d/backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "trl3d/core/checkpoint.hpp"
#include "trl3d/core/ops.hpp"

namespace trl3d {

namespace {

// Stream ids for derived seeds.
constexpr std::uint64_t kLayerStream = 0x3D7A1000;
constexpr std::uint64_t kControlStream = 0x3D7A2000;
constexpr double kEmbedInitScale = 0.02;

Tensor uniform_tensor(Shape shape, double a, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-a, a);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor affine_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return add(mul(layer_norm(x, -1), gain), bias);
}

}  // namespace

void BackboneConfig::validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
        throw std::invalid_argument("backbone: image_size " + std::to_string(image_size) +
                                    " is not divisible by patch_size " + std::to_string(patch_size));
    }
    if (heads == 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("backbone: embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                                    std::to_string(heads));
    }
    if (channels == 0 || mlp_ratio == 0) throw std::invalid_argument("backbone: channels and mlp_ratio must be positive");
    for (auto i : insert_at) {
        if (i > depth) {
            throw std::invalid_argument("backbone: insert index " + std::to_string(i) + " outside [0, " +
                                        std::to_string(depth) + "]");
        }
    }
    if (layer.embed_dim != embed_dim) throw std::invalid_argument("backbone: layer embed_dim differs from backbone");
    layer.validate();
}

BlockParams BlockParams::init(std::size_t m, std::size_t hidden, Rng& rng) {
    BlockParams b;
    b.ln1_gain = Tensor({m}, 1.0, true);
    b.ln1_bias = Tensor({m}, 0.0, true);
    b.q = Linear::init(m, m, rng);
    b.k = Linear::init(m, m, rng);
    b.v = Linear::init(m, m, rng);
    b.proj = Linear::init(m, m, rng);
    b.ln2_gain = Tensor({m}, 1.0, true);
    b.ln2_bias = Tensor({m}, 0.0, true);
    b.fc1 = Linear::init(m, hidden, rng);
    b.fc2 = Linear::init(hidden, m, rng);
    return b;
}

void BlockParams::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".ln1.gain", ln1_gain);
    out.emplace_back(prefix + ".ln1.bias", ln1_bias);
    q.collect(prefix + ".attn.q", out);
    k.collect(prefix + ".attn.k", out);
    v.collect(prefix + ".attn.v", out);
    proj.collect(prefix + ".attn.proj", out);
    out.emplace_back(prefix + ".ln2.gain", ln2_gain);
    out.emplace_back(prefix + ".ln2.bias", ln2_bias);
    fc1.collect(prefix + ".mlp.fc1", out);
    fc2.collect(prefix + ".mlp.fc2", out);
}

ResidualMlpParams ResidualMlpParams::init(std::size_t m, std::size_t hidden, Rng& rng) {
    return {Linear::init(m, hidden, rng), Linear::zeros(hidden, m)};
}

void ResidualMlpParams::collect(const std::string& prefix, ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

std::size_t mlp_control_hidden(const LayerConfig& cfg) {
    const double m = static_cast<double>(cfg.embed_dim);
    const double target = static_cast<double>(layer_parameter_count(cfg));
    // 2*m*k + k + m parameters for hidden width k.
    const double k = (target - m) / (2.0 * m + 1.0);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k)));
}

Tensor block_forward(const Tensor& x, const BlockParams& p, std::size_t heads, Tensor* attention) {
    const std::size_t b = x.shape()[0], n = x.shape()[1], m = x.shape()[2];
    const std::size_t d = m / heads;
    auto split_heads = [&](const Tensor& t) { return permute(reshape(t, {b, n, heads, d}), {0, 2, 1, 3}); };

    const Tensor h = affine_norm(x, p.ln1_gain, p.ln1_bias);
    const Tensor q = split_heads(p.q(h));
    const Tensor k = split_heads(p.k(h));
    const Tensor v = split_heads(p.v(h));
    const Tensor scores = scale(matmul(q, transpose(k, -1, -2)), 1.0 / std::sqrt(static_cast<double>(d)));
    const Tensor attn = softmax(scores, -1);
    if (attention) *attention = attn;
    const Tensor ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, n, m});
    const Tensor x1 = add(x, p.proj(ctx));

    const Tensor h2 = affine_norm(x1, p.ln2_gain, p.ln2_bias);
    return add(x1, p.fc2(relu(p.fc1(h2))));
}

Model::Model(BackboneConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.layer.embed_dim = cfg_.embed_dim;
    cfg_.validate();
    const std::size_t m = cfg_.embed_dim;
    const std::size_t side = cfg_.grid_side();
    grid_ = make_patch_grid(side, side, CameraIntrinsics{cfg_.layer.focal});

    Rng rng(seed);
    backbone_.patch_embed = Linear::init(cfg_.patch_size * cfg_.patch_size * cfg_.channels, m, rng);
    backbone_.cls_token = uniform_tensor({m}, kEmbedInitScale, rng);
    backbone_.pos_embed = uniform_tensor({cfg_.num_patches() + 1, m}, kEmbedInitScale, rng);
    for (std::size_t i = 0; i < cfg_.depth; ++i) backbone_.blocks.push_back(BlockParams::init(m, m * cfg_.mlp_ratio, rng));
    backbone_.head_ln_gain = Tensor({m}, 1.0, true);
    backbone_.head_ln_bias = Tensor({m}, 0.0, true);
    backbone_.head = Linear::init(m, cfg_.num_classes ? cfg_.num_classes : m, rng);

    for (std::size_t j = 0; j < cfg_.insert_at.size(); ++j) {
        if (cfg_.insert_kind == InsertKind::trl3d) {
            Rng lr(mix_seed(seed, kLayerStream + j));
            layers_.push_back(LayerParams::init(cfg_.layer, lr));
        } else {
            Rng cr(mix_seed(seed, kControlStream + j));
            controls_.push_back(ResidualMlpParams::init(m, mlp_control_hidden(cfg_.layer), cr));
        }
    }
}

TokenBatch Model::patchify(const Tensor& images) const {
    Tensor x = images;
    if (x.rank() == 3) {
        Shape s = x.shape();
        s.insert(s.begin(), 1);
        x = reshape(x, s);
    }
    const std::size_t sz = cfg_.image_size, ps = cfg_.patch_size, ch = cfg_.channels;
    if (x.rank() != 4 || x.shape()[1] != sz || x.shape()[2] != sz || x.shape()[3] != ch) {
        throw std::invalid_argument("patchify: expected images [B," + std::to_string(sz) + "," + std::to_string(sz) +
                                    "," + std::to_string(ch) + "], got " + shape_string(images.shape()));
    }
    const std::size_t b = x.shape()[0], g = cfg_.grid_side(), m = cfg_.embed_dim;
    // [B, gy, py, gx, px, C] -> [B, gy, gx, py, px, C]: row-major patches.
    Tensor patches = reshape(permute(reshape(x, {b, g, ps, g, ps, ch}), {0, 1, 3, 2, 4, 5}), {b, g * g, ps * ps * ch});
    Tensor emb = backbone_.patch_embed(patches);
    Tensor cls = add(Tensor({b, 1, m}, 0.0), reshape(backbone_.cls_token, {1, 1, m}));
    Tensor tokens = add(concat({cls, emb}, 1), backbone_.pos_embed);
    return TokenBatch{tokens, true, &grid_};
}

ModelOutput Model::run(const Tensor& images, bool clip) const {
    ModelOutput out;
    Tensor x = patchify(images).values;
    auto apply_insertions = [&](std::size_t position) {
        for (std::size_t j = 0; j < cfg_.insert_at.size(); ++j) {
            if (cfg_.insert_at[j] != position) continue;
            if (cfg_.insert_kind == InsertKind::trl3d) {
                const LayerParams& lp = layers_[j];
                LayerOutput lo = clip ? forward_video(x, grid_, cfg_.layer, lp) : forward_image(x, grid_, cfg_.layer, lp);
                x = lo.tokens;
                out.layers.push_back(std::move(lo));
            } else {
                const ResidualMlpParams& cp = controls_[j];
                x = add(x, cp.fc2(relu(cp.fc1(x))));
            }
        }
    };
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        apply_insertions(i);
        x = block_forward(x, backbone_.blocks[i], cfg_.heads);
    }
    apply_insertions(cfg_.depth);

    const std::size_t b = x.shape()[0], m = cfg_.embed_dim;
    Tensor cls = reshape(narrow(x, 1, 0, 1), {b, m});
    Tensor y = backbone_.head(affine_norm(cls, backbone_.head_ln_gain, backbone_.head_ln_bias));
    if (cfg_.num_classes == 0) {
        y = div(y, sqrt(add_scalar(sum(mul(y, y), -1, true), 1e-12)));
    }
    out.output = y;
    return out;
}

ModelOutput Model::forward(const Tensor& images) const { return run(images, false); }

ModelOutput Model::forward_clip(const Tensor& frames) const {
    if (frames.rank() != 4) throw std::invalid_argument("forward_clip: expected frames [T,H,W,C]");
    return run(frames, true);
}

ParamList Model::parameters() const {
    ParamList out;
    const std::string bb = "backbone";
    backbone_.patch_embed.collect(bb + ".patch_embed", out);
    out.emplace_back(bb + ".cls_token", backbone_.cls_token);
    out.emplace_back(bb + ".pos_embed", backbone_.pos_embed);
    for (std::size_t i = 0; i < backbone_.blocks.size(); ++i) {
        backbone_.blocks[i].collect(bb + ".blocks." + std::to_string(i), out);
    }
    out.emplace_back(bb + ".head_ln.gain", backbone_.head_ln_gain);
    out.emplace_back(bb + ".head_ln.bias", backbone_.head_ln_bias);
    backbone_.head.collect(bb + ".head", out);
    for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j].collect("trl3d." + std::to_string(j), out);
    for (std::size_t j = 0; j < controls_.size(); ++j) controls_[j].collect("mlp_control." + std::to_string(j), out);
    return out;
}

void Model::load(const ParamList& checkpoint) { assign_parameters(parameters(), checkpoint); }

}  // namespace trl3d
