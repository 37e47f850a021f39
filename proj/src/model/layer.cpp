#include "trl3d/layer.hpp"

#include <stdexcept>

#include "trl3d/core/ops.hpp"

namespace trl3d {

void LayerConfig::validate() const {
    if (embed_dim < 4) throw std::invalid_argument("layer: embed_dim must be >= 4");
    if (stem_hidden < 3) throw std::invalid_argument("layer: stem_hidden must be >= 3");
    CameraIntrinsics{focal}.validate();
}

LayerParams LayerParams::init(const LayerConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t m = cfg.embed_dim;
    const std::size_t h = cfg.stem_hidden;
    LayerParams p;
    if (cfg.coord_mode == CoordMode::depth) {
        p.coords = Mlp::init({m, m, 1}, rng);
        p.stem = Mlp::init({m, m, m, h, h}, rng);
        p.rot_head = Linear::init(h, 3, rng);
        p.trans_head = Linear::init(h, 3, rng);
    } else {
        p.coords = Mlp::init({m, m, 3}, rng);
    }
    if (cfg.fusion_mode == FusionMode::embedding) {
        Mlp e;
        e.layers.push_back(Linear::init(3, m, rng));
        e.layers.push_back(Linear::zeros(m, m));
        p.embed = std::move(e);
    } else {
        p.concat_proj = Linear::init(m + 3, m, rng);
    }
    return p;
}

void LayerParams::collect(const std::string& prefix, ParamList& out) const {
    coords.collect(prefix + ".coords", out);
    if (stem) stem->collect(prefix + ".stem", out);
    if (rot_head) rot_head->collect(prefix + ".rot_head", out);
    if (trans_head) trans_head->collect(prefix + ".trans_head", out);
    if (embed) embed->collect(prefix + ".embed", out);
    if (concat_proj) concat_proj->collect(prefix + ".concat_proj", out);
}

ParamList LayerParams::parameters(const std::string& prefix) const {
    ParamList out;
    collect(prefix, out);
    return out;
}

std::size_t layer_parameter_count(const LayerConfig& cfg) {
    const std::size_t m = cfg.embed_dim;
    const std::size_t h = cfg.stem_hidden;
    auto affine = [](std::size_t in, std::size_t out) { return in * out + out; };
    std::size_t n = 0;
    if (cfg.coord_mode == CoordMode::depth) {
        n += affine(m, m) + affine(m, 1);
        n += 2 * affine(m, m) + affine(m, h) + affine(h, h);
        n += 2 * affine(h, 3);
    } else {
        n += affine(m, m) + affine(m, 3);
    }
    n += cfg.fusion_mode == FusionMode::embedding ? affine(3, m) + affine(m, m) : affine(m + 3, m);
    return n;
}

std::vector<CameraExtrinsics> CameraEstimate::extrinsics() const {
    const std::size_t n = rotation.numel() / 9;
    auto r = rotation.data();
    auto t = translation.data();
    std::vector<CameraExtrinsics> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) out[k].rotation(i, j) = r[9 * k + 3 * i + j];
            out[k].translation(i) = t[3 * k + i];
        }
    }
    return out;
}

std::vector<CameraExtrinsics> LayerOutput::extrinsics() const {
    return camera ? camera->extrinsics() : std::vector<CameraExtrinsics>{};
}

Tensor estimate_pseudo_depth(const Tensor& patch_tokens, const LayerParams& p) {
    const std::size_t m = p.coords.layers.front().in_features();
    if (patch_tokens.rank() < 2 || patch_tokens.shape().back() != m) {
        throw std::invalid_argument("estimate_pseudo_depth: tokens " + shape_string(patch_tokens.shape()) +
                                    " do not have width " + std::to_string(m));
    }
    if (p.coords.layers.back().out_features() != 1) {
        throw std::logic_error("estimate_pseudo_depth: parameters were built for direct xyz regression");
    }
    Tensor d = p.coords(patch_tokens);
    Shape s = d.shape();
    s.pop_back();
    return reshape(d, s);
}

CameraEstimate estimate_camera(const Tensor& patch_tokens, const LayerParams& p) {
    if (!p.stem || !p.rot_head || !p.trans_head) {
        throw std::logic_error("estimate_camera: parameters have no camera estimator");
    }
    if (patch_tokens.rank() != 2 && patch_tokens.rank() != 3) {
        throw std::invalid_argument("estimate_camera: expected [N,m] or [B,N,m], got " +
                                    shape_string(patch_tokens.shape()));
    }
    if (patch_tokens.dim(-2) == 0) throw std::invalid_argument("estimate_camera: no tokens");
    Tensor pooled = mean((*p.stem)(patch_tokens), -2);
    CameraEstimate cam;
    cam.angles = (*p.rot_head)(pooled);
    cam.translation = (*p.trans_head)(pooled);
    cam.rotation = rotation_from_euler(cam.angles);
    return cam;
}

namespace {

// tokens [B, 1+N, m]. `joint` pools one camera over all B*N patch tokens.
LayerOutput apply_layer(const Tensor& tokens, const PatchGrid& grid, const LayerConfig& cfg, const LayerParams& p,
                        bool joint) {
    const std::size_t b = tokens.shape()[0];
    const std::size_t n = grid.size();
    const std::size_t m = cfg.embed_dim;
    if (tokens.shape()[1] != n + 1) {
        throw std::invalid_argument("3dtrl: " + std::to_string(tokens.shape()[1]) + " tokens do not match a grid of " +
                                    std::to_string(n) + " patches plus CLS");
    }
    if (tokens.shape()[2] != m) {
        throw std::invalid_argument("3dtrl: token width " + std::to_string(tokens.shape()[2]) +
                                    " differs from embed_dim " + std::to_string(m));
    }
    PatchGrid g = grid;
    g.intrinsics.focal = cfg.focal;

    const Tensor cls = narrow(tokens, 1, 0, 1);
    const Tensor patches = narrow(tokens, 1, 1, n);

    LayerOutput out;
    if (cfg.coord_mode == CoordMode::depth) {
        out.pseudo_depth = estimate_pseudo_depth(patches, p);
        const Tensor p_cam = uvd_to_camera(out.pseudo_depth, g);
        out.camera = estimate_camera(joint ? reshape(patches, {b * n, m}) : patches, p);
        out.world = camera_to_world(p_cam, out.camera->rotation, out.camera->translation);
    } else {
        out.world = p.coords(patches);
    }

    Tensor fused;
    if (cfg.fusion_mode == FusionMode::embedding) {
        if (!p.embed) throw std::logic_error("3dtrl: parameters have no positional embedding");
        fused = add(patches, (*p.embed)(out.world));
    } else {
        if (!p.concat_proj) throw std::logic_error("3dtrl: parameters have no concat projection");
        fused = relu((*p.concat_proj)(concat({patches, out.world}, -1)));
    }
    out.tokens = concat({cls, fused}, 1);
    return out;
}

LayerOutput squeeze_batch(LayerOutput out) {
    auto drop = [](const Tensor& t) {
        if (!t.defined()) return t;
        Shape s(t.shape().begin() + 1, t.shape().end());
        return reshape(t, s);
    };
    out.tokens = drop(out.tokens);
    out.pseudo_depth = drop(out.pseudo_depth);
    out.world = drop(out.world);
    if (out.camera) {
        out.camera->angles = drop(out.camera->angles);
        out.camera->rotation = drop(out.camera->rotation);
        out.camera->translation = drop(out.camera->translation);
    }
    return out;
}

}  // namespace

LayerOutput forward_image(const Tensor& tokens, const PatchGrid& grid, const LayerConfig& cfg, const LayerParams& p) {
    if (tokens.rank() == 2) {
        Shape s = tokens.shape();
        s.insert(s.begin(), 1);
        return squeeze_batch(apply_layer(reshape(tokens, s), grid, cfg, p, false));
    }
    if (tokens.rank() != 3) {
        throw std::invalid_argument("forward_image: expected [1+N,m] or [B,1+N,m], got " + shape_string(tokens.shape()));
    }
    return apply_layer(tokens, grid, cfg, p, false);
}

LayerOutput forward_video(const Tensor& tokens, const PatchGrid& grid, const LayerConfig& cfg, const LayerParams& p) {
    if (tokens.rank() != 3 || tokens.shape()[0] == 0) {
        throw std::invalid_argument("forward_video: expected [T,1+N,m] with T >= 1, got " +
                                    shape_string(tokens.shape()));
    }
    const bool joint = cfg.video_strategy == VideoStrategy::joint && cfg.coord_mode == CoordMode::depth;
    return apply_layer(tokens, grid, cfg, p, joint);
}

}  // namespace trl3d
