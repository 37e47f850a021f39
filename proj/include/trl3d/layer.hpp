#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "trl3d/core/nn.hpp"
#include "trl3d/geometry.hpp"

namespace trl3d {

enum class CoordMode { depth, direct_xyz };
enum class FusionMode { embedding, concat };
/// Divided-temporal: one camera per frame. Joint-temporal: one per clip.
enum class VideoStrategy { divided, joint };

struct LayerConfig {
    std::size_t embed_dim = 48;
    double focal = 1.0;
    CoordMode coord_mode = CoordMode::depth;
    FusionMode fusion_mode = FusionMode::embedding;
    VideoStrategy video_strategy = VideoStrategy::divided;
    std::size_t stem_hidden = 32;

    void validate() const;
};

/// Learnable pieces of the 3D token representation layer.
///
/// `coords` is the per-token head: m -> m -> 1 (pseudo-depth) or m -> m -> 3
/// (direct xyz regression). The camera stem and heads exist only in depth
/// mode; `embed` only with embedding fusion, `concat_proj` only with concat
/// fusion.
struct LayerParams {
    Mlp coords;
    std::optional<Mlp> stem;
    std::optional<Linear> rot_head;
    std::optional<Linear> trans_head;
    std::optional<Mlp> embed;
    std::optional<Linear> concat_proj;

    /// Random init from `rng`. The last affine layer of `embed` starts at
    /// zero so the layer is the identity map before training.
    static LayerParams init(const LayerConfig& cfg, Rng& rng);

    void collect(const std::string& prefix, ParamList& out) const;
    ParamList parameters(const std::string& prefix = "trl3d") const;
};

/// Closed-form parameter count for a configuration.
std::size_t layer_parameter_count(const LayerConfig& cfg);

/// Differentiable camera estimate: angles [B,3], rotation [B,3,3], translation [B,3]
/// (no leading B for a single camera).
struct CameraEstimate {
    Tensor angles;
    Tensor rotation;
    Tensor translation;

    std::vector<CameraExtrinsics> extrinsics() const;
};

struct LayerOutput {
    Tensor tokens;        // same shape as the input tokens
    Tensor pseudo_depth;  // [N] or [B,N]; undefined in direct_xyz mode
    std::optional<CameraEstimate> camera;
    Tensor world;  // [N,3] or [B,N,3]

    /// One entry per image/frame (DT), or a single entry for a joint camera.
    std::vector<CameraExtrinsics> extrinsics() const;
};

/// d_n = f(s_n) for patch tokens [..., N, m] -> [..., N].
Tensor estimate_pseudo_depth(const Tensor& patch_tokens, const LayerParams& p);

/// Shared stem per token, mean over tokens, then rotation/translation heads.
/// patch_tokens [N, m] -> single camera; [B, N, m] -> B cameras.
CameraEstimate estimate_camera(const Tensor& patch_tokens, const LayerParams& p);

/// tokens [1+N, m] or [B, 1+N, m] with the CLS token in slot 0.
LayerOutput forward_image(const Tensor& tokens, const PatchGrid& grid, const LayerConfig& cfg, const LayerParams& p);

/// tokens [T, 1+N, m]: per-frame depth and embedding; cameras per frame (DT)
/// or one camera pooled over every token of the clip (JT).
LayerOutput forward_video(const Tensor& tokens, const PatchGrid& grid, const LayerConfig& cfg, const LayerParams& p);

}  // namespace trl3d
