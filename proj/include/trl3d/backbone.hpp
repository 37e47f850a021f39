#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trl3d/core/nn.hpp"
#include "trl3d/geometry.hpp"
#include "trl3d/layer.hpp"

namespace trl3d {

/// What gets inserted at each index of `insert_at`.
enum class InsertKind {
    trl3d,       // the 3D token representation layer
    mlp_control  // parameter-matched residual MLP (ablation control)
};

struct BackboneConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 4;
    std::size_t channels = 1;
    std::size_t depth = 6;
    std::size_t heads = 3;
    std::size_t embed_dim = 48;
    std::size_t mlp_ratio = 4;
    std::vector<std::size_t> insert_at{2};
    InsertKind insert_kind = InsertKind::trl3d;
    std::size_t num_classes = 0;  // 0 selects the L2-normalised embedding head
    LayerConfig layer;

    void validate() const;
    std::size_t grid_side() const { return image_size / patch_size; }
    std::size_t num_patches() const { return grid_side() * grid_side(); }
};

/// Tokens plus their layout: [(B,) 1+N, m] with CLS in slot 0.
struct TokenBatch {
    Tensor values;
    bool has_cls = true;
    const PatchGrid* grid = nullptr;
};

struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    Linear q, k, v, proj;
    Tensor ln2_gain, ln2_bias;
    Linear fc1, fc2;

    static BlockParams init(std::size_t m, std::size_t hidden, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

/// x + fc2(relu(fc1(x))), hidden width chosen to match a 3DTRL's size.
struct ResidualMlpParams {
    Linear fc1, fc2;

    static ResidualMlpParams init(std::size_t m, std::size_t hidden, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Hidden width of the MLP control whose parameter count is closest to one 3DTRL.
std::size_t mlp_control_hidden(const LayerConfig& cfg);

struct BackboneParams {
    Linear patch_embed;  // [P*P*C, m]
    Tensor cls_token;    // [m]
    Tensor pos_embed;    // [1+N, m]
    std::vector<BlockParams> blocks;
    Tensor head_ln_gain, head_ln_bias;
    Linear head;  // [m, num_classes] or [m, m]
};

struct ModelOutput {
    Tensor output;  // logits [B,K] or unit-norm embeddings [B,m]
    std::vector<LayerOutput> layers;  // one per inserted 3DTRL, in order of application
};

/// Small pre-norm ViT with 3DTRL (or the MLP control) inserted before the
/// blocks listed in `insert_at`; index == depth means after the last block.
class Model {
public:
    /// Backbone weights come from Rng(seed); every inserted module draws from
    /// its own derived stream, so models that differ only in insertions share
    /// bit-identical backbone weights.
    Model(BackboneConfig cfg, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }
    const PatchGrid& grid() const { return grid_; }

    /// images [B,H,W,C] (or [H,W,C]) -> token batch [B,1+N,m].
    TokenBatch patchify(const Tensor& images) const;

    /// Independent images [B,H,W,C].
    ModelOutput forward(const Tensor& images) const;
    /// One clip [T,H,W,C]; inserted 3DTRLs use the configured video strategy.
    ModelOutput forward_clip(const Tensor& frames) const;

    ParamList parameters() const;
    /// Overwrites values from a checkpoint; names and shapes must match.
    void load(const ParamList& checkpoint);

    const BackboneParams& backbone() const { return backbone_; }
    const std::vector<LayerParams>& layers() const { return layers_; }
    std::vector<LayerParams>& layers() { return layers_; }

private:
    ModelOutput run(const Tensor& images, bool clip) const;

    BackboneConfig cfg_;
    PatchGrid grid_;
    BackboneParams backbone_;
    std::vector<LayerParams> layers_;
    std::vector<ResidualMlpParams> controls_;
};

/// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(x)).
/// When `attention` is given it receives the softmax weights [B,H,n,n].
Tensor block_forward(const Tensor& tokens, const BlockParams& p, std::size_t heads, Tensor* attention = nullptr);

}  // namespace trl3d
