#pragma once

#include <cstddef>
#include <vector>

#include "trl3d/core/rng.hpp"
#include "trl3d/core/tensor.hpp"

namespace trl3d {

/// Mean of -log softmax(logits)[label]. logits [K] (one label) or [B,K].
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);
Tensor cross_entropy(const Tensor& logits, std::size_t label);

struct TcnConfig {
    std::size_t positive_window = 3;
    double margin = 0.2;
    std::size_t negatives_per_anchor = 1;

    void validate() const;
};

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;
};

/// For each anchor i (in order) one positive with |p - i| <= window and
/// `negatives_per_anchor` negatives with |n - i| > window, drawn from `rng`.
/// Throws when frames < 2*window + 2.
std::vector<Triplet> sample_triplets(std::size_t frames, const TcnConfig& cfg, Rng& rng);

/// mean over triplets of max(0, |a_i - b_p|^2 - |a_i - b_n|^2 + margin).
Tensor triplet_loss(const Tensor& anchors, const Tensor& others, const std::vector<Triplet>& triplets, double margin);

/// Time-contrastive loss between two synchronised embedding sequences [T, m].
Tensor tcn_loss(const Tensor& anchors, const Tensor& others, const TcnConfig& cfg, Rng& rng);

}  // namespace trl3d
