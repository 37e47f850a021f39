#include "trl3d/losses.hpp"

#include <stdexcept>
#include <string>

#include "trl3d/core/ops.hpp"

namespace trl3d {

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() == 1) {
        if (labels.size() != 1) throw std::invalid_argument("cross_entropy: one label expected for [K] logits");
        return cross_entropy(reshape(logits, {1, logits.numel()}), labels);
    }
    if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [K] or [B,K]");
    const std::size_t k = logits.shape()[1];
    if (labels.size() != logits.shape()[0]) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(logits.shape()[0]) + " rows");
    }
    for (auto l : labels) {
        if (l >= k) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " out of range for " +
                                    std::to_string(k) + " classes");
        }
    }
    return neg(mean(gather_last(log_softmax(logits, -1), labels)));
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    return cross_entropy(logits, std::vector<std::size_t>{label});
}

void TcnConfig::validate() const {
    if (positive_window < 1) throw std::invalid_argument("tcn: positive_window must be >= 1");
    if (!(margin > 0.0)) throw std::invalid_argument("tcn: margin must be positive");
    if (negatives_per_anchor < 1) throw std::invalid_argument("tcn: negatives_per_anchor must be >= 1");
}

std::vector<Triplet> sample_triplets(std::size_t frames, const TcnConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t w = cfg.positive_window;
    if (frames < 2 * w + 2) {
        throw std::invalid_argument("tcn: sequence of " + std::to_string(frames) + " frames is shorter than " +
                                    std::to_string(2 * w + 2) + " (2*positive_window + 2)");
    }
    std::vector<Triplet> out;
    out.reserve(frames * cfg.negatives_per_anchor);
    for (std::size_t i = 0; i < frames; ++i) {
        const std::size_t lo = i >= w ? i - w : 0;
        const std::size_t hi = std::min(frames - 1, i + w);
        const std::size_t positive = lo + rng.below(hi - lo + 1);
        // Negatives: [0, lo) and (hi, frames).
        const std::size_t n_neg = lo + (frames - 1 - hi);
        for (std::size_t k = 0; k < cfg.negatives_per_anchor; ++k) {
            std::size_t r = rng.below(n_neg);
            const std::size_t negative = r < lo ? r : hi + 1 + (r - lo);
            out.push_back({i, positive, negative});
        }
    }
    return out;
}

Tensor triplet_loss(const Tensor& anchors, const Tensor& others, const std::vector<Triplet>& triplets, double margin) {
    if (anchors.rank() != 2 || anchors.shape() != others.shape()) {
        throw std::invalid_argument("tcn: views must be equal-length [T,m] sequences, got " +
                                    shape_string(anchors.shape()) + " and " + shape_string(others.shape()));
    }
    if (triplets.empty()) throw std::invalid_argument("tcn: no triplets");
    std::vector<std::size_t> ai, pi, ni;
    for (const auto& t : triplets) {
        ai.push_back(t.anchor);
        pi.push_back(t.positive);
        ni.push_back(t.negative);
    }
    const Tensor a = index_select(anchors, 0, ai);
    const Tensor dp = a - index_select(others, 0, pi);
    const Tensor dn = a - index_select(others, 0, ni);
    const Tensor hinge = relu(add_scalar(sum(dp * dp, -1) - sum(dn * dn, -1), margin));
    return mean(hinge);
}

Tensor tcn_loss(const Tensor& anchors, const Tensor& others, const TcnConfig& cfg, Rng& rng) {
    if (anchors.rank() != 2 || anchors.shape() != others.shape()) {
        throw std::invalid_argument("tcn: views must be equal-length [T,m] sequences, got " +
                                    shape_string(anchors.shape()) + " and " + shape_string(others.shape()));
    }
    return triplet_loss(anchors, others, sample_triplets(anchors.shape()[0], cfg, rng), cfg.margin);
}

}  // namespace trl3d
