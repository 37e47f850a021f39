#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "trl3d/core/tensor.hpp"

// Differentiable tensor operations. Axis arguments accept negative values
// counted from the last axis. Binary elementwise ops broadcast numpy-style.

namespace trl3d {

// Elementwise binary.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise unary.
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);  // subgradient 0 at 0
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// a[..., p, q] x b[..., q, r] -> [..., p, r]; batch prefixes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] * W[in, out] + b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Reductions. The whole-tensor forms return a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor max(const Tensor& a, int axis, bool keepdim = false);
/// Index of the maximum along `axis` (lowest index on ties); not differentiable.
Tensor argmax(const Tensor& a, int axis);
std::size_t argmax(const Tensor& a);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
/// Normalises each slice along `axis` to zero mean and unit (biased) variance.
Tensor layer_norm(const Tensor& x, int axis, double eps = 1e-5);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor narrow(const Tensor& a, int axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices);
/// out[r] = a[r, indices[r]] over the flattened leading axes.
Tensor gather_last(const Tensor& a, const std::vector<std::size_t>& indices);

/// While alive, folds the sign of every relu input evaluated on this thread
/// into a fingerprint. Finite differences whose two probes produce different
/// fingerprints straddle a kink and say nothing about the gradient.
class ActivationPatternRecorder {
public:
    ActivationPatternRecorder();
    ~ActivationPatternRecorder();
    ActivationPatternRecorder(const ActivationPatternRecorder&) = delete;
    ActivationPatternRecorder& operator=(const ActivationPatternRecorder&) = delete;

    std::uint64_t fingerprint() const { return hash_; }
    void reset() { hash_ = 0; }
    void record(std::span<const double> inputs);

private:
    std::uint64_t hash_ = 0;
    ActivationPatternRecorder* previous_;
};

}  // namespace trl3d
