#include "trl3d/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace trl3d {

namespace {

using detail::make_result;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw std::out_of_range(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                                std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw std::invalid_argument(std::string(op) + ": cannot broadcast shapes " + shape_string(a) + " and " +
                                        shape_string(b));
        }
        out[i] = ea == 1 ? eb : ea;
    }
    return out;
}

// Maps every flat index of `out` to the flat index of `in` under broadcasting.
// An empty result means the identity map.
std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& in) {
    if (in == out) return {};
    const std::size_t n_out = shape_numel(out);
    const std::size_t n_in = shape_numel(in);
    std::vector<std::size_t> map(n_out);
    const bool suffix = in.size() <= out.size() && std::equal(in.begin(), in.end(), out.end() - in.size());
    if (suffix && n_in > 0) {
        for (std::size_t i = 0; i < n_out; ++i) map[i] = i % n_in;
        return map;
    }
    const std::size_t r = out.size();
    std::vector<std::size_t> stride(r, 0);
    std::size_t s = 1;
    for (std::size_t k = in.size(); k-- > 0;) {
        const std::size_t oi = k + (r - in.size());
        stride[oi] = in[k] == 1 ? 0 : s;
        s *= in[k];
    }
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n_out; ++i) {
        map[i] = off;
        for (std::size_t k = r; k-- > 0;) {
            ++idx[k];
            off += stride[k];
            if (idx[k] < out[k]) break;
            off -= stride[k] * idx[k];
            idx[k] = 0;
        }
    }
    return map;
}

template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
    Shape out = broadcast_shape(a.shape(), b.shape(), name);
    auto ma = broadcast_map(out, a.shape());
    auto mb = broadcast_map(out, b.shape());
    const std::size_t n = shape_numel(out);
    auto A = a.data();
    auto B = b.data();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = f(A[ma.empty() ? i : ma[i]], B[mb.empty() ? i : mb[i]]);
    }
    if (!detail::needs_grad({a, b})) return make_result(std::move(out), std::move(y), {}, nullptr);
    auto na = a.node(), nb = b.node();
    return make_result(std::move(out), std::move(y), {a, b},
                       [na, nb, ma = std::move(ma), mb = std::move(mb), da, db](const std::vector<double>& g) {
                           const std::size_t n = g.size();
                           const auto& A = na->data;
                           const auto& B = nb->data;
                           double* ga = na->requires_grad ? na->grad_buffer() : nullptr;
                           double* gb = nb->requires_grad ? nb->grad_buffer() : nullptr;
                           for (std::size_t i = 0; i < n; ++i) {
                               const std::size_t ia = ma.empty() ? i : ma[i];
                               const std::size_t ib = mb.empty() ? i : mb[i];
                               if (ga) ga[ia] += da(A[ia], B[ib], g[i]);
                               if (gb) gb[ib] += db(A[ia], B[ib], g[i]);
                           }
                       });
}

// f computes the value, df(x, y) the local derivative given input x and output y.
template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
    auto X = a.data();
    std::vector<double> y(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) y[i] = f(X[i]);
    if (!detail::needs_grad({a})) return make_result(a.shape(), std::move(y), {}, nullptr);
    auto na = a.node();
    auto out = std::make_shared<std::vector<double>>(y);
    return make_result(a.shape(), std::move(y), {a}, [na, out, df](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        const auto& X = na->data;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(X[i], (*out)[i]);
    });
}

// out[p,r] += A[p,q] * B[q,r]
void gemm_acc(const double* A, const double* B, double* out, std::size_t p, std::size_t q, std::size_t r) {
    const auto P = static_cast<Eigen::Index>(p), Q = static_cast<Eigen::Index>(q), R = static_cast<Eigen::Index>(r);
    MatMap(out, P, R).noalias() += ConstMatMap(A, P, Q) * ConstMatMap(B, Q, R);
}

// dA[p,q] += G[p,r] * B[q,r]^T
void gemm_grad_a(const double* G, const double* B, double* dA, std::size_t p, std::size_t q, std::size_t r) {
    const auto P = static_cast<Eigen::Index>(p), Q = static_cast<Eigen::Index>(q), R = static_cast<Eigen::Index>(r);
    MatMap(dA, P, Q).noalias() += ConstMatMap(G, P, R) * ConstMatMap(B, Q, R).transpose();
}

// dB[q,r] += A[p,q]^T * G[p,r]
void gemm_grad_b(const double* A, const double* G, double* dB, std::size_t p, std::size_t q, std::size_t r) {
    const auto P = static_cast<Eigen::Index>(p), Q = static_cast<Eigen::Index>(q), R = static_cast<Eigen::Index>(r);
    MatMap(dB, Q, R).noalias() += ConstMatMap(A, P, Q).transpose() * ConstMatMap(G, P, R);
}

Shape drop_axis(const Shape& s, std::size_t axis, bool keepdim) {
    Shape out = s;
    if (keepdim) {
        out[axis] = 1;
    } else {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    }
    return out;
}

void require_nonempty_axis(const AxisSplit& sp, const char* op) {
    if (sp.extent == 0) throw std::invalid_argument(std::string(op) + ": empty reduction axis");
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double g) { return g * y; },
        [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double g) { return g / y; },
        [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

namespace {
thread_local ActivationPatternRecorder* t_recorder = nullptr;
}  // namespace

ActivationPatternRecorder::ActivationPatternRecorder() : previous_(t_recorder) { t_recorder = this; }

ActivationPatternRecorder::~ActivationPatternRecorder() { t_recorder = previous_; }

void ActivationPatternRecorder::record(std::span<const double> inputs) {
    std::uint64_t word = 0;
    std::size_t bits = 0;
    auto flush = [&] {
        hash_ = (hash_ ^ word) * 0x100000001b3ULL + bits;
        word = 0;
        bits = 0;
    };
    for (double x : inputs) {
        word = (word << 1) | (x > 0.0 ? 1u : 0u);
        if (++bits == 64) flush();
    }
    flush();
}

Tensor relu(const Tensor& a) {
    if (t_recorder) t_recorder->record(a.data());
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor sin(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary_op(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor scale(const Tensor& a, double factor) {
    return unary_op(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary_op(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw std::invalid_argument("matmul: operands need rank >= 2, got " + shape_string(sa) + " and " +
                                    shape_string(sb));
    }
    const std::size_t p = sa[sa.size() - 2], q = sa.back(), r = sb.back();
    if (sb[sb.size() - 2] != q) {
        throw std::invalid_argument("matmul: inner extents differ in " + shape_string(sa) + " x " + shape_string(sb));
    }
    const Shape ba(sa.begin(), sa.end() - 2);
    const Shape bb(sb.begin(), sb.end() - 2);
    Shape batch = broadcast_shape(ba, bb, "matmul");
    auto ma = broadcast_map(batch, ba);
    auto mb = broadcast_map(batch, bb);
    const std::size_t nbatch = shape_numel(batch);

    Shape out_shape = batch;
    out_shape.push_back(p);
    out_shape.push_back(r);
    std::vector<double> y(nbatch * p * r, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t t = 0; t < nbatch; ++t) {
        const std::size_t ia = ma.empty() ? t : ma[t];
        const std::size_t ib = mb.empty() ? t : mb[t];
        gemm_acc(A + ia * p * q, B + ib * q * r, y.data() + t * p * r, p, q, r);
    }
    if (!detail::needs_grad({a, b})) return make_result(std::move(out_shape), std::move(y), {}, nullptr);
    auto na = a.node(), nb = b.node();
    return make_result(std::move(out_shape), std::move(y), {a, b},
                       [na, nb, ma = std::move(ma), mb = std::move(mb), nbatch, p, q, r](const std::vector<double>& g) {
                           double* ga = na->requires_grad ? na->grad_buffer() : nullptr;
                           double* gb = nb->requires_grad ? nb->grad_buffer() : nullptr;
                           for (std::size_t t = 0; t < nbatch; ++t) {
                               const std::size_t ia = ma.empty() ? t : ma[t];
                               const std::size_t ib = mb.empty() ? t : mb[t];
                               const double* G = g.data() + t * p * r;
                               if (ga) gemm_grad_a(G, nb->data.data() + ib * q * r, ga + ia * p * q, p, q, r);
                               if (gb) gemm_grad_b(na->data.data() + ia * p * q, G, gb + ib * q * r, p, q, r);
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& sx = x.shape();
    if (weight.rank() != 2 || bias.rank() != 1 || sx.empty()) {
        throw std::invalid_argument("linear: expected x[..,in], W[in,out], b[out]; got " + shape_string(sx) + ", " +
                                    shape_string(weight.shape()) + ", " + shape_string(bias.shape()));
    }
    const std::size_t in = weight.shape()[0], out = weight.shape()[1];
    if (sx.back() != in || bias.shape()[0] != out) {
        throw std::invalid_argument("linear: width mismatch between x " + shape_string(sx) + ", W " +
                                    shape_string(weight.shape()) + " and b " + shape_string(bias.shape()));
    }
    const std::size_t rows = x.numel() / std::max<std::size_t>(in, 1);
    Shape out_shape = sx;
    out_shape.back() = out;
    std::vector<double> y(rows * out);
    const double* bv = bias.data().data();
    for (std::size_t i = 0; i < rows; ++i) std::copy(bv, bv + out, y.data() + i * out);
    gemm_acc(x.data().data(), weight.data().data(), y.data(), rows, in, out);
    if (!detail::needs_grad({x, weight, bias})) return make_result(std::move(out_shape), std::move(y), {}, nullptr);
    auto nx = x.node(), nw = weight.node(), nbias = bias.node();
    return make_result(std::move(out_shape), std::move(y), {x, weight, bias},
                       [nx, nw, nbias, rows, in, out](const std::vector<double>& g) {
                           if (nx->requires_grad) gemm_grad_a(g.data(), nw->data.data(), nx->grad_buffer(), rows, in, out);
                           if (nw->requires_grad) gemm_grad_b(nx->data.data(), g.data(), nw->grad_buffer(), rows, in, out);
                           if (nbias->requires_grad) {
                               double* gb = nbias->grad_buffer();
                               for (std::size_t i = 0; i < rows; ++i) {
                                   for (std::size_t j = 0; j < out; ++j) gb[j] += g[i * out + j];
                               }
                           }
                       });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
    auto X = a.data();
    double s = 0.0;
    for (double v : X) s += v;
    auto na = a.node();
    return make_result(Shape{}, {s}, {a}, [na](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t i = 0; i < na->data.size(); ++i) ga[i] += g[0];
    });
}

Tensor sum(const Tensor& a, int axis, bool keepdim) {
    const std::size_t ax = norm_axis(axis, a.rank(), "sum");
    const AxisSplit sp = split_at(a.shape(), ax);
    require_nonempty_axis(sp, "sum");
    auto X = a.data();
    std::vector<double> y(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t e = 0; e < sp.extent; ++e) {
            const double* src = X.data() + (o * sp.extent + e) * sp.inner;
            double* dst = y.data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    }
    auto na = a.node();
    return make_result(drop_axis(a.shape(), ax, keepdim), std::move(y), {a}, [na, sp](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t e = 0; e < sp.extent; ++e) {
                double* dst = ga + (o * sp.extent + e) * sp.inner;
                const double* src = g.data() + o * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty reduction axis");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
    const std::size_t ax = norm_axis(axis, a.rank(), "mean");
    const std::size_t n = a.shape()[ax];
    if (n == 0) throw std::invalid_argument("mean: empty reduction axis");
    return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(n));
}

Tensor max(const Tensor& a, int axis, bool keepdim) {
    const std::size_t ax = norm_axis(axis, a.rank(), "max");
    const AxisSplit sp = split_at(a.shape(), ax);
    require_nonempty_axis(sp, "max");
    auto X = a.data();
    std::vector<double> y(sp.outer * sp.inner);
    std::vector<std::size_t> where(y.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            std::size_t best = o * sp.extent * sp.inner + i;
            for (std::size_t e = 1; e < sp.extent; ++e) {
                const std::size_t k = (o * sp.extent + e) * sp.inner + i;
                if (X[k] > X[best]) best = k;
            }
            y[o * sp.inner + i] = X[best];
            where[o * sp.inner + i] = best;
        }
    }
    auto na = a.node();
    return make_result(drop_axis(a.shape(), ax, keepdim), std::move(y), {a},
                       [na, where = std::move(where)](const std::vector<double>& g) {
                           double* ga = na->grad_buffer();
                           for (std::size_t j = 0; j < g.size(); ++j) ga[where[j]] += g[j];
                       });
}

Tensor argmax(const Tensor& a, int axis) {
    const std::size_t ax = norm_axis(axis, a.rank(), "argmax");
    const AxisSplit sp = split_at(a.shape(), ax);
    require_nonempty_axis(sp, "argmax");
    auto X = a.data();
    std::vector<double> y(sp.outer * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            std::size_t best = 0;
            for (std::size_t e = 1; e < sp.extent; ++e) {
                if (X[(o * sp.extent + e) * sp.inner + i] > X[(o * sp.extent + best) * sp.inner + i]) best = e;
            }
            y[o * sp.inner + i] = static_cast<double>(best);
        }
    }
    return Tensor(drop_axis(a.shape(), ax, false), std::move(y));
}

std::size_t argmax(const Tensor& a) {
    auto X = a.data();
    if (X.empty()) throw std::invalid_argument("argmax: empty reduction axis");
    std::size_t best = 0;
    for (std::size_t i = 1; i < X.size(); ++i) {
        if (X[i] > X[best]) best = i;
    }
    return best;
}

// ---------------------------------------------------------------- normalisation

Tensor softmax(const Tensor& x, int axis) {
    const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
    const AxisSplit sp = split_at(x.shape(), ax);
    require_nonempty_axis(sp, "softmax");
    auto X = x.data();
    std::vector<double> y(X.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            double m = X[base];
            for (std::size_t e = 1; e < sp.extent; ++e) m = std::max(m, X[base + e * sp.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < sp.extent; ++e) {
                const double v = std::exp(X[base + e * sp.inner] - m);
                y[base + e * sp.inner] = v;
                z += v;
            }
            for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] /= z;
        }
    }
    if (!detail::needs_grad({x})) return make_result(x.shape(), std::move(y), {}, nullptr);
    auto nx = x.node();
    auto saved = std::make_shared<std::vector<double>>(y);
    return make_result(x.shape(), std::move(y), {x}, [nx, saved, sp](const std::vector<double>& g) {
        double* gx = nx->grad_buffer();
        const auto& Y = *saved;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.extent * sp.inner + i;
                double dot = 0.0;
                for (std::size_t e = 0; e < sp.extent; ++e) dot += g[base + e * sp.inner] * Y[base + e * sp.inner];
                for (std::size_t e = 0; e < sp.extent; ++e) {
                    const std::size_t k = base + e * sp.inner;
                    gx[k] += Y[k] * (g[k] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& x, int axis) {
    const std::size_t ax = norm_axis(axis, x.rank(), "log_softmax");
    const AxisSplit sp = split_at(x.shape(), ax);
    require_nonempty_axis(sp, "log_softmax");
    auto X = x.data();
    std::vector<double> y(X.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            double m = X[base];
            for (std::size_t e = 1; e < sp.extent; ++e) m = std::max(m, X[base + e * sp.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < sp.extent; ++e) z += std::exp(X[base + e * sp.inner] - m);
            const double lse = m + std::log(z);
            for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] = X[base + e * sp.inner] - lse;
        }
    }
    if (!detail::needs_grad({x})) return make_result(x.shape(), std::move(y), {}, nullptr);
    auto nx = x.node();
    auto saved = std::make_shared<std::vector<double>>(y);
    return make_result(x.shape(), std::move(y), {x}, [nx, saved, sp](const std::vector<double>& g) {
        double* gx = nx->grad_buffer();
        const auto& Y = *saved;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.extent * sp.inner + i;
                double gs = 0.0;
                for (std::size_t e = 0; e < sp.extent; ++e) gs += g[base + e * sp.inner];
                for (std::size_t e = 0; e < sp.extent; ++e) {
                    const std::size_t k = base + e * sp.inner;
                    gx[k] += g[k] - std::exp(Y[k]) * gs;
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, int axis, double eps) {
    const std::size_t ax = norm_axis(axis, x.rank(), "layer_norm");
    const AxisSplit sp = split_at(x.shape(), ax);
    require_nonempty_axis(sp, "layer_norm");
    auto X = x.data();
    std::vector<double> y(X.size());
    std::vector<double> inv_std(sp.outer * sp.inner);
    const double n = static_cast<double>(sp.extent);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            double mu = 0.0;
            for (std::size_t e = 0; e < sp.extent; ++e) mu += X[base + e * sp.inner];
            mu /= n;
            double var = 0.0;
            for (std::size_t e = 0; e < sp.extent; ++e) {
                const double d = X[base + e * sp.inner] - mu;
                var += d * d;
            }
            var /= n;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * sp.inner + i] = is;
            for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] = (X[base + e * sp.inner] - mu) * is;
        }
    }
    if (!detail::needs_grad({x})) return make_result(x.shape(), std::move(y), {}, nullptr);
    auto nx = x.node();
    auto saved = std::make_shared<std::vector<double>>(y);
    return make_result(x.shape(), std::move(y), {x},
                       [nx, saved, inv_std = std::move(inv_std), sp, n](const std::vector<double>& g) {
                           double* gx = nx->grad_buffer();
                           const auto& Y = *saved;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t i = 0; i < sp.inner; ++i) {
                                   const std::size_t base = o * sp.extent * sp.inner + i;
                                   double gm = 0.0, gy = 0.0;
                                   for (std::size_t e = 0; e < sp.extent; ++e) {
                                       const std::size_t k = base + e * sp.inner;
                                       gm += g[k];
                                       gy += g[k] * Y[k];
                                   }
                                   gm /= n;
                                   gy /= n;
                                   const double is = inv_std[o * sp.inner + i];
                                   for (std::size_t e = 0; e < sp.extent; ++e) {
                                       const std::size_t k = base + e * sp.inner;
                                       gx[k] += is * (g[k] - gm - Y[k] * gy);
                                   }
                               }
                           }
                       });
}

// ---------------------------------------------------------------- shape ops

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    auto na = a.node();
    return make_result(std::move(shape), a.values(), {a}, [na](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const Shape& s = a.shape();
    const std::size_t r = s.size();
    if (axes.size() != r) throw std::invalid_argument("permute: axis list does not match rank of " + shape_string(s));
    std::vector<bool> used(r, false);
    for (auto ax : axes) {
        if (ax >= r || used[ax]) throw std::invalid_argument("permute: invalid axis permutation");
        used[ax] = true;
    }
    std::vector<std::size_t> in_stride(r);
    std::size_t st = 1;
    for (std::size_t k = r; k-- > 0;) {
        in_stride[k] = st;
        st *= s[k];
    }
    Shape out(r);
    std::vector<std::size_t> stride(r);
    for (std::size_t k = 0; k < r; ++k) {
        out[k] = s[axes[k]];
        stride[k] = in_stride[axes[k]];
    }
    const std::size_t n = a.numel();
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        map[i] = off;
        for (std::size_t k = r; k-- > 0;) {
            ++idx[k];
            off += stride[k];
            if (idx[k] < out[k]) break;
            off -= stride[k] * idx[k];
            idx[k] = 0;
        }
    }
    auto X = a.data();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = X[map[i]];
    if (!detail::needs_grad({a})) return make_result(std::move(out), std::move(y), {}, nullptr);
    auto na = a.node();
    return make_result(std::move(out), std::move(y), {a}, [na, map = std::move(map)](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[map[i]] += g[i];
    });
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
    const std::size_t a0 = norm_axis(axis0, a.rank(), "transpose");
    const std::size_t a1 = norm_axis(axis1, a.rank(), "transpose");
    std::vector<std::size_t> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[a0], axes[a1]);
    return permute(a, axes);
}

Tensor narrow(const Tensor& a, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = norm_axis(axis, a.rank(), "narrow");
    const AxisSplit sp = split_at(a.shape(), ax);
    if (start + length > sp.extent) {
        throw std::out_of_range("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") exceeds extent " + std::to_string(sp.extent));
    }
    Shape out = a.shape();
    out[ax] = length;
    auto X = a.data();
    std::vector<double> y(sp.outer * length * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = X.data() + (o * sp.extent + start) * sp.inner;
        std::copy(src, src + length * sp.inner, y.data() + o * length * sp.inner);
    }
    auto na = a.node();
    return make_result(std::move(out), std::move(y), {a}, [na, sp, start, length](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            double* dst = ga + (o * sp.extent + start) * sp.inner;
            const double* src = g.data() + o * length * sp.inner;
            for (std::size_t i = 0; i < length * sp.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t ax = norm_axis(axis, parts[0].rank(), "concat");
    Shape out = parts[0].shape();
    out[ax] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == out.size();
        for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == ax || s[k] == out[k];
        if (!ok) {
            throw std::invalid_argument("concat: shape " + shape_string(s) + " incompatible with " +
                                        shape_string(parts[0].shape()) + " along axis " + std::to_string(axis));
        }
        out[ax] += s[ax];
    }
    const AxisSplit osp = split_at(out, ax);
    std::vector<double> y(shape_numel(out));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t e = p.shape()[ax];
        auto X = p.data();
        for (std::size_t o = 0; o < osp.outer; ++o) {
            std::copy(X.data() + o * e * osp.inner, X.data() + (o + 1) * e * osp.inner,
                      y.data() + (o * osp.extent + off) * osp.inner);
        }
        offsets.push_back(off);
        off += e;
    }
    if (!detail::needs_grad(parts)) return make_result(std::move(out), std::move(y), {}, nullptr);
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_result(std::move(out), std::move(y), parts,
                       [nodes, offsets, osp, ax](const std::vector<double>& g) {
                           for (std::size_t k = 0; k < nodes.size(); ++k) {
                               if (!nodes[k]->requires_grad) continue;
                               const std::size_t e = nodes[k]->shape[ax];
                               double* gp = nodes[k]->grad_buffer();
                               for (std::size_t o = 0; o < osp.outer; ++o) {
                                   const double* src = g.data() + (o * osp.extent + offsets[k]) * osp.inner;
                                   double* dst = gp + o * e * osp.inner;
                                   for (std::size_t i = 0; i < e * osp.inner; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices) {
    const std::size_t ax = norm_axis(axis, a.rank(), "index_select");
    const AxisSplit sp = split_at(a.shape(), ax);
    for (auto i : indices) {
        if (i >= sp.extent) throw std::out_of_range("index_select: index " + std::to_string(i) + " out of range");
    }
    Shape out = a.shape();
    out[ax] = indices.size();
    const std::size_t m = indices.size();
    auto X = a.data();
    std::vector<double> y(sp.outer * m * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < m; ++j) {
            const double* src = X.data() + (o * sp.extent + indices[j]) * sp.inner;
            std::copy(src, src + sp.inner, y.data() + (o * m + j) * sp.inner);
        }
    }
    if (!detail::needs_grad({a})) return make_result(std::move(out), std::move(y), {}, nullptr);
    auto na = a.node();
    return make_result(std::move(out), std::move(y), {a}, [na, sp, indices, m](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t j = 0; j < m; ++j) {
                double* dst = ga + (o * sp.extent + indices[j]) * sp.inner;
                const double* src = g.data() + (o * m + j) * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor gather_last(const Tensor& a, const std::vector<std::size_t>& indices) {
    if (a.rank() == 0) throw std::invalid_argument("gather_last: scalar input");
    const std::size_t k = a.shape().back();
    const std::size_t rows = k ? a.numel() / k : 0;
    if (indices.size() != rows) {
        throw std::invalid_argument("gather_last: " + std::to_string(indices.size()) + " indices for " +
                                    std::to_string(rows) + " rows");
    }
    auto X = a.data();
    std::vector<double> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        if (indices[r] >= k) throw std::out_of_range("gather_last: index " + std::to_string(indices[r]) + " >= " + std::to_string(k));
        y[r] = X[r * k + indices[r]];
    }
    Shape out(a.shape().begin(), a.shape().end() - 1);
    auto na = a.node();
    return make_result(std::move(out), std::move(y), {a}, [na, indices, k](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        for (std::size_t r = 0; r < g.size(); ++r) ga[r * k + indices[r]] += g[r];
    });
}

}  // namespace trl3d
