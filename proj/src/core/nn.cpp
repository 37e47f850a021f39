#include "trl3d/core/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "trl3d/core/ops.hpp"

namespace trl3d {

std::size_t count_parameters(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::vector<Tensor> tensors_of(const ParamList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) throw std::invalid_argument("Linear: zero width");
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-a, a);
    return Linear{Tensor({in, out}, std::move(w), true), Tensor({out}, 0.0, true)};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    return Linear{Tensor({in, out}, 0.0, true), Tensor({out}, 0.0, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

Mlp Mlp::init(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(Linear::init(widths[i], widths[i + 1], rng));
    return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
}

}  // namespace trl3d
