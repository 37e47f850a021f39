#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trl3d/core/rng.hpp"
#include "trl3d/core/tensor.hpp"

namespace trl3d {

/// Ordered (name, parameter) pairs. Order is the checkpoint order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

std::size_t count_parameters(const ParamList& params);
std::vector<Tensor> tensors_of(const ParamList& params);

/// Weight in [-a, a] with a = 1/sqrt(fan_in); zero bias.
struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    static Linear zeros(std::size_t in, std::size_t out);

    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }

    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Affine layers with ReLU between consecutive layers (none after the last).
struct Mlp {
    std::vector<Linear> layers;

    static Mlp init(const std::vector<std::size_t>& widths, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace trl3d
