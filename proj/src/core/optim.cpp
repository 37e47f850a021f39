#include "trl3d/core/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trl3d {

Optimizer::Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
        if (!p.is_leaf()) throw std::invalid_argument("optimizer: parameters must be leaf tensors");
    }
}

void Optimizer::step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        if (!params_[k].has_grad()) {
            throw std::logic_error("optimizer: parameter " + std::to_string(k) + " " +
                                   shape_string(params_[k].shape()) + " has no gradient; call backward first");
        }
    }
    begin_step();
    for (std::size_t k = 0; k < params_.size(); ++k) update(k, params_[k].mutable_data(), params_[k].grad());
    zero_grad();
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum) : Optimizer(std::move(params)), momentum_(momentum) {
    lr_ = lr;
    for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void Sgd::update(std::size_t k, std::span<double> p, std::span<const double> g) {
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        p[i] -= lr_ * v[i];
    }
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    lr_ = lr;
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::update(std::size_t k, std::span<double> p, std::span<const double> g) {
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
}

}  // namespace trl3d
