#pragma once

#include <vector>

#include "trl3d/core/tensor.hpp"

namespace trl3d {

class Optimizer {
public:
    explicit Optimizer(std::vector<Tensor> params);
    virtual ~Optimizer() = default;

    /// Applies one update from the accumulated gradients, then clears them.
    /// Throws if any parameter has no gradient.
    void step();
    void zero_grad();

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

protected:
    virtual void update(std::size_t k, std::span<double> p, std::span<const double> g) = 0;
    virtual void begin_step() {}

    std::vector<Tensor> params_;
    double lr_ = 0.0;
};

/// SGD with heavy-ball momentum: v <- momentum*v + grad; p <- p - lr*v.
class Sgd : public Optimizer {
public:
    Sgd(std::vector<Tensor> params, double lr, double momentum = 0.0);

protected:
    void update(std::size_t k, std::span<double> p, std::span<const double> g) override;

private:
    std::vector<std::vector<double>> velocity_;
    double momentum_;
};

/// Adam with bias correction.
class Adam : public Optimizer {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

protected:
    void begin_step() override { ++t_; }
    void update(std::size_t k, std::span<double> p, std::span<const double> g) override;

private:
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace trl3d
