#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace trl3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
// Receives the gradient of the node that owns it and scatters into parents.
using BackwardFn = std::function<void(const std::vector<double>& grad_out)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    bool released = false;
    std::vector<NodePtr> parents;
    BackwardFn backward_fn;

    // Zero-initialised gradient buffer, allocated lazily.
    double* grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional reverse-mode tracking.
///
/// A Tensor is a shared handle: copies alias the same storage. Leaves are
/// created by the constructors below; every op in ops.hpp produces a
/// non-leaf that remembers how to push gradients back to its inputs when
/// grad mode is on and any input requires grad.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    // Extent of `axis`; negative values count from the back.
    std::size_t dim(int axis) const;

    std::span<const double> data() const;
    // Mutable view of a leaf's storage. Throws for op results.
    std::span<double> mutable_data();
    std::vector<double> values() const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Runs reverse accumulation from this scalar. The graph behind it is
    /// released afterwards; a second call without a new forward throws.
    void backward();

    /// Same values, no history, no grad tracking.
    Tensor detach() const;
    /// Deep copy of the values as a new leaf.
    Tensor clone(bool requires_grad = false) const;

    const detail::NodePtr& node() const { return node_; }
    static Tensor from_node(detail::NodePtr node);

private:
    detail::NodePtr node_;
};

/// Disables graph construction for the lifetime of the guard (per thread).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

namespace detail {

// Builds an op result. `backward` is only kept when some input needs grad.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

// True when any input participates in the graph and grad mode is on.
bool needs_grad(const std::vector<Tensor>& inputs);

}  // namespace detail

}  // namespace trl3d
