#include "trl3d/core/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace trl3d {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

double* detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape_numel(shape)) {
        throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                    " values do not fill shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from_node(detail::NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

static const detail::Node& checked(const detail::NodePtr& n) {
    if (!n) throw std::logic_error("tensor: use of undefined tensor");
    return *n;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::size_t Tensor::dim(int axis) const {
    const auto r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                shape_string(shape()));
    }
    return shape()[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
    checked(node_);
    if (!node_->is_leaf) throw std::logic_error("tensor: cannot mutate the result of an op in place");
    return node_->data;
}

std::vector<double> Tensor::values() const { return checked(node_).data; }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() on shape " + shape_string(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
    checked(node_);
    if (!node_->is_leaf) throw std::logic_error("tensor: requires_grad can only be set on leaves");
    node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return checked(node_).is_leaf; }
bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(node_).grad; }

void Tensor::zero_grad() {
    checked(node_);
    node_->grad.clear();
}

Tensor Tensor::detach() const {
    checked(node_);
    auto n = std::make_shared<detail::Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    return from_node(std::move(n));
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor t = detach();
    t.node_->requires_grad = requires_grad;
    return t;
}

void Tensor::backward() {
    checked(node_);
    if (numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(shape()));
    }
    if (node_->released) throw std::logic_error("backward: graph already released; run the forward pass again");
    if (!node_->requires_grad) {
        // Constant loss: nothing upstream can receive a gradient.
        node_->released = !node_->is_leaf;
        return;
    }

    // Iterative post-order DFS over the non-leaf part of the graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && !p->is_leaf && seen.insert(p).second) {
                if (p->released) {
                    throw std::logic_error("backward: graph already released; run the forward pass again");
                }
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(n->grad);
    }
    for (detail::Node* n : order) {
        if (n->is_leaf) continue;
        n->backward_fn = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->released = true;
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

bool detail::needs_grad(const std::vector<Tensor>& inputs) {
    if (!g_grad_enabled) return false;
    for (const auto& t : inputs) {
        if (t.requires_grad()) return true;
    }
    return false;
}

Tensor detail::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                           BackwardFn backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->is_leaf = false;
    if (needs_grad(inputs) && backward) {
        n->requires_grad = true;
        n->backward_fn = std::move(backward);
        n->parents.reserve(inputs.size());
        for (auto& t : inputs) n->parents.push_back(t.node());
    }
    return Tensor::from_node(std::move(n));
}

}  // namespace trl3d
