#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the dynamic computation graph.
struct Node {
    DenseArray value;
    DenseArray grad;
    std::vector<NodePtr> inputs;
    // Reads `grad` of this node and accumulates into the inputs' grads.
    std::function<void(Node&)> backprop;
    bool requires_grad = false;

    void ensure_grad();
    void accumulate(const DenseArray& g);
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(DenseArray value, bool requires_grad = false);
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const DenseArray& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t extent(std::size_t axis) const { return node_->value.extent(axis); }
    const DenseArray& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    Node& node() const { return *node_; }
    const NodePtr& node_ptr() const { return node_; }

private:
    NodePtr node_;
};

/**
 * A named trainable leaf.
 *
 * The gradient accumulates across `backward` calls until `zero_grad`.
 */
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, DenseArray value);

    const std::string& name() const { return name_; }
    Var var() const { return Var(node_); }
    DenseArray& value() { return node_->value; }
    const DenseArray& value() const { return node_->value; }
    DenseArray& gradient() { return node_->grad; }
    const DenseArray& gradient() const { return node_->grad; }
    const Shape& shape() const { return node_->value.shape(); }
    void zero_grad();

private:
    std::string name_;
    NodePtr node_;
};

/// Ordered, name-unique parameter registry owned by a model.
class ParameterSet {
public:
    Parameter add(std::string name, DenseArray value);
    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    Parameter& find(const std::string& name);
    std::size_t scalar_count() const;
    void zero_grad();

private:
    std::vector<Parameter> params_;
};

/**
 * Build a result node. The backprop closure is only kept when gradient
 * recording is enabled and some input requires a gradient.
 */
Var make_result(DenseArray value, std::vector<Var> inputs, std::function<void(Node&)> backprop);

/// Reverse-mode sweep from a scalar. Parameter gradients accumulate.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace spectragen
