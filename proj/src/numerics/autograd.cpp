#include "spectragen/numerics/autograd.hpp"

#include <unordered_set>

#include "spectragen/numerics/error.hpp"

namespace spectragen {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void Node::ensure_grad() {
    if (grad.shape() != value.shape() || grad.size() != value.size()) grad = DenseArray(value.shape());
}

void Node::accumulate(const DenseArray& g) {
    ensure_grad();
    if (g.size() != grad.size()) {
        throw ShapeError("gradient of " + shape_string(g.shape()) + " for node " + shape_string(value.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Var::Var(DenseArray value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
}

Parameter::Parameter(std::string name, DenseArray value)
    : name_(std::move(name)), node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = true;
    node_->ensure_grad();
}

void Parameter::zero_grad() {
    node_->ensure_grad();
    node_->grad.fill(0.0);
}

Parameter ParameterSet::add(std::string name, DenseArray value) {
    for (const auto& p : params_) {
        if (p.name() == name) throw DataError("duplicate parameter name '" + name + "'");
    }
    params_.emplace_back(std::move(name), std::move(value));
    return params_.back();
}

Parameter& ParameterSet::find(const std::string& name) {
    for (auto& p : params_) {
        if (p.name() == name) return p;
    }
    throw DataError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Var make_result(DenseArray value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (g_grad_enabled && any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
        node->backprop = std::move(backprop);
    }
    return Var(std::move(node));
}

void backward(const Var& loss) {
    if (!loss.defined() || loss.value().size() != 1) {
        throw ShapeError("backward requires a scalar loss, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
    visited.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (n->backprop) {
            n->ensure_grad();
            n->grad.fill(0.0);
        }
    }
    loss.node().ensure_grad();
    loss.node().grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

}  // namespace spectragen
