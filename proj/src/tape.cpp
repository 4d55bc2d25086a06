#include "gateprune/tape.hpp"

namespace gateprune {

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return {this, size() - 1};
}

Var Tape::param(const std::string& key, Tensor value) {
    Var v = leaf(std::move(value), true);
    nodes_.back().param_key = key;
    return v;
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    for (int p : parents) {
        if (p < 0 || p >= size()) throw TensorError("tape parent id out of range");
        node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
    }
    node.parents = std::move(parents);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return {this, size() - 1};
}

Tensor& Tape::grad(int id) {
    if (grads_.size() != nodes_.size()) {
        grads_.resize(nodes_.size());
        grad_set_.resize(nodes_.size(), 0);
    }
    auto idx = static_cast<std::size_t>(id);
    if (!grad_set_[idx]) {
        grads_[idx] = Tensor::zeros(nodes_[idx].value.shape);
        grad_set_[idx] = 1;
    }
    return grads_[idx];
}

bool Tape::has_grad(int id) const {
    auto idx = static_cast<std::size_t>(id);
    return idx < grad_set_.size() && grad_set_[idx];
}

void Tape::backward(Var loss) {
    if (loss.tape != this || loss.id < 0 || loss.id >= size()) {
        throw TensorError("backward: loss does not live on this tape");
    }
    if (!nodes_[static_cast<std::size_t>(loss.id)].value.is_scalar()) {
        throw TensorError("backward: loss must be a scalar, got shape " +
                          shape_str(nodes_[static_cast<std::size_t>(loss.id)].value.shape));
    }
    grads_.assign(nodes_.size(), Tensor{});
    grad_set_.assign(nodes_.size(), 0);
    grad(loss.id).data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!has_grad(id) || !node.backward || !node.requires_grad) continue;
        node.backward(*this, id);
    }
}

std::map<std::string, Tensor> Tape::param_grads() const {
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].param_key.empty() && has_grad(static_cast<int>(i))) {
            out[nodes_[i].param_key] = grads_[i];
        }
    }
    return out;
}

}  // namespace gateprune
