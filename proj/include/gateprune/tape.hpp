#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gateprune/tensor.hpp"

namespace gateprune {

class Tape;

// Handle to one value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Reverse-mode record. Nodes are stored in execution order, which is a
// topological order by construction; backward walks it once in reverse,
// single-threaded, so gradients are bit-reproducible.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int out_id)>;

    Var leaf(Tensor value, bool requires_grad = false);
    // Named trainable leaf; its gradient is retrievable by key after backward.
    Var param(const std::string& key, Tensor value);
    Var record(Tensor value, std::vector<int> parents, BackwardFn fn);

    int size() const { return static_cast<int>(nodes_.size()); }
    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& value(Var v) const { return value(v.id); }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Lazily allocated zero gradient of the node's shape.
    Tensor& grad(int id);
    bool has_grad(int id) const;

    void backward(Var loss);

    // Gradients of every named parameter leaf reached by backward.
    std::map<std::string, Tensor> param_grads() const;

  private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        BackwardFn backward;
        bool requires_grad = false;
        std::string param_key;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_set_;
};

}  // namespace gateprune
