#pragma once

#include <map>
#include <string>

#include "gateprune/tensor.hpp"

namespace gateprune {

// Classical momentum SGD: v = momentum*v + g; p = p - lr*v. Velocity persists
// across steps, keyed like the parameters.
class SgdOptimizer {
  public:
    SgdOptimizer(double learning_rate, double momentum)
        : learning_rate_(learning_rate), momentum_(momentum) {
        if (learning_rate < 0.0) throw TensorError("learning rate must be non-negative");
        if (momentum < 0.0) throw TensorError("momentum must be non-negative");
    }

    // params and gradients must carry identical key sets.
    void step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& gradients);

    void set_learning_rate(double lr) { learning_rate_ = lr; }
    double learning_rate() const { return learning_rate_; }
    double momentum() const { return momentum_; }

    std::map<std::string, Tensor>& velocity() { return velocity_; }
    const std::map<std::string, Tensor>& velocity() const { return velocity_; }

  private:
    double learning_rate_;
    double momentum_;
    std::map<std::string, Tensor> velocity_;
};

}  // namespace gateprune
