#include "gateprune/optim.hpp"

namespace gateprune {

void SgdOptimizer::step(std::map<std::string, Tensor>& params,
                        const std::map<std::string, Tensor>& gradients) {
    for (const auto& [key, g] : gradients) {
        if (!params.count(key)) throw TensorError("sgd_step: gradient for unknown parameter '" + key + "'");
    }
    for (auto& [key, p] : params) {
        auto git = gradients.find(key);
        if (git == gradients.end()) throw TensorError("sgd_step: missing gradient for parameter '" + key + "'");
        const Tensor& g = git->second;
        if (!g.same_shape(p)) {
            throw TensorError("sgd_step: gradient shape " + shape_str(g.shape) + " does not match parameter '" +
                              key + "' of shape " + shape_str(p.shape));
        }
        auto vit = velocity_.find(key);
        if (vit == velocity_.end()) vit = velocity_.emplace(key, Tensor::zeros(p.shape)).first;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            v.data[i] = momentum_ * v.data[i] + g.data[i];
            p.data[i] -= learning_rate_ * v.data[i];
        }
    }
}

}  // namespace gateprune
