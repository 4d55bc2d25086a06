#include "gateprune/gates.hpp"

#include <algorithm>

namespace gateprune {

double SparsityConfig::lambda(Granularity g) const {
    switch (g) {
        case Granularity::filter: return lambda_filter;
        case Granularity::layer: return lambda_layer;
        case Granularity::branch: return lambda_branch;
        case Granularity::block: return lambda_block;
    }
    return 0.0;
}

double& SparsityConfig::lambda_ref(Granularity g) {
    switch (g) {
        case Granularity::filter: return lambda_filter;
        case Granularity::layer: return lambda_layer;
        case Granularity::branch: return lambda_branch;
        default: return lambda_block;
    }
}

std::vector<double> gate_value(const Gate& gate, GateMode mode, std::mt19937_64* rng) {
    std::vector<double> out(gate.phi.size());
    const bool noisy = mode == GateMode::train && gate.noise.kind == NoiseConfig::Kind::uniform &&
                       gate.noise.amplitude > 0.0;
    if (noisy && !rng) throw TensorError("gate '" + gate.id + "' needs an rng for train-mode noise");
    for (std::size_t i = 0; i < gate.phi.size(); ++i) {
        double v = gate.phi[i];
        if (noisy) {
            std::uniform_real_distribution<double> u(-gate.noise.amplitude, gate.noise.amplitude);
            v += u(*rng);
        }
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Var apply_filter_gate(Var conv_block_output, Var gate_values) {
    const Tensor& out = conv_block_output.tape->value(conv_block_output);
    const Tensor& g = gate_values.tape->value(gate_values);
    const int channels = out.rank() == 4 ? out.shape[1] : (out.rank() == 2 ? out.shape[1] : -1);
    if (g.rank() != 1 || g.shape[0] != channels) {
        throw TensorError("filter gate of length " + shape_str(g.shape) +
                          " does not match output channels of " + shape_str(out.shape));
    }
    return channel_scale(conv_block_output, gate_values);
}

Var apply_structure_gate(Var structure_output, Var gate_value, Var shortcut_input) {
    const Tensor& s = structure_output.tape->value(structure_output);
    const Tensor& sc = shortcut_input.tape->value(shortcut_input);
    if (!s.same_shape(sc)) {
        throw TensorError("structure gate shape mismatch: structure " + shape_str(s.shape) +
                          " vs shortcut " + shape_str(sc.shape) + " (missing dimension adapter?)");
    }
    return add(broadcast_scale(structure_output, gate_value), shortcut_input);
}

double gate_weight(const Gate& gate, const std::vector<Gate>& all, const SparsityConfig& config) {
    if (config.rule == SparsityConfig::WeightRule::explicit_weights) {
        auto it = config.explicit_weight.find(gate.id);
        return it == config.explicit_weight.end() ? 1.0 : it->second;
    }
    if (gate.granularity == Granularity::filter) {
        return 1.0 / static_cast<double>(gate.phi.size());
    }
    std::size_t count = 0;
    for (const auto& g : all)
        if (g.granularity == gate.granularity) ++count;
    return 1.0 / static_cast<double>(count);
}

double sparsity_loss_value(const std::vector<Gate>& gates, const SparsityConfig& config) {
    double total = 0.0;
    for (const auto& g : gates) {
        const double lambda = config.lambda(g.granularity);
        if (lambda == 0.0) continue;
        double l1 = 0.0;
        for (double v : g.phi) l1 += std::abs(v);
        total += lambda * gate_weight(g, gates, config) * l1;
    }
    return total;
}

Var sparsity_loss(Tape& tape, const std::vector<Gate>& gates, const std::vector<Var>& phi_vars,
                  const SparsityConfig& config) {
    if (gates.size() != phi_vars.size()) {
        throw TensorError("sparsity_loss: got " + std::to_string(phi_vars.size()) + " phi vars for " +
                          std::to_string(gates.size()) + " gates");
    }
    std::optional<Var> total;
    for (std::size_t i = 0; i < gates.size(); ++i) {
        const double lambda = config.lambda(gates[i].granularity);
        if (lambda == 0.0) continue;  // disabled granularity contributes exactly 0
        Var term = scale_const(sum_abs(phi_vars[i]), lambda * gate_weight(gates[i], gates, config));
        total = total ? add(*total, term) : term;
    }
    if (!total) return tape.leaf(Tensor::scalar(0.0), false);
    return *total;
}

std::vector<Gate> init_gates(const ModelSpec& spec, const std::set<Granularity>& enabled,
                             std::uint64_t seed, std::vector<std::string>* warnings) {
    validate_or_throw(spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Gate> gates;
    auto draw = [&](std::size_t n) {
        std::vector<double> phi(n);
        for (double& v : phi) v = u(rng);
        return phi;
    };

    // Fixed granularity order, then spec order, so a seed pins every draw.
    for (Granularity g : {Granularity::filter, Granularity::layer, Granularity::branch, Granularity::block}) {
        if (!enabled.count(g)) continue;
        std::size_t before = gates.size();
        if (g == Granularity::filter) {
            for (const auto& n : spec.nodes) {
                if (n.kind != NodeKind::conv || !n.prunable || n.artificial) continue;
                Gate gate;
                gate.id = "filter:" + n.id;
                gate.granularity = Granularity::filter;
                gate.attachment = n.id;
                gate.phi = draw(static_cast<std::size_t>(n.conv.out_channels));
                gates.push_back(std::move(gate));
            }
        } else {
            for (const auto& site : spec.sites) {
                if (site.granularity != g) continue;
                Gate gate;
                gate.id = site.id;
                gate.granularity = g;
                gate.attachment = site.id;
                gate.phi = draw(1);
                gates.push_back(std::move(gate));
            }
        }
        if (gates.size() == before && warnings) {
            warnings->push_back(std::string("granularity '") + granularity_name(g) +
                                "' enabled but the spec has no attachment points for it");
        }
    }
    return gates;
}

void binarize_gates(std::vector<Gate>& gates, const std::map<Granularity, double>& thresholds) {
    for (auto& g : gates) {
        auto it = thresholds.find(g.granularity);
        if (it == thresholds.end()) continue;
        const double t = it->second;
        if (t < 0.0 || t > 1.0) throw TensorError("binarize threshold must be in [0,1]");
        if (!g.binarized) g.phi_audit = g.phi;
        for (double& v : g.phi) v = v < t ? 0.0 : 1.0;
        g.binarized = true;
    }
}

void clamp_phis(std::vector<Gate>& gates) {
    for (auto& g : gates)
        for (double& v : g.phi) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace gateprune
