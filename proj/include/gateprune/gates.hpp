#pragma once

#include <optional>
#include <random>
#include <set>

#include "gateprune/model_spec.hpp"
#include "gateprune/ops.hpp"

namespace gateprune {

struct NoiseConfig {
    enum class Kind { none, uniform };
    Kind kind = Kind::none;
    double amplitude = 0.0;
};

enum class GateMode { train, eval };

// Learnable scaling factor bound to one graph location. Filter gates carry
// one entry per output channel of the attached conv; structure gates
// (layer/branch/block) carry a single entry. phi is projected to [0,1] after
// every optimizer step.
struct Gate {
    std::string id;
    Granularity granularity = Granularity::filter;
    std::vector<double> phi;
    std::string attachment;  // conv node id (filter) or shortcut-site id
    NoiseConfig noise;
    std::vector<double> phi_audit;  // pre-binarization values, empty until binarized
    bool binarized = false;
};

struct SparsityConfig {
    double lambda_filter = 0.0;
    double lambda_layer = 0.0;
    double lambda_branch = 0.0;
    double lambda_block = 0.0;
    enum class WeightRule { one_over_count, explicit_weights };
    WeightRule rule = WeightRule::one_over_count;
    std::map<std::string, double> explicit_weight;  // by gate id when rule is explicit

    double lambda(Granularity g) const;
    double& lambda_ref(Granularity g);
};

// Eval: clamp(phi, 0, 1). Train with uniform noise: clamp(phi + e, 0, 1),
// e ~ U(-a, a) drawn per call; rng required only in that case.
std::vector<double> gate_value(const Gate& gate, GateMode mode, std::mt19937_64* rng = nullptr);

Var apply_filter_gate(Var conv_block_output, Var gate_values);
// structure_output * gate + shortcut_input (the layer/branch/block form).
Var apply_structure_gate(Var structure_output, Var gate_value, Var shortcut_input);

// The per-gate L1 weight under the config's rule: 1/len(phi) for filter
// gates, 1/(count of gates of that granularity) for structure gates.
double gate_weight(const Gate& gate, const std::vector<Gate>& all, const SparsityConfig& config);

// Sum over granularities of lambda * sum over gates of w_gate * |phi|_1.
double sparsity_loss_value(const std::vector<Gate>& gates, const SparsityConfig& config);

// Taped version over the per-gate phi leaves (same order as `gates`);
// gates with a zero lambda contribute no tape nodes at all.
Var sparsity_loss(Tape& tape, const std::vector<Gate>& gates, const std::vector<Var>& phi_vars,
                  const SparsityConfig& config);

// One gate per attachment point of each enabled granularity: every prunable
// non-artificial conv for filter, every matching shortcut site otherwise.
// phi ~ U(0,1) i.i.d. from the seed. Enabled granularities with no
// attachment points produce a warning and no gates.
std::vector<Gate> init_gates(const ModelSpec& spec, const std::set<Granularity>& enabled,
                             std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Snap phi to {0,1} per the per-granularity thresholds (entry < t -> 0,
// >= t -> 1). Original values are kept in phi_audit; idempotent.
void binarize_gates(std::vector<Gate>& gates,
                    const std::map<Granularity, double>& thresholds);

// Projection step run after each optimizer update.
void clamp_phis(std::vector<Gate>& gates);

}  // namespace gateprune
