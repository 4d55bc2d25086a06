#pragma once

#include <random>
#include <vector>

#include "gateprune/kernels.hpp"
#include "gateprune/tape.hpp"

// Differentiable operations recorded on a Tape. Forward math lives in
// kernels.hpp; these wrappers run it eagerly and attach the backward closure.

namespace gateprune {

Var conv2d(Var input, Var weight, Var bias, int stride, int padding);
Var dense(Var input, Var weight, Var bias);
Var pool2d(Var input, PoolMode mode, int window, int stride);

// Train-mode batchnorm updates `stats` in place as a side effect of the
// forward pass; eval mode reads them.
Var batchnorm_train(Var input, Var gamma, Var beta, BatchNormStats& stats,
                    double epsilon, double momentum);
Var batchnorm_eval(Var input, Var gamma, Var beta, const BatchNormStats& stats, double epsilon);

Var relu(Var input);
Var add(Var a, Var b);
Var flatten(Var input);

// Inverted dropout: keeps with probability 1-rate and scales kept values by
// 1/(1-rate). Eval-mode callers simply skip the op.
Var dropout(Var input, double rate, std::mt19937_64& rng);

Var channel_scale(Var input, Var scale);
Var broadcast_scale(Var input, Var scale);

Var softmax_cross_entropy(Var logits, std::vector<int> labels);

Var sum(Var x);
Var sum_abs(Var x);
Var sum_sq(Var x);
Var scale_const(Var x, double c);

// coefficient * sum of squares over the given tensors (gates excluded by the
// caller; they never appear in this list).
Var l2_penalty(const std::vector<Var>& weights, double coefficient);

}  // namespace gateprune
