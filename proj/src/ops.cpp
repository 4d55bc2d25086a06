#include "gateprune/ops.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace gateprune {

namespace {

Tape& tape_of(Var a) {
    if (!a.tape) throw TensorError("operation on an unbound Var");
    return *a.tape;
}

void check_same_tape(std::initializer_list<Var> vars) {
    const Tape* t = nullptr;
    for (Var v : vars) {
        if (!v.tape) throw TensorError("operation on an unbound Var");
        if (t && v.tape != t) throw TensorError("operands live on different tapes");
        t = v.tape;
    }
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, int stride, int padding) {
    check_same_tape({input, weight, bias});
    Tape& t = tape_of(input);
    Tensor out = conv2d_fwd(t.value(input), t.value(weight), t.value(bias), stride, padding);
    const int in_id = input.id, w_id = weight.id, b_id = bias.id;
    return t.record(std::move(out), {in_id, w_id, b_id}, [=](Tape& tp, int out_id) {
        conv2d_bwd(tp.value(in_id), tp.value(w_id), tp.grad(out_id), stride, padding,
                   tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                   tp.requires_grad(w_id) ? &tp.grad(w_id) : nullptr,
                   tp.requires_grad(b_id) ? &tp.grad(b_id) : nullptr);
    });
}

Var dense(Var input, Var weight, Var bias) {
    check_same_tape({input, weight, bias});
    Tape& t = tape_of(input);
    Tensor out = dense_fwd(t.value(input), t.value(weight), t.value(bias));
    const int in_id = input.id, w_id = weight.id, b_id = bias.id;
    return t.record(std::move(out), {in_id, w_id, b_id}, [=](Tape& tp, int out_id) {
        dense_bwd(tp.value(in_id), tp.value(w_id), tp.grad(out_id),
                  tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                  tp.requires_grad(w_id) ? &tp.grad(w_id) : nullptr,
                  tp.requires_grad(b_id) ? &tp.grad(b_id) : nullptr);
    });
}

Var pool2d(Var input, PoolMode mode, int window, int stride) {
    Tape& t = tape_of(input);
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor out = pool2d_fwd(t.value(input), mode, window, stride, mode == PoolMode::max ? argmax.get() : nullptr);
    const int in_id = input.id;
    return t.record(std::move(out), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        pool2d_bwd(tp.value(in_id), mode, window, stride, *argmax, tp.grad(out_id), &tp.grad(in_id));
    });
}

Var batchnorm_train(Var input, Var gamma, Var beta, BatchNormStats& stats,
                    double epsilon, double momentum) {
    check_same_tape({input, gamma, beta});
    Tape& t = tape_of(input);
    auto ctx = std::make_shared<BatchNormCtx>();
    Tensor out = batchnorm_train_fwd(t.value(input), t.value(gamma), t.value(beta),
                                     stats, epsilon, momentum, *ctx);
    const int in_id = input.id, g_id = gamma.id, b_id = beta.id;
    return t.record(std::move(out), {in_id, g_id, b_id}, [=](Tape& tp, int out_id) {
        batchnorm_train_bwd(tp.value(g_id), *ctx, tp.grad(out_id),
                            tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                            tp.requires_grad(g_id) ? &tp.grad(g_id) : nullptr,
                            tp.requires_grad(b_id) ? &tp.grad(b_id) : nullptr);
    });
}

Var batchnorm_eval(Var input, Var gamma, Var beta, const BatchNormStats& stats, double epsilon) {
    check_same_tape({input, gamma, beta});
    Tape& t = tape_of(input);
    Tensor out = batchnorm_eval_fwd(t.value(input), t.value(gamma), t.value(beta), stats, epsilon);
    const int in_id = input.id, g_id = gamma.id, b_id = beta.id;
    // Backward needs the stats the forward saw; copy them in case the caller
    // keeps training the same instance.
    auto frozen = std::make_shared<BatchNormStats>(stats);
    return t.record(std::move(out), {in_id, g_id, b_id}, [=](Tape& tp, int out_id) {
        batchnorm_eval_bwd(tp.value(g_id), tp.value(in_id), *frozen, epsilon, tp.grad(out_id),
                           tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                           tp.requires_grad(g_id) ? &tp.grad(g_id) : nullptr,
                           tp.requires_grad(b_id) ? &tp.grad(b_id) : nullptr);
    });
}

Var relu(Var input) {
    Tape& t = tape_of(input);
    Tensor out = relu_fwd(t.value(input));
    const int in_id = input.id;
    return t.record(std::move(out), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        relu_bwd(tp.value(in_id), tp.grad(out_id), &tp.grad(in_id));
    });
}

Var add(Var a, Var b) {
    check_same_tape({a, b});
    Tape& t = tape_of(a);
    Tensor out = add_fwd(t.value(a), t.value(b));
    const int a_id = a.id, b_id = b.id;
    return t.record(std::move(out), {a_id, b_id}, [=](Tape& tp, int out_id) {
        const Tensor& g = tp.grad(out_id);
        for (int pid : {a_id, b_id}) {
            if (!tp.requires_grad(pid)) continue;
            Tensor& dst = tp.grad(pid);
            for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
        }
    });
}

Var flatten(Var input) {
    Tape& t = tape_of(input);
    const Tensor& in = t.value(input);
    if (in.rank() == 2) return input;
    if (in.rank() != 4) throw TensorError("flatten expects N,C,H,W, got " + shape_str(in.shape));
    Tensor out({in.shape[0], in.shape[1] * in.shape[2] * in.shape[3]}, in.data);
    const int in_id = input.id;
    return t.record(std::move(out), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const Tensor& g = tp.grad(out_id);
        Tensor& dst = tp.grad(in_id);
        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
    });
}

Var dropout(Var input, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw TensorError("dropout rate must be in [0,1)");
    Tape& t = tape_of(input);
    const Tensor& in = t.value(input);
    auto mask = std::make_shared<std::vector<double>>(in.data.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        const double m = u(rng) < rate ? 0.0 : keep_scale;
        (*mask)[i] = m;
        out.data[i] = in.data[i] * m;
    }
    const int in_id = input.id;
    return t.record(std::move(out), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const Tensor& g = tp.grad(out_id);
        Tensor& dst = tp.grad(in_id);
        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i] * (*mask)[i];
    });
}

Var channel_scale(Var input, Var scale) {
    check_same_tape({input, scale});
    Tape& t = tape_of(input);
    Tensor out = channel_scale_fwd(t.value(input), t.value(scale));
    const int in_id = input.id, s_id = scale.id;
    return t.record(std::move(out), {in_id, s_id}, [=](Tape& tp, int out_id) {
        channel_scale_bwd(tp.value(in_id), tp.value(s_id), tp.grad(out_id),
                          tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                          tp.requires_grad(s_id) ? &tp.grad(s_id) : nullptr);
    });
}

Var broadcast_scale(Var input, Var scale) {
    check_same_tape({input, scale});
    Tape& t = tape_of(input);
    Tensor out = broadcast_scale_fwd(t.value(input), t.value(scale));
    const int in_id = input.id, s_id = scale.id;
    return t.record(std::move(out), {in_id, s_id}, [=](Tape& tp, int out_id) {
        broadcast_scale_bwd(tp.value(in_id), tp.value(s_id), tp.grad(out_id),
                            tp.requires_grad(in_id) ? &tp.grad(in_id) : nullptr,
                            tp.requires_grad(s_id) ? &tp.grad(s_id) : nullptr);
    });
}

Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
    Tape& t = tape_of(logits);
    auto softmax = std::make_shared<Tensor>();
    const double loss = softmax_cross_entropy_fwd(t.value(logits), labels, softmax.get());
    const int l_id = logits.id;
    auto lbl = std::make_shared<std::vector<int>>(std::move(labels));
    return t.record(Tensor::scalar(loss), {l_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(l_id)) return;
        softmax_cross_entropy_bwd(*softmax, *lbl, tp.grad(out_id).data[0], &tp.grad(l_id));
    });
}

Var sum(Var x) {
    Tape& t = tape_of(x);
    const Tensor& in = t.value(x);
    double acc = 0.0;
    for (double v : in.data) acc += v;
    const int in_id = x.id;
    return t.record(Tensor::scalar(acc), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const double g = tp.grad(out_id).data[0];
        Tensor& dst = tp.grad(in_id);
        for (double& v : dst.data) v += g;
    });
}

Var sum_abs(Var x) {
    Tape& t = tape_of(x);
    const Tensor& in = t.value(x);
    double acc = 0.0;
    for (double v : in.data) acc += std::abs(v);
    const int in_id = x.id;
    return t.record(Tensor::scalar(acc), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const double g = tp.grad(out_id).data[0];
        const Tensor& in_v = tp.value(in_id);
        Tensor& dst = tp.grad(in_id);
        for (std::size_t i = 0; i < in_v.data.size(); ++i) {
            const double s = in_v.data[i] > 0.0 ? 1.0 : (in_v.data[i] < 0.0 ? -1.0 : 0.0);
            dst.data[i] += g * s;
        }
    });
}

Var sum_sq(Var x) {
    Tape& t = tape_of(x);
    const Tensor& in = t.value(x);
    double acc = 0.0;
    for (double v : in.data) acc += v * v;
    const int in_id = x.id;
    return t.record(Tensor::scalar(acc), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const double g = tp.grad(out_id).data[0];
        const Tensor& in_v = tp.value(in_id);
        Tensor& dst = tp.grad(in_id);
        for (std::size_t i = 0; i < in_v.data.size(); ++i) dst.data[i] += g * 2.0 * in_v.data[i];
    });
}

Var scale_const(Var x, double c) {
    Tape& t = tape_of(x);
    const Tensor& in = t.value(x);
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] * c;
    const int in_id = x.id;
    return t.record(std::move(out), {in_id}, [=](Tape& tp, int out_id) {
        if (!tp.requires_grad(in_id)) return;
        const Tensor& g = tp.grad(out_id);
        Tensor& dst = tp.grad(in_id);
        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i] * c;
    });
}

Var l2_penalty(const std::vector<Var>& weights, double coefficient) {
    if (weights.empty()) throw TensorError("l2_penalty needs at least one tensor to anchor the tape");
    Var total = sum_sq(weights[0]);
    for (std::size_t i = 1; i < weights.size(); ++i) total = add(total, sum_sq(weights[i]));
    return scale_const(total, coefficient);
}

}  // namespace gateprune
