#pragma once

#include <vector>

#include "gateprune/tensor.hpp"

// Plain forward/backward math for every primitive. The tape ops wrap these;
// eval-mode execution calls them directly. All backward functions accumulate
// into their output arguments (callers pass zero-initialized tensors) and
// accept nullptr for gradients they do not need.

namespace gateprune {

enum class PoolMode { max, avg };

struct BatchNormStats {
    Tensor running_mean;  // shape {C}
    Tensor running_var;   // shape {C}
};

// Per-call context saved by batchnorm_train_fwd for the backward pass.
struct BatchNormCtx {
    Tensor mean;      // batch mean, {C}
    Tensor inv_std;   // 1/sqrt(var + eps), {C}
    Tensor x_hat;     // normalized input, same shape as input
};

std::vector<int> conv2d_out_shape(const std::vector<int>& in, const std::vector<int>& w,
                                  int stride, int padding);

Tensor conv2d_fwd(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int padding);
void conv2d_bwd(const Tensor& in, const Tensor& w, const Tensor& d_out, int stride, int padding,
                Tensor* d_in, Tensor* d_w, Tensor* d_b);

Tensor dense_fwd(const Tensor& in, const Tensor& w, const Tensor& b);
void dense_bwd(const Tensor& in, const Tensor& w, const Tensor& d_out,
               Tensor* d_in, Tensor* d_w, Tensor* d_b);

std::vector<int> pool2d_out_shape(const std::vector<int>& in, int window, int stride);

// argmax: for max mode, flat input index of the chosen element per output
// element (ties to the lowest flat index); unused for avg.
Tensor pool2d_fwd(const Tensor& in, PoolMode mode, int window, int stride,
                  std::vector<std::int64_t>* argmax);
void pool2d_bwd(const Tensor& in, PoolMode mode, int window, int stride,
                const std::vector<std::int64_t>& argmax, const Tensor& d_out, Tensor* d_in);

// Accepts {N,C,H,W} or {N,D} (treated as C=D, H=W=1). Train mode normalizes
// with batch statistics, fills ctx, and updates stats in place with
// new = momentum*old + (1-momentum)*batch (population variance).
Tensor batchnorm_train_fwd(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                           BatchNormStats& stats, double epsilon, double momentum,
                           BatchNormCtx& ctx);
Tensor batchnorm_eval_fwd(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                          const BatchNormStats& stats, double epsilon);
void batchnorm_train_bwd(const Tensor& gamma, const BatchNormCtx& ctx, const Tensor& d_out,
                         Tensor* d_in, Tensor* d_gamma, Tensor* d_beta);
void batchnorm_eval_bwd(const Tensor& gamma, const Tensor& in, const BatchNormStats& stats,
                        double epsilon, const Tensor& d_out,
                        Tensor* d_in, Tensor* d_gamma, Tensor* d_beta);

Tensor relu_fwd(const Tensor& in);
void relu_bwd(const Tensor& in, const Tensor& d_out, Tensor* d_in);

Tensor add_fwd(const Tensor& a, const Tensor& b);

// out[n,c,h,w] = in[n,c,h,w] * scale[c]; also used for {N,D} inputs.
Tensor channel_scale_fwd(const Tensor& in, const Tensor& scale);
void channel_scale_bwd(const Tensor& in, const Tensor& scale, const Tensor& d_out,
                       Tensor* d_in, Tensor* d_scale);

// out = in * s where s is a scalar tensor {1}.
Tensor broadcast_scale_fwd(const Tensor& in, const Tensor& s);
void broadcast_scale_bwd(const Tensor& in, const Tensor& s, const Tensor& d_out,
                         Tensor* d_in, Tensor* d_s);

// Mean over the batch of -log softmax(logits)[label]; softmax cached for backward.
double softmax_cross_entropy_fwd(const Tensor& logits, const std::vector<int>& labels,
                                 Tensor* softmax_out);
void softmax_cross_entropy_bwd(const Tensor& softmax, const std::vector<int>& labels,
                               double d_loss, Tensor* d_logits);

}  // namespace gateprune
