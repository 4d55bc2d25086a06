#include "gateprune/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gateprune {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw TensorError(msg);
}

// View any activation tensor as (N, C, spatial): {N,C,H,W} -> H*W, {N,D} -> 1.
struct NCView {
    int n, c;
    std::int64_t sp;
};

NCView nc_view(const Tensor& t) {
    if (t.rank() == 4) return {t.shape[0], t.shape[1], static_cast<std::int64_t>(t.shape[2]) * t.shape[3]};
    if (t.rank() == 2) return {t.shape[0], t.shape[1], 1};
    throw TensorError("expected a 4-d or 2-d activation tensor, got shape " + shape_str(t.shape));
}

}  // namespace

std::vector<int> conv2d_out_shape(const std::vector<int>& in, const std::vector<int>& w,
                                  int stride, int padding) {
    require(in.size() == 4, "conv2d input must be N,C,H,W, got " + shape_str(in));
    require(w.size() == 4, "conv2d weight must be Cout,Cin,Kh,Kw, got " + shape_str(w));
    require(stride >= 1, "conv2d stride must be positive");
    require(padding >= 0, "conv2d padding must be non-negative");
    require(in[1] == w[1], "conv2d input channels " + shape_str(in) + " do not match weight " + shape_str(w));
    const int h_num = in[2] + 2 * padding - w[2];
    const int w_num = in[3] + 2 * padding - w[3];
    require(h_num >= 0 && w_num >= 0, "conv2d kernel " + shape_str(w) + " larger than padded input " + shape_str(in));
    require(h_num % stride == 0 && w_num % stride == 0,
            "conv2d output extent not integral for input " + shape_str(in) + ", weight " + shape_str(w) +
                ", stride " + std::to_string(stride) + ", padding " + std::to_string(padding));
    return {in[0], w[0], h_num / stride + 1, w_num / stride + 1};
}

Tensor conv2d_fwd(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int padding) {
    const auto os = conv2d_out_shape(in.shape, w.shape, stride, padding);
    require(b.rank() == 1 && b.shape[0] == w.shape[0],
            "conv2d bias " + shape_str(b.shape) + " does not match Cout of weight " + shape_str(w.shape));
    Tensor out(os);
    const int N = in.shape[0], Cin = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int Cout = w.shape[0], Kh = w.shape[2], Kw = w.shape[3];
    const int Ho = os[2], Wo = os[3];
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
            double* out_plane = &out.data[out.at4(n, co, 0, 0)];
            const double bias = b.data[co];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) out_plane[i] = bias;
            for (int ci = 0; ci < Cin; ++ci) {
                const double* in_plane = &in.data[in.at4(n, ci, 0, 0)];
                for (int kh = 0; kh < Kh; ++kh) {
                    for (int kw = 0; kw < Kw; ++kw) {
                        const double wv = w.data[w.at4(co, ci, kh, kw)];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            // Valid ow range so that iw = ow*stride - padding + kw is in [0, W).
                            int ow0 = 0;
                            while (ow0 < Wo && ow0 * stride - padding + kw < 0) ++ow0;
                            int ow1 = Wo;
                            while (ow1 > ow0 && (ow1 - 1) * stride - padding + kw >= W) --ow1;
                            const double* in_row = in_plane + static_cast<std::int64_t>(ih) * W;
                            double* out_row = out_plane + static_cast<std::int64_t>(oh) * Wo;
                            const int base = kw - padding;
                            if (stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) out_row[ow] += wv * in_row[ow + base];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow) out_row[ow] += wv * in_row[ow * stride + base];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_bwd(const Tensor& in, const Tensor& w, const Tensor& d_out, int stride, int padding,
                Tensor* d_in, Tensor* d_w, Tensor* d_b) {
    const int N = in.shape[0], Cin = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int Cout = w.shape[0], Kh = w.shape[2], Kw = w.shape[3];
    const int Ho = d_out.shape[2], Wo = d_out.shape[3];
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
            const double* g_plane = &d_out.data[d_out.at4(n, co, 0, 0)];
            if (d_b) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) acc += g_plane[i];
                d_b->data[co] += acc;
            }
            for (int ci = 0; ci < Cin; ++ci) {
                const double* in_plane = &in.data[in.at4(n, ci, 0, 0)];
                double* din_plane = d_in ? &d_in->data[d_in->at4(n, ci, 0, 0)] : nullptr;
                for (int kh = 0; kh < Kh; ++kh) {
                    for (int kw = 0; kw < Kw; ++kw) {
                        const double wv = w.data[w.at4(co, ci, kh, kw)];
                        double wacc = 0.0;
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            int ow0 = 0;
                            while (ow0 < Wo && ow0 * stride - padding + kw < 0) ++ow0;
                            int ow1 = Wo;
                            while (ow1 > ow0 && (ow1 - 1) * stride - padding + kw >= W) --ow1;
                            const double* g_row = g_plane + static_cast<std::int64_t>(oh) * Wo;
                            const double* in_row = in_plane + static_cast<std::int64_t>(ih) * W;
                            const int base = kw - padding;
                            if (d_w) {
                                if (stride == 1) {
                                    for (int ow = ow0; ow < ow1; ++ow) wacc += g_row[ow] * in_row[ow + base];
                                } else {
                                    for (int ow = ow0; ow < ow1; ++ow) wacc += g_row[ow] * in_row[ow * stride + base];
                                }
                            }
                            if (din_plane && wv != 0.0) {
                                double* din_row = din_plane + static_cast<std::int64_t>(ih) * W;
                                if (stride == 1) {
                                    for (int ow = ow0; ow < ow1; ++ow) din_row[ow + base] += wv * g_row[ow];
                                } else {
                                    for (int ow = ow0; ow < ow1; ++ow) din_row[ow * stride + base] += wv * g_row[ow];
                                }
                            }
                        }
                        if (d_w) d_w->data[d_w->at4(co, ci, kh, kw)] += wacc;
                    }
                }
            }
        }
    }
}

Tensor dense_fwd(const Tensor& in, const Tensor& w, const Tensor& b) {
    require(in.rank() == 2, "dense input must be N,D, got " + shape_str(in.shape));
    require(w.rank() == 2, "dense weight must be D,M, got " + shape_str(w.shape));
    require(in.shape[1] == w.shape[0],
            "dense inner dimensions disagree: input " + shape_str(in.shape) + " vs weight " + shape_str(w.shape));
    require(b.rank() == 1 && b.shape[0] == w.shape[1],
            "dense bias " + shape_str(b.shape) + " does not match M of weight " + shape_str(w.shape));
    const int N = in.shape[0], D = in.shape[1], M = w.shape[1];
    Tensor out({N, M});
    for (int n = 0; n < N; ++n) {
        double* out_row = &out.data[static_cast<std::size_t>(n) * M];
        for (int m = 0; m < M; ++m) out_row[m] = b.data[m];
        const double* in_row = &in.data[static_cast<std::size_t>(n) * D];
        for (int d = 0; d < D; ++d) {
            const double x = in_row[d];
            if (x == 0.0) continue;
            const double* w_row = &w.data[static_cast<std::size_t>(d) * M];
            for (int m = 0; m < M; ++m) out_row[m] += x * w_row[m];
        }
    }
    return out;
}

void dense_bwd(const Tensor& in, const Tensor& w, const Tensor& d_out,
               Tensor* d_in, Tensor* d_w, Tensor* d_b) {
    const int N = in.shape[0], D = in.shape[1], M = w.shape[1];
    for (int n = 0; n < N; ++n) {
        const double* g_row = &d_out.data[static_cast<std::size_t>(n) * M];
        const double* in_row = &in.data[static_cast<std::size_t>(n) * D];
        if (d_b) {
            for (int m = 0; m < M; ++m) d_b->data[m] += g_row[m];
        }
        for (int d = 0; d < D; ++d) {
            const double* w_row = &w.data[static_cast<std::size_t>(d) * M];
            if (d_in) {
                double acc = 0.0;
                for (int m = 0; m < M; ++m) acc += g_row[m] * w_row[m];
                d_in->data[static_cast<std::size_t>(n) * D + d] += acc;
            }
            if (d_w) {
                const double x = in_row[d];
                if (x != 0.0) {
                    double* dw_row = &d_w->data[static_cast<std::size_t>(d) * M];
                    for (int m = 0; m < M; ++m) dw_row[m] += x * g_row[m];
                }
            }
        }
    }
}

std::vector<int> pool2d_out_shape(const std::vector<int>& in, int window, int stride) {
    require(in.size() == 4, "pool2d input must be N,C,H,W, got " + shape_str(in));
    require(window >= 1 && stride >= 1, "pool2d window and stride must be positive");
    require(window <= in[2] && window <= in[3],
            "pool2d window " + std::to_string(window) + " larger than input " + shape_str(in));
    const int h_num = in[2] - window;
    const int w_num = in[3] - window;
    require(h_num % stride == 0 && w_num % stride == 0,
            "pool2d output extent not integral for input " + shape_str(in) + ", window " +
                std::to_string(window) + ", stride " + std::to_string(stride));
    return {in[0], in[1], h_num / stride + 1, w_num / stride + 1};
}

Tensor pool2d_fwd(const Tensor& in, PoolMode mode, int window, int stride,
                  std::vector<std::int64_t>* argmax) {
    const auto os = pool2d_out_shape(in.shape, window, stride);
    Tensor out(os);
    const int N = os[0], C = os[1], Ho = os[2], Wo = os[3];
    const int H = in.shape[2], W = in.shape[3];
    if (argmax) argmax->assign(static_cast<std::size_t>(out.numel()), -1);
    const double inv_area = 1.0 / (static_cast<double>(window) * window);
    std::int64_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* plane = &in.data[in.at4(n, c, 0, 0)];
            for (int oh = 0; oh < Ho; ++oh) {
                for (int ow = 0; ow < Wo; ++ow, ++oi) {
                    const int h0 = oh * stride, w0 = ow * stride;
                    if (mode == PoolMode::avg) {
                        double acc = 0.0;
                        for (int dh = 0; dh < window; ++dh)
                            for (int dw = 0; dw < window; ++dw)
                                acc += plane[static_cast<std::int64_t>(h0 + dh) * W + (w0 + dw)];
                        out.data[oi] = acc * inv_area;
                    } else {
                        double best = -std::numeric_limits<double>::infinity();
                        std::int64_t best_idx = -1;
                        for (int dh = 0; dh < window; ++dh) {
                            for (int dw = 0; dw < window; ++dw) {
                                const std::int64_t idx = static_cast<std::int64_t>(h0 + dh) * W + (w0 + dw);
                                if (plane[idx] > best) {  // strict >: ties go to the lowest flat index
                                    best = plane[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.data[oi] = best;
                        if (argmax) (*argmax)[oi] = in.at4(n, c, 0, 0) + best_idx;
                    }
                }
            }
        }
        (void)H;
    }
    return out;
}

void pool2d_bwd(const Tensor& in, PoolMode mode, int window, int stride,
                const std::vector<std::int64_t>& argmax, const Tensor& d_out, Tensor* d_in) {
    if (!d_in) return;
    const int N = d_out.shape[0], C = d_out.shape[1], Ho = d_out.shape[2], Wo = d_out.shape[3];
    const int W = in.shape[3];
    const double inv_area = 1.0 / (static_cast<double>(window) * window);
    std::int64_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            double* din_plane = &d_in->data[d_in->at4(n, c, 0, 0)];
            for (int oh = 0; oh < Ho; ++oh) {
                for (int ow = 0; ow < Wo; ++ow, ++oi) {
                    const double g = d_out.data[oi];
                    if (mode == PoolMode::avg) {
                        const int h0 = oh * stride, w0 = ow * stride;
                        const double share = g * inv_area;
                        for (int dh = 0; dh < window; ++dh)
                            for (int dw = 0; dw < window; ++dw)
                                din_plane[static_cast<std::int64_t>(h0 + dh) * W + (w0 + dw)] += share;
                    } else {
                        d_in->data[argmax[oi]] += g;
                    }
                }
            }
        }
    }
}

namespace {

void check_bn_args(const Tensor& in, const Tensor& gamma, const Tensor& beta) {
    const auto v = nc_view(in);
    if (gamma.rank() != 1 || gamma.shape[0] != v.c || beta.rank() != 1 || beta.shape[0] != v.c) {
        throw TensorError("batchnorm gamma/beta " + shape_str(gamma.shape) + "/" + shape_str(beta.shape) +
                          " do not match channel count of input " + shape_str(in.shape));
    }
}

}  // namespace

Tensor batchnorm_train_fwd(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                           BatchNormStats& stats, double epsilon, double momentum,
                           BatchNormCtx& ctx) {
    check_bn_args(in, gamma, beta);
    const auto v = nc_view(in);
    const std::int64_t m = static_cast<std::int64_t>(v.n) * v.sp;
    if (m < 2) {
        throw TensorError("batchnorm train mode needs at least 2 samples per channel, got " + std::to_string(m));
    }
    ctx.mean = Tensor({v.c});
    ctx.inv_std = Tensor({v.c});
    ctx.x_hat = Tensor(in.shape);
    Tensor out(in.shape);
    for (int c = 0; c < v.c; ++c) {
        double sum = 0.0;
        for (int n = 0; n < v.n; ++n) {
            const double* p = &in.data[(static_cast<std::int64_t>(n) * v.c + c) * v.sp];
            for (std::int64_t i = 0; i < v.sp; ++i) sum += p[i];
        }
        const double mean = sum / static_cast<double>(m);
        double var_sum = 0.0;
        for (int n = 0; n < v.n; ++n) {
            const double* p = &in.data[(static_cast<std::int64_t>(n) * v.c + c) * v.sp];
            for (std::int64_t i = 0; i < v.sp; ++i) {
                const double d = p[i] - mean;
                var_sum += d * d;
            }
        }
        const double var = var_sum / static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + epsilon);
        ctx.mean.data[c] = mean;
        ctx.inv_std.data[c] = inv_std;
        const double g = gamma.data[c], b = beta.data[c];
        for (int n = 0; n < v.n; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            for (std::int64_t i = 0; i < v.sp; ++i) {
                const double xh = (in.data[off + i] - mean) * inv_std;
                ctx.x_hat.data[off + i] = xh;
                out.data[off + i] = g * xh + b;
            }
        }
        stats.running_mean.data[c] = momentum * stats.running_mean.data[c] + (1.0 - momentum) * mean;
        stats.running_var.data[c] = momentum * stats.running_var.data[c] + (1.0 - momentum) * var;
    }
    return out;
}

Tensor batchnorm_eval_fwd(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                          const BatchNormStats& stats, double epsilon) {
    check_bn_args(in, gamma, beta);
    const auto v = nc_view(in);
    Tensor out(in.shape);
    for (int c = 0; c < v.c; ++c) {
        const double inv_std = 1.0 / std::sqrt(stats.running_var.data[c] + epsilon);
        const double mean = stats.running_mean.data[c];
        const double g = gamma.data[c], b = beta.data[c];
        for (int n = 0; n < v.n; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            for (std::int64_t i = 0; i < v.sp; ++i) {
                out.data[off + i] = g * (in.data[off + i] - mean) * inv_std + b;
            }
        }
    }
    return out;
}

void batchnorm_train_bwd(const Tensor& gamma, const BatchNormCtx& ctx, const Tensor& d_out,
                         Tensor* d_in, Tensor* d_gamma, Tensor* d_beta) {
    const auto v = nc_view(d_out);
    const double m = static_cast<double>(static_cast<std::int64_t>(v.n) * v.sp);
    for (int c = 0; c < v.c; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < v.n; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            for (std::int64_t i = 0; i < v.sp; ++i) {
                sum_g += d_out.data[off + i];
                sum_gx += d_out.data[off + i] * ctx.x_hat.data[off + i];
            }
        }
        if (d_gamma) d_gamma->data[c] += sum_gx;
        if (d_beta) d_beta->data[c] += sum_g;
        if (d_in) {
            const double scale = gamma.data[c] * ctx.inv_std.data[c];
            const double mean_g = sum_g / m;
            const double mean_gx = sum_gx / m;
            for (int n = 0; n < v.n; ++n) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
                for (std::int64_t i = 0; i < v.sp; ++i) {
                    d_in->data[off + i] +=
                        scale * (d_out.data[off + i] - mean_g - ctx.x_hat.data[off + i] * mean_gx);
                }
            }
        }
    }
}

void batchnorm_eval_bwd(const Tensor& gamma, const Tensor& in, const BatchNormStats& stats,
                        double epsilon, const Tensor& d_out,
                        Tensor* d_in, Tensor* d_gamma, Tensor* d_beta) {
    const auto v = nc_view(d_out);
    for (int c = 0; c < v.c; ++c) {
        const double inv_std = 1.0 / std::sqrt(stats.running_var.data[c] + epsilon);
        const double mean = stats.running_mean.data[c];
        const double scale = gamma.data[c] * inv_std;
        for (int n = 0; n < v.n; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            for (std::int64_t i = 0; i < v.sp; ++i) {
                const double g = d_out.data[off + i];
                if (d_in) d_in->data[off + i] += scale * g;
                if (d_gamma) d_gamma->data[c] += g * (in.data[off + i] - mean) * inv_std;
                if (d_beta) d_beta->data[c] += g;
            }
        }
    }
}

Tensor relu_fwd(const Tensor& in) {
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
    return out;
}

void relu_bwd(const Tensor& in, const Tensor& d_out, Tensor* d_in) {
    if (!d_in) return;
    // Subgradient at exactly 0 is defined as 0.
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        if (in.data[i] > 0.0) d_in->data[i] += d_out.data[i];
    }
}

Tensor add_fwd(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw TensorError("add shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Tensor channel_scale_fwd(const Tensor& in, const Tensor& scale) {
    const auto v = nc_view(in);
    if (scale.rank() != 1 || scale.shape[0] != v.c) {
        throw TensorError("channel scale length " + shape_str(scale.shape) +
                          " does not match channel count of input " + shape_str(in.shape));
    }
    Tensor out(in.shape);
    for (int n = 0; n < v.n; ++n) {
        for (int c = 0; c < v.c; ++c) {
            const double s = scale.data[c];
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            for (std::int64_t i = 0; i < v.sp; ++i) out.data[off + i] = in.data[off + i] * s;
        }
    }
    return out;
}

void channel_scale_bwd(const Tensor& in, const Tensor& scale, const Tensor& d_out,
                       Tensor* d_in, Tensor* d_scale) {
    const auto v = nc_view(in);
    for (int n = 0; n < v.n; ++n) {
        for (int c = 0; c < v.c; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * v.c + c) * v.sp;
            const double s = scale.data[c];
            double acc = 0.0;
            for (std::int64_t i = 0; i < v.sp; ++i) {
                const double g = d_out.data[off + i];
                if (d_in) d_in->data[off + i] += s * g;
                acc += g * in.data[off + i];
            }
            if (d_scale) d_scale->data[c] += acc;
        }
    }
}

Tensor broadcast_scale_fwd(const Tensor& in, const Tensor& s) {
    if (!s.is_scalar()) throw TensorError("broadcast scale expects a scalar, got " + shape_str(s.shape));
    Tensor out(in.shape);
    const double sv = s.data[0];
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] * sv;
    return out;
}

void broadcast_scale_bwd(const Tensor& in, const Tensor& s, const Tensor& d_out,
                         Tensor* d_in, Tensor* d_s) {
    const double sv = s.data[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        if (d_in) d_in->data[i] += sv * d_out.data[i];
        acc += d_out.data[i] * in.data[i];
    }
    if (d_s) d_s->data[0] += acc;
}

double softmax_cross_entropy_fwd(const Tensor& logits, const std::vector<int>& labels,
                                 Tensor* softmax_out) {
    if (logits.rank() != 2) throw TensorError("cross entropy logits must be N,K, got " + shape_str(logits.shape));
    const int N = logits.shape[0], K = logits.shape[1];
    if (static_cast<int>(labels.size()) != N) {
        throw TensorError("cross entropy got " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(N));
    }
    Tensor sm({N, K});
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        if (labels[n] < 0 || labels[n] >= K) {
            throw TensorError("label " + std::to_string(labels[n]) + " out of range [0," + std::to_string(K) + ")");
        }
        const double* row = &logits.data[static_cast<std::size_t>(n) * K];
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
        const double log_denom = std::log(denom);
        for (int k = 0; k < K; ++k) sm.data[static_cast<std::size_t>(n) * K + k] = std::exp(row[k] - mx) / denom;
        loss += -(row[labels[n]] - mx - log_denom);
    }
    if (softmax_out) *softmax_out = std::move(sm);
    return loss / static_cast<double>(N);
}

void softmax_cross_entropy_bwd(const Tensor& softmax, const std::vector<int>& labels,
                               double d_loss, Tensor* d_logits) {
    if (!d_logits) return;
    const int N = softmax.shape[0], K = softmax.shape[1];
    const double scale = d_loss / static_cast<double>(N);
    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            const double onehot = (k == labels[n]) ? 1.0 : 0.0;
            d_logits->data[static_cast<std::size_t>(n) * K + k] +=
                scale * (softmax.data[static_cast<std::size_t>(n) * K + k] - onehot);
        }
    }
}

}  // namespace gateprune
