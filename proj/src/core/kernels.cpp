#include "core/kernels.hpp"

#include <cmath>
#include <cstring>

#include "core/gemm.hpp"
#include "util/error.hpp"

namespace acwm::core {

namespace {

void check_finite_input(const Tensor& t, const char* op) {
    ACWM_CHECK(t.all_finite(), numeric, std::string(op) + ": non-finite input");
}

// col[(ic*K + kk), j] = x[ic, j*stride + kk - padding], zero outside.
void im2col(const float* x, int64_t cin, int64_t len, int64_t k, int64_t stride, int64_t padding,
            int64_t out_len, float* col) {
    for (int64_t ic = 0; ic < cin; ++ic) {
        const float* xc = x + ic * len;
        for (int64_t kk = 0; kk < k; ++kk) {
            float* row = col + (ic * k + kk) * out_len;
            for (int64_t j = 0; j < out_len; ++j) {
                int64_t src = j * stride + kk - padding;
                row[j] = (src >= 0 && src < len) ? xc[src] : 0.0f;
            }
        }
    }
}

void col2im_acc(const float* col, int64_t cin, int64_t len, int64_t k, int64_t stride,
                int64_t padding, int64_t out_len, float* dx) {
    for (int64_t ic = 0; ic < cin; ++ic) {
        float* dxc = dx + ic * len;
        for (int64_t kk = 0; kk < k; ++kk) {
            const float* row = col + (ic * k + kk) * out_len;
            for (int64_t j = 0; j < out_len; ++j) {
                int64_t dst = j * stride + kk - padding;
                if (dst >= 0 && dst < len) dxc[dst] += row[j];
            }
        }
    }
}

}  // namespace

const char* kernel_kind_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::conv1d: return "conv1d";
        case KernelKind::linear: return "linear";
        case KernelKind::batchnorm1d: return "batchnorm1d";
        case KernelKind::relu: return "relu";
        case KernelKind::global_meanpool: return "global_meanpool";
        case KernelKind::residual_add: return "residual_add";
    }
    return "?";
}

int64_t conv1d_out_len(int64_t len, int64_t kernel, int64_t stride, int64_t padding) {
    return (len + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv1dAttrs& attrs) {
    ACWM_CHECK(x.rank() == 3, invalid_argument, "conv1d: input must be [B,Cin,L], got " + shape_str(x.shape()));
    ACWM_CHECK(w.rank() == 3, invalid_argument, "conv1d: weight must be [Cout,Cin,K]");
    ACWM_CHECK(attrs.stride >= 1, invalid_argument, "conv1d: stride must be >= 1");
    ACWM_CHECK(attrs.padding >= 0, invalid_argument, "conv1d: padding must be >= 0");
    const int64_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
    const int64_t cout = w.dim(0), k = w.dim(2);
    ACWM_CHECK(w.dim(1) == cin, invalid_argument,
               "conv1d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    if (bias.defined())
        ACWM_CHECK(bias.rank() == 1 && bias.dim(0) == cout, invalid_argument, "conv1d: bias must be [Cout]");
    const int64_t out_len = conv1d_out_len(len, k, attrs.stride, attrs.padding);
    ACWM_CHECK(out_len >= 1, invalid_argument, "conv1d: input length too short for kernel/stride");
    check_finite_input(x, "conv1d");
    check_finite_input(w, "conv1d");
    if (bias.defined()) check_finite_input(bias, "conv1d");

    std::vector<float> out(static_cast<size_t>(batch * cout * out_len), 0.0f);
    std::vector<float> col(static_cast<size_t>(cin * k * out_len));
    const float* xd = x.data();
    const float* wd = w.data();
    for (int64_t b = 0; b < batch; ++b) {
        im2col(xd + b * cin * len, cin, len, k, attrs.stride, attrs.padding, out_len, col.data());
        float* ob = out.data() + b * cout * out_len;
        if (bias.defined()) {
            const float* bd = bias.data();
            for (int64_t oc = 0; oc < cout; ++oc)
                for (int64_t j = 0; j < out_len; ++j) ob[oc * out_len + j] = bd[oc];
        }
        gemm_nn_acc(wd, col.data(), ob, cout, cin * k, out_len);
    }

    Conv1dAttrs at = attrs;
    Tensor xt = x, wt = w, bt = bias;
    return make_op(
        {batch, cout, out_len}, std::move(out), {x, w, bias},
        [xt, wt, bt, at, batch, cin, len, cout, k, out_len](TensorNode& self) {
            const float* dy = self.grad.data();
            const bool need_dx = xt.requires_grad();
            const bool need_dw = wt.requires_grad();
            const bool need_db = bt.defined() && bt.requires_grad();
            std::vector<float> col(static_cast<size_t>(cin * k * out_len));
            std::vector<float> dcol(static_cast<size_t>(cin * k * out_len));
            float* dxd = need_dx ? xt.grad().data() : nullptr;
            float* dwd = need_dw ? wt.grad().data() : nullptr;
            for (int64_t b = 0; b < batch; ++b) {
                const float* dyb = dy + b * cout * out_len;
                if (need_dx) {
                    std::fill(dcol.begin(), dcol.end(), 0.0f);
                    gemm_tn_acc(wt.data(), dyb, dcol.data(), cin * k, cout, out_len);
                    col2im_acc(dcol.data(), cin, len, k, at.stride, at.padding, out_len,
                               dxd + b * cin * len);
                }
                if (need_dw) {
                    im2col(xt.data() + b * cin * len, cin, len, k, at.stride, at.padding, out_len,
                           col.data());
                    gemm_nt_acc(dyb, col.data(), dwd, cout, out_len, cin * k);
                }
            }
            if (need_db) {
                float* dbd = bt.grad().data();
                for (int64_t oc = 0; oc < cout; ++oc) {
                    double acc = 0.0;
                    for (int64_t b = 0; b < batch; ++b) {
                        const float* dyb = dy + (b * cout + oc) * out_len;
                        for (int64_t j = 0; j < out_len; ++j) acc += dyb[j];
                    }
                    dbd[oc] += static_cast<float>(acc);
                }
            }
        });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    ACWM_CHECK(x.rank() == 2, invalid_argument, "linear: input must be [B,In], got " + shape_str(x.shape()));
    ACWM_CHECK(w.rank() == 2, invalid_argument, "linear: weight must be [Out,In]");
    const int64_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
    ACWM_CHECK(w.dim(1) == in, invalid_argument,
               "linear: dimension mismatch, input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    if (bias.defined())
        ACWM_CHECK(bias.rank() == 1 && bias.dim(0) == out, invalid_argument, "linear: bias must be [Out]");
    check_finite_input(x, "linear");
    check_finite_input(w, "linear");
    if (bias.defined()) check_finite_input(bias, "linear");

    std::vector<float> y(static_cast<size_t>(batch * out), 0.0f);
    if (bias.defined()) {
        const float* bd = bias.data();
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t o = 0; o < out; ++o) y[b * out + o] = bd[o];
    }
    gemm_nt_acc(x.data(), w.data(), y.data(), batch, in, out);

    Tensor xt = x, wt = w, bt = bias;
    return make_op({batch, out}, std::move(y), {x, w, bias},
                   [xt, wt, bt, batch, in, out](TensorNode& self) {
                       const float* dy = self.grad.data();
                       if (xt.requires_grad())
                           gemm_nn_acc(dy, wt.data(), xt.grad().data(), batch, out, in);
                       if (wt.requires_grad())
                           gemm_tn_acc(dy, xt.data(), wt.grad().data(), out, batch, in);
                       if (bt.defined() && bt.requires_grad()) {
                           float* dbd = bt.grad().data();
                           for (int64_t o = 0; o < out; ++o) {
                               double acc = 0.0;
                               for (int64_t b = 0; b < batch; ++b) acc += dy[b * out + o];
                               dbd[o] += static_cast<float>(acc);
                           }
                       }
                   });
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, const BatchNormAttrs& attrs) {
    ACWM_CHECK(x.rank() == 2 || x.rank() == 3, invalid_argument,
               "batchnorm1d: input must be [B,C] or [B,C,L]");
    const int64_t batch = x.dim(0);
    const int64_t ch = x.dim(1);
    const int64_t len = x.rank() == 3 ? x.dim(2) : 1;
    auto check_param = [&](const Tensor& t, const char* name) {
        ACWM_CHECK(t.rank() == 1 && t.dim(0) == ch, invalid_argument,
                   std::string("batchnorm1d: ") + name + " must be [C]");
    };
    check_param(gamma, "gamma");
    check_param(beta, "beta");
    check_param(running_mean, "running_mean");
    check_param(running_var, "running_var");
    ACWM_CHECK(!training || batch >= 2, invalid_argument,
               "batchnorm1d: train mode requires batch size >= 2");
    check_finite_input(x, "batchnorm1d");

    const int64_t n = batch * len;
    const float* xd = x.data();
    std::vector<float> mean(static_cast<size_t>(ch));
    std::vector<float> inv_std(static_cast<size_t>(ch));
    if (training) {
        for (int64_t c = 0; c < ch; ++c) {
            double acc = 0.0;
            for (int64_t b = 0; b < batch; ++b) {
                const float* xc = xd + (b * ch + c) * len;
                for (int64_t i = 0; i < len; ++i) acc += xc[i];
            }
            double mu = acc / static_cast<double>(n);
            double var_acc = 0.0;
            for (int64_t b = 0; b < batch; ++b) {
                const float* xc = xd + (b * ch + c) * len;
                for (int64_t i = 0; i < len; ++i) {
                    double d = xc[i] - mu;
                    var_acc += d * d;
                }
            }
            double var = var_acc / static_cast<double>(n);
            mean[c] = static_cast<float>(mu);
            inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + attrs.eps));
            if (attrs.update_running_stats) {
                float unbiased = static_cast<float>(var * static_cast<double>(n) /
                                                    static_cast<double>(n - 1));
                float* rm = running_mean.data();
                float* rv = running_var.data();
                rm[c] = (1.0f - attrs.momentum) * rm[c] + attrs.momentum * mean[c];
                rv[c] = (1.0f - attrs.momentum) * rv[c] + attrs.momentum * unbiased;
            }
        }
    } else {
        const float* rm = running_mean.data();
        const float* rv = running_var.data();
        for (int64_t c = 0; c < ch; ++c) {
            mean[c] = rm[c];
            inv_std[c] = 1.0f / std::sqrt(rv[c] + attrs.eps);
        }
    }

    std::vector<float> xhat(static_cast<size_t>(batch * ch * len));
    std::vector<float> y(static_cast<size_t>(batch * ch * len));
    const float* gd = gamma.data();
    const float* bd = beta.data();
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            const float* xc = xd + (b * ch + c) * len;
            float* hc = xhat.data() + (b * ch + c) * len;
            float* yc = y.data() + (b * ch + c) * len;
            const float mu = mean[c], is = inv_std[c], g = gd[c], be = bd[c];
            for (int64_t i = 0; i < len; ++i) {
                float h = (xc[i] - mu) * is;
                hc[i] = h;
                yc[i] = g * h + be;
            }
        }
    }

    Tensor xt = x, gt = gamma, bt = beta;
    auto xhat_p = std::make_shared<std::vector<float>>(std::move(xhat));
    auto invstd_p = std::make_shared<std::vector<float>>(std::move(inv_std));
    return make_op(
        x.shape(), std::move(y), {x, gamma, beta},
        [xt, gt, bt, xhat_p, invstd_p, training, batch, ch, len](TensorNode& self) {
            const float* dy = self.grad.data();
            const float* hv = xhat_p->data();
            const double n = static_cast<double>(batch * len);
            for (int64_t c = 0; c < ch; ++c) {
                double sum_dy = 0.0, sum_dy_h = 0.0;
                for (int64_t b = 0; b < batch; ++b) {
                    const int64_t off = (b * ch + c) * len;
                    for (int64_t i = 0; i < len; ++i) {
                        sum_dy += dy[off + i];
                        sum_dy_h += dy[off + i] * hv[off + i];
                    }
                }
                if (gt.requires_grad()) gt.grad()[c] += static_cast<float>(sum_dy_h);
                if (bt.requires_grad()) bt.grad()[c] += static_cast<float>(sum_dy);
                if (xt.requires_grad()) {
                    float* dx = xt.grad().data();
                    const float g_is = gt.data()[c] * (*invstd_p)[c];
                    if (training) {
                        const float m_dy = static_cast<float>(sum_dy / n);
                        const float m_dy_h = static_cast<float>(sum_dy_h / n);
                        for (int64_t b = 0; b < batch; ++b) {
                            const int64_t off = (b * ch + c) * len;
                            for (int64_t i = 0; i < len; ++i)
                                dx[off + i] += g_is * (dy[off + i] - m_dy - hv[off + i] * m_dy_h);
                        }
                    } else {
                        for (int64_t b = 0; b < batch; ++b) {
                            const int64_t off = (b * ch + c) * len;
                            for (int64_t i = 0; i < len; ++i) dx[off + i] += g_is * dy[off + i];
                        }
                    }
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    check_finite_input(x, "relu");
    std::vector<float> y(x.values());
    for (float& v : y) v = v > 0.0f ? v : 0.0f;
    Tensor xt = x;
    return make_op(x.shape(), std::move(y), {x}, [xt](TensorNode& self) {
        if (!xt.requires_grad()) return;
        const float* dy = self.grad.data();
        const float* xv = xt.data();
        float* dx = xt.grad().data();
        const int64_t n = xt.numel();
        for (int64_t i = 0; i < n; ++i)
            if (xv[i] > 0.0f) dx[i] += dy[i];
    });
}

Tensor global_meanpool(const Tensor& x) {
    ACWM_CHECK(x.rank() == 3, invalid_argument, "global_meanpool: input must be [B,C,L]");
    check_finite_input(x, "global_meanpool");
    const int64_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    std::vector<float> y(static_cast<size_t>(batch * ch));
    const float* xd = x.data();
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            double acc = 0.0;
            const float* xc = xd + (b * ch + c) * len;
            for (int64_t i = 0; i < len; ++i) acc += xc[i];
            y[b * ch + c] = static_cast<float>(acc / static_cast<double>(len));
        }
    }
    Tensor xt = x;
    return make_op({batch, ch}, std::move(y), {x}, [xt, batch, ch, len](TensorNode& self) {
        if (!xt.requires_grad()) return;
        const float* dy = self.grad.data();
        float* dx = xt.grad().data();
        const float inv = 1.0f / static_cast<float>(len);
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t c = 0; c < ch; ++c) {
                const float g = dy[b * ch + c] * inv;
                float* dxc = dx + (b * ch + c) * len;
                for (int64_t i = 0; i < len; ++i) dxc[i] += g;
            }
    });
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
    ACWM_CHECK(a.shape() == b.shape(), invalid_argument,
               "residual_add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    check_finite_input(a, "residual_add");
    check_finite_input(b, "residual_add");
    std::vector<float> y(a.values());
    const float* bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    Tensor at = a, bt = b;
    return make_op(a.shape(), std::move(y), {a, b}, [at, bt](TensorNode& self) {
        const float* dy = self.grad.data();
        const size_t n = self.values.size();
        if (at.requires_grad()) {
            float* da = at.grad().data();
            for (size_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (bt.requires_grad()) {
            float* db = bt.grad().data();
            for (size_t i = 0; i < n; ++i) db[i] += dy[i];
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    ACWM_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0), invalid_argument,
               "concat_cols: inputs must be [B,*] with equal batch");
    check_finite_input(a, "concat_cols");
    check_finite_input(b, "concat_cols");
    const int64_t batch = a.dim(0), da = a.dim(1), db = b.dim(1);
    std::vector<float> y(static_cast<size_t>(batch * (da + db)));
    for (int64_t i = 0; i < batch; ++i) {
        std::memcpy(y.data() + i * (da + db), a.data() + i * da, sizeof(float) * da);
        std::memcpy(y.data() + i * (da + db) + da, b.data() + i * db, sizeof(float) * db);
    }
    Tensor at = a, bt = b;
    return make_op({batch, da + db}, std::move(y), {a, b},
                   [at, bt, batch, da, db](TensorNode& self) {
                       const float* dy = self.grad.data();
                       for (int64_t i = 0; i < batch; ++i) {
                           if (at.requires_grad()) {
                               float* ga = at.grad().data() + i * da;
                               const float* src = dy + i * (da + db);
                               for (int64_t j = 0; j < da; ++j) ga[j] += src[j];
                           }
                           if (bt.requires_grad()) {
                               float* gb = bt.grad().data() + i * db;
                               const float* src = dy + i * (da + db) + da;
                               for (int64_t j = 0; j < db; ++j) gb[j] += src[j];
                           }
                       }
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
    ACWM_CHECK(shape_numel(shape) == x.numel(), invalid_argument,
               "reshape: element count mismatch");
    Tensor xt = x;
    return make_op(std::move(shape), x.values(), {x}, [xt](TensorNode& self) {
        if (!xt.requires_grad()) return;
        float* dx = xt.grad().data();
        const float* dy = self.grad.data();
        for (size_t i = 0; i < self.values.size(); ++i) dx[i] += dy[i];
    });
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
    ACWM_CHECK(a.shape() == b.shape(), invalid_argument,
               "mse_mean: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    check_finite_input(a, "mse_mean");
    check_finite_input(b, "mse_mean");
    const int64_t n = a.numel();
    const float* av = a.data();
    const float* bv = b.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    Tensor at = a, bt = b;
    return make_op({1}, {static_cast<float>(acc / static_cast<double>(n))}, {a, b},
                   [at, bt, n](TensorNode& self) {
                       const float g = self.grad[0] * 2.0f / static_cast<float>(n);
                       const float* av = at.data();
                       const float* bv = bt.data();
                       float* da = at.requires_grad() ? at.grad().data() : nullptr;
                       float* db = bt.requires_grad() ? bt.grad().data() : nullptr;
                       for (int64_t i = 0; i < n; ++i) {
                           const float d = g * (av[i] - bv[i]);
                           if (da) da[i] += d;
                           if (db) db[i] -= d;
                       }
                   });
}

Tensor scale(const Tensor& x, float c) {
    check_finite_input(x, "scale");
    std::vector<float> y(x.values());
    for (float& v : y) v *= c;
    Tensor xt = x;
    return make_op(x.shape(), std::move(y), {x}, [xt, c](TensorNode& self) {
        if (!xt.requires_grad()) return;
        float* dx = xt.grad().data();
        const float* dy = self.grad.data();
        for (size_t i = 0; i < self.values.size(); ++i) dx[i] += c * dy[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) { return residual_add(a, b); }

Tensor kernel_forward(KernelKind kind, std::vector<Tensor> inputs, const KernelAttrs& attrs) {
    auto want = [&](size_t lo, size_t hi) {
        ACWM_CHECK(inputs.size() >= lo && inputs.size() <= hi, invalid_argument,
                   std::string("kernel_forward(") + kernel_kind_name(kind) + "): wrong input count");
    };
    switch (kind) {
        case KernelKind::conv1d:
            want(2, 3);
            return conv1d(inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor(), attrs.conv);
        case KernelKind::linear:
            want(2, 3);
            return linear(inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor());
        case KernelKind::batchnorm1d:
            want(5, 5);
            return batchnorm1d(inputs[0], inputs[1], inputs[2], inputs[3], inputs[4],
                               attrs.training, attrs.bn);
        case KernelKind::relu:
            want(1, 1);
            return relu(inputs[0]);
        case KernelKind::global_meanpool:
            want(1, 1);
            return global_meanpool(inputs[0]);
        case KernelKind::residual_add:
            want(2, 2);
            return residual_add(inputs[0], inputs[1]);
    }
    raise(ErrorCategory::invalid_argument, "unknown kernel kind");
}

}  // namespace acwm::core
