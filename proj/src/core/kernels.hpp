#pragma once

#include "core/tensor.hpp"

namespace acwm::core {

// The fixed kernel vocabulary every network in this project is composed of.
enum class KernelKind { conv1d, linear, batchnorm1d, relu, global_meanpool, residual_add };
const char* kernel_kind_name(KernelKind kind);

struct Conv1dAttrs {
    int64_t stride = 1;
    int64_t padding = 0;
};

struct BatchNormAttrs {
    float momentum = 0.1f;
    float eps = 1e-5f;
    bool update_running_stats = true;
};

int64_t conv1d_out_len(int64_t len, int64_t kernel, int64_t stride, int64_t padding);

// Cross-correlation. x [B,Cin,L], w [Cout,Cin,K], bias [Cout] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv1dAttrs& attrs);

// x [B,In], w [Out,In], bias [Out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// x [B,C] or [B,C,L]; gamma/beta/running_* all [C]. Train mode normalizes by
// batch statistics and updates the running buffers in place (EMA); eval mode
// normalizes by the running buffers, making outputs batch-independent.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, const BatchNormAttrs& attrs);

Tensor relu(const Tensor& x);

// [B,C,L] -> [B,C]
Tensor global_meanpool(const Tensor& x);

Tensor residual_add(const Tensor& a, const Tensor& b);

// [B,Da] ++ [B,Db] -> [B,Da+Db]
Tensor concat_cols(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);

// Mean over all elements of (a-b)^2; both sides receive gradients.
Tensor mse_mean(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float c);
Tensor add(const Tensor& a, const Tensor& b);

struct KernelAttrs {
    Conv1dAttrs conv;
    BatchNormAttrs bn;
    bool training = true;
};

// Dispatcher over the fixed vocabulary, mainly for the verification suites.
// Input layout per kind: conv1d/linear {x, w[, bias]}, batchnorm1d
// {x, gamma, beta, running_mean, running_var}, relu/global_meanpool {x},
// residual_add {a, b}.
Tensor kernel_forward(KernelKind kind, std::vector<Tensor> inputs, const KernelAttrs& attrs = {});

}  // namespace acwm::core
