#pragma once

#include <functional>
#include <vector>

#include "milagro/rng.hpp"
#include "milagro/tensor.hpp"

namespace milagro::nn {

// OpenMP-parallel kernels. Parallel loops cover independent output
// coordinates only and every reduction uses a fixed summation order, so
// results are bit-identical regardless of thread count. A naive serial
// reference of each forward kernel lives in nn::serial for testing and
// benchmarking.

// ---------------------------------------------------------------------------
// matmul variants (double, row-major)

// C(m x n) = A(m x k) * B(k x n)
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n);
// C(m x n) = A(m x k) * B(n x k)^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n);
// C(m x n) = A(k x m)^T * B(k x n)
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n);

// ---------------------------------------------------------------------------
// layers

struct Conv1dLayer {
    Tensor w;  // (filters, in_channels, kernel)
    Tensor b;  // (filters)

    Conv1dLayer() = default;
    Conv1dLayer(std::size_t filters, std::size_t in_channels, std::size_t kernel)
        : w({filters, in_channels, kernel}), b({filters}) {}

    std::size_t filters() const { return w.dim(0); }
    std::size_t in_channels() const { return w.dim(1); }
    std::size_t kernel() const { return w.dim(2); }
};

struct DenseLayer {
    Tensor w;  // (out, in)
    Tensor b;  // (out)

    DenseLayer() = default;
    DenseLayer(std::size_t out, std::size_t in) : w({out, in}), b({out}) {}

    std::size_t out_features() const { return w.dim(0); }
    std::size_t in_features() const { return w.dim(1); }
};

// cross-correlation per the layer definition: no kernel flip, stride 1, no padding
Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer);
struct Conv1dGrads {
    Tensor x, w, b;
};
Conv1dGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const Conv1dLayer& layer);

struct MaxPoolResult {
    Tensor out;
    std::vector<std::size_t> argmax;  // absolute input index per output element
};
// non-overlapping windows (stride = pool), trailing remainder dropped,
// lowest index wins ties
MaxPoolResult maxpool1d_forward(const Tensor& x, std::size_t pool = 2);
Tensor maxpool1d_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                          const std::vector<std::size_t>& input_shape);

Tensor dense_forward(const Tensor& x, const DenseLayer& layer);
struct DenseGrads {
    Tensor x, w, b;
};
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const DenseLayer& layer);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);  // gradient 0 at x == 0

// inverted dropout: survivors scaled by 1/(1-rate) at training time,
// identity at inference; mask holds the applied per-unit factor
Tensor dropout_forward(const Tensor& x, double rate, bool training, Rng& rng, Tensor* mask_out);
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

// rows are samples; numerically stabilized by subtracting the row max
Tensor softmax(const Tensor& logits);
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);
// d(mean loss)/d(logits) = (p - onehot)/batch
Tensor softmax_xent_backward(const Tensor& probs, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// optimizers

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor> m, v;

    void init(const std::vector<Tensor*>& params);
};

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state);

void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr);

// ---------------------------------------------------------------------------
// gradient verification

// Central differences of `loss` against the analytic `grads`, coordinate by
// coordinate. `max_coords_per_tensor` = 0 sweeps every coordinate; a positive
// value checks a seeded random subset so large stacks fit a time budget.
// Returns the max relative error max(|a-n| / max(1, |a|, |n|)).
double finite_difference_check(const std::function<double()>& loss,
                               const std::vector<Tensor*>& params,
                               const std::vector<const Tensor*>& grads, double eps = 1e-5,
                               std::size_t max_coords_per_tensor = 0,
                               std::uint64_t sample_seed = 0);

// ---------------------------------------------------------------------------
// serial reference (naive nested loops, no OpenMP)

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer);
Tensor maxpool1d_forward(const Tensor& x, std::size_t pool = 2);
Tensor dense_forward(const Tensor& x, const DenseLayer& layer);
Tensor softmax(const Tensor& logits);
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

}  // namespace serial

}  // namespace milagro::nn
