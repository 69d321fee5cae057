#include <algorithm>
#include <cmath>

#include "milagro/nn.hpp"

// Naive nested-loop reference implementations. These stay deliberately
// simple: tests use them as independent oracles for the OpenMP kernels and
// bench_kernels compares throughput against them.

namespace milagro::nn::serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
            c[i * n + j] = acc;
        }
}

Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const std::size_t f = layer.filters(), kern = layer.kernel();
    const std::size_t out_len = len - kern + 1;
    Tensor y({batch, f, out_len});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < f; ++j)
            for (std::size_t l = 0; l < out_len; ++l) {
                double acc = layer.b[j];
                for (std::size_t c = 0; c < ch; ++c)
                    for (std::size_t t = 0; t < kern; ++t)
                        acc += layer.w.at3(j, c, t) * x.at3(b, c, l + t);
                y.at3(b, j, l) = acc;
            }
    return y;
}

Tensor maxpool1d_forward(const Tensor& x, std::size_t pool) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const std::size_t out_len = len / pool;
    Tensor y({batch, ch, out_len});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t l = 0; l < out_len; ++l) {
                double best = x.at3(b, c, l * pool);
                for (std::size_t m = 1; m < pool; ++m)
                    best = std::max(best, x.at3(b, c, l * pool + m));
                y.at3(b, c, l) = best;
            }
    return y;
}

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
    const std::size_t batch = x.dim(0), in = layer.in_features(), out = layer.out_features();
    Tensor y({batch, out});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < out; ++j) {
            double acc = layer.b[j];
            for (std::size_t i = 0; i < in; ++i) acc += x.at2(b, i) * layer.w.at2(j, i);
            y.at2(b, j) = acc;
        }
    return y;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t batch = logits.dim(0), n = logits.dim(1);
    Tensor p({batch, n});
    for (std::size_t b = 0; b < batch; ++b) {
        double mx = logits.at2(b, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits.at2(b, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            p.at2(b, j) = std::exp(logits.at2(b, j) - mx);
            sum += p.at2(b, j);
        }
        for (std::size_t j = 0; j < n; ++j) p.at2(b, j) /= sum;
    }
    return p;
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t batch = probs.dim(0);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
        loss += -std::log(std::max(probs.at2(b, static_cast<std::size_t>(labels[b])), 1e-300));
    return loss / static_cast<double>(batch);
}

}  // namespace milagro::nn::serial
