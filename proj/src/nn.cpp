#include "milagro/nn.hpp"

#include <algorithm>
#include <cmath>
#include <omp.h>

namespace milagro::nn {

namespace {

// fixed 8-lane accumulation: reassociation is spelled out in code, so the
// result does not depend on compiler flags or thread count
inline double dot8(const double* a, const double* b, std::size_t n) {
    double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8)
        for (int l = 0; l < 8; ++l) lanes[l] += a[t + l] * b[t + l];
    double tail = 0.0;
    for (; t < n; ++t) tail += a[t] * b[t];
    return (((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
            ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))) +
           tail;
}

inline double sum8(const double* a, std::size_t n) {
    double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8)
        for (int l = 0; l < 8; ++l) lanes[l] += a[t + l];
    double tail = 0.0;
    for (; t < n; ++t) tail += a[t];
    return (((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
            ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))) +
           tail;
}

}  // namespace

void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
#pragma omp parallel for schedule(static)
    for (long ii = 0; ii < static_cast<long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = arow[t];
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
#pragma omp parallel for schedule(static)
    for (long ii = 0; ii < static_cast<long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = dot8(arow, b + j * k, k);
    }
}

void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
#pragma omp parallel for schedule(static)
    for (long ii = 0; ii < static_cast<long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[t * m + i];
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// conv1d

Tensor conv1d_forward(const Tensor& x, const Conv1dLayer& layer) {
    if (x.shape.size() != 3 || x.dim(1) != layer.in_channels())
        throw ShapeMismatch("conv1d_forward: input is not (batch, channels, length)");
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const std::size_t f = layer.filters(), kern = layer.kernel();
    if (len < kern) throw ShapeMismatch("conv1d_forward: input shorter than the kernel");
    const std::size_t out_len = len - kern + 1;

    Tensor y({batch, f, out_len});
#pragma omp parallel for schedule(static) collapse(2)
    for (long bi = 0; bi < static_cast<long>(batch); ++bi)
        for (long ji = 0; ji < static_cast<long>(f); ++ji) {
            const auto b = static_cast<std::size_t>(bi);
            const auto j = static_cast<std::size_t>(ji);
            double* out = &y.data[(b * f + j) * out_len];
            std::fill(out, out + out_len, layer.b[j]);
            for (std::size_t c = 0; c < ch; ++c) {
                const double* in = &x.data[(b * ch + c) * len];
                const double* wv = &layer.w.data[(j * ch + c) * kern];
                for (std::size_t t = 0; t < kern; ++t) {
                    const double wt = wv[t];
                    for (std::size_t l = 0; l < out_len; ++l) out[l] += wt * in[l + t];
                }
            }
        }
    return y;
}

Conv1dGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const Conv1dLayer& layer) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const std::size_t f = layer.filters(), kern = layer.kernel();
    const std::size_t out_len = len - kern + 1;
    require_shape(grad_out, {batch, f, out_len}, "conv1d_backward");

    Conv1dGrads g;
    g.x = Tensor({batch, ch, len});
    g.w = Tensor({f, ch, kern});
    g.b = Tensor({f});

#pragma omp parallel for schedule(static)
    for (long ji = 0; ji < static_cast<long>(f); ++ji) {
        const auto j = static_cast<std::size_t>(ji);
        double acc_b = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
            acc_b += sum8(&grad_out.data[(b * f + j) * out_len], out_len);
        g.b[j] = acc_b;
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < kern; ++t) {
                double acc = 0.0;
                for (std::size_t b = 0; b < batch; ++b)
                    acc += dot8(&grad_out.data[(b * f + j) * out_len],
                                &x.data[(b * ch + c) * len + t], out_len);
                g.w.data[(j * ch + c) * kern + t] = acc;
            }
    }

#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < static_cast<long>(batch); ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        for (std::size_t j = 0; j < f; ++j) {
            const double* go = &grad_out.data[(b * f + j) * out_len];
            for (std::size_t c = 0; c < ch; ++c) {
                double* gx = &g.x.data[(b * ch + c) * len];
                const double* wv = &layer.w.data[(j * ch + c) * kern];
                for (std::size_t t = 0; t < kern; ++t) {
                    const double wt = wv[t];
                    for (std::size_t l = 0; l < out_len; ++l) gx[l + t] += wt * go[l];
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// maxpool

MaxPoolResult maxpool1d_forward(const Tensor& x, std::size_t pool) {
    if (x.shape.size() != 3) throw ShapeMismatch("maxpool1d_forward: input is not 3-D");
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (len < pool) throw ShapeMismatch("maxpool1d_forward: input shorter than the pool window");
    const std::size_t out_len = len / pool;

    MaxPoolResult r;
    r.out = Tensor({batch, ch, out_len});
    r.argmax.resize(batch * ch * out_len);
#pragma omp parallel for schedule(static)
    for (long bci = 0; bci < static_cast<long>(batch * ch); ++bci) {
        const auto bc = static_cast<std::size_t>(bci);
        const double* in = &x.data[bc * len];
        double* out = &r.out.data[bc * out_len];
        std::size_t* am = &r.argmax[bc * out_len];
        for (std::size_t l = 0; l < out_len; ++l) {
            std::size_t best = l * pool;
            double bv = in[best];
            for (std::size_t m = 1; m < pool; ++m) {
                const std::size_t idx = l * pool + m;
                if (in[idx] > bv) {  // strict: lowest index wins ties
                    bv = in[idx];
                    best = idx;
                }
            }
            out[l] = bv;
            am[l] = bc * len + best;
        }
    }
    return r;
}

Tensor maxpool1d_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                          const std::vector<std::size_t>& input_shape) {
    if (grad_out.size() != argmax.size())
        throw ShapeMismatch("maxpool1d_backward: gradient does not match stored indices");
    Tensor gx(input_shape);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(argmax.size()); ++i)
        gx.data[argmax[static_cast<std::size_t>(i)]] +=
            grad_out.data[static_cast<std::size_t>(i)];
    return gx;
}

// ---------------------------------------------------------------------------
// dense / relu / dropout

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
    if (x.shape.size() != 2 || x.dim(1) != layer.in_features())
        throw ShapeMismatch("dense_forward: input is not (batch, in_features)");
    const std::size_t batch = x.dim(0), in = layer.in_features(), out = layer.out_features();
    Tensor y({batch, out});
    mm_nt(x.data.data(), layer.w.data.data(), y.data.data(), batch, in, out);
#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < static_cast<long>(batch); ++bi)
        for (std::size_t j = 0; j < out; ++j)
            y.data[static_cast<std::size_t>(bi) * out + j] += layer.b[j];
    return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const DenseLayer& layer) {
    const std::size_t batch = x.dim(0), in = layer.in_features(), out = layer.out_features();
    require_shape(grad_out, {batch, out}, "dense_backward");

    DenseGrads g;
    g.x = Tensor({batch, in});
    g.w = Tensor({out, in});
    g.b = Tensor({out});
    mm_nn(grad_out.data.data(), layer.w.data.data(), g.x.data.data(), batch, out, in);
    mm_tn(grad_out.data.data(), x.data.data(), g.w.data.data(), out, batch, in);
#pragma omp parallel for schedule(static)
    for (long ji = 0; ji < static_cast<long>(out); ++ji) {
        const auto j = static_cast<std::size_t>(ji);
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) acc += grad_out.data[b * out + j];
        g.b[j] = acc;
    }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(y.size()); ++i) {
        auto& v = y.data[static_cast<std::size_t>(i)];
        v = v > 0.0 ? v : 0.0;
    }
    return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
    if (!grad_out.same_shape(x)) throw ShapeMismatch("relu_backward: shape mismatch");
    Tensor g = grad_out;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(g.size()); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!(x.data[idx] > 0.0)) g.data[idx] = 0.0;
    }
    return g;
}

Tensor dropout_forward(const Tensor& x, double rate, bool training, Rng& rng, Tensor* mask_out) {
    if (rate < 0.0 || rate >= 1.0) throw ShapeMismatch("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        if (mask_out) {
            *mask_out = Tensor(x.shape);
            mask_out->fill(1.0);
        }
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor mask(x.shape);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.data[i] = rng.uniform() < rate ? 0.0 : scale;
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= mask.data[i];
    if (mask_out) *mask_out = std::move(mask);
    return y;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
    if (!grad_out.same_shape(mask)) throw ShapeMismatch("dropout_backward: shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= mask.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// softmax / cross-entropy

Tensor softmax(const Tensor& logits) {
    if (logits.shape.size() != 2) throw ShapeMismatch("softmax: input is not (batch, classes)");
    const std::size_t batch = logits.dim(0), n = logits.dim(1);
    Tensor p({batch, n});
#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < static_cast<long>(batch); ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        const double* in = &logits.data[b * n];
        double* out = &p.data[b * n];
        double mx = in[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    }
    return p;
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t batch = probs.dim(0), n = probs.dim(1);
    if (labels.size() != batch) throw ShapeMismatch("cross_entropy: label count != batch");
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto y = static_cast<std::size_t>(labels[b]);
        if (y >= n) throw ShapeMismatch("cross_entropy: label outside class range");
        loss += -std::log(std::max(probs.data[b * n + y], 1e-300));
    }
    return loss / static_cast<double>(batch);
}

Tensor softmax_xent_backward(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t batch = probs.dim(0), n = probs.dim(1);
    if (labels.size() != batch)
        throw ShapeMismatch("softmax_xent_backward: label count != batch");
    Tensor g = probs;
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        g.data[b * n + static_cast<std::size_t>(labels[b])] -= 1.0;
        for (std::size_t j = 0; j < n; ++j) g.data[b * n + j] *= inv;
    }
    return g;
}

// ---------------------------------------------------------------------------
// optimizers

void AdamState::init(const std::vector<Tensor*>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto* p : params) {
        m.emplace_back(p->shape);
        v.emplace_back(p->shape);
    }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatch("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = *grads[t];
        Tensor& m = state.m[t];
        Tensor& v = state.v[t];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw ShapeMismatch("adam_step: tensor shape mismatch");
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(p.size()); ++i) {
            const auto idx = static_cast<std::size_t>(i);
            m.data[idx] = state.beta1 * m.data[idx] + (1.0 - state.beta1) * g.data[idx];
            v.data[idx] =
                state.beta2 * v.data[idx] + (1.0 - state.beta2) * g.data[idx] * g.data[idx];
            const double mhat = m.data[idx] / bc1;
            const double vhat = v.data[idx] / bc2;
            p.data[idx] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr) {
    if (params.size() != grads.size()) throw ShapeMismatch("sgd_step: count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = *grads[t];
        if (!p.same_shape(g)) throw ShapeMismatch("sgd_step: tensor shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) p.data[i] -= lr * g.data[i];
    }
}

// ---------------------------------------------------------------------------
// finite differences

double finite_difference_check(const std::function<double()>& loss,
                               const std::vector<Tensor*>& params,
                               const std::vector<const Tensor*>& grads, double eps,
                               std::size_t max_coords_per_tensor, std::uint64_t sample_seed) {
    if (params.size() != grads.size())
        throw ShapeMismatch("finite_difference_check: count mismatch");
    double max_err = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = *grads[t];
        std::vector<std::size_t> coords;
        if (max_coords_per_tensor == 0 || p.size() <= max_coords_per_tensor) {
            coords.resize(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
        } else {
            Rng rng(mix_seed(sample_seed, t));
            coords.resize(max_coords_per_tensor);
            for (auto& c : coords)
                c = static_cast<std::size_t>(rng.next_u64() % p.size());
        }
        for (std::size_t c : coords) {
            const double orig = p.data[c];
            p.data[c] = orig + eps;
            const double up = loss();
            p.data[c] = orig - eps;
            const double down = loss();
            p.data[c] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = g.data[c];
            const double err = std::abs(numeric - analytic) /
                               std::max({1.0, std::abs(numeric), std::abs(analytic)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace milagro::nn
