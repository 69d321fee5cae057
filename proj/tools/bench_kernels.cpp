// Times the OpenMP kernels against the serial nested-loop reference.
// Usage: bench_kernels [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include <omp.h>

#include "milagro/nn.hpp"
#include "milagro/rng.hpp"

using namespace milagro;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.gaussian();
    return t;
}

template <typename F>
double time_best(F&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void row(const char* name, double serial_s, double parallel_s, double flops) {
    std::printf("%-22s serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  %7.2f GFLOP/s\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                flops / parallel_s / 1e9);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
    Rng rng(42);
    std::printf("threads: %d\n", omp_get_max_threads());

    {
        const std::size_t m = 256, k = 2048, n = 256;
        const Tensor a = random_tensor({m, k}, rng);
        const Tensor b = random_tensor({k, n}, rng);
        Tensor c({m, n});
        const double ts = time_best(
            [&] { nn::serial::matmul(a.data.data(), b.data.data(), c.data.data(), m, k, n); },
            reps);
        const double tp = time_best(
            [&] { nn::mm_nn(a.data.data(), b.data.data(), c.data.data(), m, k, n); }, reps);
        row("matmul 256x2048x256", ts, tp, 2.0 * m * k * n);
    }
    {
        const std::size_t batch = 16, ch = 64, len = 100, filters = 64, kern = 2;
        nn::Conv1dLayer layer(filters, ch, kern);
        Rng wr = rng.stream(1);
        for (auto& v : layer.w.data) v = 0.1 * wr.gaussian();
        const Tensor x = random_tensor({batch, ch, len}, rng);
        Tensor out;
        const double ts = time_best([&] { out = nn::serial::conv1d_forward(x, layer); }, reps);
        const double tp = time_best([&] { out = nn::conv1d_forward(x, layer); }, reps);
        row("conv1d 16x64x100", ts, tp,
            2.0 * batch * filters * ch * kern * (len - kern + 1));
    }
    {
        const std::size_t batch = 16, in = 8256, out_f = 128;
        nn::DenseLayer layer(out_f, in);
        Rng wr = rng.stream(2);
        for (auto& v : layer.w.data) v = 0.05 * wr.gaussian();
        const Tensor x = random_tensor({batch, in}, rng);
        Tensor y;
        const double ts = time_best([&] { y = nn::serial::dense_forward(x, layer); }, reps);
        const double tp = time_best([&] { y = nn::dense_forward(x, layer); }, reps);
        row("dense 16x8256x128", ts, tp, 2.0 * batch * in * out_f);
    }
    {
        const std::size_t batch = 64, ch = 64, len = 1500;
        const Tensor x = random_tensor({batch, ch, len}, rng);
        Tensor y;
        const double ts = time_best([&] { y = nn::serial::maxpool1d_forward(x, 2); }, reps);
        const double tp = time_best([&] { y = nn::maxpool1d_forward(x, 2).out; }, reps);
        row("maxpool 64x64x1500", ts, tp, static_cast<double>(batch * ch * len));
    }
    {
        const std::size_t batch = 256, classes = 43;
        const Tensor x = random_tensor({batch, classes}, rng);
        Tensor p;
        const double ts = time_best([&] { p = nn::serial::softmax(x); }, reps);
        const double tp = time_best([&] { p = nn::softmax(x); }, reps);
        row("softmax 256x43", ts, tp, 3.0 * batch * classes);
    }
    return 0;
}
