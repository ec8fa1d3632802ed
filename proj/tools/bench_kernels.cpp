// Compares the OpenMP kernels against their serial reference: wall time and
// bitwise agreement on realistic shapes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "dba/classifier.hpp"
#include "dba/core.hpp"
#include "dba/kernels.hpp"

using namespace dba;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& e : v)
        e = rng_uniform(rng);
    return v;
}

template <class F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_ms();
        f();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i])
            return false;
    return true;
}

void row(const char* name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, equal ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    Rng rng{42};
    const int reps = 5;

    {
        const int h = 256, w = 256, ic = 8, oc = 16, k = 3;
        auto in = random_vec(static_cast<size_t>(h) * w * ic, rng);
        auto kern = random_vec(static_cast<size_t>(oc) * ic * k * k, rng);
        auto bias = random_vec(oc, rng);
        std::vector<double> out_s(static_cast<size_t>(h) * w * oc);
        std::vector<double> out_p(out_s.size());
        double ts = time_best_of(reps, [&] {
            kernels::conv2d_same_serial(in.data(), h, w, ic, kern.data(), bias.data(), oc, k,
                                        out_s.data());
        });
        double tp = time_best_of(reps, [&] {
            kernels::conv2d_same(in.data(), h, w, ic, kern.data(), bias.data(), oc, k,
                                 out_p.data());
        });
        row("conv2d 256x256x8->16", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int h = 512, w = 512, c = 16;
        auto in = random_vec(static_cast<size_t>(h) * w * c, rng);
        std::vector<double> out_s(static_cast<size_t>(h / 2) * (w / 2) * c);
        std::vector<double> out_p(out_s.size());
        double ts = time_best_of(reps,
                                 [&] { kernels::maxpool2_serial(in.data(), h, w, c, out_s.data()); });
        double tp =
            time_best_of(reps, [&] { kernels::maxpool2(in.data(), h, w, c, out_p.data()); });
        row("maxpool2 512x512x16", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int n_in = 65536, n_out = 64;
        auto in = random_vec(n_in, rng);
        auto wgt = random_vec(static_cast<size_t>(n_out) * n_in, rng);
        auto bias = random_vec(n_out, rng);
        std::vector<double> out_s(n_out), out_p(n_out);
        double ts = time_best_of(reps, [&] {
            kernels::dense_serial(in.data(), n_in, wgt.data(), bias.data(), n_out, out_s.data());
        });
        double tp = time_best_of(reps, [&] {
            kernels::dense(in.data(), n_in, wgt.data(), bias.data(), n_out, out_p.data());
        });
        row("dense 65536->64", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int ih = 1024, iw = 1024, c = 3, oh = 224, ow = 224;
        auto in = random_vec(static_cast<size_t>(ih) * iw * c, rng);
        std::vector<double> out_s(static_cast<size_t>(oh) * ow * c), out_p(out_s.size());
        double ts = time_best_of(reps, [&] {
            kernels::resize_bilinear_serial(in.data(), ih, iw, c, out_s.data(), oh, ow);
        });
        double tp = time_best_of(reps, [&] {
            kernels::resize_bilinear(in.data(), ih, iw, c, out_p.data(), oh, ow);
        });
        row("resize 1024->224", ts, tp, bitwise_equal(out_s, out_p));
    }

    // full forward pass per model
    for (const auto& spec : ModelSpec::all()) {
        WeightSet ws = build_model(spec.name, 0);
        ImageTensor x(spec.input_size, spec.input_size, 3);
        Rng r2{7};
        for (double& e : x.data)
            e = rng_uniform(r2);
        ClassProbabilities ps, pp;
        double ts = time_best_of(reps, [&] { ps = forward(spec, ws, x, false); });
        double tp = time_best_of(reps, [&] { pp = forward(spec, ws, x, true); });
        row(("forward " + spec.name).c_str(), ts, tp, bitwise_equal(ps.probs, pp.probs));
    }
    return 0;
}
