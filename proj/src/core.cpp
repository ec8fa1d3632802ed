#include "dba/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dba {

uint64_t splitmix64_next(Rng& rng) {
    rng.state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = rng.state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double rng_uniform(Rng& rng) {
    return static_cast<double>(splitmix64_next(rng) >> 11) * 0x1.0p-53;
}

double rng_gaussian(Rng& rng) {
    double u1 = std::max(rng_uniform(rng), 0x1.0p-53); // ln(0) guard
    double u2 = rng_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t rng_below(Rng& rng, uint64_t n) {
    if (n == 0)
        throw Error(Errc::contract_violation, "rng_below: n must be >= 1");
    auto v = static_cast<uint64_t>(rng_uniform(rng) * static_cast<double>(n));
    return v >= n ? n - 1 : v;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v)
        s += e * e;
    return std::sqrt(s);
}

double linf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double e : v)
        m = std::max(m, std::abs(e));
    return m;
}

void project(std::span<double> delta, const NormBudget& budget) {
    if (budget.norm == Norm::Linf) {
        for (double& e : delta)
            e = std::clamp(e, -budget.epsilon, budget.epsilon);
        return;
    }
    double n = l2_norm(delta);
    if (n > budget.epsilon) {
        double scale = budget.epsilon / n;
        for (double& e : delta)
            e *= scale;
    }
}

QuantizedImage quantize(const ImageTensor& x) {
    QuantizedImage q(x.height, x.width, x.channels);
    for (size_t i = 0; i < x.data.size(); ++i) {
        double v = std::round(x.data[i] * 255.0); // round halves away from zero
        q.data[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return q;
}

ImageTensor dequantize(const QuantizedImage& q) {
    ImageTensor x(q.height, q.width, q.channels);
    for (size_t i = 0; i < q.data.size(); ++i)
        x.data[i] = q.data[i] / 255.0;
    return x;
}

int argmax_lowest(std::span<const double> probs) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i)
        if (probs[i] > probs[best])
            best = i;
    return best;
}

double margin_loss(std::span<const double> probs, int y) {
    if (y < 0 || y >= static_cast<int>(probs.size()))
        throw Error(Errc::contract_violation, "margin_loss: class index out of range");
    double other = -1.0;
    for (int k = 0; k < static_cast<int>(probs.size()); ++k)
        if (k != y)
            other = std::max(other, probs[k]);
    return probs[y] - other;
}

ImageTensor apply_delta(const ImageTensor& x, std::span<const double> delta) {
    if (delta.size() != x.data.size())
        throw Error(Errc::shape_mismatch, "apply_delta: size mismatch");
    ImageTensor out(x.height, x.width, x.channels);
    for (size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = std::clamp(x.data[i] + delta[i], 0.0, 1.0);
    return out;
}

} // namespace dba
