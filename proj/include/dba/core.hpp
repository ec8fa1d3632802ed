#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dba/error.hpp"

namespace dba {

/// Real-valued H x W x C image in [0,1], row-major, channel-last.
/// This is the attacker's working representation; only QuantizedImage
/// ever crosses the wire.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c = 3)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0) {}

    size_t size() const { return data.size(); }

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

/// uint8 H x W x C image, row-major, channel-last.
struct QuantizedImage {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<uint8_t> data;

    QuantizedImage() = default;
    QuantizedImage(int h, int w, int c = 3)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0) {}

    size_t size() const { return data.size(); }
    bool operator==(const QuantizedImage& o) const = default;
};

enum class Norm { L2, Linf };

struct NormBudget {
    Norm norm = Norm::Linf;
    double epsilon = 0.05;
};

/// SplitMix64 state. The mixer is normative: weight files and attack
/// traces must be bit-reproducible across platforms.
struct Rng {
    uint64_t state = 0;
};

uint64_t splitmix64_next(Rng& rng);

/// Uniform draw in [0,1): (splitmix64_next >> 11) * 2^-53.
double rng_uniform(Rng& rng);

/// Standard normal via Box-Muller on two uniform draws (consumes exactly two).
double rng_gaussian(Rng& rng);

/// Uniform integer in [0, n). n must be >= 1.
uint64_t rng_below(Rng& rng, uint64_t n);

/// Project delta onto the epsilon-ball of the budget's norm, in place.
/// Linf clamps componentwise; L2 rescales when the norm exceeds epsilon.
void project(std::span<double> delta, const NormBudget& budget);

double l2_norm(std::span<const double> v);
double linf_norm(std::span<const double> v);

/// round(e*255) with round-half-away-from-zero, clamped to [0,255].
QuantizedImage quantize(const ImageTensor& x);
ImageTensor dequantize(const QuantizedImage& q);

/// Index of the largest element, ties resolved by lowest index.
int argmax_lowest(std::span<const double> probs);

/// probs[y] - max_{k != y} probs[k]; negative iff misclassified.
double margin_loss(std::span<const double> probs, int y);

/// clip(x + delta, 0, 1) componentwise; shapes must match.
ImageTensor apply_delta(const ImageTensor& x, std::span<const double> delta);

} // namespace dba
