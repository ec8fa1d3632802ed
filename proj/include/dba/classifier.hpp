#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dba/core.hpp"

namespace dba {

/// Fixed architecture shared by all models:
///   conv 3x3 (3->8) stride 1 same-padding, ReLU, maxpool 2x2,
///   conv 3x3 (8->16), ReLU, maxpool 2x2, flatten, dense -> 10 logits.
/// Only the square input size differs per model.
struct ModelSpec {
    std::string name;
    int input_size = 0;
    int num_classes = 10;

    int flatten_dim() const { return (input_size / 4) * (input_size / 4) * 16; }

    static const ModelSpec& lookup(const std::string& name); // throws ModelNotFound
    static const std::vector<ModelSpec>& all();
};

struct Tensor {
    std::vector<uint32_t> dims;
    std::vector<double> values;

    size_t count() const {
        size_t n = 1;
        for (auto d : dims)
            n *= d;
        return n;
    }
    bool operator==(const Tensor& o) const = default;
};

/// Six tensors in normative order: conv1 kernel (8,3,3,3), conv1 bias (8),
/// conv2 kernel (16,8,3,3), conv2 bias (16), dense weight (10,flatten),
/// dense bias (10). Conv kernels are (out, in, kh, kw) row-major.
struct WeightSet {
    Tensor conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b;

    bool operator==(const WeightSet& o) const = default;
};

struct ClassProbabilities {
    std::vector<double> probs;
};

struct Prediction {
    int class_index = 0;
    std::string label;
    double probability = 0.0;
    bool has_probability = true;
};

/// Glorot-uniform weights drawn from the core PRNG seeded by `seed`, layer by
/// layer in row-major order; biases are zero. Deterministic across platforms.
WeightSet build_model(const std::string& name, uint64_t seed);

/// x must already be resized to spec.input_size.
ClassProbabilities forward(const ModelSpec& spec, const WeightSet& ws, const ImageTensor& x,
                           bool parallel = true);

std::string class_label(int index);
int parse_class_label(const std::string& label); // -1 when not a class label

/// k must be one of {1,3,5,10}. Sorted by descending probability,
/// ties by ascending class index.
std::vector<Prediction> top_k(std::span<const double> probs, int k, bool labels_only);

/// Weight file: magic "TNW1", then per tensor rank (u32 LE), dims (u32 LE
/// each), values (f64 LE, row-major). Round trips bitwise.
void save_weights(const WeightSet& ws, const std::string& path);
WeightSet load_weights(const std::string& path);

std::string serialize_weights(const WeightSet& ws);
WeightSet deserialize_weights(std::string_view bytes);

} // namespace dba
