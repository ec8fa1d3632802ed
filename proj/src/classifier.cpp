#include "dba/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dba/kernels.hpp"

namespace dba {

namespace {

const std::vector<ModelSpec> k_models = {
    {"tinynet-a", 32},
    {"tinynet-b", 48},
    {"tinynet-c", 64},
};

Tensor draw_glorot(Rng& rng, std::vector<uint32_t> dims, int fan_in, int fan_out) {
    Tensor t;
    t.dims = std::move(dims);
    t.values.resize(t.count());
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : t.values)
        v = limit * (2.0 * rng_uniform(rng) - 1.0);
    return t;
}

Tensor zeros(std::vector<uint32_t> dims) {
    Tensor t;
    t.dims = std::move(dims);
    t.values.assign(t.count(), 0.0);
    return t;
}

void append_u32_le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void append_f64_le(std::string& out, double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i)
        out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

struct Cursor {
    const unsigned char* p;
    size_t left;

    uint32_t u32() {
        if (left < 4)
            throw Error(Errc::weight_file_error, "weight file truncated");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    double f64() {
        if (left < 8)
            throw Error(Errc::weight_file_error, "weight file truncated");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return std::bit_cast<double>(v);
    }
};

Tensor read_tensor(Cursor& c) {
    uint32_t rank = c.u32();
    if (rank == 0 || rank > 4)
        throw Error(Errc::weight_file_error, "weight file: bad tensor rank");
    Tensor t;
    t.dims.resize(rank);
    for (auto& d : t.dims) {
        d = c.u32();
        if (d == 0)
            throw Error(Errc::weight_file_error, "weight file: zero dimension");
    }
    size_t n = t.count();
    if (n > (1u << 26))
        throw Error(Errc::weight_file_error, "weight file: tensor too large");
    t.values.resize(n);
    for (auto& v : t.values)
        v = c.f64();
    return t;
}

void write_tensor(std::string& out, const Tensor& t) {
    append_u32_le(out, static_cast<uint32_t>(t.dims.size()));
    for (auto d : t.dims)
        append_u32_le(out, d);
    for (double v : t.values)
        append_f64_le(out, v);
}

} // namespace

const std::vector<ModelSpec>& ModelSpec::all() { return k_models; }

const ModelSpec& ModelSpec::lookup(const std::string& name) {
    for (const auto& m : k_models)
        if (m.name == name)
            return m;
    throw Error(Errc::model_not_found, "unknown model: " + name);
}

WeightSet build_model(const std::string& name, uint64_t seed) {
    const ModelSpec& spec = ModelSpec::lookup(name);
    Rng rng{seed};
    WeightSet ws;
    // fan counts: conv fan = channels * k * k; dense fan = full dims
    ws.conv1_w = draw_glorot(rng, {8, 3, 3, 3}, 3 * 9, 8 * 9);
    ws.conv1_b = zeros({8});
    ws.conv2_w = draw_glorot(rng, {16, 8, 3, 3}, 8 * 9, 16 * 9);
    ws.conv2_b = zeros({16});
    auto flat = static_cast<uint32_t>(spec.flatten_dim());
    ws.fc_w = draw_glorot(rng, {10, flat}, spec.flatten_dim(), 10);
    ws.fc_b = zeros({10});
    return ws;
}

ClassProbabilities forward(const ModelSpec& spec, const WeightSet& ws, const ImageTensor& x,
                           bool parallel) {
    const int s = spec.input_size;
    if (x.height != s || x.width != s || x.channels != 3)
        throw Error(Errc::shape_mismatch, "forward: input must be " + std::to_string(s) + "x" +
                                              std::to_string(s) + "x3 for " + spec.name);
    if (static_cast<int>(ws.fc_w.dims[1]) != spec.flatten_dim())
        throw Error(Errc::shape_mismatch, "forward: weights do not match model input size");

    std::vector<double> a1(static_cast<size_t>(s) * s * 8);
    std::vector<double> p1(static_cast<size_t>(s / 2) * (s / 2) * 8);
    std::vector<double> a2(static_cast<size_t>(s / 2) * (s / 2) * 16);
    std::vector<double> p2(static_cast<size_t>(s / 4) * (s / 4) * 16);
    ClassProbabilities out;
    out.probs.resize(10);

    using namespace kernels;
    if (parallel) {
        conv2d_same(x.data.data(), s, s, 3, ws.conv1_w.values.data(), ws.conv1_b.values.data(),
                    8, 3, a1.data());
        relu_inplace(a1.data(), a1.size());
        maxpool2(a1.data(), s, s, 8, p1.data());
        conv2d_same(p1.data(), s / 2, s / 2, 8, ws.conv2_w.values.data(),
                    ws.conv2_b.values.data(), 16, 3, a2.data());
        relu_inplace(a2.data(), a2.size());
        maxpool2(a2.data(), s / 2, s / 2, 16, p2.data());
        dense(p2.data(), static_cast<int>(p2.size()), ws.fc_w.values.data(),
              ws.fc_b.values.data(), 10, out.probs.data());
    } else {
        conv2d_same_serial(x.data.data(), s, s, 3, ws.conv1_w.values.data(),
                           ws.conv1_b.values.data(), 8, 3, a1.data());
        relu_inplace(a1.data(), a1.size());
        maxpool2_serial(a1.data(), s, s, 8, p1.data());
        conv2d_same_serial(p1.data(), s / 2, s / 2, 8, ws.conv2_w.values.data(),
                           ws.conv2_b.values.data(), 16, 3, a2.data());
        relu_inplace(a2.data(), a2.size());
        maxpool2_serial(a2.data(), s / 2, s / 2, 16, p2.data());
        dense_serial(p2.data(), static_cast<int>(p2.size()), ws.fc_w.values.data(),
                     ws.fc_b.values.data(), 10, out.probs.data());
    }
    softmax_inplace(out.probs.data(), 10);
    return out;
}

std::string class_label(int index) { return "class_" + std::to_string(index); }

int parse_class_label(const std::string& label) {
    if (label.rfind("class_", 0) != 0)
        return -1;
    try {
        size_t pos = 0;
        int v = std::stoi(label.substr(6), &pos);
        if (pos != label.size() - 6 || v < 0)
            return -1;
        return v;
    } catch (const std::exception&) {
        return -1;
    }
}

std::vector<Prediction> top_k(std::span<const double> probs, int k, bool labels_only) {
    if (k != 1 && k != 3 && k != 5 && k != 10)
        throw Error(Errc::bad_top_k, "top_k: k must be one of {1,3,5,10}");
    std::vector<int> order(probs.size());
    for (size_t i = 0; i < probs.size(); ++i)
        order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[a] > probs[b]; });
    int n = std::min<int>(k, static_cast<int>(probs.size()));
    std::vector<Prediction> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Prediction p;
        p.class_index = order[i];
        p.label = class_label(order[i]);
        p.probability = probs[order[i]];
        p.has_probability = !labels_only;
        out.push_back(std::move(p));
    }
    return out;
}

std::string serialize_weights(const WeightSet& ws) {
    std::string out = "TNW1";
    write_tensor(out, ws.conv1_w);
    write_tensor(out, ws.conv1_b);
    write_tensor(out, ws.conv2_w);
    write_tensor(out, ws.conv2_b);
    write_tensor(out, ws.fc_w);
    write_tensor(out, ws.fc_b);
    return out;
}

WeightSet deserialize_weights(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "TNW1")
        throw Error(Errc::weight_file_error, "weight file: bad magic");
    Cursor c{reinterpret_cast<const unsigned char*>(bytes.data()) + 4, bytes.size() - 4};
    WeightSet ws;
    ws.conv1_w = read_tensor(c);
    ws.conv1_b = read_tensor(c);
    ws.conv2_w = read_tensor(c);
    ws.conv2_b = read_tensor(c);
    ws.fc_w = read_tensor(c);
    ws.fc_b = read_tensor(c);
    if (c.left != 0)
        throw Error(Errc::weight_file_error, "weight file: trailing bytes");
    if (ws.conv1_w.dims != std::vector<uint32_t>{8, 3, 3, 3} ||
        ws.conv2_w.dims != std::vector<uint32_t>{16, 8, 3, 3} || ws.fc_w.dims.size() != 2 ||
        ws.fc_w.dims[0] != 10)
        throw Error(Errc::weight_file_error, "weight file: unexpected tensor shapes");
    return ws;
}

void save_weights(const WeightSet& ws, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error(Errc::io_error, "cannot open for writing: " + path);
    std::string bytes = serialize_weights(ws);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw Error(Errc::io_error, "write failed: " + path);
}

WeightSet load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(Errc::io_error, "cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

} // namespace dba
