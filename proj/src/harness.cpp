#include "dba/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dba/codec.hpp"

namespace fs = std::filesystem;

namespace dba {

AttackParams ExperimentConfig::params() const {
    AttackParams p;
    p.method = method;
    p.ball = NormBudget{Norm::Linf, epsilon};
    p.batch = batch;
    p.budget = budget;
    p.simba_step = epsilon;
    p.simba_alpha = epsilon;
    return p;
}

ImageTensor generate_image(int size, uint64_t seed) {
    ImageTensor img(size, size, 3);
    Rng rng{seed};
    for (int c = 0; c < 3; ++c) {
        struct Wave {
            double fx, fy, phase, amp;
        };
        Wave waves[4];
        for (auto& w : waves) {
            w.fx = 0.5 + 2.5 * rng_uniform(rng); // cycles across the image
            w.fy = 0.5 + 2.5 * rng_uniform(rng);
            w.phase = 2.0 * std::numbers::pi * rng_uniform(rng);
            w.amp = 0.5 + 0.5 * rng_uniform(rng);
        }
        double lo = 1e300, hi = -1e300;
        std::vector<double> plane(static_cast<size_t>(size) * size);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double v = 0.0;
                for (const auto& w : waves)
                    v += w.amp * std::sin(2.0 * std::numbers::pi *
                                              (w.fx * x / size + w.fy * y / size) +
                                          w.phase);
                plane[static_cast<size_t>(y) * size + x] = v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        double span = hi - lo;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(y, x, c) = span > 0.0
                                      ? (plane[static_cast<size_t>(y) * size + x] - lo) / span
                                      : 0.5;
    }
    return img;
}

std::vector<std::string> generate_dataset(const std::string& dir, int count, int size,
                                          uint64_t seed) {
    if (count < 1)
        throw Error(Errc::contract_violation, "generate_dataset: count must be >= 1");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::io_error, "cannot create directory: " + dir);
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        ImageTensor img = generate_image(size, seed + static_cast<uint64_t>(i));
        EncodedImage enc = encode_image(quantize(img), ImageFormat::png);
        char name[32];
        std::snprintf(name, sizeof name, "img_%04d.png", i);
        fs::path p = fs::path(dir) / name;
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f)
            throw Error(Errc::io_error, "cannot write: " + p.string());
        f.write(enc.bytes.data(), static_cast<std::streamsize>(enc.bytes.size()));
        if (!f)
            throw Error(Errc::io_error, "write failed: " + p.string());
        paths.push_back(p.string());
    }
    return paths;
}

ImageTensor load_png_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(Errc::io_error, "cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return dequantize(decode_image(bytes));
}

std::vector<ImageTensor> load_dataset(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    std::vector<ImageTensor> out;
    out.reserve(files.size());
    for (const auto& f : files)
        out.push_back(load_png_image(f));
    if (out.empty())
        throw Error(Errc::io_error, "no .png files in " + dir);
    return out;
}

const char* k_csv_header = "method,mode,model,image_id,success,queries,wall_ms,linf_u8,error";

std::string csv_line(const ExperimentRecord& r) {
    std::ostringstream os;
    os << r.method << ',' << r.mode << ',' << r.model << ',' << r.image_id << ',';
    if (r.image_id == "summary")
        os << r.success; // success rate
    else
        os << static_cast<int>(r.success);
    os << ',' << r.queries << ',' << r.wall_ms << ',' << r.linf_u8 << ',' << r.error;
    return os.str();
}

void write_csv(const std::string& path, std::span<const ExperimentRecord> records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw Error(Errc::io_error, "cannot write: " + path);
    f << k_csv_header << '\n';
    for (const auto& r : records)
        f << csv_line(r) << '\n';
}

std::vector<ExperimentRecord> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw Error(Errc::io_error, "cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != k_csv_header)
        throw Error(Errc::io_error, "unexpected CSV header in " + path);
    std::vector<ExperimentRecord> out;
    while (std::getline(f, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        ExperimentRecord r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(ss, field, ','))
                throw Error(Errc::io_error, "short CSV row in " + path);
            return field;
        };
        r.method = next();
        r.mode = next();
        r.model = next();
        r.image_id = next();
        r.success = std::stod(next());
        r.queries = std::stod(next());
        r.wall_ms = std::stod(next());
        r.linf_u8 = std::stoi(next());
        std::getline(ss, r.error); // may be empty
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

std::string image_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04d", index);
    return buf;
}

ExperimentRecord record_from_outcome(const ExperimentConfig& cfg, const AttackOutcome& out) {
    ExperimentRecord r;
    r.method = to_string(cfg.method);
    r.mode = to_string(cfg.mode);
    r.model = cfg.model;
    r.image_id = image_name(out.image_id);
    r.success = out.success ? 1.0 : 0.0;
    r.queries = out.queries_used;
    r.wall_ms = out.wall_ms;
    r.linf_u8 = out.linf_u8;
    r.error = out.error;
    return r;
}

} // namespace

GridResult run_grid(ServiceClient& client, std::span<const ExperimentConfig> configs,
                    std::span<const ImageTensor> images,
                    const std::optional<std::string>& adv_dir) {
    GridResult grid;
    std::vector<ManifestEntry> manifest;
    if (adv_dir) {
        std::error_code ec;
        fs::create_directories(*adv_dir, ec);
        if (ec)
            throw Error(Errc::io_error, "cannot create directory: " + *adv_dir);
    }

    for (const auto& cfg : configs) {
        size_t n = std::min<size_t>(cfg.image_count, images.size());
        std::vector<AttackOutcome> outcomes;
        outcomes.reserve(n);
        AttackParams params = cfg.params();

        if (cfg.mode == AttackMode::horizontal) {
            auto sub = images.subspan(0, n);
            try {
                outcomes = run_horizontal(client, params, sub, cfg.model, cfg.base_seed);
            } catch (const std::exception& e) {
                ExperimentRecord r;
                r.method = to_string(cfg.method);
                r.mode = to_string(cfg.mode);
                r.model = cfg.model;
                r.image_id = "summary";
                r.error = e.what();
                grid.records.push_back(std::move(r));
                continue;
            }
        } else {
            for (size_t i = 0; i < n; ++i) {
                try {
                    AttackOutcome out = run_attack(client, params, cfg.mode, images[i],
                                                   cfg.model, cfg.base_seed + i);
                    out.image_id = static_cast<int>(i);
                    outcomes.push_back(std::move(out));
                } catch (const std::exception& e) {
                    AttackOutcome out;
                    out.image_id = static_cast<int>(i);
                    out.error = e.what();
                    outcomes.push_back(std::move(out));
                }
            }
        }

        double successes = 0.0, total_queries = 0.0, total_wall = 0.0;
        int max_linf = 0;
        for (const auto& out : outcomes) {
            ExperimentRecord r = record_from_outcome(cfg, out);
            successes += r.success;
            total_queries += r.queries;
            total_wall += r.wall_ms;
            max_linf = std::max(max_linf, r.linf_u8);
            grid.records.push_back(r);

            if (adv_dir && out.error.empty()) {
                std::string file = std::string(to_string(cfg.method)) + "_" +
                                   to_string(cfg.mode) + "_" + cfg.model + "_" +
                                   image_name(out.image_id) + ".png";
                fs::path p = fs::path(*adv_dir) / file;
                EncodedImage enc = encode_image(out.final_image, ImageFormat::png);
                std::ofstream f(p, std::ios::binary | std::ios::trunc);
                f.write(enc.bytes.data(), static_cast<std::streamsize>(enc.bytes.size()));
                manifest.push_back(
                    ManifestEntry{p.string(), cfg.model, out.original_class, out.success});
            }
        }
        ExperimentRecord summary;
        summary.method = to_string(cfg.method);
        summary.mode = to_string(cfg.mode);
        summary.model = cfg.model;
        summary.image_id = "summary";
        summary.success = outcomes.empty() ? 0.0 : successes / static_cast<double>(n);
        summary.queries = outcomes.empty() ? 0.0 : total_queries / static_cast<double>(n);
        // horizontal runs share rounds: total wall is the slowest image, not the sum
        summary.wall_ms = cfg.mode == AttackMode::horizontal
                              ? (outcomes.empty() ? 0.0
                                                  : std::max_element(outcomes.begin(),
                                                                     outcomes.end(),
                                                                     [](auto& a, auto& b) {
                                                                         return a.wall_ms <
                                                                                b.wall_ms;
                                                                     })
                                                        ->wall_ms)
                              : total_wall;
        summary.linf_u8 = max_linf;
        grid.records.push_back(std::move(summary));
    }

    if (adv_dir)
        write_manifest((fs::path(*adv_dir) / "manifest.csv").string(), manifest);
    return grid;
}

SpeedupReport horizontal_speedup(ServiceClient& client, const AttackParams& params,
                                 std::span<const ImageTensor> images, const std::string& model,
                                 uint64_t base_seed) {
    SpeedupReport rep;
    auto t0 = std::chrono::steady_clock::now();
    for (size_t i = 0; i < images.size(); ++i) {
        AttackOutcome out =
            run_attack(client, params, AttackMode::none, images[i], model, base_seed + i);
        rep.sequential_successes += out.success ? 1 : 0;
    }
    auto t1 = std::chrono::steady_clock::now();
    auto outcomes = run_horizontal(client, params, images, model, base_seed);
    auto t2 = std::chrono::steady_clock::now();
    for (const auto& o : outcomes)
        rep.distributed_successes += o.success ? 1 : 0;
    rep.sequential_wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rep.distributed_wall_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    rep.ratio = rep.distributed_wall_ms > 0.0 ? rep.sequential_wall_ms / rep.distributed_wall_ms
                                              : 0.0;
    return rep;
}

SpeedupReport vertical_speedup(ServiceClient& client, const AttackParams& params, int batch,
                               const ImageTensor& image, const std::string& model,
                               uint64_t seed) {
    SpeedupReport rep;
    AttackOutcome base = run_attack(client, params, AttackMode::none, image, model, seed);
    AttackParams vp = params;
    vp.batch = batch;
    AttackOutcome vert = run_attack(client, vp, AttackMode::vertical, image, model, seed);
    rep.sequential_wall_ms = base.wall_ms;
    rep.distributed_wall_ms = vert.wall_ms;
    rep.sequential_successes = base.success ? 1 : 0;
    rep.distributed_successes = vert.success ? 1 : 0;
    rep.ratio = vert.wall_ms > 0.0 ? base.wall_ms / vert.wall_ms : 0.0;
    return rep;
}

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw Error(Errc::io_error, "cannot write: " + path);
    f << "png_path,model,original_class,reported_success\n";
    for (const auto& e : entries)
        f << e.png_path << ',' << e.model << ',' << e.original_class << ','
          << (e.reported_success ? 1 : 0) << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw Error(Errc::io_error, "cannot open: " + path);
    std::string line;
    std::getline(f, line); // header
    std::vector<ManifestEntry> out;
    while (std::getline(f, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        ManifestEntry e;
        std::string field;
        std::getline(ss, e.png_path, ',');
        std::getline(ss, e.model, ',');
        std::getline(ss, field, ',');
        e.original_class = std::stoi(field);
        std::getline(ss, field, ',');
        e.reported_success = field == "1";
        out.push_back(std::move(e));
    }
    return out;
}

int verify_manifest(ServiceClient& client, std::span<const ManifestEntry> entries,
                    std::vector<std::string>* report) {
    int mismatches = 0;
    for (const auto& e : entries) {
        if (!e.reported_success)
            continue;
        ImageTensor img = load_png_image(e.png_path);
        QueryResult r = client.query_image(img, e.model, 1, false, nullptr);
        bool flipped = r.top_class != e.original_class;
        if (!flipped)
            ++mismatches;
        if (report)
            report->push_back(e.png_path + (flipped ? ": ok (top-1 changed)"
                                                    : ": MISMATCH (top-1 unchanged)"));
    }
    return mismatches;
}

} // namespace dba
