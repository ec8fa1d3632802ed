#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dba/attacks.hpp"
#include "dba/client.hpp"
#include "dba/core.hpp"

namespace dba {

struct ExperimentConfig {
    AttackMethod method = AttackMethod::square;
    AttackMode mode = AttackMode::none;
    int batch = 1;
    std::string model = "tinynet-a";
    double epsilon = 0.05;
    int budget = 1000;
    int image_count = 10;
    uint64_t base_seed = 0;
    int workers = 8;

    AttackParams params() const;
};

struct ExperimentRecord {
    std::string method, mode, model;
    std::string image_id; // "img_0003", or "summary"
    double success = 0.0; // 0/1 per image; rate on summary rows
    double queries = 0.0; // count per image; mean on summary rows
    double wall_ms = 0.0; // per image; total on summary rows
    int linf_u8 = 0;      // per image; max on summary rows
    std::string error;
};

/// Deterministic synthetic dataset: per channel, the sum of 4 random-phase
/// sinusoids, min-max normalized to [0,1]. Larger than every model input so
/// the server-side resize path is always exercised.
ImageTensor generate_image(int size, uint64_t seed);
std::vector<std::string> generate_dataset(const std::string& dir, int count, int size,
                                          uint64_t seed);
std::vector<ImageTensor> load_dataset(const std::string& dir);
ImageTensor load_png_image(const std::string& path);

extern const char* k_csv_header; // method,mode,model,image_id,success,queries,wall_ms,linf_u8,error

std::string csv_line(const ExperimentRecord& r);
std::vector<ExperimentRecord> read_csv(const std::string& path);

struct GridResult {
    std::vector<ExperimentRecord> records; // per-image rows then one summary row per config
};

/// Runs every config against the service; per-image failures are recorded in
/// the error column and the run continues. When `adv_dir` is set, final
/// adversarial PNGs and a manifest (for the verify subcommand) are stored.
GridResult run_grid(ServiceClient& client, std::span<const ExperimentConfig> configs,
                    std::span<const ImageTensor> images,
                    const std::optional<std::string>& adv_dir);

void write_csv(const std::string& path, std::span<const ExperimentRecord> records);

struct SpeedupReport {
    double sequential_wall_ms = 0.0;
    double distributed_wall_ms = 0.0;
    double ratio = 0.0;
    int sequential_successes = 0;
    int distributed_successes = 0;
};

/// Same seeded workload in mode=none and mode=horizontal.
SpeedupReport horizontal_speedup(ServiceClient& client, const AttackParams& params,
                                 std::span<const ImageTensor> images, const std::string& model,
                                 uint64_t base_seed);

/// Single image, vertical batch b vs b=1 (non-distributed).
SpeedupReport vertical_speedup(ServiceClient& client, const AttackParams& params, int batch,
                               const ImageTensor& image, const std::string& model,
                               uint64_t seed);

struct ManifestEntry {
    std::string png_path;
    std::string model;
    int original_class = -1;
    bool reported_success = false;
};

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Re-submits each stored adversarial PNG; a reported success must still
/// flip the server's top-1. Returns the number of mismatches.
int verify_manifest(ServiceClient& client, std::span<const ManifestEntry> entries,
                    std::vector<std::string>* report);

} // namespace dba
