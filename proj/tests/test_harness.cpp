#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dba/harness.hpp"
#include "dba/service.hpp"

using namespace dba;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ServiceConfig fast_service() {
    ServiceConfig cfg;
    cfg.listen_port = 0;
    cfg.replicas = 4;
    cfg.base_latency_ms = 0.0;
    cfg.latency_jitter_ms = 0.0;
    cfg.max_queue = 32;
    return cfg;
}

} // namespace

TEST_CASE("dataset generation is deterministic and non-degenerate") {
    TempDir dir_a("dba_ds_a");
    TempDir dir_b("dba_ds_b");
    auto paths_a = generate_dataset(dir_a.path.string(), 5, 96, 1000);
    auto paths_b = generate_dataset(dir_b.path.string(), 5, 96, 1000);
    REQUIRE(paths_a.size() == 5);
    for (size_t i = 0; i < paths_a.size(); ++i)
        CHECK(slurp(paths_a[i]) == slurp(paths_b[i])); // bitwise-identical PNGs

    auto images = load_dataset(dir_a.path.string());
    REQUIRE(images.size() == 5);
    for (const auto& img : images) {
        CHECK(img.height == 96);
        CHECK(img.width == 96);
        double mean = 0.0;
        for (double v : img.data)
            mean += v;
        mean /= static_cast<double>(img.size());
        double var = 0.0;
        for (double v : img.data)
            var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / static_cast<double>(img.size()));
        CHECK(sd > 0.05);
    }

    auto paths_c = generate_dataset(dir_b.path.string(), 1, 96, 1001);
    CHECK(slurp(paths_c[0]) != slurp(paths_a[0])); // different seed, different image
}

TEST_CASE("dataset images differ from each other") {
    TempDir dir("dba_ds_c");
    generate_dataset(dir.path.string(), 3, 64, 7);
    auto images = load_dataset(dir.path.string());
    for (size_t i = 0; i < images.size(); ++i)
        for (size_t j = i + 1; j < images.size(); ++j)
            CHECK(images[i].data != images[j].data);
}

TEST_CASE("csv round trip and header") {
    TempDir dir("dba_csv");
    std::vector<ExperimentRecord> records;
    ExperimentRecord r;
    r.method = "square";
    r.mode = "vertical";
    r.model = "tinynet-a";
    r.image_id = "img_0002";
    r.success = 1.0;
    r.queries = 57;
    r.wall_ms = 123.5;
    r.linf_u8 = 13;
    records.push_back(r);
    std::string path = (dir.path / "out.csv").string();
    write_csv(path, records);

    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "method,mode,model,image_id,success,queries,wall_ms,linf_u8,error");

    auto back = read_csv(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].method == "square");
    CHECK(back[0].image_id == "img_0002");
    CHECK(back[0].success == 1.0);
    CHECK(back[0].queries == 57);
    CHECK(back[0].linf_u8 == 13);
}

TEST_CASE("empty config set produces a header-only csv") {
    TempDir dir("dba_csv_empty");
    std::string path = (dir.path / "empty.csv").string();
    write_csv(path, {});
    std::string content = slurp(path);
    CHECK(content == "method,mode,model,image_id,success,queries,wall_ms,linf_u8,error\n");
    CHECK(read_csv(path).empty());
}

TEST_CASE("grid emits one row per image plus a summary, reruns repeat exactly") {
    HttpService svc(fast_service());
    REQUIRE(svc.start());
    ServiceClient client(svc.host(), svc.port(), 8);
    TempDir dir("dba_grid");

    std::vector<ImageTensor> images;
    for (int i = 0; i < 3; ++i)
        images.push_back(generate_image(64, 50 + i));

    std::vector<ExperimentConfig> configs;
    for (AttackMethod m : {AttackMethod::square, AttackMethod::simba}) {
        ExperimentConfig cfg;
        cfg.method = m;
        cfg.mode = AttackMode::horizontal;
        cfg.model = "tinynet-a";
        cfg.budget = 30;
        cfg.image_count = 3;
        cfg.base_seed = 900;
        configs.push_back(cfg);
    }

    GridResult grid = run_grid(client, configs, images, (dir.path / "adv").string());
    REQUIRE(grid.records.size() == 2 * (3 + 1));
    int summaries = 0;
    for (const auto& r : grid.records) {
        if (r.image_id == "summary") {
            ++summaries;
            continue;
        }
        CHECK(r.queries <= 30);
        CHECK(r.linf_u8 <= 14);
    }
    CHECK(summaries == 2);

    GridResult again = run_grid(client, configs, images, std::nullopt);
    REQUIRE(again.records.size() == grid.records.size());
    for (size_t i = 0; i < grid.records.size(); ++i) {
        CHECK(grid.records[i].success == again.records[i].success);
        CHECK(grid.records[i].queries == again.records[i].queries); // wall_ms may differ
    }

    // every reported success is backed by a stored PNG that still flips top-1
    auto manifest = read_manifest((dir.path / "adv" / "manifest.csv").string());
    CHECK(manifest.size() == 6);
    std::vector<std::string> report;
    CHECK(verify_manifest(client, manifest, &report) == 0);
}

TEST_CASE("speedup helpers run and report sane ratios at zero latency") {
    HttpService svc(fast_service());
    REQUIRE(svc.start());
    ServiceClient client(svc.host(), svc.port(), 8);
    std::vector<ImageTensor> images{generate_image(64, 31), generate_image(64, 32)};

    AttackParams p;
    p.method = AttackMethod::square;
    p.budget = 20;
    SpeedupReport hs = horizontal_speedup(client, p, images, "tinynet-a", 77);
    CHECK(hs.sequential_wall_ms > 0.0);
    CHECK(hs.distributed_wall_ms > 0.0);
    CHECK(hs.sequential_successes == hs.distributed_successes);

    SpeedupReport vs = vertical_speedup(client, p, 4, images[0], "tinynet-a", 78);
    CHECK(vs.sequential_wall_ms > 0.0);
    CHECK(vs.distributed_wall_ms > 0.0);
}
