// dba — distributed black-box attack workbench.
//
// Subcommands: serve, dataset, attack, grid, profile, speedup, verify,
// summarize. Exit codes: 0 ok, 1 error, 2 threshold failure in --check mode.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "dba/attacks.hpp"
#include "dba/codec.hpp"
#include "dba/harness.hpp"
#include "dba/service.hpp"

using namespace dba;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

std::vector<ImageTensor> images_for(const std::string& dataset_dir, int count, int size,
                                    uint64_t seed) {
    if (!dataset_dir.empty())
        return load_dataset(dataset_dir);
    std::vector<ImageTensor> images;
    images.reserve(count);
    for (int i = 0; i < count; ++i)
        images.push_back(generate_image(size, seed + static_cast<uint64_t>(i)));
    return images;
}

int cmd_serve(const std::string& config_path, int replicas, double latency_ms, double jitter_ms,
              const std::string& listen, int port, int max_queue, uint64_t seed,
              const std::string& dispatch, const std::string& models, bool no_jpeg,
              bool serial_compute) {
    ServiceConfig cfg;
    if (!config_path.empty())
        cfg = load_service_config(config_path);
    apply_listen_env(cfg);
    if (!listen.empty())
        cfg.listen_host = listen;
    if (port >= 0)
        cfg.listen_port = port;
    if (replicas > 0)
        cfg.replicas = replicas;
    if (latency_ms >= 0)
        cfg.base_latency_ms = latency_ms;
    if (jitter_ms >= 0)
        cfg.latency_jitter_ms = jitter_ms;
    if (max_queue > 0)
        cfg.max_queue = max_queue;
    if (seed)
        cfg.seed = seed;
    if (!dispatch.empty())
        cfg.dispatch = dispatch == "round_robin" ? DispatchPolicy::round_robin
                                                 : DispatchPolicy::least_busy;
    if (!models.empty()) {
        cfg.models.clear();
        for (const auto& item : split_csv(models)) {
            auto colon = item.find(':');
            if (colon == std::string::npos)
                cfg.models.emplace_back(item, 0);
            else
                cfg.models.emplace_back(item.substr(0, colon),
                                        std::stoull(item.substr(colon + 1)));
        }
    }
    if (no_jpeg)
        cfg.jpeg_enabled = false;
    if (serial_compute)
        cfg.parallel_compute = false;
    if (cfg.max_queue < cfg.replicas)
        cfg.max_queue = cfg.replicas * 4;

    HttpService svc(cfg);
    if (!svc.start()) {
        std::fprintf(stderr, "failed to bind %s:%d\n", cfg.listen_host.c_str(),
                     cfg.listen_port);
        return 1;
    }
    std::printf("serving on %s:%d  replicas=%d latency=%.0f+U(0,%.0f)ms models=",
                svc.host().c_str(), svc.port(), cfg.replicas, cfg.base_latency_ms,
                cfg.latency_jitter_ms);
    for (const auto& [name, s] : cfg.models)
        std::printf("%s:%llu ", name.c_str(), static_cast<unsigned long long>(s));
    std::printf("\n");
    std::fflush(stdout);
    for (;;)
        std::this_thread::sleep_for(std::chrono::seconds(3600));
}

AttackParams build_params(const std::string& method, double epsilon, int budget, int batch,
                          double alpha, double p_init) {
    AttackParams p;
    p.method = parse_method(method);
    p.ball = NormBudget{Norm::Linf, epsilon};
    p.budget = budget;
    p.batch = batch;
    p.simba_step = epsilon;
    p.simba_alpha = alpha > 0 ? alpha : epsilon;
    if (p_init > 0)
        p.square_p_init = p_init;
    return p;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed black-box attack workbench"};
    app.require_subcommand(1);

    // shared client options
    std::string host = "127.0.0.1";
    int port = 8080;
    int workers = 8;

    // serve
    auto* serve = app.add_subcommand("serve", "start the classification service");
    std::string sv_config, sv_listen, sv_dispatch, sv_models;
    int sv_replicas = -1, sv_port = -1, sv_max_queue = -1;
    double sv_latency = -1, sv_jitter = -1;
    uint64_t sv_seed = 0;
    bool sv_no_jpeg = false, sv_serial = false;
    serve->add_option("--config", sv_config, "key = value config file");
    serve->add_option("--replicas", sv_replicas, "replica worker count");
    serve->add_option("--latency-ms", sv_latency, "base injected latency per request");
    serve->add_option("--jitter-ms", sv_jitter, "uniform latency jitter bound");
    serve->add_option("--listen", sv_listen, "listen host (env DBA_LISTEN=host:port)");
    serve->add_option("--port", sv_port, "listen port (0 picks a free port)");
    serve->add_option("--max-queue", sv_max_queue, "admission limit, queued + in flight");
    serve->add_option("--seed", sv_seed, "jitter seed");
    serve->add_option("--dispatch", sv_dispatch, "least_busy | round_robin");
    serve->add_option("--models", sv_models, "name:seed,name:seed,...");
    serve->add_flag("--no-jpeg", sv_no_jpeg, "reject jpeg payloads");
    serve->add_flag("--serial-compute", sv_serial, "disable OpenMP kernels");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "generate the synthetic image set");
    std::string ds_out = "dataset";
    int ds_count = 16, ds_size = 96;
    uint64_t ds_seed = 0;
    dataset->add_option("--out", ds_out, "output directory");
    dataset->add_option("--count", ds_count, "number of images");
    dataset->add_option("--size", ds_size, "square side in pixels");
    dataset->add_option("--seed", ds_seed, "generator seed");

    // attack
    auto* attack = app.add_subcommand("attack", "run one attack configuration");
    std::string at_method = "square", at_mode = "none", at_model = "tinynet-a";
    std::string at_image, at_dataset, at_save;
    int at_budget = 1000, at_batch = 1, at_index = 0, at_count = 1, at_size = 96;
    double at_eps = 0.05, at_alpha = -1, at_pinit = -1;
    uint64_t at_seed = 0;
    attack->add_option("--method", at_method, "simba | square | bandits");
    attack->add_option("--mode", at_mode, "none | horizontal | vertical");
    attack->add_option("--model", at_model, "target model name");
    attack->add_option("--epsilon", at_eps, "Linf ball radius");
    attack->add_option("--budget", at_budget, "query budget per image");
    attack->add_option("--batch", at_batch, "vertical batch size");
    attack->add_option("--alpha", at_alpha, "simba accumulation step (default epsilon)");
    attack->add_option("--square-p-init", at_pinit, "square initial area fraction");
    attack->add_option("--image", at_image, "attack one PNG file");
    attack->add_option("--dataset", at_dataset, "attack images from this directory");
    attack->add_option("--index", at_index, "image index within the dataset");
    attack->add_option("--count", at_count, "horizontal mode: number of images");
    attack->add_option("--size", at_size, "generated image size when no dataset given");
    attack->add_option("--seed", at_seed, "attack seed");
    attack->add_option("--save-adv", at_save, "write the final adversarial PNG here");
    attack->add_option("--host", host, "service host");
    attack->add_option("--port", port, "service port");
    attack->add_option("--workers", workers, "client worker count");

    // grid
    auto* grid = app.add_subcommand("grid", "run an experiment grid, emit CSV");
    std::string gr_methods = "simba,square,bandits", gr_modes = "none",
                gr_models = "tinynet-a", gr_dataset, gr_out = "grid.csv", gr_adv;
    int gr_budget = 1000, gr_count = 10, gr_batch = 1, gr_size = 96;
    double gr_eps = 0.05;
    uint64_t gr_seed = 0;
    grid->add_option("--methods", gr_methods, "comma list");
    grid->add_option("--modes", gr_modes, "comma list");
    grid->add_option("--models", gr_models, "comma list");
    grid->add_option("--dataset", gr_dataset, "image directory (generated when empty)");
    grid->add_option("--count", gr_count, "images per config");
    grid->add_option("--size", gr_size, "generated image size");
    grid->add_option("--budget", gr_budget, "query budget per image");
    grid->add_option("--batch", gr_batch, "vertical batch size");
    grid->add_option("--epsilon", gr_eps, "Linf ball radius");
    grid->add_option("--seed", gr_seed, "base seed");
    grid->add_option("--out", gr_out, "CSV output path");
    grid->add_option("--adv-dir", gr_adv, "store final adversarial PNGs + manifest");
    grid->add_option("--host", host, "service host");
    grid->add_option("--port", port, "service port");
    grid->add_option("--workers", workers, "client worker count");

    // profile
    auto* profile = app.add_subcommand("profile", "measure latency vs concurrency");
    std::string pf_model = "tinynet-a", pf_levels = "1,2,4,8,16", pf_out;
    int pf_reps = 10, pf_size = 96;
    bool pf_check = false;
    double pf_min_ratio = 4.0;
    uint64_t pf_seed = 0;
    profile->add_option("--out", pf_out, "write gnuplot-ready columns (B total avg) here");
    profile->add_option("--model", pf_model, "model to probe");
    profile->add_option("--levels", pf_levels, "comma list of concurrency levels");
    profile->add_option("--reps", pf_reps, "repetitions per level");
    profile->add_option("--size", pf_size, "probe image size");
    profile->add_option("--seed", pf_seed, "probe image seed");
    profile->add_flag("--check", pf_check, "exit 2 unless the profile saturates");
    profile->add_option("--min-ratio", pf_min_ratio, "required avg(B=1)/min(avg)");
    profile->add_option("--host", host, "service host");
    profile->add_option("--port", port, "service port");
    profile->add_option("--workers", workers, "client worker count");

    // speedup
    auto* speedup = app.add_subcommand("speedup", "compare distributed vs sequential walls");
    std::string su_method = "square", su_model = "tinynet-a", su_mode = "horizontal",
                su_dataset;
    int su_images = 8, su_budget = 200, su_batch = 8, su_size = 96;
    double su_eps = 0.05, su_min_ratio = 3.0;
    bool su_check = false;
    uint64_t su_seed = 0;
    speedup->add_option("--method", su_method, "simba | square | bandits");
    speedup->add_option("--mode", su_mode, "horizontal | vertical");
    speedup->add_option("--model", su_model, "target model");
    speedup->add_option("--images", su_images, "image count (horizontal)");
    speedup->add_option("--budget", su_budget, "query budget per image");
    speedup->add_option("--batch", su_batch, "vertical batch size");
    speedup->add_option("--epsilon", su_eps, "Linf ball radius");
    speedup->add_option("--dataset", su_dataset, "image directory (generated when empty)");
    speedup->add_option("--size", su_size, "generated image size");
    speedup->add_option("--seed", su_seed, "base seed");
    speedup->add_flag("--check", su_check, "exit 2 below --min-ratio");
    speedup->add_option("--min-ratio", su_min_ratio, "required wall ratio");
    speedup->add_option("--host", host, "service host");
    speedup->add_option("--port", port, "service port");
    speedup->add_option("--workers", workers, "client worker count");

    // verify
    auto* verify = app.add_subcommand("verify", "re-submit stored adversarial PNGs");
    std::string vf_manifest = "adv/manifest.csv";
    bool vf_check = false;
    verify->add_option("--manifest", vf_manifest, "manifest written by grid --adv-dir");
    verify->add_flag("--check", vf_check, "exit 2 on any mismatch");
    verify->add_option("--host", host, "service host");
    verify->add_option("--port", port, "service port");

    // summarize
    auto* summarize = app.add_subcommand("summarize", "aggregate a grid CSV");
    std::string sm_csv = "grid.csv";
    summarize->add_option("--csv", sm_csv, "CSV produced by grid");

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed())
            return cmd_serve(sv_config, sv_replicas, sv_latency, sv_jitter, sv_listen, sv_port,
                             sv_max_queue, sv_seed, sv_dispatch, sv_models, sv_no_jpeg,
                             sv_serial);

        if (dataset->parsed()) {
            auto paths = generate_dataset(ds_out, ds_count, ds_size, ds_seed);
            std::printf("wrote %zu images to %s\n", paths.size(), ds_out.c_str());
            return 0;
        }

        if (attack->parsed()) {
            ServiceClient client(host, port, workers);
            AttackParams p = build_params(at_method, at_eps, at_budget, at_batch, at_alpha,
                                          at_pinit);
            AttackMode mode = parse_mode(at_mode);
            std::vector<ImageTensor> images;
            if (!at_image.empty())
                images.push_back(load_png_image(at_image));
            else
                images = images_for(at_dataset, std::max(at_count, at_index + 1), at_size,
                                    at_seed);

            std::vector<AttackOutcome> outcomes;
            if (mode == AttackMode::horizontal) {
                size_t n = std::min<size_t>(at_count, images.size());
                outcomes = run_horizontal(client, p, std::span(images).subspan(0, n), at_model,
                                          at_seed);
            } else {
                const ImageTensor& img = images.at(at_image.empty() ? at_index : 0);
                outcomes.push_back(run_attack(client, p, mode, img, at_model, at_seed));
            }
            for (const auto& out : outcomes) {
                std::printf("image %d: %s  queries=%d wall=%.1fms linf_u8=%d class %d -> %d\n",
                            out.image_id, out.success ? "SUCCESS" : "no flip",
                            out.queries_used, out.wall_ms, out.linf_u8, out.original_class,
                            out.final_class);
            }
            if (!at_save.empty() && outcomes.size() == 1) {
                EncodedImage enc = encode_image(outcomes[0].final_image, ImageFormat::png);
                std::ofstream f(at_save, std::ios::binary | std::ios::trunc);
                f.write(enc.bytes.data(), static_cast<std::streamsize>(enc.bytes.size()));
                std::printf("adversarial image written to %s\n", at_save.c_str());
            }
            return 0;
        }

        if (grid->parsed()) {
            ServiceClient client(host, port, workers);
            auto images = images_for(gr_dataset, gr_count, gr_size, gr_seed);
            std::vector<ExperimentConfig> configs;
            for (const auto& method : split_csv(gr_methods))
                for (const auto& mode : split_csv(gr_modes))
                    for (const auto& model : split_csv(gr_models)) {
                        ExperimentConfig cfg;
                        cfg.method = parse_method(method);
                        cfg.mode = parse_mode(mode);
                        cfg.batch = gr_batch;
                        cfg.model = model;
                        cfg.epsilon = gr_eps;
                        cfg.budget = gr_budget;
                        cfg.image_count = gr_count;
                        cfg.base_seed = gr_seed;
                        cfg.workers = workers;
                        configs.push_back(cfg);
                    }
            GridResult result = run_grid(client, configs, images,
                                         gr_adv.empty()
                                             ? std::nullopt
                                             : std::optional<std::string>(gr_adv));
            write_csv(gr_out, result.records);
            int rows = 0;
            for (const auto& r : result.records)
                if (r.image_id != "summary")
                    ++rows;
            std::printf("wrote %d rows (+%zu summaries) to %s\n", rows,
                        result.records.size() - rows, gr_out.c_str());
            for (const auto& r : result.records)
                if (r.image_id == "summary")
                    std::printf("%s/%s/%s: success=%.2f%% mean_queries=%.1f wall=%.0fms\n",
                                r.method.c_str(), r.mode.c_str(), r.model.c_str(),
                                100.0 * r.success, r.queries, r.wall_ms);
            return 0;
        }

        if (profile->parsed()) {
            ServiceClient client(host, port, workers);
            ImageTensor probe = generate_image(pf_size, pf_seed);
            std::vector<int> levels;
            for (const auto& s : split_csv(pf_levels))
                levels.push_back(std::stoi(s));
            auto rows = client.concurrency_profile(probe, pf_model, levels, pf_reps);
            std::printf("%8s %14s %14s\n", "B", "total ms", "avg ms/query");
            for (const auto& r : rows)
                std::printf("%8d %14.2f %14.2f\n", r.concurrency, r.mean_total_ms,
                            r.mean_avg_ms);
            if (!pf_out.empty()) {
                std::ofstream f(pf_out, std::ios::trunc);
                f << "# B  total_ms  avg_ms_per_query\n";
                for (const auto& r : rows)
                    f << r.concurrency << "  " << r.mean_total_ms << "  " << r.mean_avg_ms
                      << "\n";
            }
            if (pf_check) {
                double best = rows[0].mean_avg_ms;
                size_t best_i = 0;
                for (size_t i = 1; i < rows.size(); ++i)
                    if (rows[i].mean_avg_ms < best) {
                        best = rows[i].mean_avg_ms;
                        best_i = i;
                    }
                bool decreasing = true;
                for (size_t i = 1; i <= best_i; ++i)
                    decreasing = decreasing && rows[i].mean_avg_ms < rows[i - 1].mean_avg_ms;
                double ratio = rows[0].mean_avg_ms / best;
                std::printf("saturation ratio %.2f (need >= %.2f), %s\n", ratio, pf_min_ratio,
                            decreasing ? "monotone" : "NOT monotone");
                if (!decreasing || ratio < pf_min_ratio)
                    return 2;
            }
            return 0;
        }

        if (speedup->parsed()) {
            ServiceClient client(host, port, workers);
            AttackParams p = build_params(su_method, su_eps, su_budget, 1, -1, -1);
            SpeedupReport rep;
            if (su_mode == "vertical") {
                auto images = images_for(su_dataset, 1, su_size, su_seed);
                rep = vertical_speedup(client, p, su_batch, images[0], su_model, su_seed);
                std::printf("vertical b=%d: ", su_batch);
            } else {
                auto images = images_for(su_dataset, su_images, su_size, su_seed);
                std::span<const ImageTensor> span(images);
                rep = horizontal_speedup(client, p, span.subspan(0, su_images), su_model,
                                         su_seed);
                std::printf("horizontal x%d: ", su_images);
            }
            std::printf("sequential %.0fms, distributed %.0fms, speedup %.2fx\n",
                        rep.sequential_wall_ms, rep.distributed_wall_ms, rep.ratio);
            if (su_check && rep.ratio < su_min_ratio) {
                std::printf("below required ratio %.2f\n", su_min_ratio);
                return 2;
            }
            return 0;
        }

        if (verify->parsed()) {
            ServiceClient client(host, port, workers);
            auto entries = read_manifest(vf_manifest);
            std::vector<std::string> report;
            int mismatches = verify_manifest(client, entries, &report);
            for (const auto& line : report)
                std::printf("%s\n", line.c_str());
            std::printf("%d mismatches over %zu entries\n", mismatches, entries.size());
            if (vf_check && mismatches > 0)
                return 2;
            return 0;
        }

        if (summarize->parsed()) {
            auto records = read_csv(sm_csv);
            std::map<std::string, std::tuple<int, int, double, double>> agg;
            for (const auto& r : records) {
                if (r.image_id == "summary")
                    continue;
                auto& [n, succ, queries, wall] = agg[r.method + "," + r.mode + "," + r.model];
                ++n;
                succ += r.success > 0.5 ? 1 : 0;
                queries += r.queries;
                wall += r.wall_ms;
            }
            std::printf("%-10s %-11s %-10s %8s %9s %12s %12s\n", "method", "mode", "model",
                        "images", "success", "mean queries", "total wall");
            for (const auto& [key, v] : agg) {
                auto [n, succ, queries, wall] = v;
                std::stringstream ss(key);
                std::string method, mode, model;
                std::getline(ss, method, ',');
                std::getline(ss, mode, ',');
                std::getline(ss, model, ',');
                std::printf("%-10s %-11s %-10s %8d %8.1f%% %12.1f %11.0fms\n", method.c_str(),
                            mode.c_str(), model.c_str(), n, 100.0 * succ / std::max(1, n),
                            queries / std::max(1, n), wall);
            }
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", errc_name(e.code()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
