// Acceptance suite: runs every criterion end to end against live services and
// prints one PASS/FAIL line per criterion. Returns nonzero if any fail.
//
//   A1  horizontal speedup >= 3.0 (16 images, square, R=8, 100ms, budget 200)
//   A2  vertical speedup >= 3.0 for square and simba (b=8 vs b=1)
//   A3  horizontal == sequential, bitwise, all methods, 8 images
//   A4  per-query latency strictly falls to B=8, flattens after, ratio >= 4
//   A5  square success rate strictly above simba and bandits (50 images)
//   A6  every decoded server-side image within round(eps*255)+1 of its clean
//   A7  kernels match scalar oracles; png/base64 exact; splitmix64 anchor
//   A8  accepted square l* and simba p_y traces are non-increasing

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <string>
#include <vector>

#include "dba/attacks.hpp"
#include "dba/codec.hpp"
#include "dba/harness.hpp"
#include "dba/kernels.hpp"
#include "dba/service.hpp"
#include "oracles.hpp"

using namespace dba;

namespace {

constexpr int k_ball_bound = 14; // round(0.05 * 255) + 1

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(const std::string& name, bool pass, const std::string& detail) {
    g_results.push_back({name, pass, detail});
    std::printf("%s %s (%s)\n", name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

// A6 accumulator: every decoded server-side image must sit inside the Linf
// ball of one of the currently attacked clean images.
class BallMonitor {
  public:
    void set_cleans(std::span<const ImageTensor> images) {
        std::lock_guard lk(mu_);
        cleans_.clear();
        for (const auto& img : images)
            cleans_.push_back(quantize(img));
    }

    void attach(HttpService& svc) {
        svc.engine().set_post_decode_hook(
            [this](std::string_view, const QuantizedImage& decoded, const std::string&) {
                observe(decoded);
            });
    }

    long requests() const { return requests_; }
    long violations() const { return violations_; }
    int worst() const { return worst_; }

  private:
    void observe(const QuantizedImage& decoded) {
        std::lock_guard lk(mu_);
        ++requests_;
        for (const auto& clean : cleans_) {
            if (clean.data.size() != decoded.data.size())
                continue;
            int max_diff = 0;
            for (size_t i = 0; i < clean.data.size(); ++i) {
                int diff = std::abs(static_cast<int>(clean.data[i]) -
                                    static_cast<int>(decoded.data[i]));
                if (diff > max_diff) {
                    max_diff = diff;
                    if (max_diff > k_ball_bound)
                        break; // wrong clean, abandon early
                }
            }
            if (max_diff <= k_ball_bound) {
                worst_ = std::max(worst_, max_diff);
                return;
            }
        }
        ++violations_;
    }

    std::mutex mu_;
    std::vector<QuantizedImage> cleans_;
    long requests_ = 0;
    long violations_ = 0;
    int worst_ = 0;
};

BallMonitor g_monitor;

struct TraceSet {
    std::vector<std::vector<double>> square, simba;

    void add(AttackMethod m, const std::vector<AttackOutcome>& outs) {
        for (const auto& o : outs) {
            if (m == AttackMethod::square)
                square.push_back(o.accepted_trace);
            else if (m == AttackMethod::simba)
                simba.push_back(o.accepted_trace);
        }
    }
};

TraceSet g_traces;

AttackParams base_params(AttackMethod m, int budget) {
    AttackParams p;
    p.method = m;
    p.budget = budget;
    return p;
}

ServiceConfig paper_latency_service() {
    ServiceConfig cfg;
    cfg.listen_port = 0;
    cfg.replicas = 8;
    cfg.base_latency_ms = 100.0;
    cfg.latency_jitter_ms = 20.0;
    cfg.max_queue = 64;
    cfg.models = {{"tinynet-a", 0}, {"tinynet-b", 0}, {"tinynet-c", 0}};
    return cfg;
}

ServiceConfig desk_latency_service() {
    ServiceConfig cfg = paper_latency_service();
    cfg.base_latency_ms = 5.0;
    cfg.latency_jitter_ms = 1.0;
    return cfg;
}

std::vector<ImageTensor> dataset(int count, uint64_t seed) {
    std::vector<ImageTensor> images;
    images.reserve(count);
    for (int i = 0; i < count; ++i)
        images.push_back(generate_image(96, seed + static_cast<uint64_t>(i)));
    return images;
}

// ---------------------------------------------------------------------------

void run_a7() {
    Rng rng{20240};
    bool ok = true;
    std::string why;

    for (int trial = 0; trial < 100 && ok; ++trial) {
        int h = 2 + static_cast<int>(rng_below(rng, 7));
        int w = 2 + static_cast<int>(rng_below(rng, 7));
        int ic = 1 + static_cast<int>(rng_below(rng, 4));
        int oc = 1 + static_cast<int>(rng_below(rng, 4));
        std::vector<double> in(static_cast<size_t>(h) * w * ic);
        for (double& v : in)
            v = 2.0 * rng_uniform(rng) - 1.0;
        std::vector<double> kern(static_cast<size_t>(oc) * ic * 9);
        for (double& v : kern)
            v = 2.0 * rng_uniform(rng) - 1.0;
        std::vector<double> bias(oc);
        for (double& v : bias)
            v = 2.0 * rng_uniform(rng) - 1.0;

        std::vector<double> conv_got(static_cast<size_t>(h) * w * oc);
        kernels::conv2d_same(in.data(), h, w, ic, kern.data(), bias.data(), oc, 3,
                             conv_got.data());
        auto conv_want = oracle::conv2d_same(in, h, w, ic, kern, bias, oc, 3);
        for (size_t i = 0; i < conv_got.size(); ++i)
            if (std::abs(conv_got[i] - conv_want[i]) >= 1e-9) {
                ok = false;
                why = "conv2d mismatch";
            }

        if (h % 2 == 0 && w % 2 == 0) {
            std::vector<double> pool_got(static_cast<size_t>(h / 2) * (w / 2) * ic);
            kernels::maxpool2(in.data(), h, w, ic, pool_got.data());
            auto pool_want = oracle::maxpool2(in, h, w, ic);
            for (size_t i = 0; i < pool_got.size(); ++i)
                if (std::abs(pool_got[i] - pool_want[i]) >= 1e-9) {
                    ok = false;
                    why = "maxpool mismatch";
                }
        }

        int n_out = 1 + static_cast<int>(rng_below(rng, 6));
        std::vector<double> wgt(static_cast<size_t>(n_out) * in.size());
        for (double& v : wgt)
            v = 2.0 * rng_uniform(rng) - 1.0;
        std::vector<double> dbias(n_out);
        for (double& v : dbias)
            v = 2.0 * rng_uniform(rng) - 1.0;
        std::vector<double> dense_got(n_out);
        kernels::dense(in.data(), static_cast<int>(in.size()), wgt.data(), dbias.data(), n_out,
                       dense_got.data());
        auto dense_want = oracle::dense(in, wgt, dbias, n_out);
        for (int i = 0; i < n_out; ++i)
            if (std::abs(dense_got[i] - dense_want[i]) >= 1e-9) {
                ok = false;
                why = "dense mismatch";
            }

        int oh = 1 + static_cast<int>(rng_below(rng, 12));
        int ow = 1 + static_cast<int>(rng_below(rng, 12));
        std::vector<double> rz_got(static_cast<size_t>(oh) * ow * ic);
        kernels::resize_bilinear(in.data(), h, w, ic, rz_got.data(), oh, ow);
        auto rz_want = oracle::resize_bilinear(in, h, w, ic, oh, ow);
        for (size_t i = 0; i < rz_got.size(); ++i)
            if (std::abs(rz_got[i] - rz_want[i]) >= 1e-9) {
                ok = false;
                why = "resize mismatch";
            }
    }

    for (int trial = 0; trial < 20 && ok; ++trial) {
        QuantizedImage q(1 + static_cast<int>(rng_below(rng, 16)),
                         1 + static_cast<int>(rng_below(rng, 16)), 3);
        for (auto& v : q.data)
            v = static_cast<uint8_t>(rng_below(rng, 256));
        if (decode_image(encode_image(q, ImageFormat::png).bytes) != q) {
            ok = false;
            why = "png round trip not exact";
        }
        std::string buf(rng_below(rng, 4096), '\0');
        for (auto& c : buf)
            c = static_cast<char>(rng_below(rng, 256));
        if (base64_decode(base64_encode(buf)) != buf) {
            ok = false;
            why = "base64 round trip not exact";
        }
    }

    Rng zero{0};
    if (splitmix64_next(zero) != oracle::k_splitmix_first_from_zero) {
        ok = false;
        why = "splitmix64 anchor mismatch";
    }

    report("A7", ok, ok ? "kernels, codecs and PRNG match their oracles" : why);
}

void run_a4(HttpService& svc) {
    ServiceClient client(svc.host(), svc.port(), 8);
    ImageTensor probe = generate_image(96, 4001);
    g_monitor.set_cleans(std::span(&probe, 1));

    std::vector<int> levels{1, 2, 4, 8, 16};
    auto rows = client.concurrency_profile(probe, "tinynet-a", levels, 10);

    bool decreasing = true;
    for (size_t i = 1; i < rows.size() && levels[i] <= 8; ++i)
        decreasing = decreasing && rows[i].mean_avg_ms < rows[i - 1].mean_avg_ms;
    double avg1 = rows[0].mean_avg_ms;
    double avg8 = rows[3].mean_avg_ms;
    double avg16 = rows[4].mean_avg_ms;
    double ratio = avg1 / avg8;
    bool flattens = avg16 > 0.6 * avg8 && avg16 < 1.6 * avg8;
    bool pass = decreasing && flattens && ratio >= 4.0;

    char detail[256];
    std::snprintf(detail, sizeof detail,
                  "avg ms/query: B1=%.1f B2=%.1f B4=%.1f B8=%.1f B16=%.1f, B1/B8=%.2f (need "
                  ">=4), %s, %s",
                  rows[0].mean_avg_ms, rows[1].mean_avg_ms, rows[2].mean_avg_ms, avg8, avg16,
                  ratio, decreasing ? "monotone to B=8" : "NOT monotone",
                  flattens ? "flat past B=8" : "NOT flat past B=8");
    report("A4", pass, detail);
}

void run_a1(HttpService& svc) {
    ServiceClient client(svc.host(), svc.port(), 8);
    auto images = dataset(16, 1100);
    g_monitor.set_cleans(images);

    AttackParams p = base_params(AttackMethod::square, 200);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<AttackOutcome> seq;
    for (size_t i = 0; i < images.size(); ++i)
        seq.push_back(run_attack(client, p, AttackMode::none, images[i], "tinynet-a",
                                 7000 + i));
    auto t1 = std::chrono::steady_clock::now();
    auto hor = run_horizontal(client, p, images, "tinynet-a", 7000);
    auto t2 = std::chrono::steady_clock::now();

    g_traces.add(AttackMethod::square, seq);
    g_traces.add(AttackMethod::square, hor);

    double wall_none = std::chrono::duration<double, std::milli>(t1 - t0).count();
    double wall_hor = std::chrono::duration<double, std::milli>(t2 - t1).count();
    double ratio = wall_none / wall_hor;
    int sseq = 0, shor = 0;
    long queries = 0;
    for (const auto& o : seq) {
        sseq += o.success;
        queries += o.queries_used;
    }
    for (const auto& o : hor)
        shor += o.success;

    char detail[256];
    std::snprintf(detail, sizeof detail,
                  "sequential %.1fs vs horizontal %.1fs, speedup %.2fx (need >=3.0); "
                  "successes %d/%d seq, %d/%d hor; %ld queries",
                  wall_none / 1000.0, wall_hor / 1000.0, ratio, sseq, 16, shor, 16, queries);
    report("A1", ratio >= 3.0, detail);
}

void run_a2(HttpService& svc) {
    ServiceClient client(svc.host(), svc.port(), 8);
    bool pass = true;
    std::string detail;

    // these images resist their attacks for the whole b=1 budget, so the
    // sequential wall is long enough for the ratio to be meaningful
    ImageTensor sq_img = generate_image(96, 1112);
    ImageTensor sb_img = generate_image(96, 1113);
    g_monitor.set_cleans(std::vector<ImageTensor>{sq_img, sb_img});

    {
        AttackParams p = base_params(AttackMethod::square, 300);
        SpeedupReport rep = vertical_speedup(client, p, 8, sq_img, "tinynet-a", 9001);
        pass = pass && rep.ratio >= 3.0;
        char buf[160];
        std::snprintf(buf, sizeof buf, "square b8 %.1fs vs b1 %.1fs = %.2fx; ",
                      rep.distributed_wall_ms / 1000.0, rep.sequential_wall_ms / 1000.0,
                      rep.ratio);
        detail += buf;
    }
    {
        AttackParams p = base_params(AttackMethod::simba, 400);
        SpeedupReport rep = vertical_speedup(client, p, 8, sb_img, "tinynet-a", 9002);
        pass = pass && rep.ratio >= 3.0;
        char buf[160];
        std::snprintf(buf, sizeof buf, "simba b8 %.1fs vs b1 %.1fs = %.2fx (need >=3.0 each)",
                      rep.distributed_wall_ms / 1000.0, rep.sequential_wall_ms / 1000.0,
                      rep.ratio);
        detail += buf;
    }
    report("A2", pass, detail);
}

void run_a3(HttpService& svc) {
    ServiceClient client(svc.host(), svc.port(), 8);
    auto images = dataset(8, 3300);
    g_monitor.set_cleans(images);

    bool pass = true;
    std::string detail;
    for (AttackMethod m : {AttackMethod::simba, AttackMethod::square, AttackMethod::bandits}) {
        AttackParams p = base_params(m, 120);
        auto hor = run_horizontal(client, p, images, "tinynet-b", 5100);
        int identical = 0;
        std::vector<AttackOutcome> seq;
        for (size_t i = 0; i < images.size(); ++i) {
            AttackOutcome solo =
                run_attack(client, p, AttackMode::none, images[i], "tinynet-b", 5100 + i);
            if (solo.final_image == hor[i].final_image &&
                solo.queries_used == hor[i].queries_used && solo.success == hor[i].success)
                ++identical;
            seq.push_back(std::move(solo));
        }
        g_traces.add(m, hor);
        g_traces.add(m, seq);
        pass = pass && identical == 8;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s %d/8 bitwise; ", to_string(m), identical);
        detail += buf;
    }
    report("A3", pass, detail + "zero tolerance");
}

void run_a5(HttpService& svc) {
    ServiceClient client(svc.host(), svc.port(), 8);
    auto images = dataset(50, 1100); // shares the A1 image family
    g_monitor.set_cleans(images);

    int rate[3] = {0, 0, 0};
    AttackMethod methods[3] = {AttackMethod::square, AttackMethod::simba,
                               AttackMethod::bandits};
    double walls[3] = {0, 0, 0};
    for (int mi = 0; mi < 3; ++mi) {
        AttackParams p = base_params(methods[mi], 1000);
        auto t0 = std::chrono::steady_clock::now();
        auto outs = run_horizontal(client, p, images, "tinynet-a", 8800);
        walls[mi] = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
        for (const auto& o : outs)
            rate[mi] += o.success;
        g_traces.add(methods[mi], outs);
    }
    bool pass = rate[0] > rate[1] && rate[0] > rate[2];
    char detail[256];
    std::snprintf(detail, sizeof detail,
                  "success on 50 images: square %d, simba %d, bandits %d (square must exceed "
                  "both; walls %.0f/%.0f/%.0fs)",
                  rate[0], rate[1], rate[2], walls[0] / 1000.0, walls[1] / 1000.0,
                  walls[2] / 1000.0);
    report("A5", pass, detail);
}

void run_a6() {
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "%ld requests decoded server-side, %ld outside the ball (worst in-ball "
                  "distance %d <= %d)",
                  g_monitor.requests(), g_monitor.violations(), g_monitor.worst(),
                  k_ball_bound);
    report("A6", g_monitor.violations() == 0 && g_monitor.requests() > 10000, detail);
}

void run_a8() {
    long checked = 0, broken = 0;
    for (const auto* set : {&g_traces.square, &g_traces.simba})
        for (const auto& trace : *set) {
            ++checked;
            for (size_t i = 1; i < trace.size(); ++i)
                if (trace[i] > trace[i - 1] + 1e-12)
                    ++broken;
        }
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "%ld accepted-loss traces (square l*, simba p_y), %ld monotonicity breaks",
                  checked, broken);
    report("A8", broken == 0 && checked >= 100, detail);
}

} // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    run_a7();

    {
        HttpService svc(paper_latency_service());
        if (!svc.start()) {
            std::fprintf(stderr, "cannot start service\n");
            return 1;
        }
        g_monitor.attach(svc);
        run_a4(svc);
        run_a1(svc);
        run_a2(svc);
        svc.stop();
    }
    {
        HttpService svc(desk_latency_service());
        if (!svc.start()) {
            std::fprintf(stderr, "cannot start service\n");
            return 1;
        }
        g_monitor.attach(svc);
        run_a3(svc);
        run_a5(svc);
        svc.stop();
    }
    run_a6();
    run_a8();

    double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    int failed = 0;
    std::printf("\n==== acceptance summary (%.0fs) ====\n", total);
    std::sort(g_results.begin(), g_results.end(),
              [](const Criterion& a, const Criterion& b) { return a.name < b.name; });
    for (const auto& c : g_results) {
        std::printf("%s %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL");
        failed += c.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
