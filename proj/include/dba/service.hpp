#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dba/classifier.hpp"
#include "dba/core.hpp"

namespace dba {

enum class DispatchPolicy { least_busy, round_robin };

struct ServiceConfig {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080; // 0 picks a free port
    int replicas = 8;
    double base_latency_ms = 100.0;
    double latency_jitter_ms = 20.0;
    std::vector<std::pair<std::string, uint64_t>> models = {
        {"tinynet-a", 0}, {"tinynet-b", 0}, {"tinynet-c", 0}};
    int max_queue = 64;
    bool jpeg_enabled = true;
    DispatchPolicy dispatch = DispatchPolicy::least_busy;
    uint64_t seed = 0; // latency jitter streams
    bool parallel_compute = true;
};

/// key = value lines; '#' starts a comment. Unknown keys are rejected.
ServiceConfig load_service_config(const std::string& path);
void apply_listen_env(ServiceConfig& cfg); // DBA_LISTEN=host:port override

/// decode -> dequantize -> resize to the model's input size -> forward ->
/// top_k. Stateless; weights are immutable after construction.
class ClassificationEngine {
  public:
    ClassificationEngine(const std::vector<std::pair<std::string, uint64_t>>& models,
                         bool parallel_compute);

    struct Result {
        std::string model;
        std::vector<Prediction> predictions;
    };

    /// `bytes` is the raw (already base64-decoded) PNG/JPEG payload.
    Result classify(std::string_view bytes, const std::string& model, int k,
                    bool labels_only) const;

    std::vector<std::string> model_names() const;
    bool has_model(const std::string& name) const;
    const ModelSpec& spec(const std::string& name) const;
    const WeightSet& weights(const std::string& name) const;

    /// Observability hook invoked after decode with the server-side image.
    /// Must be thread-safe; called from replica threads.
    void set_post_decode_hook(
        std::function<void(std::string_view bytes, const QuantizedImage&, const std::string&)>);

  private:
    struct Entry {
        const ModelSpec* spec;
        WeightSet weights;
    };
    std::vector<std::pair<std::string, Entry>> entries_;
    bool parallel_compute_;
    std::function<void(std::string_view, const QuantizedImage&, const std::string&)> hook_;
};

/// R single-capacity workers behind a dispatcher. Each admitted job waits in
/// its replica's queue, then the replica sleeps the injected latency and runs
/// the job. Admission fails once queued + in-flight would exceed max_queue.
class ReplicaPool {
  public:
    ReplicaPool(int replicas, double base_latency_ms, double latency_jitter_ms,
                DispatchPolicy policy, int max_queue, uint64_t seed);
    ~ReplicaPool();

    struct Served {
        int replica_id = -1;
        double latency_ms = 0.0; // queue wait + injected latency + compute
    };

    /// Blocks until the job has run on a replica. Throws QueueFull when the
    /// pool is saturated.
    Served run(const std::function<void()>& work);

    int replicas() const { return static_cast<int>(workers_.size()); }

  private:
    struct Job {
        const std::function<void()>* work;
        std::mutex m;
        std::condition_variable cv;
        bool done = false;
        std::exception_ptr error;
        double latency_ms = 0.0;
        std::chrono::steady_clock::time_point enqueued;
    };
    struct Worker {
        std::deque<Job*> queue;
        int busy = 0; // executing now (0 or 1)
        std::thread thread;
    };

    void worker_loop(int id);
    int pick_replica_locked();

    std::vector<std::unique_ptr<Worker>> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    int total_admitted_ = 0; // queued + in-flight across all replicas
    int max_queue_;
    double base_ms_, jitter_ms_;
    DispatchPolicy policy_;
    int rr_next_ = 0;
    std::vector<Rng> jitter_rng_;
};

/// HTTP front end: POST /api/classify, GET /api/models.
class HttpService {
  public:
    explicit HttpService(ServiceConfig cfg);
    ~HttpService();

    bool start();
    void stop();
    int port() const { return port_; }
    const std::string& host() const { return cfg_.listen_host; }

    ClassificationEngine& engine() { return *engine_; }
    uint64_t ok_count() const { return ok_count_.load(); }
    uint64_t rejected_count() const { return rejected_count_.load(); }

  private:
    ServiceConfig cfg_;
    std::unique_ptr<ClassificationEngine> engine_;
    std::unique_ptr<ReplicaPool> pool_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread listen_thread_;
    int port_ = 0;
    std::atomic<uint64_t> ok_count_{0};
    std::atomic<uint64_t> rejected_count_{0};
};

} // namespace dba
