#include "dba/service.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dba/codec.hpp"

namespace dba {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::pair<std::string, uint64_t>> parse_models(const std::string& value) {
    // "tinynet-a:0,tinynet-b:7" — seed defaults to 0
    std::vector<std::pair<std::string, uint64_t>> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            continue;
        auto colon = item.find(':');
        if (colon == std::string::npos)
            out.emplace_back(item, 0);
        else
            out.emplace_back(trim(item.substr(0, colon)),
                             std::stoull(trim(item.substr(colon + 1))));
    }
    return out;
}

void parse_listen(const std::string& value, std::string& host, int& port) {
    auto colon = value.rfind(':');
    if (colon == std::string::npos) {
        host = value;
        return;
    }
    host = value.substr(0, colon);
    port = std::stoi(value.substr(colon + 1));
}

} // namespace

ServiceConfig load_service_config(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw Error(Errc::io_error, "cannot open config: " + path);
    ServiceConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::config_error,
                        path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "listen")
                parse_listen(value, cfg.listen_host, cfg.listen_port);
            else if (key == "replicas")
                cfg.replicas = std::stoi(value);
            else if (key == "base_latency_ms")
                cfg.base_latency_ms = std::stod(value);
            else if (key == "latency_jitter_ms")
                cfg.latency_jitter_ms = std::stod(value);
            else if (key == "models")
                cfg.models = parse_models(value);
            else if (key == "max_queue")
                cfg.max_queue = std::stoi(value);
            else if (key == "jpeg_enabled")
                cfg.jpeg_enabled = (value == "true" || value == "1");
            else if (key == "dispatch")
                cfg.dispatch = value == "round_robin" ? DispatchPolicy::round_robin
                                                      : DispatchPolicy::least_busy;
            else if (key == "seed")
                cfg.seed = std::stoull(value);
            else if (key == "parallel_compute")
                cfg.parallel_compute = (value == "true" || value == "1");
            else
                throw Error(Errc::config_error, "unknown config key: " + key);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(Errc::config_error,
                        path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (cfg.replicas < 1)
        throw Error(Errc::config_error, "replicas must be >= 1");
    if (cfg.max_queue < cfg.replicas)
        throw Error(Errc::config_error, "max_queue must be >= replicas");
    return cfg;
}

void apply_listen_env(ServiceConfig& cfg) {
    if (const char* env = std::getenv("DBA_LISTEN"); env && *env)
        parse_listen(env, cfg.listen_host, cfg.listen_port);
}

// ---------------------------------------------------------------------------
// ClassificationEngine

ClassificationEngine::ClassificationEngine(
    const std::vector<std::pair<std::string, uint64_t>>& models, bool parallel_compute)
    : parallel_compute_(parallel_compute) {
    for (const auto& [name, seed] : models) {
        Entry e{&ModelSpec::lookup(name), build_model(name, seed)};
        entries_.emplace_back(name, std::move(e));
    }
}

std::vector<std::string> ClassificationEngine::model_names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_)
        out.push_back(name);
    return out;
}

bool ClassificationEngine::has_model(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name)
            return true;
    return false;
}

const ModelSpec& ClassificationEngine::spec(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name)
            return *e.spec;
    throw Error(Errc::model_not_found, "model not served: " + name);
}

const WeightSet& ClassificationEngine::weights(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name)
            return e.weights;
    throw Error(Errc::model_not_found, "model not served: " + name);
}

void ClassificationEngine::set_post_decode_hook(
    std::function<void(std::string_view, const QuantizedImage&, const std::string&)> hook) {
    hook_ = std::move(hook);
}

ClassificationEngine::Result ClassificationEngine::classify(std::string_view bytes,
                                                            const std::string& model, int k,
                                                            bool labels_only) const {
    const Entry* entry = nullptr;
    for (const auto& [n, e] : entries_)
        if (n == model)
            entry = &e;
    if (!entry)
        throw Error(Errc::model_not_found, "model not served: " + model);
    if (k != 1 && k != 3 && k != 5 && k != 10)
        throw Error(Errc::bad_top_k, "top_k must be one of {1,3,5,10}");

    QuantizedImage q = decode_image(bytes);
    if (hook_)
        hook_(bytes, q, model);
    ImageTensor x = dequantize(q);
    const int s = entry->spec->input_size;
    if (x.height != s || x.width != s)
        x = resize_bilinear_image(x, s, s);
    ClassProbabilities probs = forward(*entry->spec, entry->weights, x, parallel_compute_);
    return Result{model, top_k(probs.probs, k, labels_only)};
}

// ---------------------------------------------------------------------------
// ReplicaPool

ReplicaPool::ReplicaPool(int replicas, double base_latency_ms, double latency_jitter_ms,
                         DispatchPolicy policy, int max_queue, uint64_t seed)
    : max_queue_(max_queue), base_ms_(base_latency_ms), jitter_ms_(latency_jitter_ms),
      policy_(policy) {
    if (replicas < 1)
        throw Error(Errc::config_error, "replicas must be >= 1");
    if (max_queue_ < replicas)
        throw Error(Errc::config_error, "max_queue must be >= replicas");
    for (int i = 0; i < replicas; ++i) {
        jitter_rng_.push_back(Rng{seed ^ (0x9E3779B97F4A7C15ULL * (i + 1))});
        workers_.push_back(std::make_unique<Worker>());
    }
    for (int i = 0; i < replicas; ++i)
        workers_[i]->thread = std::thread([this, i] { worker_loop(i); });
}

ReplicaPool::~ReplicaPool() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_)
        if (w->thread.joinable())
            w->thread.join();
}

int ReplicaPool::pick_replica_locked() {
    if (policy_ == DispatchPolicy::round_robin) {
        int id = rr_next_;
        rr_next_ = (rr_next_ + 1) % static_cast<int>(workers_.size());
        return id;
    }
    // fewest in-flight (queued + executing), ties to lowest id
    int best = 0;
    int best_load = workers_[0]->busy + static_cast<int>(workers_[0]->queue.size());
    for (int i = 1; i < static_cast<int>(workers_.size()); ++i) {
        int load = workers_[i]->busy + static_cast<int>(workers_[i]->queue.size());
        if (load < best_load) {
            best = i;
            best_load = load;
        }
    }
    return best;
}

ReplicaPool::Served ReplicaPool::run(const std::function<void()>& work) {
    Job job;
    job.work = &work;
    job.enqueued = std::chrono::steady_clock::now();
    int id;
    {
        std::lock_guard lk(mu_);
        if (total_admitted_ + 1 > max_queue_)
            throw Error(Errc::queue_full, "service saturated");
        ++total_admitted_;
        id = pick_replica_locked();
        workers_[id]->queue.push_back(&job);
    }
    cv_.notify_all();
    {
        std::unique_lock lk(job.m);
        job.cv.wait(lk, [&] { return job.done; });
    }
    if (job.error)
        std::rethrow_exception(job.error);
    return Served{id, job.latency_ms};
}

void ReplicaPool::worker_loop(int id) {
    Worker& w = *workers_[id];
    for (;;) {
        Job* job = nullptr;
        {
            std::unique_lock lk(mu_);
            cv_.wait(lk, [&] { return stop_ || !w.queue.empty(); });
            if (stop_ && w.queue.empty())
                return;
            job = w.queue.front();
            w.queue.pop_front();
            w.busy = 1;
        }
        double sleep_ms = base_ms_;
        if (jitter_ms_ > 0.0)
            sleep_ms += rng_uniform(jitter_rng_[id]) * jitter_ms_;
        if (sleep_ms > 0.0)
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sleep_ms));
        std::exception_ptr err;
        try {
            (*job->work)();
        } catch (...) {
            err = std::current_exception();
        }
        auto now = std::chrono::steady_clock::now();
        double total_ms =
            std::chrono::duration<double, std::milli>(now - job->enqueued).count();
        {
            std::lock_guard lk(mu_);
            w.busy = 0;
            --total_admitted_;
        }
        {
            std::lock_guard jk(job->m);
            job->error = err;
            job->latency_ms = total_ms;
            job->done = true;
        }
        job->cv.notify_one();
    }
}

// ---------------------------------------------------------------------------
// HttpService

struct HttpService::Impl {
    httplib::Server server;
};

HttpService::HttpService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    engine_ = std::make_unique<ClassificationEngine>(cfg_.models, cfg_.parallel_compute);
    pool_ = std::make_unique<ReplicaPool>(cfg_.replicas, cfg_.base_latency_ms,
                                          cfg_.latency_jitter_ms, cfg_.dispatch, cfg_.max_queue,
                                          cfg_.seed);
    impl_ = std::make_unique<Impl>();

    // Every admitted request parks a handler thread while its replica works,
    // so the HTTP pool must be able to hold max_queue of them plus rejects.
    int threads = std::max(16, cfg_.max_queue + 8);
    impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    impl_->server.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
        json names = json::array();
        for (const auto& n : engine_->model_names())
            names.push_back(n);
        res.set_content(names.dump(), "application/json");
    });

    impl_->server.Post("/api/classify", [this](const httplib::Request& req,
                                               httplib::Response& res) {
        auto fail = [&](int status, Errc code, const std::string& msg) {
            json err{{"error", errc_name(code)}, {"message", msg}};
            res.status = status;
            res.set_content(err.dump(), "application/json");
        };
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            fail(400, Errc::decode_error, "body is not a JSON object");
            return;
        }
        if (!body.contains("model") || !body["model"].is_string() || !body.contains("image") ||
            !body["image"].is_string()) {
            fail(400, Errc::decode_error, "required fields: model (string), image (base64)");
            return;
        }
        std::string model = body["model"];
        int k = body.value("top_k", 10);
        bool labels_only = body.value("labels_only", false);

        if (!engine_->has_model(model)) {
            fail(404, Errc::model_not_found, "model not served: " + model);
            return;
        }
        if (k != 1 && k != 3 && k != 5 && k != 10) {
            fail(422, Errc::bad_top_k, "top_k must be one of {1,3,5,10}");
            return;
        }
        std::string bytes;
        try {
            bytes = base64_decode(body["image"].get<std::string>());
        } catch (const Error& e) {
            fail(400, e.code(), e.what());
            return;
        }
        if (!cfg_.jpeg_enabled && looks_like_jpeg(bytes)) {
            fail(400, Errc::format_unsupported, "jpeg disabled on this service");
            return;
        }

        ClassificationEngine::Result result;
        ReplicaPool::Served served;
        try {
            served = pool_->run([&] { result = engine_->classify(bytes, model, k, labels_only); });
        } catch (const Error& e) {
            switch (e.code()) {
                case Errc::queue_full:
                    rejected_count_.fetch_add(1);
                    fail(503, e.code(), e.what());
                    return;
                case Errc::decode_error:
                    fail(400, e.code(), e.what());
                    return;
                case Errc::model_not_found:
                    fail(404, e.code(), e.what());
                    return;
                case Errc::bad_top_k:
                    fail(422, e.code(), e.what());
                    return;
                default:
                    fail(500, e.code(), e.what());
                    return;
            }
        } catch (const std::exception& e) {
            fail(500, Errc::io_error, e.what());
            return;
        }

        json preds = json::array();
        for (const auto& p : result.predictions) {
            json entry{{"label", p.label}};
            if (p.has_probability)
                entry["probability"] = p.probability;
            preds.push_back(std::move(entry));
        }
        json out{{"model", result.model},
                 {"predictions", std::move(preds)},
                 {"served_by", served.replica_id},
                 {"latency_ms", served.latency_ms}};
        ok_count_.fetch_add(1);
        res.set_content(out.dump(), "application/json");
    });
}

HttpService::~HttpService() { stop(); }

bool HttpService::start() {
    if (cfg_.listen_port == 0) {
        port_ = impl_->server.bind_to_any_port(cfg_.listen_host);
        if (port_ < 0)
            return false;
    } else {
        if (!impl_->server.bind_to_port(cfg_.listen_host, cfg_.listen_port))
            return false;
        port_ = cfg_.listen_port;
    }
    listen_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return true;
}

void HttpService::stop() {
    if (impl_ && impl_->server.is_running())
        impl_->server.stop();
    if (listen_thread_.joinable())
        listen_thread_.join();
}

} // namespace dba
