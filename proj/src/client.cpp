#include "dba/client.hpp"

#include <chrono>
#include <map>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dba/classifier.hpp"
#include "dba/codec.hpp"

namespace dba {

using json = nlohmann::json;

struct ServiceClient::Impl {
    std::vector<std::unique_ptr<httplib::Client>> slots;
    std::mutex mu; // guards slot growth only

    httplib::Client& slot(const std::string& host, int port, int i) {
        std::lock_guard lk(mu);
        if (static_cast<int>(slots.size()) <= i)
            slots.resize(i + 1);
        if (!slots[i]) {
            slots[i] = std::make_unique<httplib::Client>(host, port);
            slots[i]->set_connection_timeout(10, 0);
            slots[i]->set_read_timeout(60, 0);
            slots[i]->set_write_timeout(60, 0);
            slots[i]->set_keep_alive(true);
        }
        return *slots[i];
    }
};

ServiceClient::ServiceClient(std::string host, int port, int workers)
    : host_(std::move(host)), port_(port), workers_(std::max(1, workers)),
      impl_(std::make_unique<Impl>()) {}

ServiceClient::~ServiceClient() = default;

std::vector<std::string> ServiceClient::list_models() {
    auto& cli = impl_->slot(host_, port_, 0);
    auto res = cli.Get("/api/models");
    if (!res || res->status != 200)
        throw Error(Errc::query_failed, "GET /api/models failed");
    json body = json::parse(res->body);
    std::vector<std::string> out;
    for (const auto& n : body)
        out.push_back(n.get<std::string>());
    return out;
}

namespace {

std::string build_body(const ImageTensor& image, const std::string& model, int top_k,
                       bool labels_only) {
    QuantizedImage q = quantize(image);
    EncodedImage enc = encode_image(q, ImageFormat::png);
    json body{{"model", model},
              {"image", base64_encode(enc.bytes)},
              {"top_k", top_k},
              {"labels_only", labels_only}};
    return body.dump();
}

QueryResult parse_response(const std::string& body) {
    json res = json::parse(body, nullptr, false);
    if (res.is_discarded() || !res.contains("predictions"))
        throw Error(Errc::query_failed, "malformed classify response");
    QueryResult out;
    out.probs.assign(10, 0.0);
    out.served_by = res.value("served_by", -1);
    bool first = true;
    for (const auto& p : res["predictions"]) {
        int idx = parse_class_label(p.value("label", ""));
        if (idx < 0 || idx >= 10)
            throw Error(Errc::query_failed, "unexpected label in response");
        if (first) {
            out.top_class = idx;
            first = false;
        }
        if (p.contains("probability"))
            out.probs[idx] = p["probability"].get<double>();
    }
    return out;
}

} // namespace

QueryResult ServiceClient::send_prepared(int slot, const std::string& body,
                                         QueryBudget* budget) {
    auto& cli = impl_->slot(host_, port_, slot);
    const int max_retries = 3;
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        auto t0 = std::chrono::steady_clock::now();
        auto res = cli.Post("/api/classify", body, "application/json");
        auto t1 = std::chrono::steady_clock::now();
        if (!res) {
            last_error = "transport error " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 503) { // saturated balancer: transient
            last_error = "503 service saturated";
            continue;
        }
        if (res->status != 200)
            throw Error(Errc::query_failed,
                        "classify returned " + std::to_string(res->status) + ": " + res->body);
        QueryResult out = parse_response(res->body);
        out.rtt_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (budget)
            budget->used.fetch_add(1);
        return out;
    }
    throw Error(Errc::query_failed, "query failed after retries: " + last_error);
}

QueryResult ServiceClient::query_image(const ImageTensor& image, const std::string& model,
                                       int top_k, bool labels_only, QueryBudget* budget) {
    if (budget && budget->remaining() <= 0)
        throw Error(Errc::budget_exhausted, "query budget exhausted");
    return send_prepared(0, build_body(image, model, top_k, labels_only), budget);
}

std::vector<double> ServiceClient::query_one(const ImageTensor& image, const std::string& model,
                                             QueryBudget* budget) {
    return query_image(image, model, 10, false, budget).probs;
}

QueryBatchResult ServiceClient::query_batch(std::span<const BatchRequest> requests,
                                            bool sequential) {
    if (requests.empty())
        throw Error(Errc::contract_violation, "query_batch: empty request list");
    {
        // a batch may charge one budget several times; the whole charge must fit
        std::map<QueryBudget*, int> want;
        for (const auto& r : requests)
            if (r.budget)
                ++want[r.budget];
        for (const auto& [budget, n] : want)
            if (budget->remaining() < n)
                throw Error(Errc::budget_exhausted, "query budget exhausted before batch");
    }

    QueryBatchResult batch;
    batch.results.resize(requests.size());
    std::vector<std::exception_ptr> errors(requests.size());
    auto t0 = std::chrono::steady_clock::now();

    if (sequential) {
        for (size_t i = 0; i < requests.size(); ++i) {
            const auto& r = requests[i];
            batch.results[i] =
                send_prepared(0, build_body(*r.image, r.model, r.top_k, r.labels_only), r.budget);
        }
    } else {
        int n_workers = std::min<int>(workers_, static_cast<int>(requests.size()));
        std::atomic<size_t> next{0};
        auto worker = [&](int slot) {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= requests.size())
                    return;
                const auto& r = requests[i];
                try {
                    batch.results[i] = send_prepared(
                        slot, build_body(*r.image, r.model, r.top_k, r.labels_only), r.budget);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w)
            threads.emplace_back(worker, w);
        for (auto& t : threads)
            t.join();
        for (size_t i = 0; i < errors.size(); ++i)
            if (errors[i]) {
                try {
                    std::rethrow_exception(errors[i]);
                } catch (const Error& e) {
                    throw Error(e.code(), "batch request " + std::to_string(i) +
                                              " failed: " + e.what());
                }
            }
    }

    auto t1 = std::chrono::steady_clock::now();
    batch.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return batch;
}

std::vector<ProfileRow> ServiceClient::concurrency_profile(const ImageTensor& probe,
                                                           const std::string& model,
                                                           std::span<const int> levels,
                                                           int reps) {
    std::vector<ProfileRow> rows;
    for (int b : levels) {
        std::vector<BatchRequest> reqs(static_cast<size_t>(b),
                                       BatchRequest{&probe, model, 10, false, nullptr});
        double total = 0.0;
        for (int r = 0; r < reps; ++r)
            total += query_batch(reqs).wall_ms;
        ProfileRow row;
        row.concurrency = b;
        row.mean_total_ms = total / reps;
        row.mean_avg_ms = row.mean_total_ms / b;
        rows.push_back(row);
    }
    return rows;
}

} // namespace dba
