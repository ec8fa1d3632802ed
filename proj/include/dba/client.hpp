#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dba/core.hpp"

namespace dba {

/// Per-image query allowance. `used` counts requests that received a 200;
/// the orchestrator never submits more in-flight work than `remaining()`.
struct QueryBudget {
    int limit = 1000;
    std::atomic<int> used{0};

    QueryBudget() = default;
    explicit QueryBudget(int lim) : limit(lim) {}
    QueryBudget(const QueryBudget& o) : limit(o.limit), used(o.used.load()) {}
    QueryBudget& operator=(const QueryBudget& o) {
        limit = o.limit;
        used.store(o.used.load());
        return *this;
    }
    int remaining() const { return limit - used.load(); }
};

struct QueryResult {
    std::vector<double> probs; // length 10, reconstructed from top_k=10 soft labels
    int top_class = -1;        // first prediction (server sorts desc, ties asc)
    int served_by = -1;
    double rtt_ms = 0.0;
};

struct QueryBatchResult {
    std::vector<QueryResult> results; // submission order
    double wall_ms = 0.0;
};

struct BatchRequest {
    const ImageTensor* image = nullptr;
    std::string model;
    int top_k = 10;
    bool labels_only = false;
    QueryBudget* budget = nullptr; // nullptr: bookkeeping query, not counted
};

struct ProfileRow {
    int concurrency = 0;
    double mean_total_ms = 0.0;
    double mean_avg_ms = 0.0; // mean_total / concurrency
};

/// Bounded parallel fan-out, ordered fan-in. Transient transport failures and
/// 503 rejections are retried up to 3 times with 100ms backoff.
class ServiceClient {
  public:
    ServiceClient(std::string host, int port, int workers = 8);
    ~ServiceClient();

    std::vector<std::string> list_models();

    /// quantize -> PNG -> base64 -> POST -> parse. Throws BudgetExhausted
    /// without sending when the budget is spent.
    QueryResult query_image(const ImageTensor& image, const std::string& model, int top_k,
                            bool labels_only, QueryBudget* budget);
    std::vector<double> query_one(const ImageTensor& image, const std::string& model,
                                  QueryBudget* budget);

    /// At most `workers` requests in flight; results in submission order.
    /// `sequential` forces one-at-a-time submission (non-distributed mode).
    QueryBatchResult query_batch(std::span<const BatchRequest> requests,
                                 bool sequential = false);

    /// For each level B: send B identical clean queries, `reps` times, with
    /// the configured worker count; report mean total and per-query time.
    std::vector<ProfileRow> concurrency_profile(const ImageTensor& probe,
                                                const std::string& model,
                                                std::span<const int> levels, int reps = 10);

    int workers() const { return workers_; }

  private:
    struct Impl;
    QueryResult send_prepared(int slot, const std::string& body, QueryBudget* budget);

    std::string host_;
    int port_;
    int workers_;
    std::unique_ptr<Impl> impl_;
};

} // namespace dba
