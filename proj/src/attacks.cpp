#include "dba/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dba {

const char* to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::simba: return "simba";
        case AttackMethod::square: return "square";
        case AttackMethod::bandits: return "bandits";
    }
    return "?";
}

const char* to_string(AttackMode m) {
    switch (m) {
        case AttackMode::none: return "none";
        case AttackMode::horizontal: return "horizontal";
        case AttackMode::vertical: return "vertical";
    }
    return "?";
}

AttackMethod parse_method(const std::string& s) {
    if (s == "simba")
        return AttackMethod::simba;
    if (s == "square")
        return AttackMethod::square;
    if (s == "bandits")
        return AttackMethod::bandits;
    throw Error(Errc::config_error, "unknown method: " + s);
}

AttackMode parse_mode(const std::string& s) {
    if (s == "none")
        return AttackMode::none;
    if (s == "horizontal")
        return AttackMode::horizontal;
    if (s == "vertical")
        return AttackMode::vertical;
    throw Error(Errc::config_error, "unknown mode: " + s);
}

AttackState make_attack_state(const ImageTensor& x, const AttackParams& params, uint64_t seed) {
    AttackState st;
    st.x = x;
    st.x_adv = x;
    st.delta.assign(x.size(), 0.0);
    st.budget.limit = params.budget;
    st.rng = Rng{seed};
    st.params = params;
    if (params.method == AttackMethod::simba) {
        st.coord_order.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i)
            st.coord_order[i] = static_cast<int>(i);
    } else if (params.method == AttackMethod::bandits) {
        st.prior_v.assign(x.size(), 0.0);
    }
    return st;
}

// ---------------------------------------------------------------------------
// SimBA

Proposal simba_propose(AttackState& st, int b) {
    if (st.coords_left() == 0)
        throw Error(Errc::attack_exhausted, "simba: basis exhausted");
    int n = std::min(b, st.coords_left());
    Proposal prop;
    prop.candidates.reserve(2 * n);
    st.pending_coords.clear();
    for (int j = 0; j < n; ++j) {
        // without replacement: incremental Fisher-Yates over the index pool
        int i = st.coords_used + static_cast<int>(rng_below(st.rng, st.coords_left()));
        std::swap(st.coord_order[st.coords_used], st.coord_order[i]);
        int coord = st.coord_order[st.coords_used];
        ++st.coords_used;
        st.pending_coords.push_back(coord);

        ImageTensor plus = st.x_adv;
        plus.data[coord] = std::clamp(plus.data[coord] + st.params.simba_step, 0.0, 1.0);
        ImageTensor minus = st.x_adv;
        minus.data[coord] = std::clamp(minus.data[coord] - st.params.simba_step, 0.0, 1.0);
        prop.candidates.push_back(std::move(plus));
        prop.candidates.push_back(std::move(minus));
    }
    return prop;
}

void simba_observe(AttackState& st, std::span<const QueryResult> results) {
    if (results.size() != 2 * st.pending_coords.size())
        throw Error(Errc::contract_violation, "simba_observe: result count mismatch");
    const double pre_py = st.tracked_loss;
    double best_accepted = pre_py;
    bool any = false;
    st.round_min_margin = 1.0;
    for (size_t j = 0; j < st.pending_coords.size(); ++j) {
        const auto& rp = results[2 * j];
        const auto& rm = results[2 * j + 1];
        st.round_min_margin = std::min({st.round_min_margin, margin_loss(rp.probs, st.y),
                                        margin_loss(rm.probs, st.y)});
        double pp = rp.probs[st.y];
        double pm = rm.probs[st.y];
        int coord = st.pending_coords[j];
        // each pair is judged against the pre-round p_y, independently
        if (pp < pre_py) {
            st.delta[coord] += st.params.simba_alpha;
            best_accepted = std::min(best_accepted, pp);
            any = true;
        } else if (pm < pre_py) {
            st.delta[coord] -= st.params.simba_alpha;
            best_accepted = std::min(best_accepted, pm);
            any = true;
        }
    }
    st.pending_coords.clear();
    project(st.delta, st.params.ball);
    st.x_adv = apply_delta(st.x, st.delta);
    if (any) {
        st.tracked_loss = best_accepted;
        st.accepted_trace.push_back(best_accepted);
    }
}

// ---------------------------------------------------------------------------
// Square

Proposal square_init(AttackState& st) {
    const double eps = st.params.ball.epsilon;
    const auto& x = st.x;
    std::fill(st.delta.begin(), st.delta.end(), 0.0);
    for (int col = 0; col < x.width; ++col) {
        for (int c = 0; c < x.channels; ++c) {
            double s = rng_below(st.rng, 2) == 0 ? -eps : eps;
            for (int row = 0; row < x.height; ++row)
                st.delta[(static_cast<size_t>(row) * x.width + col) * x.channels + c] = s;
        }
    }
    project(st.delta, st.params.ball);
    st.x_adv = apply_delta(st.x, st.delta);
    st.stripes_done = true;
    Proposal prop;
    prop.candidates.push_back(st.x_adv);
    return prop;
}

void square_observe_init(AttackState& st, const QueryResult& result) {
    double l = margin_loss(result.probs, st.y);
    st.tracked_loss = l;
    st.accepted_trace.push_back(l);
    st.round_min_margin = l;
}

double square_p_current(const AttackState& st) {
    static constexpr double fractions[] = {0.001, 0.005, 0.02, 0.10, 0.20, 0.40, 0.60, 0.80};
    double used = st.budget.used.load();
    double limit = std::max(1, st.budget.limit);
    double p = st.params.square_p_init;
    for (double f : fractions)
        if (used >= f * limit)
            p *= 0.5;
    return p;
}

Proposal square_propose(AttackState& st, int b) {
    if (!st.stripes_done)
        throw Error(Errc::contract_violation, "square_propose: not initialized");
    const auto& x = st.x;
    const double eps = st.params.ball.epsilon;
    const double p = square_p_current(st);
    int side = static_cast<int>(
        std::lround(std::sqrt(p * static_cast<double>(x.height) * x.width)));
    side = std::clamp(side, 1, std::min(x.height, x.width));

    Proposal prop;
    prop.candidates.reserve(b);
    st.pending_squares.clear();
    std::vector<double> cand_delta;
    for (int j = 0; j < b; ++j) {
        AttackState::SquarePatch patch;
        patch.side = side;
        patch.row = static_cast<int>(rng_below(st.rng, x.height - side + 1));
        patch.col = static_cast<int>(rng_below(st.rng, x.width - side + 1));
        for (int c = 0; c < x.channels; ++c)
            patch.sign[c] = rng_below(st.rng, 2) == 0 ? -eps : eps;

        // squares overwrite the accumulated delta rather than adding to it
        cand_delta = st.delta;
        for (int r = 0; r < side; ++r)
            for (int cl = 0; cl < side; ++cl)
                for (int c = 0; c < x.channels; ++c)
                    cand_delta[(static_cast<size_t>(patch.row + r) * x.width + patch.col + cl) *
                                   x.channels +
                               c] = patch.sign[c];
        project(cand_delta, st.params.ball);
        prop.candidates.push_back(apply_delta(st.x, cand_delta));
        st.pending_squares.push_back(patch);
    }
    return prop;
}

void square_observe(AttackState& st, std::span<const QueryResult> results) {
    if (results.size() != st.pending_squares.size())
        throw Error(Errc::contract_violation, "square_observe: result count mismatch");
    st.round_min_margin = 1.0;
    for (size_t j = 0; j < results.size(); ++j) {
        double l = margin_loss(results[j].probs, st.y);
        st.round_min_margin = std::min(st.round_min_margin, l);
        if (l < st.tracked_loss) {
            const auto& patch = st.pending_squares[j];
            for (int r = 0; r < patch.side; ++r)
                for (int cl = 0; cl < patch.side; ++cl)
                    for (int c = 0; c < st.x.channels; ++c)
                        st.delta[(static_cast<size_t>(patch.row + r) * st.x.width + patch.col +
                                  cl) *
                                     st.x.channels +
                                 c] = patch.sign[c];
            project(st.delta, st.params.ball);
            st.x_adv = apply_delta(st.x, st.delta);
            st.tracked_loss = l;
            st.accepted_trace.push_back(l);
        }
    }
    st.pending_squares.clear();
}

// ---------------------------------------------------------------------------
// Bandits

Proposal bandits_propose(AttackState& st, int b) {
    const size_t d = st.x.size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double eta = st.params.bandits_eta_img;
    const double dp = st.params.bandits_delta;

    Proposal prop;
    prop.candidates.reserve(2 * b);
    st.pending_dirs.clear();
    std::vector<double> cand_delta(d);
    for (int j = 0; j < b; ++j) {
        std::vector<double> u(d);
        for (double& v : u)
            v = rng_gaussian(st.rng) * inv_sqrt_d;
        for (int sign : {+1, -1}) {
            for (size_t i = 0; i < d; ++i)
                cand_delta[i] = st.delta[i] + eta * (st.prior_v[i] + sign * dp * u[i]);
            // probes must stay inside the ball: every query we send obeys it
            project(cand_delta, st.params.ball);
            prop.candidates.push_back(apply_delta(st.x, cand_delta));
        }
        st.pending_dirs.push_back(std::move(u));
    }
    return prop;
}

namespace {
inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
} // namespace

void bandits_observe(AttackState& st, std::span<const QueryResult> results) {
    if (results.size() != 2 * st.pending_dirs.size())
        throw Error(Errc::contract_violation, "bandits_observe: result count mismatch");
    const double n = static_cast<double>(st.pending_dirs.size());
    const double h = st.params.ball.epsilon * st.params.bandits_step_frac;
    const double eta_eg = st.params.bandits_eta_eg;
    const double denom = st.params.bandits_delta * st.params.bandits_eta_img;

    st.round_min_margin = 1.0;
    for (size_t j = 0; j < st.pending_dirs.size(); ++j) {
        double lp = margin_loss(results[2 * j].probs, st.y);
        double lm = margin_loss(results[2 * j + 1].probs, st.y);
        st.round_min_margin = std::min({st.round_min_margin, lp, lm});
        double coef = (lp - lm) / denom;
        const auto& u = st.pending_dirs[j];
        // EG step: logit(p_v) += 2*eta_eg*g, i.e. v = tanh(atanh(v) + eta_eg*g),
        // with g the per-sample margin-gradient estimate / n_batch
        for (size_t i = 0; i < u.size(); ++i) {
            double g = coef * u[i] / n;
            double v = std::clamp(st.prior_v[i], -1.0 + 1e-15, 1.0 - 1e-15);
            st.prior_v[i] = std::tanh(std::atanh(v) + eta_eg * g);
        }
        // PGD step descends the margin loss along the prior
        for (size_t i = 0; i < st.delta.size(); ++i)
            st.delta[i] -= (h / n) * sgn(st.prior_v[i]);
        project(st.delta, st.params.ball);
        st.x_adv = apply_delta(st.x, st.delta);
    }
    st.pending_dirs.clear();
    double l_now = std::min(st.round_min_margin, st.tracked_loss);
    if (l_now < st.tracked_loss) {
        st.tracked_loss = l_now;
        st.accepted_trace.push_back(l_now);
    }
}

// ---------------------------------------------------------------------------
// ImageRun

ImageRun::ImageRun(int id, const ImageTensor& x, std::string model, const AttackParams& params,
                   uint64_t seed)
    : id_(id), model_(std::move(model)), st_(make_attack_state(x, params, seed)) {}

int ImageRun::affordable_batch() const {
    int remaining = st_.budget.remaining();
    int b = std::max(1, st_.params.batch);
    switch (st_.params.method) {
        case AttackMethod::square:
            return std::min(b, remaining);
        case AttackMethod::simba:
            return std::min({b, remaining / 2, st_.coords_left()});
        case AttackMethod::bandits:
            return std::min(b, remaining / 2);
    }
    return 0;
}

size_t ImageRun::next_requests(std::vector<BatchRequest>& out) {
    switch (phase_) {
        case Phase::clean:
            out.push_back(BatchRequest{&st_.x, model_, 10, false, nullptr});
            last_round_size_ = 1;
            return 1;
        case Phase::init: {
            Proposal prop = square_init(st_);
            pending_ = std::move(prop.candidates);
            out.push_back(BatchRequest{&pending_[0], model_, 10, false, &st_.budget});
            last_round_size_ = 1;
            return 1;
        }
        case Phase::attack: {
            int b = affordable_batch();
            if (b <= 0) {
                exhausted_ = true;
                enter_confirm();
                return next_requests(out);
            }
            Proposal prop;
            switch (st_.params.method) {
                case AttackMethod::simba: prop = simba_propose(st_, b); break;
                case AttackMethod::square: prop = square_propose(st_, b); break;
                case AttackMethod::bandits: prop = bandits_propose(st_, b); break;
            }
            pending_ = std::move(prop.candidates);
            for (const auto& cand : pending_)
                out.push_back(BatchRequest{&cand, model_, 10, false, &st_.budget});
            last_round_size_ = pending_.size();
            return pending_.size();
        }
        case Phase::confirm:
            out.push_back(BatchRequest{&confirm_image_, model_, 1, false, nullptr});
            last_round_size_ = 1;
            return 1;
        case Phase::done:
            return 0;
    }
    return 0;
}

void ImageRun::enter_confirm() {
    // exact bytes of the quantized adversarial: quantize(dequantize(q)) == q
    confirm_image_ = dequantize(quantize(st_.x_adv));
    phase_ = Phase::confirm;
}

void ImageRun::finish() { phase_ = Phase::done; }

void ImageRun::on_results(std::span<const QueryResult> results) {
    if (results.size() != last_round_size_)
        throw Error(Errc::contract_violation, "ImageRun: result count mismatch");
    switch (phase_) {
        case Phase::clean: {
            const auto& r = results[0];
            st_.y = r.top_class; // server sorts descending, ties to lowest index
            st_.tracked_loss = st_.params.method == AttackMethod::simba
                                   ? r.probs[st_.y]
                                   : margin_loss(r.probs, st_.y);
            if (st_.params.method == AttackMethod::simba)
                st_.accepted_trace.push_back(st_.tracked_loss);
            phase_ = st_.params.method == AttackMethod::square ? Phase::init : Phase::attack;
            return;
        }
        case Phase::init: {
            square_observe_init(st_, results[0]);
            pending_.clear();
            if (st_.round_min_margin < 0.0)
                enter_confirm();
            else
                phase_ = Phase::attack;
            return;
        }
        case Phase::attack: {
            switch (st_.params.method) {
                case AttackMethod::simba: simba_observe(st_, results); break;
                case AttackMethod::square: square_observe(st_, results); break;
                case AttackMethod::bandits: bandits_observe(st_, results); break;
            }
            pending_.clear();
            if (st_.round_min_margin < 0.0)
                enter_confirm();
            return;
        }
        case Phase::confirm: {
            final_class_ = results[0].top_class;
            if (final_class_ != st_.y) {
                success_ = true;
                finish();
            } else if (exhausted_ || affordable_batch() <= 0) {
                finish();
            } else {
                phase_ = Phase::attack;
            }
            return;
        }
        case Phase::done:
            throw Error(Errc::contract_violation, "ImageRun: results after completion");
    }
}

AttackOutcome ImageRun::outcome() const {
    AttackOutcome out;
    out.image_id = id_;
    out.success = success_;
    out.queries_used = st_.budget.used.load();
    out.final_image = quantize(st_.x_adv);
    out.original_class = st_.y;
    out.final_class = final_class_;
    QuantizedImage clean_q = quantize(st_.x);
    int linf = 0;
    for (size_t i = 0; i < clean_q.data.size(); ++i)
        linf = std::max(linf, std::abs(static_cast<int>(out.final_image.data[i]) -
                                       static_cast<int>(clean_q.data[i])));
    out.linf_u8 = linf;
    out.accepted_trace = st_.accepted_trace;
    return out;
}

// ---------------------------------------------------------------------------
// drivers

AttackOutcome run_attack(ServiceClient& client, const AttackParams& params, AttackMode mode,
                         const ImageTensor& image, const std::string& model, uint64_t seed) {
    if (mode == AttackMode::horizontal)
        throw Error(Errc::contract_violation, "run_attack: use run_horizontal");
    AttackParams p = params;
    if (mode == AttackMode::none)
        p.batch = 1;
    ImageRun run(0, image, model, p, seed);
    std::vector<BatchRequest> reqs;
    auto t0 = std::chrono::steady_clock::now();
    while (!run.finished()) {
        reqs.clear();
        if (run.next_requests(reqs) == 0)
            break;
        QueryBatchResult batch = client.query_batch(reqs, /*sequential=*/mode == AttackMode::none);
        run.on_results(batch.results);
    }
    auto t1 = std::chrono::steady_clock::now();
    AttackOutcome out = run.outcome();
    out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return out;
}

std::vector<AttackOutcome> run_horizontal(ServiceClient& client, const AttackParams& params,
                                          std::span<const ImageTensor> images,
                                          const std::string& model, uint64_t base_seed) {
    AttackParams p = params;
    p.batch = 1; // horizontal keeps each image's per-round footprint at b=1
    std::vector<std::unique_ptr<ImageRun>> runs;
    runs.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i)
        runs.push_back(std::make_unique<ImageRun>(static_cast<int>(i), images[i], model, p,
                                                  base_seed + i));

    std::vector<AttackOutcome> outcomes(images.size());
    std::vector<bool> recorded(images.size(), false);
    auto t0 = std::chrono::steady_clock::now();

    std::vector<BatchRequest> reqs;
    std::vector<std::pair<size_t, size_t>> slices; // (run index, request count)
    for (;;) {
        reqs.clear();
        slices.clear();
        for (size_t i = 0; i < runs.size(); ++i) {
            if (runs[i]->finished())
                continue;
            size_t n = runs[i]->next_requests(reqs);
            if (n > 0)
                slices.emplace_back(i, n);
        }
        if (reqs.empty())
            break;
        QueryBatchResult batch = client.query_batch(reqs); // concurrent union
        size_t offset = 0;
        for (const auto& [i, n] : slices) {
            runs[i]->on_results(
                std::span<const QueryResult>(batch.results.data() + offset, n));
            offset += n;
            if (runs[i]->finished() && !recorded[i]) {
                auto now = std::chrono::steady_clock::now();
                outcomes[i] = runs[i]->outcome();
                outcomes[i].wall_ms =
                    std::chrono::duration<double, std::milli>(now - t0).count();
                recorded[i] = true;
            }
        }
    }
    for (size_t i = 0; i < runs.size(); ++i) {
        if (!recorded[i]) {
            outcomes[i] = runs[i]->outcome();
            auto now = std::chrono::steady_clock::now();
            outcomes[i].wall_ms = std::chrono::duration<double, std::milli>(now - t0).count();
        }
    }
    return outcomes;
}

} // namespace dba
