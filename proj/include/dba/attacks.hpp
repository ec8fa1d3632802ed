#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dba/client.hpp"
#include "dba/core.hpp"

namespace dba {

enum class AttackMethod { simba, square, bandits };
enum class AttackMode { none, horizontal, vertical };

const char* to_string(AttackMethod m);
const char* to_string(AttackMode m);
AttackMethod parse_method(const std::string& s);
AttackMode parse_mode(const std::string& s);

struct AttackParams {
    AttackMethod method = AttackMethod::square;
    NormBudget ball{Norm::Linf, 0.05};
    int batch = 1;    // candidates per iteration (vertical); 1 elsewhere
    int budget = 1000;

    double simba_step = 0.05;  // probe step added to x' when querying
    double simba_alpha = 0.05; // step accumulated into delta on acceptance

    double square_p_init = 0.4; // fraction of pixels covered by the first squares

    double bandits_delta = 0.01;    // probe scale on the sampled direction
    double bandits_eta_img = 0.1;   // image-space probe step
    double bandits_eta_eg = 0.1;    // exponentiated-gradient learning rate
    double bandits_step_frac = 0.1; // PGD step = ball.epsilon * this
};

/// Candidate images for one iteration. Pair-based methods (SimBA, Bandits)
/// emit [c0+, c0-, c1+, c1-, ...]; Square emits one candidate per square.
struct Proposal {
    std::vector<ImageTensor> candidates;
};

/// One image's attack state. Single-owner: exactly one orchestrator mutates
/// it; all parallelism lives in the client's query_batch.
struct AttackState {
    ImageTensor x;              // original (working resolution)
    ImageTensor x_adv;          // current adversarial
    std::vector<double> delta;  // accumulated perturbation, kept inside the ball
    int y = -1;                 // original top-1 class
    double tracked_loss = 0.0;  // SimBA: p_y; Square/Bandits: margin l*
    QueryBudget budget;
    Rng rng;
    AttackParams params;

    std::vector<double> accepted_trace; // tracked_loss after each accepted update
    double round_min_margin = 1.0;      // min margin over the last observed round

    // SimBA: lazily shuffled basis pool, never repeats a coordinate
    std::vector<int> coord_order;
    int coords_used = 0;
    std::vector<int> pending_coords;

    // Square
    bool stripes_done = false;
    struct SquarePatch {
        int row = 0, col = 0, side = 0;
        double sign[3] = {0, 0, 0};
    };
    std::vector<SquarePatch> pending_squares;

    // Bandits
    std::vector<double> prior_v;
    std::vector<std::vector<double>> pending_dirs;

    int coords_left() const { return static_cast<int>(coord_order.size()) - coords_used; }
};

AttackState make_attack_state(const ImageTensor& x, const AttackParams& params, uint64_t seed);

/// Draws min(b, |Q|) distinct pixel-channel coordinates and emits the
/// +step/-step probe pair for each. Throws AttackExhausted when Q is empty.
Proposal simba_propose(AttackState& st, int b);
void simba_observe(AttackState& st, std::span<const QueryResult> results);

/// Width-1 vertical stripes with per column-channel random sign; the single
/// candidate's margin becomes the initial l*.
Proposal square_init(AttackState& st);
void square_observe_init(AttackState& st, const QueryResult& result);

/// Current side fraction of the square schedule given queries spent so far.
double square_p_current(const AttackState& st);
Proposal square_propose(AttackState& st, int b);
void square_observe(AttackState& st, std::span<const QueryResult> results);

Proposal bandits_propose(AttackState& st, int b);
void bandits_observe(AttackState& st, std::span<const QueryResult> results);

struct AttackOutcome {
    int image_id = 0;
    bool success = false;
    int queries_used = 0;
    double wall_ms = 0.0;
    QuantizedImage final_image;
    int original_class = -1;
    int final_class = -1;
    int linf_u8 = 0; // final vs quantized clean, uint8 units
    std::vector<double> accepted_trace;
    std::string error;
};

/// Drives one image's propose/observe loop through the phases
/// clean -> (init) -> attack rounds -> confirmation. The clean query and the
/// success-confirmation queries are bookkeeping and not budget-counted; every
/// candidate query is. Success is only ever set by a confirmation query on
/// the exact bytes of the quantized adversarial image.
class ImageRun {
  public:
    ImageRun(int id, const ImageTensor& x, std::string model, const AttackParams& params,
             uint64_t seed);

    /// Appends this round's requests; returns how many were added (0 when done).
    size_t next_requests(std::vector<BatchRequest>& out);
    void on_results(std::span<const QueryResult> results);
    bool finished() const { return phase_ == Phase::done; }

    AttackOutcome outcome() const;
    const AttackState& state() const { return st_; }

  private:
    enum class Phase { clean, init, attack, confirm, done };

    int affordable_batch() const;
    void enter_confirm();
    void finish();

    int id_;
    std::string model_;
    Phase phase_ = Phase::clean;
    AttackState st_;
    std::vector<ImageTensor> pending_; // candidates owned until on_results
    ImageTensor confirm_image_;
    bool exhausted_ = false;
    int final_class_ = -1;
    bool success_ = false;
    size_t last_round_size_ = 0;
};

AttackOutcome run_attack(ServiceClient& client, const AttackParams& params, AttackMode mode,
                         const ImageTensor& image, const std::string& model, uint64_t seed);

/// One b=1 proposal per still-active image per round, union sent as a single
/// concurrent batch. Per-image states are seeded base_seed + index, so the
/// final images are bitwise identical to sequential runs with the same seeds.
std::vector<AttackOutcome> run_horizontal(ServiceClient& client, const AttackParams& params,
                                          std::span<const ImageTensor> images,
                                          const std::string& model, uint64_t base_seed);

} // namespace dba
