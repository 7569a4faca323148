#pragma once

#include <vector>

#include "cbire/simulate.hpp"

namespace cbire {

struct CouplingConfig : SimConfig {
    // Coalescence threshold on |x - y|; 0 resolves to 1e-9 (1 + x0 v y0).
    double match_tol = 0.0;

    double resolved_match_tol(double x0, double y0) const {
        return match_tol > 0.0 ? match_tol : 1e-9 * (1.0 + std::max(x0, y0));
    }
};

// Branching-jump classification, one tag per menu row.
enum class BranchTag { coalesce = 0, reflect = 1, common = 2, x_only = 3, y_only = 4 };

struct CoupledStepEvents {
    int branch_counts[5] = {0, 0, 0, 0, 0};  // indexed by BranchTag
    int env_jumps = 0;
    int cat_common = 0, cat_x_only = 0, cat_y_only = 0;
    int reclassified = 0;  // reflected jumps turned common by the nonnegativity guard
    int halvings = 0;
};

struct CoupledPath {
    std::vector<double> times;
    std::vector<double> x_states, y_states;
    double T = std::numeric_limits<double>::infinity();  // +inf = never coalesced
    std::vector<CoupledStepEvents> events;               // empty unless requested
};

// Markov coupling of two copies of the SDE: reflected Brownian increments
// until the coalescence time, refined basic coupling for branching jumps
// (thinned by rho), synchronous environment jumps, basic coupling for
// catastrophes. After coalescence the pair is identified and one copy evolves.
class CouplingSimulator {
  public:
    CouplingSimulator(const ModelSpec& model, const CouplingConfig& cfg);

    const Simulator& marginal() const { return sim_; }
    const CouplingConfig& config() const { return cfg_; }

    // One pre-coalescence step; requires x != y. A sign change of x - y
    // through the drift/diffusion phase means the continuous pair hit the
    // diagonal inside the step, so the pair leaves merged (jumps can cross
    // the diagonal without hitting it and do not merge).
    std::pair<double, double> coupled_step(double x, double y, double dt, Rng& rng,
                                           CoupledStepEvents* ev = nullptr) const;

    CoupledPath simulate_coupled(double x0, double y0, bool record_events = false) const;
    CoupledPath simulate_coupled(double x0, double y0, Rng& rng, bool record_events = false) const;

  private:
    std::pair<double, double> attempt(double x, double y, double dt, Rng& rng,
                                      CoupledStepEvents* ev, bool* redo, bool* crossed) const;

    Simulator sim_;
    CouplingConfig cfg_;
};

struct CoalescenceRow {
    double x0 = 0.0, y0 = 0.0;
    std::vector<double> times;       // grid
    std::vector<double> p_coupled;   // P(T <= t)
    double mean_T = 0.0;             // over coupled pairs
    double median_T = 0.0;
    double frac_uncoupled = 0.0;     // by t_end
    long n = 0;
};

std::vector<CoalescenceRow> coalescence_stats(const ModelSpec& model,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              long n, const CouplingConfig& cfg);

}  // namespace cbire
