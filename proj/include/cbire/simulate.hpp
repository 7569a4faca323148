#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cbire/model.hpp"
#include "cbire/rng.hpp"

namespace cbire {

struct SimConfig {
    double dt = 0.01;
    double t_end = 1.0;
    double eps_mu = 1e-3;   // branching-jump truncation level
    double eps_nu = 1e-3;   // environment-jump truncation level
    std::uint64_t seed = 12345;
    enum class NegativeFixup { clamp, reject_step };
    NegativeFixup negative_fixup = NegativeFixup::clamp;
    double overflow_guard = 1e12;
    int substep_jump_cap = 64;   // more jumps per step triggers step halving
    bool variance_topup = false; // Gaussian top-up for dropped small branching jumps
    int workers = 1;
    int report_stride = 0;  // grid points per reported time point; 0 = auto

    void validate() const;
};

struct StepEvents {
    double diffusion = 0.0;
    int branching_jumps = 0;
    int env_jumps = 0;
    int cat_jumps = 0;
    double compensator_drift = 0.0;
    int halvings = 0;
};

struct SamplePath {
    std::vector<double> times;
    std::vector<double> states;
    std::vector<StepEvents> events;  // empty unless recording was requested
};

struct InstabilityError : std::runtime_error {
    explicit InstabilityError(const std::string& what) : std::runtime_error(what) {}
};

struct Observable {
    std::string name;
    std::function<double(double)> fn;
};

struct EnsembleSummary {
    std::vector<double> times;
    // [observable][time] layout
    std::vector<std::vector<double>> mean, var, q05, q50, q95, se;
    std::vector<std::string> names;
    long n_paths = 0;
    long n_excluded = 0;
};

// Euler-type strong scheme for the CBIRE SDE. Within a step the order is
// fixed: drift and compensators, Gaussian increments, branching jumps,
// multiplicative environment jumps, catastrophes, negativity fixup. Only the
// simulated jump regions (sizes above the truncation levels) are compensated;
// dropped small jumps are mean-zero and enter optionally through the
// variance top-up.
class Simulator {
  public:
    Simulator(const ModelSpec& model, const SimConfig& cfg);

    const ModelSpec& model() const { return model_; }
    const SimConfig& config() const { return cfg_; }

    // One grid step of size dt (<= cfg.dt); halves internally on jump-cap or
    // dominating-rate breaches.
    double step(double x, double dt, Rng& rng, StepEvents* ev = nullptr) const;

    SamplePath simulate_path(double x0, bool record_events = false) const;
    SamplePath simulate_path(double x0, Rng& rng, bool record_events = false) const;

    EnsembleSummary simulate_ensemble(double x0, long n,
                                      const std::vector<Observable>& observables = {}) const;

    // Precomputed truncation constants (shared with the coupling simulator).
    double mass_mu_large() const { return mass_mu_large_; }
    double mean_mu_large() const { return mean_mu_large_; }
    double var_mu_small() const { return var_mu_small_; }
    double mass_nu_neg() const { return mass_nu_neg_; }
    double mass_nu_pos() const { return mass_nu_pos_; }
    double mean_expm1_nu_large() const { return mean_expm1_nu_large_; }

    double sample_mu_large(Rng& rng, bool* from_atom) const;
    double sample_nu_large(Rng& rng) const;

    // Dominating catastrophe rate for thinning over one step from state x.
    double cat_rate_bound(double x, double dt) const;

    double compensated_drift(double x) const;  // gamma + beta0 x - truncation compensators

  private:
    double attempt_step(double x, double dt, Rng& rng, StepEvents* ev, bool* redo) const;

    ModelSpec model_;
    SimConfig cfg_;
    double mass_mu_large_ = 0.0;
    double mean_mu_large_ = 0.0;
    double var_mu_small_ = 0.0;
    double mass_nu_neg_ = 0.0;
    double mass_nu_pos_ = 0.0;
    double mean_expm1_nu_large_ = 0.0;
};

// Deterministic sequence of reporting indices for an ensemble run.
std::vector<long> report_indices(long n_grid_points, int stride, long n_paths);

}  // namespace cbire
