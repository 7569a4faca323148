#pragma once

#include <string>
#include <vector>

#include "cbire/measures.hpp"
#include "cbire/scalar_fn.hpp"

namespace cbire {

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Full CBIRE parameter set: branching (alpha, b, sigma, mu), environment
// (beta0, beta1, nu), catastrophes (r, q) and competition g.
class ModelSpec {
  public:
    double alpha = 0.0;   // immigration drift, >= 0
    double b = 0.0;       // branching drift
    double sigma = 0.0;   // branching diffusion, >= 0
    JumpMeasure mu;       // branching jumps on (0, inf)
    double beta0 = 0.0;   // environment drift
    double beta1 = 0.0;   // environment diffusion, >= 0
    JumpMeasure nu;       // environment jumps on R
    ScalarFn r;           // catastrophe rate, >= 0, Lipschitz
    double r_lipschitz = 0.0;  // declared k0
    double r_inf = 0.0;        // declared inf_{x>=0} r(x)
    CatastropheLaw q;     // factor law on [0, 1]
    ScalarFn g;           // competition, nondecreasing, g(0) = 0

    // Validates admissibility (measures, g, r, declared constants) and
    // returns the finished immutable spec.
    static ModelSpec create(ModelSpec raw);

    double gamma(double x) const { return alpha - b * x - g(x); }
    double rate(double x) const { return r(x); }

    // Branching mechanism: b*l + sigma^2 l^2 / 2 + int (e^{-lz} - 1 + lz) mu(dz).
    double phi(double lambda, const QuadOptions& opt = {}) const;

    // phi(l) + [r_inf * int (1-z) q(dz) - beta0] * l.
    double phi_tilde(double lambda, const QuadOptions& opt = {}) const;

    // H(x) = int_0^{1/x} (1 - zx)^3 (nu(d ln z) + r(x) q(dz)); the nu part is
    // integrated in the u = ln z variable over (-inf, -ln x].
    double H_of_x(double x, const QuadOptions& opt = {}) const;

    // Generalized version with small-state threshold x0 (H(x) == H(x, 1)).
    double H_of_x(double x, double x0, const QuadOptions& opt) const;

    // E(l0, len) = beta1^2 + int_{-inf}^0 (e^z-1)^2 nu + e^{-l0 (e-1) len} int_0^1 (e^z-1)^2 nu.
    double env_energy(double lambda0, double l0, const QuadOptions& opt = {}) const;

  private:
    void validate() const;
};

struct CriterionReport {
    double theta_V = 0.0;
    double limsup_term = 0.0;  // grid-tail maximum, not a proof
    double env_term = 0.0;
    double total = 0.0;
    bool holds = false;
    std::vector<double> grid;
    std::vector<double> tail_profile;  // -g(x)/x + r(x) int (z^theta - 1) q at each grid x
    std::string note;
};

std::vector<double> log_grid(double lo, double hi, int points);

// Theorem-style ergodicity criterion: the limsup is estimated as the maximum
// of the competition/catastrophe term over the tail (last quarter) of the grid.
CriterionReport ergodicity_criterion(const ModelSpec& model, double theta_V,
                                     const std::vector<double>& grid);

}  // namespace cbire
