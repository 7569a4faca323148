#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cbire/quadrature.hpp"
#include "cbire/rng.hpp"

namespace cbire {

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct Atom {
    double location = 0.0;
    double mass = 0.0;
};

// A jump measure on an interval of the real line: nonnegative density plus a
// finite list of atoms. Instances are immutable after construction and safe
// to share across threads; samplers draw from an externally owned Rng.
class JumpMeasure {
  public:
    JumpMeasure() = default;  // the zero measure

    static JumpMeasure zero();
    static JumpMeasure exponential(double c, double beta);
    // c * z^{-1-a} * exp(-beta z) on (0, inf). Infinite activity for a >= 0.
    static JumpMeasure power_law_cutoff(double c, double a, double beta);
    static JumpMeasure two_sided_exponential(double c_plus, double beta_plus,
                                             double c_minus, double beta_minus);
    static JumpMeasure two_sided_power_law_cutoff(double c_plus, double a_plus, double beta_plus,
                                                  double c_minus, double a_minus, double beta_minus);
    static JumpMeasure from_atoms(std::vector<Atom> atoms);

    JumpMeasure with_atoms(std::vector<Atom> atoms) const;

    const std::string& family() const { return family_; }
    bool has_density() const { return static_cast<bool>(density_); }
    bool singular_at_zero() const { return singular_at_zero_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    double support_lo() const { return support_lo_; }
    double support_hi() const { return support_hi_; }
    bool is_zero() const { return !has_density() && atoms_.empty(); }

    // Density value; zero outside the support.
    double density(double z) const;

    // integral of f against the density part over (a, b) (clipped to the
    // support). Splits at 0/±1 and log-substitutes toward 0 so that power-law
    // singularities integrate accurately.
    double density_integral(const std::function<double(double)>& f, double a, double b,
                            const QuadOptions& opt = {}) const;

    // Density + atoms. Atoms with a <= location <= b are included.
    double integral(const std::function<double(double)>& f, double a, double b,
                    const QuadOptions& opt = {}) const;

    // Mass of the measure restricted to [a, b]; the quadrature error estimate
    // stays below the configured tolerance or NumericError is thrown.
    double truncated_mass(double a, double b, const QuadOptions& opt = {}) const;

    // Point distributed as the normalized restriction to [a, b].
    double sample_restricted(double a, double b, Rng& rng) const;
    // As above, also reporting whether the draw came from an atom (the
    // refined basic coupling thins only density jumps).
    double sample_restricted_tagged(double a, double b, Rng& rng, bool* from_atom) const;

    // mu_x(R+) = integral of min(m(z), m(z-x)) over the density support.
    // Atoms are excluded; x = 0 returns the density total mass (possibly
    // +infinity for infinite-activity families).
    double overlap_mass(double x, const QuadOptions& opt = {}) const;

    // integral of g against the overlap measure mu_x (density part only):
    // integral g(z) min(m(z), m(z-x)) dz. Requires x != 0.
    double overlap_integral(double x, const std::function<double(double)>& g,
                            const QuadOptions& opt = {}) const;

    // rho(x, z) = min(m(z), m(z-x)) / m(z), in [0, 1]; rho(0, z) = 1.
    // Density-free measures use the mu_x == 0 convention (rho = 0 for x != 0).
    double rho(double x, double z) const;

    // Total mass of the density part (may be +infinity).
    double density_total_mass() const;

    struct TailCheck {
        double value = 0.0;
        bool diverges = false;
    };
    // integral of f over (0, b] probed with shrinking lower cutoffs; flags
    // divergence instead of trusting a single quadrature call.
    TailCheck refine_lower(const std::function<double(double)>& f, double b) const;
    // Same idea for the upper tail (b, +inf) with growing cutoffs.
    TailCheck refine_upper(const std::function<double(double)>& f, double a) const;

    // Admissibility of a branching measure: integral (z ^ z^2) mu(dz) < inf.
    void check_branching_admissible() const;
    // Admissibility of an environment measure:
    // integral_{-1}^{1} z^2 nu(dz) + integral_{|z|>1} |e^z - 1| nu(dz) < inf.
    void check_environment_admissible() const;

  private:
    struct CdfTable;
    std::shared_ptr<const CdfTable> sampler_table() const;

    std::string family_ = "zero";
    double support_lo_ = 0.0;
    double support_hi_ = 0.0;
    std::function<double(double)> density_;
    std::vector<Atom> atoms_;
    bool singular_at_zero_ = false;

    // Copies share the lazily built table; all slot access goes through the mutex.
    mutable std::shared_ptr<std::mutex> table_mutex_ = std::make_shared<std::mutex>();
    mutable std::shared_ptr<std::shared_ptr<const CdfTable>> table_slot_ =
        std::make_shared<std::shared_ptr<const CdfTable>>();
};

// integral of bracket against mu over (0, inf) for brackets that vanish to
// second order at 0: bracket(z) ~ (curvature/2) z^2. Below z_star the
// quadratic term replaces the bracket, which sidesteps the catastrophic
// cancellation that otherwise gets amplified by singular densities.
double compensated_branch_integral(const JumpMeasure& mu,
                                   const std::function<double(double)>& bracket,
                                   double curvature, double z_star,
                                   const QuadOptions& opt = {});

// Same over R against an environment measure, with
// bracket(z) ~ (curvature/2) (e^z - 1)^2 near 0.
double compensated_env_integral(const JumpMeasure& nu,
                                const std::function<double(double)>& bracket, double curvature,
                                double w_star, const QuadOptions& opt = {});

// Catastrophe factor law: a probability measure on [0, 1], atoms plus an
// optional density. Total mass must be 1 within 1e-12.
class CatastropheLaw {
  public:
    CatastropheLaw() : atoms_{{1.0, 1.0}} {}  // the no-op factor law, delta_1

    static CatastropheLaw from_atoms(std::vector<Atom> atoms);
    static CatastropheLaw uniform();
    static CatastropheLaw dirac(double z) { return from_atoms({{z, 1.0}}); }

    const std::vector<Atom>& atoms() const { return atoms_; }
    bool has_density() const { return static_cast<bool>(density_); }

    void validate() const;  // mass = 1 +- 1e-12, support in [0, 1]

    double integral(const std::function<double(double)>& f, double a = 0.0, double b = 1.0,
                    const QuadOptions& opt = {}) const;
    double mass(double a, double b) const;

    // Cached moments used throughout the constant pipeline.
    double mean_one_minus_z() const { return mean_one_minus_z_; }
    double moment_z_pow_minus_one(double theta) const;  // integral (z^theta - 1) q(dz)

    double sample(Rng& rng) const;

  private:
    std::vector<Atom> atoms_;
    std::function<double(double)> density_;
    double density_mass_ = 0.0;
    double mean_one_minus_z_ = 0.0;
    void finalize();
};

}  // namespace cbire
