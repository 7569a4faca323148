#include "cbire/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cbire/rng.hpp"

namespace cbire {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ModelSpec ModelSpec::create(ModelSpec raw) {
    raw.validate();
    return raw;
}

void ModelSpec::validate() const {
    if (!(alpha >= 0.0)) throw ModelError("alpha must be >= 0");
    if (!(sigma >= 0.0)) throw ModelError("sigma must be >= 0");
    if (!(beta1 >= 0.0)) throw ModelError("beta1 must be >= 0");
    if (!std::isfinite(b) || !std::isfinite(beta0)) throw ModelError("b, beta0 must be finite");

    mu.check_branching_admissible();
    nu.check_environment_admissible();
    q.validate();

    // g: nondecreasing with g(0) = 0, checked on a grid.
    if (std::abs(g(0.0)) > 1e-12) throw ModelError("competition g must satisfy g(0) = 0");
    const auto grid = log_grid(1e-4, 1e6, 200);
    double prev = g(0.0);
    for (double x : grid) {
        const double v = g(x);
        if (!std::isfinite(v)) throw ModelError("competition g not finite on the verification grid");
        if (v < prev - 1e-9 * (1.0 + std::abs(prev)))
            throw ModelError("competition g must be nondecreasing");
        prev = v;
    }

    // r: nonnegative, declared Lipschitz constant and infimum consistent.
    if (!(r_lipschitz >= 0.0)) throw ModelError("r lipschitz constant must be >= 0");
    double grid_min = kInf;
    for (double x : grid) {
        const double v = r(x);
        if (!std::isfinite(v)) throw ModelError("rate r not finite on the verification grid");
        if (v < -1e-12) throw ModelError("rate r must be nonnegative");
        grid_min = std::min(grid_min, v);
    }
    grid_min = std::min(grid_min, r(0.0));
    if (r_inf > grid_min + 1e-9 * (1.0 + std::abs(grid_min)))
        throw ModelError("declared r_inf exceeds the grid minimum of r");
    const double declared = r_lipschitz;
    const double intrinsic = r.lipschitz_bound();
    if (std::isfinite(intrinsic) && declared < intrinsic - 1e-9)
        throw ModelError("declared r lipschitz constant is below the form's slope");
    Rng rng(0x72617465u);  // fixed-seed spot checks
    for (int i = 0; i < 64; ++i) {
        const double x = rng.uniform(0.0, 50.0);
        const double y = rng.uniform(0.0, 50.0);
        if (std::abs(r(x) - r(y)) > declared * std::abs(x - y) + 1e-9)
            throw ModelError("r violates the declared Lipschitz constant on a spot check");
    }
}

double ModelSpec::phi(double lambda, const QuadOptions& opt) const {
    if (!(lambda >= 0.0)) throw ModelError("phi: lambda must be >= 0");
    double value = b * lambda + 0.5 * sigma * sigma * lambda * lambda;
    if (!mu.is_zero() && lambda > 0.0) {
        const double z_star = std::min(0.1, 1e-5 / std::max(1.0, lambda));
        value += compensated_branch_integral(
            mu, [lambda](double z) { return std::expm1(-lambda * z) + lambda * z; },
            lambda * lambda, z_star, opt);
    }
    return value;
}

double ModelSpec::phi_tilde(double lambda, const QuadOptions& opt) const {
    return phi(lambda, opt) + (r_inf * q.mean_one_minus_z() - beta0) * lambda;
}

double ModelSpec::H_of_x(double x, const QuadOptions& opt) const { return H_of_x(x, 1.0, opt); }

double ModelSpec::H_of_x(double x, double x0, const QuadOptions& opt) const {
    if (!(x > 0.0)) throw ModelError("H(x): x must be positive");
    const double cap = x0 / x;
    double value = 0.0;
    if (!nu.is_zero()) {
        const double ulim = std::log(cap);
        value += nu.integral(
            [x, x0](double u) {
                const double t = 1.0 - std::exp(u) * x / x0;
                return t > 0.0 ? t * t * t : 0.0;
            },
            -kInf, ulim, opt);
    }
    const double rx = r(x);
    if (rx > 0.0) {
        value += rx * q.integral(
                          [x, x0](double z) {
                              const double t = 1.0 - z * x / x0;
                              return t > 0.0 ? t * t * t : 0.0;
                          },
                          0.0, std::min(1.0, cap), opt);
    }
    return std::max(0.0, value);
}

double ModelSpec::env_energy(double lambda0, double l0, const QuadOptions& opt) const {
    double value = beta1 * beta1;
    if (!nu.is_zero()) {
        auto sq = [](double z) { const double d = std::expm1(z); return d * d; };
        value += nu.integral(sq, -kInf, 0.0, opt);
        value += std::exp(-lambda0 * (std::exp(1.0) - 1.0) * l0) * nu.integral(sq, 0.0, 1.0, opt);
    }
    return value;
}

std::vector<double> log_grid(double lo, double hi, int points) {
    std::vector<double> g;
    g.reserve(points);
    const double step = std::log(hi / lo) / (points - 1);
    for (int i = 0; i < points; ++i) g.push_back(lo * std::exp(step * i));
    return g;
}

CriterionReport ergodicity_criterion(const ModelSpec& model, double theta_V,
                                     const std::vector<double>& grid) {
    if (!(theta_V > 0.0 && theta_V < 1.0)) throw ModelError("theta_V must lie in (0, 1)");
    if (grid.size() < 8) throw ModelError("criterion grid too small");

    CriterionReport rep;
    rep.theta_V = theta_V;
    rep.grid = grid;
    rep.note = "limsup term is a grid-tail estimate (max over the last quarter of the grid)";

    const double q_moment = model.q.moment_z_pow_minus_one(theta_V);
    rep.tail_profile.reserve(grid.size());
    for (double x : grid) {
        const double gx = model.g(x);
        const double rx = model.r(x);
        if (!std::isfinite(gx) || !std::isfinite(rx))
            throw ModelError("criterion: g or r not finite on the grid");
        rep.tail_profile.push_back(-gx / x + rx * q_moment);
    }
    const size_t tail_start = grid.size() - grid.size() / 4;
    double limsup = -kInf;
    for (size_t i = tail_start; i < grid.size(); ++i) limsup = std::max(limsup, rep.tail_profile[i]);
    rep.limsup_term = limsup;

    double env = model.beta0 - model.b + 0.5 * (theta_V - 1.0) * model.beta1 * model.beta1;
    if (!model.nu.is_zero()) {
        env += compensated_env_integral(
            model.nu,
            [theta_V](double z) { return std::expm1(theta_V * z) - theta_V * std::expm1(z); },
            theta_V * (theta_V - 1.0), 1e-5);
    }
    rep.env_term = env;
    rep.total = rep.limsup_term + rep.env_term;
    rep.holds = rep.total < 0.0;
    return rep;
}

}  // namespace cbire
