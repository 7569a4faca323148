#include "cbire/generator.hpp"

#include <cmath>
#include <limits>

namespace cbire {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const QuadOptions kGenOpt{1e-11, 1e-10, 4000};

// (1+u)^theta - 1 - theta*u without cancellation for small |u|; u > -1.
inline double pow1p_expansion(double u, double theta) {
    const double l = std::log1p(u);
    const double d = theta * l;
    return (std::expm1(d) - d) + theta * (l - u);
}

}  // namespace

void TestFunction1D::check_consistency(double lo, double hi, Rng& rng, int points) const {
    for (int i = 0; i < points; ++i) {
        const double x = rng.uniform(lo, hi);
        const double h = 1e-5 * std::max(1.0, std::abs(x));
        const double d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        const double d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        const double scale1 = std::max(1e-6, std::abs(df(x)));
        const double scale2 = std::max(1e-3, std::abs(d2f(x)));
        if (std::abs(d1 - df(x)) / scale1 > 1e-4)
            throw ModelError("test function first derivative inconsistent at x=" + std::to_string(x));
        if (std::abs(d2 - d2f(x)) / scale2 > 5e-3)
            throw ModelError("test function second derivative inconsistent at x=" + std::to_string(x));
    }
}

double apply_L(const ModelSpec& model, const TestFunction1D& f, double x) {
    if (!(x >= 0.0)) throw ModelError("apply_L: x must be >= 0");
    const double fx = f.f(x), dfx = f.df(x), d2fx = f.d2f(x);

    // The integrands cancel values of size |f(x)| internally, so the
    // achievable absolute accuracy scales with that magnitude.
    QuadOptions opt = kGenOpt;
    opt.abs_tol = kGenOpt.abs_tol * (1.0 + std::abs(fx));

    double out = model.gamma(x) * dfx + 0.5 * model.sigma * model.sigma * x * d2fx;
    if (!model.mu.is_zero() && x > 0.0) {
        const double z_star = std::min(1e-5 * (1.0 + x), 0.1);
        out += x * compensated_branch_integral(
                       model.mu, [&](double z) { return f.f(x + z) - fx - z * dfx; }, d2fx,
                       z_star, opt);
    }
    out += model.beta0 * x * dfx + 0.5 * model.beta1 * model.beta1 * x * x * d2fx;
    if (!model.nu.is_zero() && x > 0.0) {
        out += compensated_env_integral(
            model.nu,
            [&](double z) { return f.f(x * std::exp(z)) - fx - x * std::expm1(z) * dfx; },
            x * x * d2fx, 1e-5, opt);
    }
    const double rx = model.r(x);
    if (rx != 0.0) {
        out += rx * model.q.integral([&](double z) { return f.f(z * x) - fx; }, 0.0, 1.0, kGenOpt);
    }
    return out;
}

double apply_L_coupled(const ModelSpec& model, const TestFunction2D& f, double x, double y) {
    if (!(x >= 0.0) || !(y >= 0.0)) throw ModelError("apply_L_coupled: states must be >= 0");
    if (x == y) throw ModelError("apply_L_coupled: evaluation on the diagonal");

    const double U = x - y;
    const double w = std::min(x, y);
    const double fv = f.f(x, y);
    const double fx = f.fx(x, y), fy = f.fy(x, y);
    const double fxx = f.fxx(x, y), fyy = f.fyy(x, y), fxy = f.fxy(x, y);
    const double s2 = model.sigma * model.sigma;
    const double b12 = model.beta1 * model.beta1;

    // off-diagonal f values set the cancellation scale of every jump integrand
    QuadOptions opt = kGenOpt;
    opt.abs_tol = kGenOpt.abs_tol * (1.0 + std::abs(fv));

    double out = model.gamma(x) * fx + model.gamma(y) * fy;
    out += 0.5 * s2 * (x * fxx + y * fyy) - s2 * std::sqrt(x * y) * fxy;

    if (!model.mu.is_zero()) {
        // refined basic coupling, simplified form
        if (w > 0.0 && model.mu.has_density()) {
            out += 0.5 * w *
                   model.mu.overlap_integral(
                       -U, [&](double z) { return f.f(x + z, x + z) - f.f(x + z, y + z); },
                       opt);
            out += 0.5 * w *
                   model.mu.overlap_integral(
                       U, [&](double z) { return f.f(x + z, 2.0 * y - x + z) - f.f(x + z, y + z); },
                       opt);
        }
        const double z_star = std::min(1e-5 * (1.0 + w), 0.1);
        if (w > 0.0) {
            out += w * compensated_branch_integral(
                           model.mu,
                           [&](double z) { return f.f(x + z, y + z) - fv - z * fx - z * fy; },
                           fxx + 2.0 * fxy + fyy, z_star, opt);
        }
        if (U > 0.0) {
            out += U * compensated_branch_integral(
                           model.mu, [&](double z) { return f.f(x + z, y) - fv - z * fx; }, fxx,
                           z_star, opt);
        } else if (U < 0.0) {
            out += -U * compensated_branch_integral(
                            model.mu, [&](double z) { return f.f(x, y + z) - fv - z * fy; }, fyy,
                            z_star, opt);
        }
    }

    out += model.beta0 * (x * fx + y * fy);
    out += 0.5 * b12 * (x * x * fxx + y * y * fyy) - b12 * x * y * fxy;
    if (!model.nu.is_zero()) {
        out += compensated_env_integral(
            model.nu,
            [&](double z) {
                const double e = std::exp(z);
                return f.f(x * e, y * e) - fv - std::expm1(z) * (x * fx + y * fy);
            },
            x * x * fxx + 2.0 * x * y * fxy + y * y * fyy, 1e-5, opt);
    }

    const double rx = model.r(x), ry = model.r(y);
    const double rmin = std::min(rx, ry);
    if (rmin > 0.0)
        out += rmin * model.q.integral([&](double z) { return f.f(z * x, z * y) - fv; }, 0.0, 1.0,
                                       opt);
    if (rx > ry)
        out += (rx - ry) *
               model.q.integral([&](double z) { return f.f(z * x, y) - fv; }, 0.0, 1.0, opt);
    else if (ry > rx)
        out += (ry - rx) *
               model.q.integral([&](double z) { return f.f(x, z * y) - fv; }, 0.0, 1.0, opt);
    return out;
}

double lyapunov_LV(const ModelSpec& model, double theta_V, double x, const QuadOptions& opt) {
    const double t = theta_V;
    const double V = std::pow(1.0 + x, t);
    double ratio = t * (model.gamma(x) + model.beta0 * x) / (x + 1.0);
    ratio += 0.5 * t * (t - 1.0) * (model.sigma * model.sigma * x +
                                    model.beta1 * model.beta1 * x * x) /
             ((x + 1.0) * (x + 1.0));
    if (!model.mu.is_zero() && x > 0.0) {
        const double z_star = std::min(1e-5 * (1.0 + x), 0.1);
        ratio += x * compensated_branch_integral(
                         model.mu, [&](double z) { return pow1p_expansion(z / (x + 1.0), t); },
                         t * (t - 1.0) / ((x + 1.0) * (x + 1.0)), z_star, opt);
    }
    if (!model.nu.is_zero() && x > 0.0) {
        ratio += compensated_env_integral(
            model.nu, [&](double z) { return pow1p_expansion(x * std::expm1(z) / (x + 1.0), t); },
            t * (t - 1.0) * x * x / ((x + 1.0) * (x + 1.0)), 1e-5, opt);
    }
    const double rx = model.r(x);
    if (rx != 0.0 && x > 0.0) {
        ratio += rx * model.q.integral(
                          [&](double z) {
                              return std::expm1(t * std::log1p(x * (z - 1.0) / (x + 1.0)));
                          },
                          0.0, 1.0, opt);
    }
    return ratio * V;
}

TestFunction1D lyapunov_test_function(double theta_V) {
    const double t = theta_V;
    TestFunction1D f;
    f.f = [t](double x) { return std::pow(1.0 + x, t); };
    f.df = [t](double x) { return t * std::pow(1.0 + x, t - 1.0); };
    f.d2f = [t](double x) { return t * (t - 1.0) * std::pow(1.0 + x, t - 2.0); };
    f.growth = TestFunction1D::Growth::polynomial;
    f.degree = t;
    return f;
}

LyapunovReport lyapunov_check(const ModelSpec& model, double theta_V,
                              const std::vector<double>& grid) {
    if (!(theta_V > 0.0 && theta_V < 1.0)) throw ModelError("theta_V must lie in (0, 1)");
    if (grid.size() < 8) throw ModelError("lyapunov grid too small");

    LyapunovReport rep;
    rep.theta_V = theta_V;
    rep.grid = grid;
    rep.V_values.reserve(grid.size());
    rep.LV_values.reserve(grid.size());
    for (double x : grid) {
        rep.V_values.push_back(std::pow(1.0 + x, theta_V));
        rep.LV_values.push_back(lyapunov_LV(model, theta_V, x));
    }

    const size_t tail_start = grid.size() - grid.size() / 4;
    double lambda1 = kInf;
    for (size_t i = tail_start; i < grid.size(); ++i)
        lambda1 = std::min(lambda1, -rep.LV_values[i] / rep.V_values[i]);
    rep.lambda1 = lambda1;
    rep.holds = lambda1 > 0.0;

    double lambda2 = 1.0;
    if (rep.holds) {
        for (size_t i = 0; i < grid.size(); ++i)
            lambda2 = std::max(lambda2, rep.LV_values[i] + lambda1 * rep.V_values[i]);
    }
    rep.lambda2 = lambda2;

    rep.margins.reserve(grid.size());
    double margin = kInf;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double m = lambda2 - std::max(rep.lambda1, 0.0) * rep.V_values[i] - rep.LV_values[i];
        rep.margins.push_back(m);
        margin = std::min(margin, m);
    }
    rep.margin = margin;
    return rep;
}

ConsistencyReport generator_mc_consistency(const ModelSpec& model, const TestFunction1D& f,
                                           double x, double h, long n, const SimConfig& cfg) {
    if (!(h > 0.0)) throw ModelError("mc consistency: h must be positive");
    SimConfig c = cfg;
    c.dt = std::min(cfg.dt, h);
    c.t_end = h;
    Simulator sim(model, c);

    std::vector<Observable> obs{{"f", f.f}};
    const auto summary = sim.simulate_ensemble(x, n, obs);
    const size_t last = summary.times.size() - 1;

    ConsistencyReport rep;
    rep.n_excluded = summary.n_excluded;
    rep.quotient = (summary.mean[0][last] - f.f(x)) / h;
    rep.se = summary.se[0][last] / h;
    rep.lf = apply_L(model, f, x);
    rep.allowance = 4.0 * rep.se + 50.0 * (1.0 + std::abs(rep.lf)) * h;
    rep.discrepancy = std::abs(rep.quotient - rep.lf);
    rep.agree = rep.discrepancy <= rep.allowance;
    return rep;
}

}  // namespace cbire
