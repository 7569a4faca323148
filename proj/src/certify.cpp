#include "cbire/certify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace cbire {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double grid_sup(const ScalarFn& fn, double lo, double hi, int points = 65) {
    double best = -kInf;
    for (int i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * i / (points - 1);
        best = std::max(best, fn(x));
    }
    return best;
}

struct ModelMoments {
    double z2_mu_01 = 0.0;        // int_0^1 z^2 mu(dz)
    double z_mu_1inf = 0.0;       // int_1^inf z mu(dz)
    double em1sq_nu = 0.0;        // int_{-inf}^1 (e^z - 1)^2 nu(dz)
    double em1_nu_1inf = 0.0;     // int_1^inf (e^z - 1) nu(dz)
    double q_one_minus_z = 0.0;   // int (1 - z) q(dz)
};

ModelMoments collect_moments(const ModelSpec& model) {
    ModelMoments m;
    const QuadOptions opt{1e-12, 1e-10, 4000};
    if (!model.mu.is_zero()) {
        m.z2_mu_01 = model.mu.integral([](double z) { return z * z; }, 0.0, 1.0, opt);
        m.z_mu_1inf = model.mu.integral([](double z) { return z; }, 1.0, kInf, opt);
    }
    if (!model.nu.is_zero()) {
        auto em1sq = [](double z) {
            const double w = std::expm1(z);
            return w * w;
        };
        m.em1sq_nu = model.nu.integral(em1sq, -kInf, 1.0, opt);
        m.em1_nu_1inf = model.nu.integral([](double z) { return std::expm1(z); }, 1.0, kInf, opt);
    }
    m.q_one_minus_z = model.q.mean_one_minus_z();
    return m;
}

// Upper bound for the small-state generator estimate at states x <= r x0;
// must fall below -K0 at the chosen r.
double small_state_bound(const ModelSpec& model, const ModelMoments& mm, double x0, double r) {
    const double a = model.alpha;
    const double drift = std::abs(model.beta0 - model.b);
    const double sup_r_half = grid_sup(model.r, 0.0, 0.5 * x0);
    double J = 6.0 * drift * r + 6.0 * model.g(r * x0) / x0 -
               (3.0 * a / x0) * (1.0 - r) * (1.0 - r);
    J += (6.0 * r / x0) * (model.sigma * model.sigma + mm.z2_mu_01);
    J += 6.0 * r * r * (model.beta1 * model.beta1 + mm.em1sq_nu);
    J += 6.0 * r * (mm.z_mu_1inf + mm.em1_nu_1inf + sup_r_half * mm.q_one_minus_z);
    return J;
}

}  // namespace

// ---------------------------------------------------------------------------
// control functions

double ControlFunctions::psi(double u) const { return 2.0 - std::exp(-lambda0 * u); }
double ControlFunctions::dpsi(double u) const { return lambda0 * std::exp(-lambda0 * u); }
double ControlFunctions::d2psi(double u) const {
    return -lambda0 * lambda0 * std::exp(-lambda0 * u);
}

double ControlFunctions::phi(double x) const {
    if (x >= x0) return theta;
    const double t = 1.0 - x / x0;
    return theta + t * t * t;
}
double ControlFunctions::dphi(double x) const {
    if (x >= x0) return 0.0;
    const double t = 1.0 - x / x0;
    return -3.0 * t * t / x0;
}
double ControlFunctions::d2phi(double x) const {
    if (x >= x0) return 0.0;
    return 6.0 * (1.0 - x / x0) / (x0 * x0);
}

double ControlFunctions::V(double x) const { return std::pow(1.0 + x, theta_V); }

double ControlFunctions::f(double x, double y) const {
    if (x == y) return 0.0;
    const double u = std::min(std::abs(x - y), l0);
    return phi(std::max(x, y)) * psi(u);
}

double ControlFunctions::F(double x, double y) const {
    if (x == y) return 0.0;
    return V(x) + V(y) + eps * f(x, y);
}

ControlFunctions DriftCertificate::controls() const {
    ControlFunctions c;
    c.lambda0 = lambda0;
    c.x0 = x0;
    c.theta = theta;
    c.l0 = l0;
    c.theta_V = theta_V;
    c.eps = eps;
    return c;
}

double eval_F(const DriftCertificate& cert, double x, double y) {
    return cert.controls().F(x, y);
}

TestFunction2D coupling_distance_function(const ControlFunctions& c) {
    TestFunction2D f;
    f.f = [c](double x, double y) { return c.f(x, y); };
    f.fx = [c](double x, double y) {
        if (x > y) {
            const double u = x - y;
            return c.dphi(x) * c.psi(std::min(u, c.l0)) +
                   (u < c.l0 ? c.phi(x) * c.dpsi(u) : 0.0);
        }
        const double v = y - x;
        return v < c.l0 ? -c.phi(y) * c.dpsi(v) : 0.0;
    };
    f.fy = [c](double x, double y) {
        if (x > y) {
            const double u = x - y;
            return u < c.l0 ? -c.phi(x) * c.dpsi(u) : 0.0;
        }
        const double v = y - x;
        return c.dphi(y) * c.psi(std::min(v, c.l0)) + (v < c.l0 ? c.phi(y) * c.dpsi(v) : 0.0);
    };
    f.fxx = [c](double x, double y) {
        if (x > y) {
            const double u = x - y;
            const bool in = u < c.l0;
            return c.d2phi(x) * c.psi(std::min(u, c.l0)) +
                   (in ? 2.0 * c.dphi(x) * c.dpsi(u) + c.phi(x) * c.d2psi(u) : 0.0);
        }
        const double v = y - x;
        return v < c.l0 ? c.phi(y) * c.d2psi(v) : 0.0;
    };
    f.fyy = [c](double x, double y) {
        if (x > y) {
            const double u = x - y;
            return u < c.l0 ? c.phi(x) * c.d2psi(u) : 0.0;
        }
        const double v = y - x;
        const bool in = v < c.l0;
        return c.d2phi(y) * c.psi(std::min(v, c.l0)) +
               (in ? 2.0 * c.dphi(y) * c.dpsi(v) + c.phi(y) * c.d2psi(v) : 0.0);
    };
    f.fxy = [c](double x, double y) {
        if (x > y) {
            const double u = x - y;
            return u < c.l0 ? -c.dphi(x) * c.dpsi(u) - c.phi(x) * c.d2psi(u) : 0.0;
        }
        const double v = y - x;
        return v < c.l0 ? -c.dphi(y) * c.dpsi(v) - c.phi(y) * c.d2psi(v) : 0.0;
    };
    return f;
}

// ---------------------------------------------------------------------------
// conditions and constants

Nontriviality check_nontriviality(const ModelSpec& model, double c0) {
    if (!(c0 > 0.0)) throw ConditionError("Condition 3.3", "c0 must be positive");
    Nontriviality out;
    out.c0 = c0;
    if (model.sigma > 0.0) {
        out.satisfied = true;
        out.branch = 1;
        out.detail = "sigma > 0";
        return out;
    }
    if (!model.mu.has_density())
        throw ConditionError("Condition 3.3",
                             "sigma = 0 and the branching measure has no density part");
    const auto tail = model.mu.refine_lower([](double z) { return z; }, 1.0);
    if (!tail.diverges)
        throw ConditionError("Condition 3.3",
                             "sigma = 0 and int_0^1 z mu(dz) is finite: the branching noise "
                             "cannot separate nearby states");
    double delta = kInf;
    for (int i = 1; i <= 16; ++i) {
        const double x = c0 * i / 16.0;
        delta = std::min(delta, std::min(model.mu.overlap_mass(x), model.mu.overlap_mass(-x)));
    }
    if (!(delta > 1e-12))
        throw ConditionError("Condition 3.3", "overlap mass floor on |x| <= c0 is zero");
    out.satisfied = true;
    out.branch = 2;
    out.delta = delta;
    out.detail = "infinite activity with overlap floor";
    return out;
}

double find_lambda3(const ModelSpec& model, double lambda_start, double cap) {
    double lo = 0.0;
    double lambda = lambda_start;
    if (model.phi_tilde(lambda) > 0.0) return lambda;
    while (lambda < cap) {
        lo = lambda;
        lambda *= 2.0;
        if (model.phi_tilde(lambda) > 0.0) {
            double hi = lambda;
            for (int i = 0; i < 48; ++i) {
                const double mid = 0.5 * (lo + hi);
                (model.phi_tilde(mid) > 0.0 ? hi : lo) = mid;
            }
            return hi;  // phi~(hi) > 0 by construction
        }
    }
    throw ConditionError("Condition 3.3",
                         "no lambda below 1e8 makes phi~ positive; the model data are "
                         "inconsistent with the non-triviality condition");
}

RegionData build_regions(const ModelSpec& model, const LyapunovReport& lyap, double K, double c0,
                         double x0, double theta_V) {
    RegionData out;
    out.lambda1 = lyap.lambda1;
    out.lambda2 = lyap.lambda2;
    if (!(out.lambda1 > 0.0))
        throw ConditionError("Condition 3.2", "no positive Lyapunov rate on the grid");

    out.x0 = x0 > 0.0 ? x0 : std::min(1.0, c0);
    if (!(out.x0 > 0.0 && out.x0 <= std::min(1.0, c0)))
        throw ConditionError("Condition 3.3", "x0 must lie in (0, min(1, c0)]");
    out.K = K;
    out.K0 = std::min(K, 6.0 * model.alpha / out.x0);

    const double factor = 9.0 * out.lambda2 / (out.K0 * out.lambda1);
    auto cond = [&](double t) {
        const double V = std::pow(1.0 + t, theta_V);
        if (V < 12.0) return false;
        return 1.0 - factor * model.H_of_x(t) / V >= 0.25;
    };
    auto cond2 = [&](double t) { return cond(t) && cond(2.0 * t); };

    double found = -1.0, prev = 1.0;
    for (double t : log_grid(1.0, 1e6, 200)) {
        if (cond2(t)) {
            found = t;
            break;
        }
        prev = t;
    }
    if (found < 0.0)
        throw ConditionError("Condition 3.4",
                             "H(x)/V(x) does not decay on the scan grid up to 1e6");
    double lo = prev, hi = found;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (cond2(mid) ? hi : lo) = mid;
    }
    out.M = std::max(1.0, hi);

    const double ratio = 6.0 * out.lambda2 / out.lambda1;
    out.S0_bound = ratio - 1.0 >= 1.0 ? std::pow(ratio - 1.0, 1.0 / theta_V) - 1.0 : 0.0;
    out.l0 = out.S0_bound + out.M;
    return out;
}

double find_lambda0(const ModelSpec& model, double l0, double k0, double x0, double lambda3,
                    double cap) {
    auto ok = [&](double l) {
        const double pt = model.phi_tilde(l) / l;
        if (pt < 2.0 * k0 * l0) return false;
        return 0.25 * x0 * l * model.env_energy(l, l0) + pt >= 4.0 * k0 * l0;
    };
    double lambda = lambda3 * (1.0 + 1e-6);
    if (k0 == 0.0) {
        // both displays are vacuous; the smallest admissible value works
        if (!ok(lambda))
            throw ConditionError("lambda0 condition", "phi~ not positive just above lambda3");
        return lambda;
    }
    if (ok(lambda)) return lambda;
    double lo = lambda;
    while (lambda < cap) {
        lo = lambda;
        lambda *= 2.0;
        if (ok(lambda)) {
            double hi = lambda;
            for (int i = 0; i < 48; ++i) {
                const double mid = 0.5 * (lo + hi);
                (ok(mid) ? hi : lo) = mid;
            }
            return hi;
        }
    }
    throw ConditionError("lambda0 condition",
                         "no lambda0 below 1e8 satisfies the displays: k0 l0 is too large "
                         "relative to the growth of phi~");
}

ThetaResult choose_theta(const ModelSpec& model, const RegionData& regions,
                         const Nontriviality& nontriv, double lambda0, double theta_V) {
    ThetaResult out;
    const ModelMoments mm = collect_moments(model);
    const double x0 = regions.x0;
    const double k0 =
        std::isfinite(model.r.lipschitz_bound())
            ? std::min(model.r_lipschitz, model.r.lipschitz_bound())
            : model.r_lipschitz;

    // H_bar = sup over the S1 x-range (x > x0) of H(x, x0)
    const double xmax = std::max({regions.M, regions.S0_bound, 2.0 * x0});
    double H_bar = 0.0;
    for (double x : log_grid(x0 * (1.0 + 1e-9), xmax, 128))
        H_bar = std::max(H_bar, model.H_of_x(x, x0, QuadOptions{}));
    out.H_bar = H_bar;

    double R = std::abs(model.beta0 - model.b) + model.g(x0) / x0;
    R += (model.sigma * model.sigma + mm.z2_mu_01) / x0;
    R += model.beta1 * model.beta1 + mm.em1sq_nu;
    R += mm.z_mu_1inf + mm.em1_nu_1inf + grid_sup(model.r, 0.0, x0) * mm.q_one_minus_z;
    out.R_const = R;

    // largest r in (0, 1/2] with the small-state bound below -K0
    auto feasible = [&](double r) {
        return small_state_bound(model, mm, x0, r) <= -regions.K0;
    };
    if (feasible(0.5)) {
        out.r_small = 0.5;
    } else if (!feasible(1e-9)) {
        throw ConditionError(
            "small-state bound",
            "the small-state generator estimate cannot reach -K0 even as r -> 0 "
            "(it tends to -3 alpha / x0); choose K with K0 = min(K, 6 alpha/x0) < 3 alpha / x0");
    } else {
        double lo = 1e-9, hi = 0.5;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            (feasible(mid) ? lo : hi) = mid;
        }
        out.r_small = lo;
    }

    const double decay = std::exp(-lambda0 * regions.l0);
    const double s2l2 = model.sigma * model.sigma * lambda0 * lambda0 * decay;
    const double den1 = x0 * (s2l2 + nontriv.delta);
    if (!(den1 > 0.0))
        throw NumericError(
            "theta denominators vanish: exp(-lambda0 l0) underflowed with delta = 0; the "
            "certificate constants are not representable in double precision");

    const double K = regions.K;
    std::vector<std::pair<std::string, double>> branches;
    branches.emplace_back("theta >= 4", 4.0);
    branches.emplace_back("large-state diffusion/overlap branch",
                          4.0 * (2.0 * H_bar + K) / den1);
    if (k0 > 0.0)
        branches.emplace_back("large-state rate-mismatch branch",
                              (2.0 * H_bar + K) / (lambda0 * regions.l0 * decay * x0 * k0));
    branches.emplace_back("small-state diffusion/overlap branch",
                          4.0 * (6.0 * R + K) / (out.r_small * den1) + 2.0);
    if (k0 > 0.0)
        branches.emplace_back(
            "small-state rate-mismatch branch",
            (6.0 * R + K) / (out.r_small * out.r_small * x0 * k0 * regions.l0 * lambda0 * decay));

    double theta = 0.0;
    for (const auto& [name, value] : branches) {
        if (!std::isfinite(value))
            throw NumericError("theta branch '" + name + "' is not finite");
        theta = std::max(theta, value);
    }
    out.theta = theta;
    for (const auto& [name, value] : branches)
        out.checks.push_back({name, theta, value, theta >= value});
    return out;
}

// ---------------------------------------------------------------------------
// full pipeline

DriftCertificate certify(const ModelSpec& model, const CertifyOptions& opt) {
    if (!(opt.theta_V > 0.0 && opt.theta_V < 1.0))
        throw ModelError("theta_V must lie in (0, 1)");

    // Condition 3.1
    if (!(model.alpha > 0.0))
        throw ConditionError("Condition 3.1", "the immigration drift alpha must be positive");
    if (!std::isfinite(model.r.lipschitz_bound()) && !(model.r_lipschitz >= 0.0))
        throw ConditionError("Condition 3.1", "rate function is not globally Lipschitz");
    if (!std::isfinite(model.r.lipschitz_bound()))
        throw ConditionError("Condition 3.1",
                             "rate function form has unbounded slope; not globally Lipschitz");

    // Condition 3.2 on the configured grid
    const auto grid = log_grid(opt.lyap_grid_lo, opt.lyap_grid_hi, opt.lyap_grid_points);
    const auto lyap = lyapunov_check(model, opt.theta_V, grid);
    if (!lyap.holds)
        throw ConditionError("Condition 3.2",
                             "no Lyapunov pair on the grid: -LV/V has no positive tail minimum");

    // Condition 3.3
    const auto nontriv = check_nontriviality(model, opt.c0);

    // Any valid Lyapunov pair may back the certificate; pick the one with the
    // smallest 6 lambda2 / lambda1, which controls l0 and ultimately theta.
    double lam1 = lyap.lambda1, lam2 = lyap.lambda2;
    {
        double best = 6.0 * lam2 / lam1;
        for (int k = 0; k <= 48; ++k) {
            const double cand = lyap.lambda1 * std::pow(0.75, k);
            double l2 = 1.0;
            for (size_t i = 0; i < grid.size(); ++i)
                l2 = std::max(l2, lyap.LV_values[i] + cand * lyap.V_values[i]);
            const double score = 6.0 * l2 / cand;
            if (score < best) {
                best = score;
                lam1 = cand;
                lam2 = l2;
            }
        }
    }
    LyapunovReport pipeline_lyap = lyap;
    pipeline_lyap.lambda1 = lam1;
    pipeline_lyap.lambda2 = lam2;

    const double K = opt.K > 0.0 ? opt.K
                                 : 2.0 * model.alpha / (opt.x0 > 0.0 ? opt.x0
                                                                     : std::min(1.0, opt.c0));
    const auto regions =
        build_regions(model, pipeline_lyap, K, nontriv.c0, opt.x0, opt.theta_V);

    // lambda3 grid floor: near the maximizer of lambda0^2 exp(-lambda0 l0),
    // so that the theta denominators stay well inside double range.
    const double lambda_start = std::clamp(2.0 / regions.l0, 1e-6, 0.25);
    const double lambda3 = find_lambda3(model, lambda_start, opt.lambda_search_cap);

    const double k0 = std::isfinite(model.r.lipschitz_bound())
                          ? std::min(model.r_lipschitz, model.r.lipschitz_bound())
                          : model.r_lipschitz;
    const double lambda0 =
        find_lambda0(model, regions.l0, k0, regions.x0, lambda3, opt.lambda_search_cap);

    const auto theta_result = choose_theta(model, regions, nontriv, lambda0, opt.theta_V);

    DriftCertificate cert;
    cert.theta_V = opt.theta_V;
    cert.lambda1 = lam1;
    cert.lambda2 = lam2;
    cert.lyap_lambda1_max = lyap.lambda1;
    cert.nontriviality_branch = nontriv.branch;
    cert.c0 = nontriv.c0;
    cert.delta = nontriv.delta;
    cert.k0 = k0;
    cert.x0 = regions.x0;
    cert.K = regions.K;
    cert.K0 = regions.K0;
    cert.M = regions.M;
    cert.S0_bound = regions.S0_bound;
    cert.l0 = regions.l0;
    cert.lambda3 = lambda3;
    cert.lambda0 = lambda0;
    cert.r_small = theta_result.r_small;
    cert.H_bar = theta_result.H_bar;
    cert.R_const = theta_result.R_const;
    cert.theta = theta_result.theta;
    cert.eps = 3.0 * lam2 / regions.K0;
    cert.inequalities = theta_result.checks;

    // record the lambda0 displays with their actual values
    {
        const double pt = model.phi_tilde(lambda0) / lambda0;
        const double E = model.env_energy(lambda0, regions.l0);
        cert.inequalities.push_back({"lambda0 display 1",
                                     0.25 * regions.x0 * lambda0 * E + pt, 4.0 * k0 * regions.l0,
                                     0.25 * regions.x0 * lambda0 * E + pt >= 4.0 * k0 * regions.l0});
        cert.inequalities.push_back(
            {"lambda0 display 2", pt, 2.0 * k0 * regions.l0, pt >= 2.0 * k0 * regions.l0});
        cert.inequalities.push_back({"phi~(lambda3) > 0", model.phi_tilde(lambda3), 0.0,
                                     model.phi_tilde(lambda3) > 0.0});
    }

    // off-diagonal grid: log-spaced x in (0, 4 l0], linear y in [0, x), plus
    // near-diagonal slivers
    const ControlFunctions controls = cert.controls();
    const TestFunction2D fdist = coupling_distance_function(controls);
    std::vector<std::pair<double, double>> pts;
    const auto xs = log_grid(std::min(0.01, regions.x0 / 4.0), 4.0 * regions.l0, opt.grid_2d);
    for (double x : xs)
        for (int j = 0; j < opt.grid_2d; ++j) pts.emplace_back(x, x * j / opt.grid_2d);
    for (double x : log_grid(std::max(0.2, regions.x0), 4.0 * regions.l0, opt.sliver_x_points))
        for (double d : {1e-3, 1e-2, 1e-1})
            if (x - d >= 0.0) pts.emplace_back(x, x - d);

    cert.grid.resize(pts.size());
    std::atomic<size_t> cursor{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    auto work = [&] {
        try {
            for (;;) {
                const size_t i = cursor.fetch_add(1);
                if (i >= pts.size()) return;
                const auto [x, y] = pts[i];
                DriftCertificate::GridPoint& g = cert.grid[i];
                g.x = x;
                g.y = y;
                g.F = controls.F(x, y);
                const double LV_sum = lyapunov_LV(model, opt.theta_V, x) +
                                      lyapunov_LV(model, opt.theta_V, y);
                g.LF = LV_sum + cert.eps * apply_L_coupled(model, fdist, x, y);
                g.slack = opt.slack_factor * kGeneratorQuadTol * (1.0 + std::abs(g.F));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!worker_error) worker_error = std::current_exception();
            cursor.store(pts.size());
        }
    };
    {
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        std::vector<std::thread> pool;
        for (unsigned w = 0; w + 1 < hw && w < 7; ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    double C4 = 1.0, C3 = kInf;
    for (const auto& g : cert.grid) {
        const double denom = controls.V(g.x) + controls.V(g.y) + 1.0;
        C4 = std::max({C4, g.F / denom, denom / g.F});
        C3 = std::min(C3, -g.LF / denom);
    }
    cert.C3 = C3;
    cert.C4 = C4;
    cert.lambda = C3 > 0.0 ? std::min(lam1, C3) / C4 : 0.0;

    double margin = kInf;
    bool ok = C3 > 0.0;
    for (auto& g : cert.grid) {
        g.margin = -cert.lambda * g.F - g.LF;
        margin = std::min(margin, g.margin);
        if (g.margin < -g.slack) {
            ok = false;
            cert.offending.push_back(g);
        }
    }
    cert.grid_margin = margin;
    cert.verified = ok;
    if (C3 <= 0.0) {
        for (const auto& g : cert.grid)
            if (-g.LF <= 0.0 && cert.offending.size() < 16) cert.offending.push_back(g);
    }
    return cert;
}

}  // namespace cbire
