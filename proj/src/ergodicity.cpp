#include "cbire/ergodicity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace cbire {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Bins make_quantile_bins(std::vector<double> pooled, int n_bins) {
    if (pooled.empty()) throw ModelError("make_quantile_bins: empty sample");
    std::sort(pooled.begin(), pooled.end());
    Bins bins;
    const std::size_t n = pooled.size();
    bins.edges.push_back(std::min(0.0, pooled.front()));
    for (int i = 1; i <= n_bins; ++i) {
        const double q = pooled[std::min(n - 1, static_cast<std::size_t>(
                                                    i * static_cast<double>(n) / n_bins))];
        if (q > bins.edges.back()) bins.edges.push_back(q);
    }
    // interior representatives: bin midpoints
    for (std::size_t i = 0; i + 1 < bins.edges.size(); ++i)
        bins.reps.push_back(0.5 * (bins.edges[i] + bins.edges[i + 1]));
    // overflow tail: mean of pooled points beyond the last edge
    double tail_sum = 0.0;
    long tail_n = 0;
    for (auto it = pooled.rbegin(); it != pooled.rend() && *it > bins.edges.back(); ++it) {
        tail_sum += *it;
        ++tail_n;
    }
    bins.reps.push_back(tail_n > 0 ? tail_sum / tail_n : bins.edges.back());
    return bins;
}

double wv_distance(const std::vector<double>& samples_a, const std::vector<double>& samples_b,
                   double theta_V, const Bins& bins) {
    if (samples_a.empty() || samples_b.empty())
        throw ModelError("wv_distance: empty sample");
    const std::size_t k = bins.reps.size();
    std::vector<double> pa(k, 0.0), pb(k, 0.0);
    auto fill = [&](const std::vector<double>& s, std::vector<double>& p) {
        for (double v : s) {
            const auto it = std::upper_bound(bins.edges.begin(), bins.edges.end(), v);
            std::size_t idx = static_cast<std::size_t>(it - bins.edges.begin());
            if (idx > 0) --idx;
            p[std::min(idx, k - 1)] += 1.0;
        }
        for (double& x : p) x /= s.size();
    };
    fill(samples_a, pa);
    fill(samples_b, pb);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        total += std::pow(1.0 + std::max(0.0, bins.reps[i]), theta_V) * std::abs(pa[i] - pb[i]);
    return total;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double ks = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        ks = std::max(ks, std::abs(static_cast<double>(i) / a.size() -
                                   static_cast<double>(j) / b.size()));
    }
    return ks;
}

double ks_band(std::size_t n, std::size_t m, double alpha) {
    const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

ErgodicityReport contraction_rate(const ModelSpec& model, const DriftCertificate& cert, double x0,
                                  double y0, long n, const CouplingConfig& cfg) {
    if (!cert.verified) throw ModelError("contraction_rate requires a verified certificate");
    if (n < 1000) throw ModelError("contraction_rate requires n >= 1000 pairs");

    CouplingSimulator sim(model, cfg);
    const ControlFunctions controls = cert.controls();

    const long grid_n = std::lround(std::ceil(cfg.t_end / cfg.dt - 1e-9)) + 1;
    const auto rep = report_indices(grid_n, cfg.report_stride, 3 * n);
    const std::size_t T = rep.size();

    ErgodicityReport out;
    out.n_paths = n;
    out.F0 = controls.F(x0, y0);
    out.certified_lambda = cert.lambda;
    for (long i : rep) out.times.push_back(std::min(i * cfg.dt, cfg.t_end));

    // per-time storage: F values, d_V values, x-marginal samples
    std::vector<double> Fv(T * n, 0.0), dv(T * n, 0.0), xs(T * n, 0.0);
    std::vector<char> uncoupled(T * n, 0), excluded(n, 0);

    std::atomic<long> cursor{0};
    const long block = 64;
    auto work = [&] {
        for (;;) {
            const long b = cursor.fetch_add(1);
            const long lo = b * block;
            if (lo >= n) return;
            const long hi = std::min(n, lo + block);
            for (long p = lo; p < hi; ++p) {
                Rng rng = path_stream(cfg.seed, static_cast<std::uint64_t>(p));
                try {
                    const auto path = sim.simulate_coupled(x0, y0, rng, false);
                    std::size_t next = 0;
                    for (long i = 0; i < grid_n && next < T; ++i) {
                        if (rep[next] != i) continue;
                        const double x = path.x_states[i];
                        const double y = path.y_states[i];
                        Fv[next * n + p] = controls.F(x, y);
                        dv[next * n + p] =
                            x == y ? 0.0 : controls.V(x) + controls.V(y);
                        xs[next * n + p] = x;
                        uncoupled[next * n + p] = x != y;
                        ++next;
                    }
                } catch (const InstabilityError&) {
                    excluded[p] = 1;
                }
            }
        }
    };
    {
        std::vector<std::thread> pool;
        for (int w = 0; w + 1 < std::max(1, cfg.workers); ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();
    }

    for (long p = 0; p < n; ++p)
        if (excluded[p]) ++out.n_excluded;
    const double m_eff = static_cast<double>(n - out.n_excluded);

    out.mean_F.assign(T, 0.0);
    out.se_F.assign(T, 0.0);
    out.coupling_bound.assign(T, 0.0);
    out.p_uncoupled.assign(T, 0.0);
    std::vector<double> terminal;
    for (std::size_t t = 0; t < T; ++t) {
        double s1 = 0.0, s2 = 0.0, sd = 0.0, pu = 0.0;
        for (long p = 0; p < n; ++p) {
            if (excluded[p]) continue;
            const double v = Fv[t * n + p];
            s1 += v;
            s2 += v * v;
            sd += dv[t * n + p];
            pu += uncoupled[t * n + p];
        }
        const double mean = s1 / m_eff;
        const double var = std::max(0.0, s2 / m_eff - mean * mean);
        out.mean_F[t] = mean;
        out.se_F[t] = std::sqrt(var / m_eff);
        out.coupling_bound[t] = sd / m_eff;
        out.p_uncoupled[t] = pu / m_eff;
    }
    for (long p = 0; p < n; ++p)
        if (!excluded[p]) terminal.push_back(xs[(T - 1) * n + p]);

    // W_V distance of each time marginal to the terminal law
    out.wv.assign(T, 0.0);
    {
        std::vector<double> pooled = terminal;
        pooled.insert(pooled.end(), xs.begin(), xs.begin() + n);
        const Bins bins = make_quantile_bins(pooled);
        std::vector<double> snap;
        for (std::size_t t = 0; t < T; ++t) {
            snap.clear();
            for (long p = 0; p < n; ++p)
                if (!excluded[p]) snap.push_back(xs[t * n + p]);
            out.wv[t] = wv_distance(snap, terminal, cert.theta_V, bins);
        }
    }

    // weighted least squares of log mean_F over the resolvable window
    out.degenerate_fit = x0 == y0;
    std::vector<double> ts, ls, ws;
    for (std::size_t t = 0; t < T; ++t) {
        if (out.mean_F[t] > 10.0 * out.se_F[t] && out.mean_F[t] > 0.0) {
            ts.push_back(out.times[t]);
            ls.push_back(std::log(out.mean_F[t]));
            const double rel = out.se_F[t] / out.mean_F[t];
            ws.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 1e12);
        }
    }
    if (ts.size() < 2) out.degenerate_fit = true;
    if (!out.degenerate_fit) {
        double W = 0.0, St = 0.0, Sl = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            W += ws[i];
            St += ws[i] * ts[i];
            Sl += ws[i] * ls[i];
        }
        const double tbar = St / W, lbar = Sl / W;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            num += ws[i] * (ts[i] - tbar) * (ls[i] - lbar);
            den += ws[i] * (ts[i] - tbar) * (ts[i] - tbar);
        }
        const double slope = den > 0.0 ? num / den : 0.0;
        out.fitted_rate = -slope;
        const double se_slope = den > 0.0 ? std::sqrt(1.0 / den) : 0.0;
        out.fitted_rate_lo = out.fitted_rate - 1.96 * se_slope;
        out.fitted_rate_hi = out.fitted_rate + 1.96 * se_slope;
    }

    out.contraction_holds = true;
    for (std::size_t t = 0; t < T; ++t) {
        if (out.mean_F[t] <= 0.0) continue;
        const double rel = out.se_F[t] / out.mean_F[t];
        if (std::exp(cert.lambda * out.times[t]) * out.mean_F[t] >
            out.F0 * (1.0 + 3.0 * rel) + 1e-12)
            out.contraction_holds = false;
    }
    return out;
}

StationarySummary stationary_estimate(const ModelSpec& model, const SimConfig& cfg,
                                      double burn_in, long n, double x0_a, double x0_b,
                                      bool certificate_verified) {
    if (n < 1) throw ModelError("stationary_estimate: n must be >= 1");
    StationarySummary out;
    out.exploratory = !certificate_verified;

    SimConfig run_cfg = cfg;
    run_cfg.t_end = burn_in + cfg.t_end;
    const double total_t = run_cfg.t_end;
    std::vector<double> group_a, group_b;
    if (total_t <= 0.0) {
        // degenerate horizon: the initial law itself
        for (long p = 0; p < n; ++p) (p % 2 == 0 ? group_a : group_b).push_back(p % 2 == 0 ? x0_a : x0_b);
    } else {
        Simulator sim(model, run_cfg);
        std::atomic<long> cursor{0};
        std::mutex mtx;
        const long block = 64;
        auto work = [&] {
            std::vector<double> la, lb;
            for (;;) {
                const long b = cursor.fetch_add(1);
                const long lo = b * block;
                if (lo >= n) break;
                for (long p = lo; p < std::min(n, lo + block); ++p) {
                    Rng rng = path_stream(cfg.seed, static_cast<std::uint64_t>(p));
                    const double start = p % 2 == 0 ? x0_a : x0_b;
                    try {
                        const auto path = sim.simulate_path(start, rng);
                        (p % 2 == 0 ? la : lb).push_back(path.states.back());
                    } catch (const InstabilityError&) {
                    }
                }
            }
            std::lock_guard<std::mutex> lock(mtx);
            group_a.insert(group_a.end(), la.begin(), la.end());
            group_b.insert(group_b.end(), lb.begin(), lb.end());
        };
        std::vector<std::thread> pool;
        for (int w = 0; w + 1 < std::max(1, cfg.workers); ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();
    }

    if (!group_a.empty() && !group_b.empty()) {
        out.ks_two_start = two_sample_ks(group_a, group_b);
        out.ks_band_95 = ks_band(group_a.size(), group_b.size(), 0.05);
        out.mixing_ok = out.ks_two_start < out.ks_band_95;
    }
    out.sample = group_a;
    out.sample.insert(out.sample.end(), group_b.begin(), group_b.end());
    std::sort(out.sample.begin(), out.sample.end());
    if (!out.sample.empty()) {
        double s1 = 0.0, s2 = 0.0;
        for (double v : out.sample) {
            s1 += v;
            s2 += v * v;
        }
        out.mean = s1 / out.sample.size();
        out.var = std::max(0.0, s2 / out.sample.size() - out.mean * out.mean);
        auto at = [&](double q) {
            return out.sample[static_cast<std::size_t>(q * (out.sample.size() - 1))];
        };
        out.q05 = at(0.05);
        out.q50 = at(0.50);
        out.q95 = at(0.95);
    }
    return out;
}

}  // namespace cbire
