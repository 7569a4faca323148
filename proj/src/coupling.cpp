#include "cbire/coupling.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <thread>

namespace cbire {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxHalvingDepth = 24;
}  // namespace

CouplingSimulator::CouplingSimulator(const ModelSpec& model, const CouplingConfig& cfg)
    : sim_(model, cfg), cfg_(cfg) {}

std::pair<double, double> CouplingSimulator::attempt(double x, double y, double dt, Rng& rng,
                                                     CoupledStepEvents* ev, bool* redo,
                                                     bool* crossed) const {
    *redo = false;
    *crossed = false;
    const ModelSpec& model = sim_.model();
    const double xp = std::max(x, 0.0), yp = std::max(y, 0.0);
    int jumps = 0;

    double xc = x + dt * sim_.compensated_drift(x);
    double yc = y + dt * sim_.compensated_drift(y);

    // reflection coupling for both Brownian motions
    const double dW = rng.normal() * std::sqrt(dt);
    const double dB = rng.normal() * std::sqrt(dt);
    xc += model.sigma * std::sqrt(xp) * dW + model.beta1 * x * dB;
    yc += model.sigma * std::sqrt(yp) * (-dW) + model.beta1 * y * (-dB);
    if (cfg_.variance_topup && sim_.var_mu_small() > 0.0) {
        const double g = rng.normal();
        xc += std::sqrt(xp * sim_.var_mu_small() * dt) * g;
        yc += std::sqrt(yp * sim_.var_mu_small() * dt) * (-g);
    }
    // a continuous-phase sign change of x - y means the diagonal was hit
    if ((x - y > 0.0) != (xc - yc > 0.0) || xc == yc) *crossed = true;

    // branching jumps, refined basic coupling thinned by rho
    if (sim_.mass_mu_large() > 0.0 && std::max(xp, yp) > 0.0) {
        const int n_b = static_cast<int>(rng.poisson(std::max(xp, yp) * dt * sim_.mass_mu_large()));
        jumps += n_b;
        for (int i = 0; i < n_b; ++i) {
            bool from_atom = false;
            const double z = sim_.sample_mu_large(rng, &from_atom);
            // classify against the running pair (the SDE uses left limits)
            const double xl = std::max(xc, 0.0), yl = std::max(yc, 0.0);
            const double w = std::min(xl, yl);
            const double U = xl - yl;
            double rho_m = 0.0, rho_p = 0.0;
            if (!from_atom && U != 0.0 && model.mu.density(z) > 0.0) {
                rho_m = model.mu.rho(-U, z);
                rho_p = model.mu.rho(U, z);
            }
            double wgt[5];
            wgt[0] = 0.5 * w * rho_m;
            wgt[1] = 0.5 * w * rho_p;
            wgt[2] = w * (1.0 - 0.5 * rho_m - 0.5 * rho_p);
            wgt[3] = std::max(U, 0.0);
            wgt[4] = std::max(-U, 0.0);
            const double total = wgt[0] + wgt[1] + wgt[2] + wgt[3] + wgt[4];
            assert(std::abs(total - std::max(xl, yl)) <= 1e-12 * std::max(1.0, std::max(xl, yl)));
            if (!(total > 0.0)) continue;  // both marginals at zero: no jump happens

            BranchTag tag = static_cast<BranchTag>(rng.categorical(wgt, 5));
            if (tag == BranchTag::reflect) {
                const double y_new = 2.0 * yc - xc + z;
                if (y_new < 0.0) {  // discretization artefact; keep the state space
                    tag = BranchTag::common;
                    if (ev) ev->reclassified += 1;
                }
            }
            switch (tag) {
                case BranchTag::coalesce:
                    yc = xc + z;
                    xc = xc + z;
                    break;
                case BranchTag::reflect:
                    yc = 2.0 * yc - xc + z;
                    xc = xc + z;
                    break;
                case BranchTag::common:
                    xc += z;
                    yc += z;
                    break;
                case BranchTag::x_only:
                    xc += z;
                    break;
                case BranchTag::y_only:
                    yc += z;
                    break;
            }
            if (ev) ev->branch_counts[static_cast<int>(tag)] += 1;
        }
    }

    // synchronous environment jumps: both marginals share the factor
    const double nu_mass = sim_.mass_nu_neg() + sim_.mass_nu_pos();
    if (nu_mass > 0.0) {
        const int n_e = static_cast<int>(rng.poisson(dt * nu_mass));
        jumps += n_e;
        for (int i = 0; i < n_e; ++i) {
            const double factor = std::exp(sim_.sample_nu_large(rng));
            xc *= factor;
            yc *= factor;
        }
        if (ev) ev->env_jumps += n_e;
    }

    // catastrophes, basic coupling with thinning against a dominating rate
    if (!model.r.is_zero()) {
        const double bound =
            std::max(sim_.cat_rate_bound(x, dt), sim_.cat_rate_bound(y, dt));
        if (bound > 0.0) {
            const int n_c = static_cast<int>(rng.poisson(dt * bound));
            for (int i = 0; i < n_c; ++i) {
                const double rx = model.r(std::max(xc, 0.0));
                const double ry = model.r(std::max(yc, 0.0));
                const double rmax = std::max(rx, ry);
                if (rmax > bound) {
                    *redo = true;
                    return {x, y};
                }
                if (rng.uniform01() * bound >= rmax) continue;  // thinned away
                const double z = model.q.sample(rng);
                const double rmin = std::min(rx, ry);
                ++jumps;
                if (rmax <= 0.0) continue;
                if (rng.uniform01() * rmax < rmin) {
                    xc *= z;
                    yc *= z;
                    if (ev) ev->cat_common += 1;
                } else if (rx > ry) {
                    xc *= z;
                    if (ev) ev->cat_x_only += 1;
                } else {
                    yc *= z;
                    if (ev) ev->cat_y_only += 1;
                }
            }
        }
    }

    if (jumps > cfg_.substep_jump_cap) {
        *redo = true;
        return {x, y};
    }
    if (xc < 0.0 || yc < 0.0) {
        if (cfg_.negative_fixup == SimConfig::NegativeFixup::reject_step) {
            *redo = true;
            return {x, y};
        }
        xc = std::max(xc, 0.0);
        yc = std::max(yc, 0.0);
    }
    return {xc, yc};
}

std::pair<double, double> CouplingSimulator::coupled_step(double x, double y, double dt, Rng& rng,
                                                          CoupledStepEvents* ev) const {
    if (!(x >= 0.0) || !(y >= 0.0)) throw ModelError("coupled_step: states must be >= 0");
    if (x == y) throw ModelError("coupled_step: pre-coalescence step requires x != y");
    struct Frame {
        double dt;
        int depth;
    };
    std::vector<Frame> stack{{dt, 0}};
    double cx = x, cy = y;
    bool merged = false;
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        if (merged) {  // post-meeting substeps evolve one copy
            cx = sim_.step(cx, f.dt, rng);
            cy = cx;
            continue;
        }
        bool redo = false;
        bool crossed = false;
        const auto [nx, ny] = attempt(cx, cy, f.dt, rng, ev, &redo, &crossed);
        if (redo) {
            if (f.depth >= kMaxHalvingDepth)
                throw InstabilityError("coupled step halving depth exceeded");
            if (ev) ev->halvings += 1;
            stack.push_back({0.5 * f.dt, f.depth + 1});
            stack.push_back({0.5 * f.dt, f.depth + 1});
            continue;
        }
        cx = nx;
        cy = ny;
        if (crossed || cx == cy) {
            merged = true;
            cy = cx;
        }
        if (cx > cfg_.overflow_guard || cy > cfg_.overflow_guard)
            throw InstabilityError("coupled state exceeded overflow guard");
    }
    return {cx, cy};
}

CoupledPath CouplingSimulator::simulate_coupled(double x0, double y0, bool record_events) const {
    Rng rng(cfg_.seed);
    return simulate_coupled(x0, y0, rng, record_events);
}

CoupledPath CouplingSimulator::simulate_coupled(double x0, double y0, Rng& rng,
                                                bool record_events) const {
    if (!(x0 >= 0.0) || !(y0 >= 0.0)) throw ModelError("initial states must be nonnegative");
    const double tol = cfg_.resolved_match_tol(x0, y0);

    CoupledPath path;
    const long n = std::lround(std::ceil(cfg_.t_end / cfg_.dt - 1e-9));
    path.times.push_back(0.0);
    path.x_states.push_back(x0);
    path.y_states.push_back(y0);

    double x = x0, y = y0;
    bool merged = std::abs(x - y) < tol;
    if (merged) {
        y = x;
        path.y_states.back() = x;
        path.T = 0.0;
    }
    for (long i = 0; i < n; ++i) {
        const double t0 = i * cfg_.dt;
        const double t1 = std::min((i + 1) * cfg_.dt, cfg_.t_end);
        CoupledStepEvents ev;
        if (merged) {
            x = sim_.step(x, t1 - t0, rng, nullptr);
            y = x;
        } else {
            std::tie(x, y) = coupled_step(x, y, t1 - t0, rng, record_events ? &ev : nullptr);
            if (std::abs(x - y) < tol) {
                y = x;  // identify and evolve one copy from here on
                merged = true;
                path.T = t1;
            }
        }
        path.times.push_back(t1);
        path.x_states.push_back(x);
        path.y_states.push_back(y);
        if (record_events) path.events.push_back(ev);
    }
    return path;
}

std::vector<CoalescenceRow> coalescence_stats(const ModelSpec& model,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              long n, const CouplingConfig& cfg) {
    if (n < 1) throw ModelError("coalescence_stats: n must be >= 1");
    CouplingSimulator sim(model, cfg);
    std::vector<CoalescenceRow> rows;
    const long grid_n = std::lround(std::ceil(cfg.t_end / cfg.dt - 1e-9)) + 1;
    const auto rep = report_indices(grid_n, cfg.report_stride, n);

    for (const auto& [x0, y0] : pairs) {
        CoalescenceRow row;
        row.x0 = x0;
        row.y0 = y0;
        row.n = n;
        for (long i : rep) row.times.push_back(std::min(i * cfg.dt, cfg.t_end));
        row.p_coupled.assign(rep.size(), 0.0);

        std::vector<double> coupled_times;
        std::mutex mtx;
        std::atomic<long> cursor{0};
        const long block = 64;
        auto work = [&] {
            std::vector<double> local;
            std::vector<long> local_hist(rep.size(), 0);
            for (;;) {
                const long b = cursor.fetch_add(1);
                const long lo = b * block;
                if (lo >= n) break;
                const long hi = std::min(n, lo + block);
                for (long p = lo; p < hi; ++p) {
                    Rng rng = path_stream(cfg.seed, static_cast<std::uint64_t>(p));
                    const auto path = sim.simulate_coupled(x0, y0, rng, false);
                    if (std::isfinite(path.T)) {
                        local.push_back(path.T);
                        for (size_t t = 0; t < rep.size(); ++t)
                            if (path.T <= row.times[t] + 1e-12) local_hist[t] += 1;
                    }
                }
            }
            std::lock_guard<std::mutex> lock(mtx);
            coupled_times.insert(coupled_times.end(), local.begin(), local.end());
            for (size_t t = 0; t < rep.size(); ++t) row.p_coupled[t] += local_hist[t];
        };
        const int workers = std::max(1, cfg.workers);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers - 1; ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();

        for (auto& pc : row.p_coupled) pc /= n;
        row.frac_uncoupled = 1.0 - static_cast<double>(coupled_times.size()) / n;
        if (!coupled_times.empty()) {
            std::sort(coupled_times.begin(), coupled_times.end());
            double sum = 0.0;
            for (double t : coupled_times) sum += t;
            row.mean_T = sum / coupled_times.size();
            row.median_T = coupled_times[coupled_times.size() / 2];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cbire
