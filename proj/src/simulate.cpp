#include "cbire/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace cbire {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxHalvingDepth = 24;
}  // namespace

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw ModelError("sim.dt must be positive");
    if (!(t_end >= dt)) throw ModelError("sim.t_end must be at least dt");
    if (!(eps_mu > 0.0) || !(eps_nu > 0.0)) throw ModelError("truncation levels must be positive");
    if (!(overflow_guard > 0.0)) throw ModelError("overflow_guard must be positive");
    if (substep_jump_cap < 1) throw ModelError("substep_jump_cap must be >= 1");
    if (workers < 1) throw ModelError("workers must be >= 1");
}

Simulator::Simulator(const ModelSpec& model, const SimConfig& cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    const QuadOptions opt{1e-12, 1e-10, 4000};
    if (!model_.mu.is_zero()) {
        for (const auto& atom : model_.mu.atoms())
            if (atom.location <= cfg_.eps_mu)
                throw ModelError("eps_mu must lie below every branching atom");
        mass_mu_large_ = model_.mu.truncated_mass(cfg_.eps_mu, kInf, opt);
        mean_mu_large_ = model_.mu.integral([](double z) { return z; }, cfg_.eps_mu, kInf, opt);
        var_mu_small_ =
            model_.mu.density_integral([](double z) { return z * z; }, 0.0, cfg_.eps_mu, opt);
    }
    if (!model_.nu.is_zero()) {
        for (const auto& atom : model_.nu.atoms())
            if (std::abs(atom.location) <= cfg_.eps_nu)
                throw ModelError("eps_nu must lie below every environment atom");
        mass_nu_neg_ = model_.nu.truncated_mass(-kInf, -cfg_.eps_nu, opt);
        mass_nu_pos_ = model_.nu.truncated_mass(cfg_.eps_nu, kInf, opt);
        auto em1 = [](double z) { return std::expm1(z); };
        mean_expm1_nu_large_ = model_.nu.integral(em1, -kInf, -cfg_.eps_nu, opt) +
                               model_.nu.integral(em1, cfg_.eps_nu, kInf, opt);
    }
}

double Simulator::compensated_drift(double x) const {
    return model_.gamma(x) + model_.beta0 * x - x * mean_mu_large_ - x * mean_expm1_nu_large_;
}

double Simulator::sample_mu_large(Rng& rng, bool* from_atom) const {
    return model_.mu.sample_restricted_tagged(cfg_.eps_mu, kInf, rng, from_atom);
}

double Simulator::sample_nu_large(Rng& rng) const {
    const double total = mass_nu_neg_ + mass_nu_pos_;
    const bool negative = rng.uniform01() * total < mass_nu_neg_;
    return negative ? model_.nu.sample_restricted(-kInf, -cfg_.eps_nu, rng)
                    : model_.nu.sample_restricted(cfg_.eps_nu, kInf, rng);
}

double Simulator::cat_rate_bound(double x, double dt) const {
    const double base = model_.r(x);
    if (model_.r_lipschitz == 0.0) return base;
    const double xp = std::max(x, 0.0);
    const double drift_move = (std::abs(model_.gamma(x)) + std::abs(model_.beta0) * xp +
                               xp * (mean_mu_large_ + std::abs(mean_expm1_nu_large_))) *
                              dt;
    const double gauss_move =
        3.0 * (model_.sigma * std::sqrt(xp) + model_.beta1 * xp) * std::sqrt(dt);
    return base + model_.r_lipschitz * (drift_move + gauss_move + 1.0);
}

double Simulator::attempt_step(double x, double dt, Rng& rng, StepEvents* ev, bool* redo) const {
    *redo = false;
    const double xp = std::max(x, 0.0);
    int jumps = 0;

    const double comp = compensated_drift(x);
    double cur = x + dt * comp;

    const double dW = rng.normal() * std::sqrt(dt);
    const double dB = rng.normal() * std::sqrt(dt);
    double gauss = model_.sigma * std::sqrt(xp) * dW + model_.beta1 * x * dB;
    if (cfg_.variance_topup && var_mu_small_ > 0.0)
        gauss += std::sqrt(xp * var_mu_small_ * dt) * rng.normal();
    cur += gauss;

    int n_b = 0, n_e = 0, n_c = 0;
    if (mass_mu_large_ > 0.0 && xp > 0.0) {
        n_b = static_cast<int>(rng.poisson(xp * dt * mass_mu_large_));
        for (int i = 0; i < n_b; ++i) {
            bool from_atom = false;
            cur += sample_mu_large(rng, &from_atom);
        }
        jumps += n_b;
    }
    const double nu_mass = mass_nu_neg_ + mass_nu_pos_;
    if (nu_mass > 0.0) {
        n_e = static_cast<int>(rng.poisson(dt * nu_mass));
        for (int i = 0; i < n_e; ++i) cur *= std::exp(sample_nu_large(rng));
        jumps += n_e;
    }
    if (!model_.r.is_zero()) {
        const double bound = cat_rate_bound(x, dt);
        if (bound > 0.0) {
            n_c = static_cast<int>(rng.poisson(dt * bound));
            for (int i = 0; i < n_c; ++i) {
                const double rate = model_.r(std::max(cur, 0.0));
                if (rate > bound) {  // dominating rate breached intra-step
                    *redo = true;
                    return x;
                }
                if (rng.uniform01() * bound < rate) {
                    cur *= model_.q.sample(rng);
                    ++jumps;
                }
            }
        }
    }

    if (jumps > cfg_.substep_jump_cap) {
        *redo = true;
        return x;
    }
    if (cur < 0.0) {
        if (cfg_.negative_fixup == SimConfig::NegativeFixup::reject_step) {
            *redo = true;
            return x;
        }
        cur = 0.0;
    }
    if (ev) {
        ev->diffusion += gauss;
        ev->branching_jumps += n_b;
        ev->env_jumps += n_e;
        ev->cat_jumps += n_c;
        ev->compensator_drift += dt * comp;
    }
    return cur;
}

double Simulator::step(double x, double dt, Rng& rng, StepEvents* ev) const {
    struct Frame {
        double dt;
        int depth;
    };
    // manual halving stack: process substeps left to right
    std::vector<Frame> stack{{dt, 0}};
    double cur = x;
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        bool redo = false;
        const double next = attempt_step(cur, f.dt, rng, ev, &redo);
        if (redo) {
            if (f.depth >= kMaxHalvingDepth)
                throw InstabilityError("step halving depth exceeded (state " + std::to_string(cur) +
                                       ")");
            if (ev) ev->halvings += 1;
            stack.push_back({0.5 * f.dt, f.depth + 1});
            stack.push_back({0.5 * f.dt, f.depth + 1});
            continue;
        }
        cur = next;
        if (cur > cfg_.overflow_guard)
            throw InstabilityError("state exceeded overflow guard (" + std::to_string(cur) + ")");
    }
    return cur;
}

SamplePath Simulator::simulate_path(double x0, bool record_events) const {
    Rng rng(cfg_.seed);
    return simulate_path(x0, rng, record_events);
}

SamplePath Simulator::simulate_path(double x0, Rng& rng, bool record_events) const {
    if (!(x0 >= 0.0)) throw ModelError("initial state must be nonnegative");
    SamplePath path;
    const long n = std::lround(std::ceil(cfg_.t_end / cfg_.dt - 1e-9));
    path.times.reserve(n + 1);
    path.states.reserve(n + 1);
    path.times.push_back(0.0);
    path.states.push_back(x0);
    if (record_events) path.events.reserve(n);
    double x = x0;
    for (long i = 0; i < n; ++i) {
        const double t0 = i * cfg_.dt;
        const double t1 = std::min((i + 1) * cfg_.dt, cfg_.t_end);
        StepEvents ev;
        x = step(x, t1 - t0, rng, record_events ? &ev : nullptr);
        path.times.push_back(t1);
        path.states.push_back(x);
        if (record_events) path.events.push_back(ev);
    }
    return path;
}

std::vector<long> report_indices(long n_grid_points, int stride, long n_paths) {
    // keep the stored value matrix under ~3e7 entries
    long s = stride;
    if (s <= 0) {
        s = 1;
        while (n_paths * (n_grid_points / s + 2) > 30000000L) s *= 2;
    }
    std::vector<long> idx;
    for (long i = 0; i < n_grid_points; i += s) idx.push_back(i);
    if (idx.empty() || idx.back() != n_grid_points - 1) idx.push_back(n_grid_points - 1);
    return idx;
}

EnsembleSummary Simulator::simulate_ensemble(double x0, long n,
                                             const std::vector<Observable>& observables) const {
    if (n < 1) throw ModelError("ensemble size must be >= 1");
    std::vector<Observable> obs = observables;
    if (obs.empty()) obs.push_back({"x", [](double v) { return v; }});

    const long grid_n = std::lround(std::ceil(cfg_.t_end / cfg_.dt - 1e-9)) + 1;
    const auto rep = report_indices(grid_n, cfg_.report_stride, n);
    const size_t T = rep.size();
    const size_t K = obs.size();

    // values[k][t * n + path]; NaN marks an excluded path
    std::vector<std::vector<double>> values(K, std::vector<double>(T * n, 0.0));
    std::vector<char> excluded(n, 0);

    auto run_block = [&](long lo, long hi) {
        for (long p = lo; p < hi; ++p) {
            Rng rng = path_stream(cfg_.seed, static_cast<std::uint64_t>(p));
            double x = x0;
            size_t next_rep = 0;
            try {
                for (long i = 0; i < grid_n; ++i) {
                    if (i > 0) {
                        const double t0 = (i - 1) * cfg_.dt;
                        const double t1 = std::min(i * cfg_.dt, cfg_.t_end);
                        x = step(x, t1 - t0, rng);
                    }
                    if (next_rep < T && rep[next_rep] == i) {
                        for (size_t k = 0; k < K; ++k) values[k][next_rep * n + p] = obs[k].fn(x);
                        ++next_rep;
                    }
                }
            } catch (const InstabilityError&) {
                excluded[p] = 1;
            }
        }
    };

    const int workers = std::max(1, cfg_.workers);
    if (workers == 1) {
        run_block(0, n);
    } else {
        // fixed 256-path blocks handed to workers; path->stream mapping is
        // index-based so the partition cannot affect results
        const long block = 256;
        std::vector<std::thread> pool;
        std::atomic<long> cursor{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const long b = cursor.fetch_add(1);
                    const long lo = b * block;
                    if (lo >= n) return;
                    run_block(lo, std::min(n, lo + block));
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    EnsembleSummary out;
    out.n_paths = n;
    for (long p = 0; p < n; ++p)
        if (excluded[p]) ++out.n_excluded;
    out.times.reserve(T);
    for (long i : rep) out.times.push_back(std::min(i * cfg_.dt, cfg_.t_end));

    out.mean.assign(K, std::vector<double>(T, 0.0));
    out.var = out.mean;
    out.q05 = out.mean;
    out.q50 = out.mean;
    out.q95 = out.mean;
    out.se = out.mean;
    for (size_t k = 0; k < K; ++k) {
        out.names.push_back(obs[k].name);
        std::vector<double> buf;
        buf.reserve(n);
        for (size_t t = 0; t < T; ++t) {
            buf.clear();
            double sum = 0.0;
            for (long p = 0; p < n; ++p) {
                if (excluded[p]) continue;
                const double v = values[k][t * n + p];
                buf.push_back(v);
                sum += v;
            }
            const double m = buf.empty() ? 0.0 : sum / buf.size();
            double ss = 0.0;
            for (double v : buf) ss += (v - m) * (v - m);
            const double var = buf.size() > 1 ? ss / (buf.size() - 1) : 0.0;
            out.mean[k][t] = m;
            out.var[k][t] = var;
            out.se[k][t] = buf.empty() ? 0.0 : std::sqrt(var / buf.size());
            if (!buf.empty()) {
                std::sort(buf.begin(), buf.end());
                auto at = [&](double q) {
                    const size_t i = static_cast<size_t>(q * (buf.size() - 1));
                    return buf[i];
                };
                out.q05[k][t] = at(0.05);
                out.q50[k][t] = at(0.50);
                out.q95[k][t] = at(0.95);
            }
        }
    }
    return out;
}

}  // namespace cbire
