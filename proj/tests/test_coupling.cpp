#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "cbire/coupling.hpp"

using namespace cbire;

namespace {

ModelSpec mixed_model() {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.5;
    m.sigma = 0.8;
    m.mu = JumpMeasure::exponential(0.6, 1.2);
    m.beta0 = 0.1;
    m.beta1 = 0.3;
    m.nu = JumpMeasure::two_sided_exponential(0.3, 2.5, 0.3, 2.0);
    m.r = ScalarFn::constant(0.5);
    m.r_inf = 0.5;
    m.q = CatastropheLaw::from_atoms({{0.5, 0.5}, {0.9, 0.5}});
    m.g = ScalarFn::power(0.1, 2.0);
    return ModelSpec::create(m);
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double ks = 0.0;
    size_t i = 0, j = 0;
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

}  // namespace

TEST_CASE("diagonal start couples at time zero and stays identified") {
    auto model = mixed_model();
    CouplingConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 1.0;
    cfg.seed = 31;
    CouplingSimulator sim(model, cfg);
    const auto path = sim.simulate_coupled(2.0, 2.0);
    CHECK(path.T == 0.0);
    for (size_t i = 0; i < path.times.size(); ++i) CHECK(path.x_states[i] == path.y_states[i]);
}

TEST_CASE("coupled_step rejects equal inputs") {
    auto model = mixed_model();
    CouplingConfig cfg;
    CouplingSimulator sim(model, cfg);
    Rng rng(1);
    CHECK_THROWS_AS(sim.coupled_step(1.0, 1.0, 0.01, rng), ModelError);
}

TEST_CASE("stickiness: coordinates are bitwise equal after T") {
    auto model = mixed_model();
    CouplingConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 4.0;
    cfg.seed = 17;
    CouplingSimulator sim(model, cfg);
    int coupled = 0;
    for (std::uint64_t p = 0; p < 100; ++p) {
        Rng rng = path_stream(cfg.seed, p);
        const auto path = sim.simulate_coupled(3.0, 0.5, rng);
        if (!std::isfinite(path.T)) continue;
        ++coupled;
        for (size_t i = 0; i < path.times.size(); ++i) {
            if (path.times[i] >= path.T) {
                REQUIRE(path.x_states[i] == path.y_states[i]);
            }
        }
    }
    CHECK(coupled > 0);
}

TEST_CASE("diffusion-only pairs coalesce with high probability") {
    ModelSpec m;
    m.alpha = 0.0;
    m.sigma = 1.0;
    m.q = CatastropheLaw::dirac(1.0);
    auto model = ModelSpec::create(m);
    CouplingConfig cfg;
    cfg.dt = 0.005;
    cfg.t_end = 20.0;
    cfg.seed = 99;
    CouplingSimulator sim(model, cfg);
    int coupled_t5 = 0, coupled_t20 = 0;
    const int n = 300;
    for (std::uint64_t p = 0; p < n; ++p) {
        Rng rng = path_stream(cfg.seed, p);
        const auto path = sim.simulate_coupled(1.0, 0.3, rng);
        if (path.T <= 5.0) ++coupled_t5;
        if (std::isfinite(path.T)) ++coupled_t20;
    }
    // P(T <= t) grows toward 1 with the horizon
    CHECK(coupled_t20 >= coupled_t5);
    CHECK(coupled_t20 / static_cast<double>(n) > 0.9);
}

TEST_CASE("contracting deterministic pair meets at the predicted time") {
    ModelSpec m;
    m.alpha = 0.0;
    m.b = 1.0;  // gamma(x) = -x
    m.q = CatastropheLaw::dirac(1.0);
    auto model = ModelSpec::create(m);
    CouplingConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 20.0;
    cfg.match_tol = 1e-6;
    CouplingSimulator sim(model, cfg);
    const auto path = sim.simulate_coupled(1.5, 0.5, false);
    // |x - y| = e^{-t}: meets the tolerance at t = ln(1/1e-6)
    const double predicted = std::log(1.0 / cfg.match_tol);
    REQUIRE(std::isfinite(path.T));
    CHECK(std::abs(path.T - predicted) < 0.05);
}

TEST_CASE("atom-only branching degenerates to common/surplus rows") {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.5;
    m.mu = JumpMeasure::from_atoms({{0.7, 1.2}});
    m.q = CatastropheLaw::dirac(1.0);
    auto model = ModelSpec::create(m);
    CouplingConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 3.0;
    cfg.seed = 5;
    CouplingSimulator sim(model, cfg);
    Rng rng(55);
    const auto path = sim.simulate_coupled(2.0, 0.5, rng, true);
    long coalesce = 0, reflect = 0, common = 0, single = 0;
    for (const auto& ev : path.events) {
        coalesce += ev.branch_counts[0];
        reflect += ev.branch_counts[1];
        common += ev.branch_counts[2];
        single += ev.branch_counts[3] + ev.branch_counts[4];
    }
    CHECK(coalesce == 0);
    CHECK(reflect == 0);
    CHECK(common + single > 0);
}

TEST_CASE("x-marginal of the coupling matches the standalone simulator in law") {
    auto model = mixed_model();
    CouplingConfig cfg;
    cfg.dt = 0.005;
    cfg.t_end = 1.0;
    cfg.seed = 12345;
    CouplingSimulator coupled(model, cfg);
    Simulator single(model, cfg);
    const int n = 3000;
    std::vector<double> xs, ys;
    for (std::uint64_t p = 0; p < n; ++p) {
        Rng rng = path_stream(cfg.seed, p);
        const auto path = coupled.simulate_coupled(1.0, 3.0, rng);
        xs.push_back(path.x_states.back());
        Rng rng2 = path_stream(cfg.seed ^ 0xabcdef, p);
        const auto sp = single.simulate_path(1.0, rng2);
        ys.push_back(sp.states.back());
    }
    const double ks = two_sample_ks(xs, ys);
    const double band = 1.628 * std::sqrt(2.0 / n);  // 99% two-sample level
    CHECK(ks < band);
}

TEST_CASE("coalescence stats table") {
    ModelSpec m;
    m.alpha = 0.0;
    m.b = 1.0;
    m.q = CatastropheLaw::dirac(1.0);
    auto model = ModelSpec::create(m);
    CouplingConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 20.0;
    cfg.match_tol = 1e-4;
    cfg.seed = 3;
    cfg.workers = 4;
    const auto rows =
        coalescence_stats(model, {{1.0, 1.0}, {2.0, 1.0}}, 50, cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].p_coupled.front() == doctest::Approx(1.0));  // equal starts couple at t = 0
    CHECK(rows[0].mean_T == doctest::Approx(0.0));
    // deterministic contraction: T = ln(|x0-y0| / tol) for the second pair
    const double predicted = std::log(1.0 / cfg.match_tol);
    CHECK(std::abs(rows[1].mean_T - predicted) < 0.1);
    CHECK(rows[1].frac_uncoupled == doctest::Approx(0.0));
}

TEST_CASE("reflection switches to a single stream after T") {
    // after coalescence both coordinates are the same object; check a long run
    auto model = mixed_model();
    CouplingConfig cfg;
    cfg.dt = 0.02;
    cfg.t_end = 6.0;
    cfg.seed = 8;
    CouplingSimulator sim(model, cfg);
    Rng rng(80);
    const auto path = sim.simulate_coupled(0.8, 0.9, rng);
    if (std::isfinite(path.T)) {
        bool diverged_after_T = false;
        for (size_t i = 0; i < path.times.size(); ++i)
            if (path.times[i] >= path.T && path.x_states[i] != path.y_states[i])
                diverged_after_T = true;
        CHECK_FALSE(diverged_after_T);
    }
}
