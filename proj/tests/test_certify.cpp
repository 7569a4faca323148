#include "doctest.h"

#include <cmath>

#include "cbire/certify.hpp"
#include "example_models.hpp"

using namespace cbire;

namespace {

ModelSpec bare(double sigma, JumpMeasure mu = JumpMeasure::zero()) {
    ModelSpec m;
    m.alpha = 1.0;
    m.sigma = sigma;
    m.mu = std::move(mu);
    m.q = CatastropheLaw::dirac(1.0);
    return ModelSpec::create(m);
}

}  // namespace

TEST_CASE("nontriviality branches") {
    SUBCASE("sigma > 0 satisfies trivially") {
        auto nt = check_nontriviality(bare(1.0));
        CHECK(nt.branch == 1);
        CHECK(nt.delta == 0.0);
    }
    SUBCASE("a = 1/2 stable-like density fails both branches") {
        auto model = bare(0.0, JumpMeasure::power_law_cutoff(1.0, 0.5, 1.0));
        CHECK_THROWS_AS(check_nontriviality(model), ConditionError);
    }
    SUBCASE("infinite activity with overlap floor passes branch (ii)") {
        auto model = bare(0.0, JumpMeasure::power_law_cutoff(1.0, 1.0, 1.0));
        auto nt = check_nontriviality(model, 0.5);
        CHECK(nt.branch == 2);
        CHECK(nt.delta > 0.0);
        // delta is the grid minimum of the overlap mass over |x| <= c0
        CHECK(nt.delta <= model.mu.overlap_mass(0.5) + 1e-9);
    }
}

TEST_CASE("lambda3 search") {
    SUBCASE("immediately positive phi~ returns the grid floor") {
        auto model = bare(1.0);
        CHECK(find_lambda3(model, 1e-3) == doctest::Approx(1e-3));
    }
    SUBCASE("quadratic root case") {
        ModelSpec m;
        m.alpha = 1.0;
        m.sigma = 1.0;
        m.beta0 = 2.0;
        m.q = CatastropheLaw::dirac(1.0);
        auto model = ModelSpec::create(m);
        // phi~(l) = l^2/2 - 2l > 0 iff l > 4
        const double l3 = find_lambda3(model);
        CHECK(l3 > 4.0);
        CHECK(l3 < 4.0 + 1e-6);
        CHECK(model.phi_tilde(l3) > 0.0);
    }
}

TEST_CASE("region construction") {
    auto model = bare(1.0);
    LyapunovReport lyap;
    lyap.theta_V = 0.5;
    lyap.lambda1 = 1.0;
    lyap.lambda2 = 1.0;
    lyap.holds = true;
    SUBCASE("H == 0 pins M by V(M) = 12") {
        auto reg = build_regions(model, lyap, 6.0, 1.0, 0.0, 0.5);
        CHECK(reg.M == doctest::Approx(std::pow(12.0, 2.0) - 1.0).epsilon(1e-6));
        // S0: 6 lambda2/lambda1 = 6, x* = 5^2 - 1 = 24
        CHECK(reg.S0_bound == doctest::Approx(24.0).epsilon(1e-12));
        CHECK(reg.l0 == doctest::Approx(reg.M + 24.0));
        CHECK(reg.K0 == doctest::Approx(6.0));
    }
    SUBCASE("empty S0 leaves l0 = M") {
        LyapunovReport tight = lyap;
        tight.lambda1 = 4.0;  // lambda1 (V(0)+V(0)) = 8 > 6 lambda2
        auto reg = build_regions(model, tight, 6.0, 1.0, 0.0, 0.5);
        CHECK(reg.S0_bound == 0.0);
        CHECK(reg.l0 == doctest::Approx(reg.M));
    }
    SUBCASE("K = +inf falls back to 6 alpha / x0") {
        auto reg = build_regions(model, lyap, INFINITY, 1.0, 0.0, 0.5);
        CHECK(reg.K0 == doctest::Approx(6.0 * model.alpha / reg.x0));
    }
}

TEST_CASE("lambda0 search") {
    SUBCASE("k0 = 0 takes the smallest admissible value") {
        auto model = bare(1.0);
        const double l3 = 0.01;
        const double l0 = find_lambda0(model, 5.0, 0.0, 1.0, l3);
        CHECK(l0 == doctest::Approx(l3 * (1.0 + 1e-6)));
    }
    SUBCASE("hand-checked displays with E = 0") {
        // sigma = 1, k0 = 1, l0 = 2, x0 = 1, no environment, r_inf q-moment =
        // beta0 = 0: both displays reduce to phi~/lambda >= 4 k0 l0 = 8, so
        // lambda0 = 16.
        auto model = bare(1.0);
        const double l0 = find_lambda0(model, 2.0, 1.0, 1.0, 1e-3);
        CHECK(l0 == doctest::Approx(16.0).epsilon(1e-6));
        CHECK(model.phi_tilde(l0) / l0 >= 2.0 * 1.0 * 2.0);
    }
}

TEST_CASE("theta branches") {
    auto model = bare(1.0);
    RegionData reg;
    reg.x0 = 1.0;
    reg.K = 2.0;
    reg.K0 = 2.0;
    reg.M = 143.0;
    reg.S0_bound = 0.0;
    reg.l0 = 20.0;
    reg.lambda1 = 1.0;
    reg.lambda2 = 1.0;
    Nontriviality nt;
    nt.branch = 1;
    nt.delta = 0.0;
    const double lambda0 = 0.1;

    auto res = choose_theta(model, reg, nt, lambda0, 0.5);
    // k0 = 0: only theta >= 4 and the two diffusion/overlap branches remain
    CHECK(res.checks.size() == 3);
    CHECK(res.H_bar == doctest::Approx(0.0));
    // independent recomputation of the clean-model branches
    const double decay = std::exp(-lambda0 * reg.l0);
    const double den = reg.x0 * (lambda0 * lambda0 * decay);
    const double t2 = 4.0 * reg.K / den;
    const double t4 = 4.0 * (6.0 * res.R_const + reg.K) / (res.r_small * den) + 2.0;
    CHECK(res.theta == doctest::Approx(std::max({4.0, t2, t4})).epsilon(1e-12));
    for (const auto& c : res.checks) CHECK(c.holds);
}

TEST_CASE("theta uses delta alone when sigma = 0") {
    auto model = bare(0.0, JumpMeasure::power_law_cutoff(1.0, 1.0, 1.0));
    RegionData reg;
    reg.x0 = 0.5;
    reg.K = 4.0;
    reg.K0 = 4.0;
    reg.M = 143.0;
    reg.l0 = 150.0;
    reg.lambda1 = 0.5;
    reg.lambda2 = 1.0;
    Nontriviality nt;
    nt.branch = 2;
    nt.delta = 0.6;
    auto res = choose_theta(model, reg, nt, 0.013, 0.5);
    // sigma = 0 and lambda0 l0 ~ 2: the denominator is dominated by delta
    const double den = reg.x0 * nt.delta;
    const double t2 = 4.0 * (2.0 * res.H_bar + reg.K) / den;
    bool found = false;
    for (const auto& c : res.checks)
        if (c.rhs == doctest::Approx(t2).epsilon(1e-6)) found = true;
    CHECK(found);
}

TEST_CASE("small-state bound blocks oversized K") {
    auto model = bare(1.0);
    RegionData reg;
    reg.x0 = 1.0;
    reg.K = 6.0;   // K0 = 6 alpha / x0 = 6 > 3 alpha / x0: unreachable
    reg.K0 = 6.0;
    reg.M = 10.0;
    reg.l0 = 10.0;
    Nontriviality nt;
    nt.branch = 1;
    CHECK_THROWS_AS(choose_theta(model, reg, nt, 0.2, 0.5), ConditionError);
}

TEST_CASE("psi concavity combination") {
    ControlFunctions c;
    c.lambda0 = 0.7;
    for (double u : {0.0, 0.1, 0.5, 1.0, 3.0, 10.0}) {
        CHECK(c.psi(2.0 * u) - 2.0 * c.psi(u) <= -1.0 + 1e-12);
    }
    CHECK(c.psi(0.0) == doctest::Approx(1.0));
}

TEST_CASE("control function shapes") {
    ControlFunctions c;
    c.lambda0 = 0.5;
    c.x0 = 0.8;
    c.theta = 6.0;
    c.l0 = 3.0;
    c.theta_V = 0.5;
    c.eps = 1.5;
    for (double x : {0.0, 0.2, 0.5, 0.79, 0.8, 1.0, 5.0}) {
        CHECK(c.phi(x) >= c.theta);
        CHECK(c.phi(x) <= c.theta + 1.0);
        if (x > 0.0) CHECK(c.phi(x) <= c.phi(x * 0.99) + 1e-12);  // nonincreasing
    }
    // C^2 matching at x0
    const double h = 1e-7;
    CHECK(std::abs(c.dphi(c.x0 - h)) < 1e-6);
    CHECK(std::abs(c.d2phi(c.x0 - h)) < 1e-5);
    // psi in [1, 2]
    for (double u : {0.0, 0.5, 2.0, 50.0}) {
        CHECK(c.psi(u) >= 1.0);
        CHECK(c.psi(u) <= 2.0);
    }
    // f vanishes on the diagonal, F dominates V + V off it
    CHECK(c.f(1.3, 1.3) == 0.0);
    CHECK(c.F(1.3, 1.3) == 0.0);
    CHECK(c.F(2.0, 1.0) >= c.V(2.0) + c.V(1.0));
    // direct recomposition
    const double expect = c.V(1.0) + c.V(0.0) + c.eps * c.phi(1.0) * c.psi(1.0);
    CHECK(c.F(1.0, 0.0) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("full certificate on the reference example") {
    auto model = examples::diffusion_dominated();
    auto opt = examples::diffusion_certify_options();
    opt.grid_2d = 32;  // keep the unit test quick; acceptance runs the full grid
    auto cert = certify(model, opt);
    CHECK(cert.verified);
    CHECK(cert.lambda > 0.0);
    CHECK(cert.C3 > 0.0);
    CHECK(cert.C4 >= 1.0);
    CHECK(cert.theta >= 4.0);
    CHECK(cert.r_small > 0.0);
    CHECK(cert.r_small <= 0.5);
    CHECK(cert.lambda0 > cert.lambda3);
    CHECK(cert.l0 >= 1.0);
    CHECK(cert.eps == doctest::Approx(3.0 * cert.lambda2 / cert.K0));
    for (const auto& rec : cert.inequalities) CHECK(rec.holds);
    CHECK(cert.grid_margin >= -1e-6 * (1.0 + std::abs(cert.grid_margin)));

    // equivalence of F and V + V + 1 with the extracted C4
    const auto controls = cert.controls();
    for (auto [x, y] : {std::pair{2.0, 0.5}, {10.0, 3.0}, {0.3, 0.1}}) {
        const double denom = controls.V(x) + controls.V(y) + 1.0;
        const double F = eval_F(cert, x, y);
        CHECK(F <= cert.C4 * denom * (1.0 + 1e-12));
        CHECK(F >= denom / cert.C4 * (1.0 - 1e-12));
    }
}

TEST_CASE("certify refuses to run when the Lyapunov condition fails") {
    auto model = examples::anti_example();
    CHECK_THROWS_AS(certify(model), ConditionError);
    try {
        certify(model);
    } catch (const ConditionError& e) {
        CHECK(e.condition == "Condition 3.2");
    }
}

TEST_CASE("certify names Condition 3.1 when alpha = 0") {
    ModelSpec m;
    m.alpha = 0.0;
    m.sigma = 1.0;
    m.r = ScalarFn::constant(1.0);
    m.r_inf = 1.0;
    m.q = CatastropheLaw::dirac(0.5);
    auto model = ModelSpec::create(m);
    try {
        certify(model);
        CHECK(false);
    } catch (const ConditionError& e) {
        CHECK(e.condition == "Condition 3.1");
    }
}

TEST_CASE("lemma-level surrogate dominates the coupling generator on f") {
    auto model = examples::diffusion_dominated();
    auto opt = examples::diffusion_certify_options();
    opt.grid_2d = 16;
    auto cert = certify(model, opt);
    REQUIRE(cert.verified);
    const auto controls = cert.controls();
    const auto fdist = coupling_distance_function(controls);
    const double q1m = model.q.mean_one_minus_z();
    const double E = model.env_energy(cert.lambda0, cert.l0);

    for (double x : {2.0 * cert.x0, 5.0, 20.0}) {
        for (double u : {0.05, 0.5, std::min(cert.l0, 5.0)}) {
            const double y = x - u;
            if (y <= 0.0) continue;
            const double lhs = apply_L_coupled(model, fdist, x, y);
            const double decay = std::exp(-cert.lambda0 * u);
            const double rmin = std::min(model.r(x), model.r(y));
            const double bracket = model.phi(cert.lambda0) / cert.lambda0 +
                                   (rmin * q1m - model.beta0) +
                                   0.5 * cert.lambda0 * u * E -
                                   2.0 * cert.l0 * std::abs(model.r(x) - model.r(y)) / u;
            const double rhs =
                2.0 * model.H_of_x(x, cert.x0, QuadOptions{}) -
                0.5 * cert.theta * y *
                    (model.sigma * model.sigma * cert.lambda0 * cert.lambda0 * decay +
                     model.mu.overlap_mass(u)) -
                cert.theta * u * cert.lambda0 * decay * bracket;
            CHECK(lhs <= rhs + 1e-6 * (1.0 + cert.theta));
        }
    }
}

TEST_CASE("doubling the competition never shrinks the certified rate") {
    auto model = examples::diffusion_dominated();
    ModelSpec stronger_raw = model;
    stronger_raw.g = ScalarFn::power(0.10, 2.0);  // 2x the coefficient
    auto stronger = ModelSpec::create(stronger_raw);
    auto opt = examples::diffusion_certify_options();
    opt.grid_2d = 16;
    auto a = certify(model, opt);
    auto b = certify(stronger, opt);
    REQUIRE(a.verified);
    REQUIRE(b.verified);
    CHECK(b.lambda >= a.lambda * (1.0 - 1e-9));
}
