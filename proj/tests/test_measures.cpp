#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cbire/measures.hpp"
#include "cbire/rng.hpp"

using namespace cbire;

namespace {
const double kE = std::exp(1.0);
}

TEST_CASE("truncated mass of the exponential tail matches the closed form") {
    auto mu = JumpMeasure::exponential(1.0, 1.0);
    CHECK(mu.truncated_mass(1.0, INFINITY) == doctest::Approx(1.0 / kE).epsilon(1e-10));
    CHECK(mu.truncated_mass(0.0, INFINITY) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("empty region has zero mass") {
    auto mu = JumpMeasure::exponential(1.0, 1.0);
    CHECK(mu.truncated_mass(2.0, 2.0) == 0.0);
    CHECK(mu.truncated_mass(3.0, 2.0) == 0.0);
}

TEST_CASE("pure atom law has total mass one") {
    auto q = JumpMeasure::from_atoms({{0.5, 1.0}});
    CHECK(q.truncated_mass(0.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("truncated mass is additive over disjoint regions") {
    auto mu = JumpMeasure::power_law_cutoff(0.7, 0.5, 1.3);
    const double whole = mu.truncated_mass(0.01, 10.0);
    const double parts = mu.truncated_mass(0.01, 0.4) + mu.truncated_mass(0.4, 10.0);
    CHECK(std::abs(whole - parts) < 2e-10 * (1.0 + whole));
}

TEST_CASE("degenerate atom sampling") {
    auto q = JumpMeasure::from_atoms({{0.5, 1.0}});
    Rng rng(1);
    for (int i = 0; i < 32; ++i) CHECK(q.sample_restricted(0.0, 1.0, rng) == 0.5);
}

TEST_CASE("restricted exponential sampling keeps the memoryless mean") {
    auto mu = JumpMeasure::exponential(1.0, 1.0);
    Rng rng(77);
    const double eps = 0.35;
    const int n = 400000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = mu.sample_restricted(eps, INFINITY, rng);
        REQUIRE(z >= eps);
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(std::abs(mean - (eps + 1.0)) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("two-atom sampling frequencies") {
    auto q = JumpMeasure::from_atoms({{0.0 + 1e-12, 0.5}, {1.0, 0.5}});
    Rng rng(5);
    const int n = 1000000;
    int zeros = 0;
    for (int i = 0; i < n; ++i)
        if (q.sample_restricted(0.0, 1.0, rng) < 0.5) ++zeros;
    CHECK(std::abs(zeros / static_cast<double>(n) - 0.5) < 0.002);
}

TEST_CASE("restricted sampling matches the analytic law (KS)") {
    auto mu = JumpMeasure::exponential(2.0, 1.5);
    Rng rng(99);
    const double a = 0.2, b = 4.0;
    const int n = 100000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = mu.sample_restricted(a, b, rng);
    std::sort(xs.begin(), xs.end());
    // analytic CDF of the normalized restriction
    const double beta = 1.5;
    const double Z = std::exp(-beta * a) - std::exp(-beta * b);
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double F = (std::exp(-beta * a) - std::exp(-beta * xs[i])) / Z;
        ks = std::max(ks, std::abs(F - (i + 1.0) / n));
        ks = std::max(ks, std::abs(F - static_cast<double>(i) / n));
    }
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("singular-density sampling matches the analytic law (KS)") {
    // a = 1: infinite activity
    auto mu = JumpMeasure::power_law_cutoff(1.0, 1.0, 0.0 + 1.0);
    Rng rng(123);
    const double a = 0.01, b = 2.0;
    const int n = 50000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = mu.sample_restricted(a, b, rng);
    std::sort(xs.begin(), xs.end());
    auto part = [&](double t) { return mu.truncated_mass(a, t); };
    const double Z = part(b);
    // KS against the quadrature CDF on a subsample of points
    double ks = 0.0;
    for (int i = 0; i < n; i += 199) {
        const double F = part(xs[i]) / Z;
        ks = std::max(ks, std::abs(F - (i + 1.0) / n));
    }
    CHECK(ks < 1.8 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("zero-mass region raises a domain error") {
    auto q = JumpMeasure::from_atoms({{0.5, 1.0}});
    Rng rng(3);
    CHECK_THROWS_AS(q.sample_restricted(0.6, 0.9, rng), DomainError);
}

TEST_CASE("overlap mass of the exponential family") {
    auto mu = JumpMeasure::exponential(1.0, 1.0);
    CHECK(mu.overlap_mass(0.0) == doctest::Approx(1.0).epsilon(1e-10));
    for (double x : {0.1, 0.5, 1.0, 2.0}) {
        CHECK(std::abs(mu.overlap_mass(x) - std::exp(-std::abs(x))) < 1e-8);
        CHECK(std::abs(mu.overlap_mass(-x) - std::exp(-std::abs(x))) < 1e-8);
    }
}

TEST_CASE("overlap symmetry mu_x = mu_{-x}") {
    auto mu = JumpMeasure::power_law_cutoff(1.0, 0.5, 2.0);
    for (double x : {0.1, 0.5, 2.0}) {
        const double plus = mu.overlap_mass(x);
        const double minus = mu.overlap_mass(-x);
        CHECK(plus == doctest::Approx(minus).epsilon(1e-7));
    }
}

TEST_CASE("overlap mass is nonincreasing in |x| for a log-concave family") {
    auto mu = JumpMeasure::exponential(0.8, 1.7);
    double prev = mu.overlap_mass(0.0);
    for (double x : {0.2, 0.5, 1.0, 2.0, 4.0}) {
        const double cur = mu.overlap_mass(x);
        CHECK(cur <= prev + 1e-10);
        prev = cur;
    }
}

TEST_CASE("rho conventions and oracle values") {
    auto mu = JumpMeasure::exponential(1.0, 1.0);
    CHECK(mu.rho(0.0, 0.7) == 1.0);
    CHECK(mu.rho(1.0, 0.5) == 0.0);  // z <= 0 v x
    CHECK(mu.rho(-1.0, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("rho stays in [0, 1] at random arguments") {
    auto mu = JumpMeasure::power_law_cutoff(1.3, 0.4, 0.9);
    Rng rng(31415);
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        const double z = rng.uniform(1e-4, 8.0);
        const double r = mu.rho(x, z);
        REQUIRE(r >= 0.0);
        REQUIRE(r <= 1.0);
    }
}

TEST_CASE("rho on a density-free measure follows the mu_x == 0 convention") {
    auto mu = JumpMeasure::from_atoms({{1.0, 2.0}});
    CHECK(mu.rho(0.5, 1.0) == 0.0);
    CHECK(mu.rho(0.0, 1.0) == 1.0);
    CHECK(mu.overlap_mass(0.7) == 0.0);
}

TEST_CASE("branching admissibility") {
    CHECK_NOTHROW(JumpMeasure::exponential(1.0, 1.0).check_branching_admissible());
    CHECK_NOTHROW(JumpMeasure::power_law_cutoff(1.0, 0.5, 1.0).check_branching_admissible());
    CHECK_NOTHROW(JumpMeasure::power_law_cutoff(1.0, 1.0, 1.0).check_branching_admissible());
    // a = 1.9: still integrates z^2 near 0
    CHECK_NOTHROW(JumpMeasure::power_law_cutoff(1.0, 1.9, 1.0).check_branching_admissible());
    CHECK_THROWS_AS(JumpMeasure::two_sided_exponential(1.0, 1.0, 1.0, 1.0).check_branching_admissible(),
                    DomainError);
}

TEST_CASE("environment admissibility needs a fast right tail") {
    CHECK_NOTHROW(JumpMeasure::two_sided_exponential(0.5, 2.0, 0.5, 1.0).check_environment_admissible());
    CHECK_THROWS_AS(
        JumpMeasure::two_sided_exponential(0.5, 0.8, 0.5, 1.0).check_environment_admissible(),
        DomainError);
}

TEST_CASE("lower-tail refinement flags infinite activity of z mu(dz)") {
    auto convergent = JumpMeasure::power_law_cutoff(1.0, 0.5, 1.0);
    auto id = [](double z) { return z; };
    CHECK_FALSE(convergent.refine_lower(id, 1.0).diverges);
    auto divergent = JumpMeasure::power_law_cutoff(1.0, 1.0, 1.0);
    CHECK(divergent.refine_lower(id, 1.0).diverges);
    auto strongly = JumpMeasure::power_law_cutoff(1.0, 1.5, 1.0);
    CHECK(strongly.refine_lower(id, 1.0).diverges);
}

TEST_CASE("atom validation") {
    CHECK_THROWS_AS(JumpMeasure::from_atoms({{1.0, -0.5}}), DomainError);
    CHECK_THROWS_AS(JumpMeasure::from_atoms({{1.0, 0.0}}), DomainError);
}

TEST_CASE("catastrophe law basics") {
    auto q = CatastropheLaw::from_atoms({{0.5, 0.5}, {1.0, 0.5}});
    CHECK(q.mean_one_minus_z() == doctest::Approx(0.25));
    CHECK(q.moment_z_pow_minus_one(0.5) ==
          doctest::Approx(0.5 * (std::sqrt(0.5) - 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(CatastropheLaw::from_atoms({{0.5, 0.7}}), DomainError);
    CHECK_THROWS_AS(CatastropheLaw::from_atoms({{1.5, 1.0}}), DomainError);

    Rng rng(11);
    int lows = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (q.sample(rng) < 0.75) ++lows;
    CHECK(std::abs(lows / static_cast<double>(n) - 0.5) < 0.006);
}

TEST_CASE("uniform catastrophe law") {
    auto q = CatastropheLaw::uniform();
    CHECK(q.mean_one_minus_z() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(q.mass(0.25, 0.75) == doctest::Approx(0.5).epsilon(1e-10));
}
