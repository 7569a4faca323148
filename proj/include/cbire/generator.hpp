#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cbire/model.hpp"
#include "cbire/simulate.hpp"

namespace cbire {

// C^2 test function on [0, inf) with analytic derivatives.
struct TestFunction1D {
    std::function<double(double)> f, df, d2f;
    enum class Growth { bounded, polynomial };
    Growth growth = Growth::bounded;
    double degree = 0.0;  // for polynomial growth

    // Central-difference consistency of df/d2f against f at random points.
    void check_consistency(double lo, double hi, Rng& rng, int points = 32) const;
};

// Test function on R_+^2, twice continuously differentiable off the diagonal.
struct TestFunction2D {
    std::function<double(double, double)> f, fx, fy, fxx, fyy, fxy;
};

// Quadrature tolerance for generator integrals. The acceptance bands for the
// marginal property are expressed in terms of this value; internally the
// integrals run tighter.
inline constexpr double kGeneratorQuadTol = 1e-9;

// L f(x) = L_b f + L_e f + L_c f. Throws NumericError when one of the three
// integrals fails to converge for this f (the operational not-in-domain signal).
double apply_L(const ModelSpec& model, const TestFunction1D& f, double x);

// Coupling generator L~ on a two-variable test function, evaluated off the
// diagonal via the simplified form of the refined-basic-coupling branching
// part. x == y is rejected.
double apply_L_coupled(const ModelSpec& model, const TestFunction2D& f, double x, double y);

struct LyapunovReport {
    double theta_V = 0.0;
    double lambda1 = 0.0;  // > 0 iff the condition holds on the grid
    double lambda2 = 0.0;
    std::vector<double> grid;
    std::vector<double> V_values;
    std::vector<double> LV_values;
    std::vector<double> margins;  // lambda2 - lambda1 V - LV pointwise
    double margin = 0.0;          // min over the grid
    bool holds = false;
};

// LV for V(x) = (1+x)^theta in the cancellation-free ratio form.
double lyapunov_LV(const ModelSpec& model, double theta_V, double x,
                   const QuadOptions& opt = {1e-11, 1e-10, 4000});

// Fits lambda1 as the tail minimum of -LV/V (last quarter of the grid) and
// lambda2 >= 1 as the smallest constant making LV <= lambda2 - lambda1 V hold
// on the whole grid. holds = false when no positive lambda1 exists; that is a
// report, not an exception.
LyapunovReport lyapunov_check(const ModelSpec& model, double theta_V,
                              const std::vector<double>& grid);

// V as a 1D test function (for the generic-route cross-check).
TestFunction1D lyapunov_test_function(double theta_V);

struct ConsistencyReport {
    double quotient = 0.0;   // (E f(X_h) - f(x)) / h
    double se = 0.0;         // its standard error
    double lf = 0.0;         // apply_L(f, x)
    double allowance = 0.0;  // 4 se + C h
    double discrepancy = 0.0;
    bool agree = false;
    long n_excluded = 0;
};

// Martingale-problem check: the Monte Carlo difference quotient over one step
// of size h against apply_L. The O(h) allowance constant is pinned to
// C = 50 (1 + |Lf(x)|).
ConsistencyReport generator_mc_consistency(const ModelSpec& model, const TestFunction1D& f,
                                           double x, double h, long n, const SimConfig& cfg);

}  // namespace cbire
