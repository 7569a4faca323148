#pragma once

#include <string>
#include <vector>

#include "cbire/generator.hpp"
#include "cbire/model.hpp"

namespace cbire {

// A named admissibility condition failed; the message carries the name.
struct ConditionError : std::runtime_error {
    ConditionError(std::string cond, const std::string& what)
        : std::runtime_error(cond + ": " + what), condition(std::move(cond)) {}
    std::string condition;
};

struct CertifyOptions {
    double theta_V = 0.5;
    // Free constant K of the small-state bound; 0 resolves to 2 alpha / x0,
    // which keeps K0 strictly below the attainable 3 alpha / x0 ceiling.
    double K = 0.0;
    double c0 = 1.0;  // overlap radius for the sigma = 0 branch
    double x0 = 0.0;  // small-state threshold; 0 resolves to min(1, c0)
    double lyap_grid_lo = 1e-2;
    double lyap_grid_hi = 1e4;
    int lyap_grid_points = 256;
    int grid_2d = 64;       // log-x times linear-y resolution of the final check
    int sliver_x_points = 11;  // near-diagonal slivers at |x-y| in {1e-3,1e-2,1e-1}
    double slack_factor = 1e3;
    double lambda_search_cap = 1e8;
};

struct Nontriviality {
    bool satisfied = false;
    int branch = 0;  // 1: sigma > 0; 2: infinite activity with overlap floor
    double c0 = 1.0;
    double delta = 0.0;  // overlap floor; 0 on branch 1
    std::string detail;
};

struct RegionData {
    double x0 = 0.0;
    double K = 0.0, K0 = 0.0;
    double M = 1.0;
    double S0_bound = 0.0;  // sup_{S0} |x - y|
    double l0 = 1.0;
    double lambda1 = 0.0, lambda2 = 0.0;  // Lyapunov pair used by the pipeline
};

struct InequalityRecord {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    bool holds = false;
};

// psi / phi / f / F with all constants fixed.
struct ControlFunctions {
    double lambda0 = 0.0;
    double x0 = 1.0;
    double theta = 4.0;
    double l0 = 1.0;
    double theta_V = 0.5;
    double eps = 0.0;

    double psi(double u) const;    // 2 - e^{-lambda0 u}
    double dpsi(double u) const;   // lambda0 e^{-lambda0 u}
    double d2psi(double u) const;  // -lambda0^2 e^{-lambda0 u}
    double phi(double x) const;    // theta + (1 - x/x0)^3 below x0, theta above
    double dphi(double x) const;
    double d2phi(double x) const;
    double V(double x) const;
    double f(double x, double y) const;  // phi(x v y) psi(|x-y| ^ l0) off-diagonal
    double F(double x, double y) const;  // (V + V) 1_{x != y} + eps f
};

struct DriftCertificate {
    double theta_V = 0.5;
    double lambda1 = 0.0, lambda2 = 0.0;  // pipeline pair
    double lyap_lambda1_max = 0.0;        // largest-lambda1 fit, for reference
    int nontriviality_branch = 0;
    double c0 = 0.0, delta = 0.0;
    double k0 = 0.0;
    double x0 = 0.0, K = 0.0, K0 = 0.0, M = 0.0, S0_bound = 0.0, l0 = 0.0;
    double lambda3 = 0.0, lambda0 = 0.0;
    double r_small = 0.0;  // the constant r(x0) in (0, 1/2] of the small-state case
    double H_bar = 0.0;    // sup over S1 of H(x, x0), x > x0
    double R_const = 0.0;
    double theta = 4.0;
    double eps = 0.0;
    double C3 = 0.0, C4 = 1.0;
    double lambda = 0.0;
    double grid_margin = 0.0;
    bool verified = false;
    std::vector<InequalityRecord> inequalities;

    struct GridPoint {
        double x = 0.0, y = 0.0, F = 0.0, LF = 0.0, margin = 0.0, slack = 0.0;
    };
    std::vector<GridPoint> grid;
    std::vector<GridPoint> offending;  // populated when the margin check fails

    ControlFunctions controls() const;
};

// Condition 3.3: sigma > 0, or infinite activity plus a positive overlap
// floor on |x| <= c0. Throws ConditionError when neither branch holds.
Nontriviality check_nontriviality(const ModelSpec& model, double c0 = 1.0);

// Smallest lambda on a doubling grid (then bisection) with phi~(lambda) > 0.
double find_lambda3(const ModelSpec& model, double lambda_start = 1e-3, double cap = 1e8);

// x0, K0 = min(K, 6 alpha / x0), M, sup_{S0}|x-y| and l0 = sup + M.
// K = +inf is accepted (K0 falls back to 6 alpha / x0).
RegionData build_regions(const ModelSpec& model, const LyapunovReport& lyap, double K, double c0,
                         double x0, double theta_V);

// Smallest lambda0 > lambda3 satisfying both displays of the lambda0
// condition; each candidate re-evaluates E(lambda0, l0).
double find_lambda0(const ModelSpec& model, double l0, double k0, double x0, double lambda3,
                    double cap = 1e8);

struct ThetaResult {
    double theta = 4.0;
    double H_bar = 0.0;
    double R_const = 0.0;
    double r_small = 0.5;
    std::vector<InequalityRecord> checks;
};

ThetaResult choose_theta(const ModelSpec& model, const RegionData& regions,
                         const Nontriviality& nontriv, double lambda0, double theta_V);

// Full pipeline: conditions, constants, control functions and the off-diagonal
// grid verification of L~F <= -lambda F.
DriftCertificate certify(const ModelSpec& model, const CertifyOptions& opt = {});

double eval_F(const DriftCertificate& cert, double x, double y);

// The distance part f as a 2D test function for the coupling generator.
TestFunction2D coupling_distance_function(const ControlFunctions& c);

}  // namespace cbire
