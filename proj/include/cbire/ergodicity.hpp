#pragma once

#include <vector>

#include "cbire/certify.hpp"
#include "cbire/coupling.hpp"

namespace cbire {

// Binned weighted-TV estimator support: ascending edges (the last bin is the
// overflow tail) and one representative point per bin where V is evaluated.
struct Bins {
    std::vector<double> edges;  // size k+1 for k interior bins; edges.back() finite
    std::vector<double> reps;   // size k+1: interior bins plus the overflow tail
};

// Equal-mass bins from the pooled sample; the tail representative is the mean
// of the pooled points beyond the last edge.
Bins make_quantile_bins(std::vector<double> pooled, int n_bins = 128);

// W_V estimate between two empirical laws on the shared partition:
// sum over bins of V(rep) |p_a - p_b|.
double wv_distance(const std::vector<double>& samples_a, const std::vector<double>& samples_b,
                   double theta_V, const Bins& bins);

// Kolmogorov-Smirnov two-sample statistic and its asymptotic band.
double two_sample_ks(std::vector<double> a, std::vector<double> b);
double ks_band(std::size_t n, std::size_t m, double alpha);  // threshold at level alpha

struct ErgodicityReport {
    std::vector<double> times;
    std::vector<double> mean_F, se_F;
    std::vector<double> coupling_bound;  // E[ d_V(X_t, Y_t) 1_{X != Y} ]
    std::vector<double> p_uncoupled;
    std::vector<double> wv;  // W_V(law X_t, terminal x-marginal)
    double F0 = 0.0;
    double fitted_rate = 0.0;
    double fitted_rate_lo = 0.0, fitted_rate_hi = 0.0;
    double certified_lambda = 0.0;
    bool contraction_holds = false;  // e^{lambda t} mean_F <= F0 (1 + 3 rel SE)
    bool degenerate_fit = false;
    long n_paths = 0, n_excluded = 0;
};

// Monte Carlo check of the exponential contraction property on n coupled
// pairs. Requires a verified certificate and n >= 1000.
ErgodicityReport contraction_rate(const ModelSpec& model, const DriftCertificate& cert, double x0,
                                  double y0, long n, const CouplingConfig& cfg);

struct StationarySummary {
    std::vector<double> sample;  // pooled terminal states
    double mean = 0.0, var = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0;
    double ks_two_start = 0.0;  // KS distance between the two start groups
    double ks_band_95 = 0.0;
    bool mixing_ok = false;
    bool exploratory = false;  // no verified certificate supplied
};

// States at time burn_in + t_end from two dispersed initial conditions; the
// two-group KS distance is the mixing diagnostic.
StationarySummary stationary_estimate(const ModelSpec& model, const SimConfig& cfg,
                                      double burn_in, long n, double x0_a = 0.0,
                                      double x0_b = 10.0, bool certificate_verified = true);

}  // namespace cbire
