#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace cbire {

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct QuadOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-8;
    int max_intervals = 4000;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
    long evaluations = 0;
};

// Adaptive 15-point Gauss-Kronrod over (a, b); either endpoint may be
// +/-infinity (mapped to a finite interval before subdividing). Endpoints are
// never evaluated. Integrable endpoint singularities converge through
// subdivision; pair with a log substitution when the singularity sits at 0.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadOptions& opt = {});

// integrate() that throws NumericError instead of returning converged=false.
double integrate_or_throw(const std::function<double(double)>& f, double a, double b,
                          const QuadOptions& opt = {}, const char* context = "integral");

}  // namespace cbire
