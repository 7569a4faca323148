#include "cbire/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace cbire {

namespace {

// QUADPACK dqk15 nodes and weights.
constexpr double kXgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
constexpr double kWgk[8] = {
    0.02293532201052922, 0.06309209262997855, 0.1047900103222502, 0.1406532597155259,
    0.1690047266392679,  0.1903505780647854,  0.2044329400752989, 0.2094821410847278};
constexpr double kWg[4] = {
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189, 0.4179591836734694};

struct Panel {
    double a, b;
    double value;
    double error;
    double resabs;  // integral of |f| over the panel
    bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk15(const std::function<double(double)>& f, double a, double b, long& evals) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double fv[15];
    for (int i = 0; i < 7; ++i) {
        fv[i] = f(c - h * kXgk[i]);
        fv[14 - i] = f(c + h * kXgk[i]);
    }
    fv[7] = f(c);
    evals += 15;

    double kronrod = kWgk[7] * fv[7];
    double gauss = kWg[3] * fv[7];
    for (int i = 0; i < 7; ++i) {
        kronrod += kWgk[i] * (fv[i] + fv[14 - i]);
        if (i % 2 == 1) gauss += kWg[i / 2] * (fv[i] + fv[14 - i]);
    }
    kronrod *= h;
    gauss *= h;

    double err = std::abs(kronrod - gauss);
    // QUADPACK-style rescaling sharpens the raw |K15-G7| estimate.
    double resabs = 0.0;
    for (int i = 0; i < 15; ++i) resabs += std::abs(fv[i]);
    resabs *= std::abs(h) * kWgk[7];
    if (resabs > 0.0 && err > 0.0) {
        err = resabs * std::min(1.0, std::pow(200.0 * err / resabs, 1.5));
    }
    if (!std::isfinite(kronrod)) err = std::numeric_limits<double>::infinity();
    return Panel{a, b, kronrod, err, resabs};
}

QuadResult adapt(const std::function<double(double)>& f, double a, double b,
                 const QuadOptions& opt) {
    QuadResult out;
    if (a == b) return out;

    std::priority_queue<Panel> heap;
    long evals = 0;
    Panel first = gk15(f, a, b, evals);
    double total = first.value;
    double total_err = first.error;
    double total_resabs = first.resabs;
    heap.push(first);
    int n = 1;

    // The resabs term is the roundoff floor: absolute accuracy below
    // ~100 eps * integral |f| is not attainable in double precision.
    auto tolerance = [&](double v, double resabs) {
        return std::max({opt.abs_tol, opt.rel_tol * std::abs(v), 2.5e-14 * resabs});
    };

    while (total_err > tolerance(total, total_resabs) && n < opt.max_intervals) {
        Panel worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) {
            // Interval at floating-point resolution; cannot refine further.
            heap.push(Panel{worst.a, worst.b, worst.value, 0.0, worst.resabs});
            continue;
        }
        Panel left = gk15(f, worst.a, mid, evals);
        Panel right = gk15(f, mid, worst.b, evals);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_resabs += left.resabs + right.resabs - worst.resabs;
        heap.push(left);
        heap.push(right);
        ++n;
    }

    // Recompute sums from the heap to shed accumulated cancellation.
    total = 0.0;
    total_err = 0.0;
    total_resabs = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        total_err += heap.top().error;
        total_resabs += heap.top().resabs;
        heap.pop();
    }

    out.value = total;
    out.error = total_err;
    out.evaluations = evals;
    out.converged = std::isfinite(total) && total_err <= tolerance(total, total_resabs);
    return out;
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadOptions& opt) {
    const bool inf_a = std::isinf(a);
    const bool inf_b = std::isinf(b);
    if (!inf_a && !inf_b) {
        if (a > b) {
            QuadResult r = integrate(f, b, a, opt);
            r.value = -r.value;
            return r;
        }
        return adapt(f, a, b, opt);
    }
    if (inf_a && inf_b) {
        auto g = [&f](double t) {
            const double d = 1.0 - t * t;
            return f(t / d) * (1.0 + t * t) / (d * d);
        };
        return adapt(g, -1.0, 1.0, opt);
    }
    if (!inf_a) {  // (a, +inf)
        auto g = [&f, a](double t) {
            const double d = 1.0 - t;
            return f(a + t / d) / (d * d);
        };
        return adapt(g, 0.0, 1.0, opt);
    }
    // (-inf, b)
    auto g = [&f, b](double t) {
        const double d = 1.0 - t;
        return f(b - t / d) / (d * d);
    };
    return adapt(g, 0.0, 1.0, opt);
}

double integrate_or_throw(const std::function<double(double)>& f, double a, double b,
                          const QuadOptions& opt, const char* context) {
    QuadResult r = integrate(f, a, b, opt);
    if (!r.converged) {
        throw NumericError(std::string("quadrature failed to converge: ") + context +
                           " (error estimate " + std::to_string(r.error) + ", value " + std::to_string(r.value) + ")");
    }
    return r.value;
}

}  // namespace cbire
