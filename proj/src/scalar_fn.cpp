#include "cbire/scalar_fn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cbire {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ScalarFn ScalarFn::zero() { return ScalarFn{}; }

ScalarFn ScalarFn::constant(double value) {
    ScalarFn f;
    f.form_ = "constant";
    f.a_ = value;
    return f;
}

ScalarFn ScalarFn::affine(double intercept, double slope) {
    ScalarFn f;
    f.form_ = "affine";
    f.a_ = intercept;
    f.b_ = slope;
    return f;
}

ScalarFn ScalarFn::power(double coeff, double exponent) {
    if (!(exponent > 0.0)) throw std::invalid_argument("power form: exponent must be positive");
    ScalarFn f;
    f.form_ = "power";
    f.a_ = coeff;
    f.b_ = exponent;
    return f;
}

ScalarFn ScalarFn::polynomial(std::vector<double> coeffs) {
    ScalarFn f;
    f.form_ = "polynomial";
    f.coeffs_ = std::move(coeffs);
    return f;
}

ScalarFn ScalarFn::piecewise_linear(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2) throw std::invalid_argument("piecewise_linear: need at least 2 knots");
    if (!std::is_sorted(knots.begin(), knots.end(),
                        [](const auto& u, const auto& v) { return u.first < v.first; }))
        throw std::invalid_argument("piecewise_linear: knots must be sorted by x");
    ScalarFn f;
    f.form_ = "piecewise_linear";
    f.knots_ = std::move(knots);
    return f;
}

double ScalarFn::operator()(double x) const {
    if (form_ == "zero") return 0.0;
    if (form_ == "constant") return a_;
    if (form_ == "affine") return a_ + b_ * x;
    if (form_ == "power") return a_ * std::pow(x, b_);
    if (form_ == "polynomial") {
        double acc = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = (acc + *it) * x;
        return acc;
    }
    // piecewise_linear
    if (x <= knots_.front().first) return knots_.front().second;
    if (x >= knots_.back().first) return knots_.back().second;
    for (size_t i = 0; i + 1 < knots_.size(); ++i) {
        if (x <= knots_[i + 1].first) {
            const auto& [x0, y0] = knots_[i];
            const auto& [x1, y1] = knots_[i + 1];
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    return knots_.back().second;
}

double ScalarFn::lipschitz_bound() const {
    if (form_ == "zero" || form_ == "constant") return 0.0;
    if (form_ == "affine") return std::abs(b_);
    if (form_ == "piecewise_linear") {
        double k = 0.0;
        for (size_t i = 0; i + 1 < knots_.size(); ++i) {
            const double dx = knots_[i + 1].first - knots_[i].first;
            if (dx > 0.0) k = std::max(k, std::abs(knots_[i + 1].second - knots_[i].second) / dx);
        }
        return k;
    }
    if (form_ == "power" && b_ == 1.0) return std::abs(a_);
    return kInf;  // power (exponent != 1) and polynomial slopes are unbounded
}

double ScalarFn::infimum() const {
    if (form_ == "zero") return 0.0;
    if (form_ == "constant") return a_;
    if (form_ == "affine") return b_ >= 0.0 ? a_ : -kInf;
    if (form_ == "power") return a_ >= 0.0 ? 0.0 : -kInf;
    if (form_ == "polynomial") {
        bool all_nonneg = std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c >= 0.0; });
        return all_nonneg ? 0.0 : -kInf;
    }
    double lo = kInf;
    for (const auto& [x, y] : knots_) lo = std::min(lo, y);
    return lo;
}

}  // namespace cbire
