#pragma once

#include <string>
#include <vector>

namespace cbire {

// Named parametric scalar function on [0, inf). Reports stay reproducible
// from config alone because only these forms are accepted, never user code.
class ScalarFn {
  public:
    static ScalarFn zero();
    static ScalarFn constant(double value);
    static ScalarFn affine(double intercept, double slope);
    static ScalarFn power(double coeff, double exponent);
    // c1*x + c2*x^2 + ... (no constant term)
    static ScalarFn polynomial(std::vector<double> coeffs);
    // knots (x_i, y_i) sorted by x; linear between knots, constant beyond.
    static ScalarFn piecewise_linear(std::vector<std::pair<double, double>> knots);

    double operator()(double x) const;
    const std::string& form() const { return form_; }

    // Largest |slope| the form can attain on [0, inf); +inf when unbounded.
    double lipschitz_bound() const;
    // Infimum over [0, inf) for nonnegative nondecreasing/affine forms.
    double infimum() const;
    bool is_zero() const { return form_ == "zero"; }

  private:
    std::string form_ = "zero";
    double a_ = 0.0, b_ = 0.0;
    std::vector<double> coeffs_;
    std::vector<std::pair<double, double>> knots_;
};

}  // namespace cbire
