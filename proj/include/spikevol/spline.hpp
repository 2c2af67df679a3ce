#pragma once

#include <span>
#include <vector>

namespace spikevol::spline {

/// Natural cubic smoothing spline (Reinsch form): minimizes
/// sum (y_i - g(t_i))^2 + lambda * integral g''(t)^2 dt.
/// Several response series over the same knots share one lambda.
class SmoothingSpline {
public:
    /// Knots must be strictly increasing, at least 4 of them; every series has
    /// one value per knot.
    SmoothingSpline(std::span<const double> knots, const std::vector<std::vector<double>>& series, double lambda);

    /// Chooses lambda by minimizing the generalized cross-validation score
    /// n * RSS / (n - trace(A))^2 over a log-spaced bracket.
    static SmoothingSpline fit_gcv(std::span<const double> knots, const std::vector<std::vector<double>>& series);

    double lambda() const { return lambda_; }
    double trace() const { return trace_; }
    double rss() const { return rss_; }
    double gcv() const;

    /// Value of series `s` at t (t is clamped to the knot range).
    double operator()(std::size_t s, double t) const;
    const std::vector<double>& fitted(std::size_t s) const { return values_[s]; }

private:
    std::vector<double> knots_;
    std::vector<std::vector<double>> values_;  // g(t_i)
    std::vector<std::vector<double>> second_;  // g''(t_i), zero at both ends
    double lambda_ = 0.0;
    double trace_ = 0.0;
    double rss_ = 0.0;
};

}  // namespace spikevol::spline
