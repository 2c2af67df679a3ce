#include "spikevol/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spikevol/types.hpp"

namespace spikevol::spline {

namespace {

// Banded LDL^T of the (n-2)x(n-2) pentadiagonal system R + lambda Q^T Q.
struct Banded {
    std::vector<double> d, l1, l2;  // D, sub-diagonal and second sub-diagonal of L
};

struct Operators {
    std::vector<double> h;               // knot spacing
    std::vector<double> r0, r1;          // R diagonal and super-diagonal
    std::vector<double> m0, m1, m2;      // Q^T Q bands
    std::vector<double> q0, q1, q2;      // Q column entries at rows j, j+1, j+2
};

Operators build_operators(std::span<const double> t) {
    const std::size_t n = t.size();
    const std::size_t m = n - 2;
    Operators op;
    op.h.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        op.h[i] = t[i + 1] - t[i];
        if (!(op.h[i] > 0.0)) throw NumericError("smoothing spline knots must be strictly increasing");
    }
    op.r0.assign(m, 0.0);
    op.r1.assign(m, 0.0);
    op.q0.assign(m, 0.0);
    op.q1.assign(m, 0.0);
    op.q2.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        op.r0[j] = (op.h[j] + op.h[j + 1]) / 3.0;
        if (j + 1 < m) op.r1[j] = op.h[j + 1] / 6.0;
        op.q0[j] = 1.0 / op.h[j];
        op.q1[j] = -1.0 / op.h[j] - 1.0 / op.h[j + 1];
        op.q2[j] = 1.0 / op.h[j + 1];
    }
    op.m0.assign(m, 0.0);
    op.m1.assign(m, 0.0);
    op.m2.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        op.m0[j] = op.q0[j] * op.q0[j] + op.q1[j] * op.q1[j] + op.q2[j] * op.q2[j];
        if (j + 1 < m) op.m1[j] = op.q1[j] * op.q0[j + 1] + op.q2[j] * op.q1[j + 1];
        if (j + 2 < m) op.m2[j] = op.q2[j] * op.q0[j + 2];
    }
    return op;
}

Banded factor(const Operators& op, double lambda) {
    const std::size_t m = op.r0.size();
    Banded b;
    b.d.assign(m, 0.0);
    b.l1.assign(m, 0.0);
    b.l2.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double dj = op.r0[j] + lambda * op.m0[j];
        if (j >= 1) dj -= b.l1[j - 1] * b.l1[j - 1] * b.d[j - 1];
        if (j >= 2) dj -= b.l2[j - 2] * b.l2[j - 2] * b.d[j - 2];
        if (!(dj > 0.0)) throw NumericError("smoothing spline system is not positive definite");
        b.d[j] = dj;
        if (j + 1 < m) {
            double off = op.r1[j] + lambda * op.m1[j];
            if (j >= 1) off -= b.l2[j - 1] * b.l1[j - 1] * b.d[j - 1];
            b.l1[j] = off / dj;
        }
        if (j + 2 < m) b.l2[j] = lambda * op.m2[j] / dj;
    }
    return b;
}

std::vector<double> solve(const Banded& b, std::vector<double> rhs) {
    const std::size_t m = rhs.size();
    for (std::size_t j = 0; j < m; ++j) {
        if (j >= 1) rhs[j] -= b.l1[j - 1] * rhs[j - 1];
        if (j >= 2) rhs[j] -= b.l2[j - 2] * rhs[j - 2];
    }
    for (std::size_t j = 0; j < m; ++j) rhs[j] /= b.d[j];
    for (std::size_t j = m; j-- > 0;) {
        if (j + 1 < m) rhs[j] -= b.l1[j] * rhs[j + 1];
        if (j + 2 < m) rhs[j] -= b.l2[j] * rhs[j + 2];
    }
    return rhs;
}

// trace of (R + lambda Q^T Q)^{-1} Q^T Q from the band of the inverse.
double trace_term(const Operators& op, const Banded& b) {
    const std::size_t m = b.d.size();
    std::vector<double> s0(m + 2, 0.0), s1(m + 2, 0.0), s2(m + 2, 0.0);
    for (std::size_t j = m; j-- > 0;) {
        s2[j] = (j + 2 < m) ? -b.l1[j] * s1[j + 1] - b.l2[j] * s0[j + 2] : 0.0;
        s1[j] = (j + 1 < m) ? -b.l1[j] * s0[j + 1] - ((j + 2 < m) ? b.l2[j] * s1[j + 1] : 0.0) : 0.0;
        s0[j] = 1.0 / b.d[j] - ((j + 1 < m) ? b.l1[j] * s1[j] : 0.0) - ((j + 2 < m) ? b.l2[j] * s2[j] : 0.0);
    }
    double tr = 0.0;
    for (std::size_t j = 0; j < m; ++j) tr += s0[j] * op.m0[j] + 2.0 * s1[j] * op.m1[j] + 2.0 * s2[j] * op.m2[j];
    return tr;
}

}  // namespace

SmoothingSpline::SmoothingSpline(std::span<const double> knots, const std::vector<std::vector<double>>& series,
                                 double lambda)
    : knots_(knots.begin(), knots.end()), lambda_(lambda) {
    const std::size_t n = knots.size();
    if (n < 4) throw DataError("smoothing spline needs at least 4 knots");
    if (!(lambda >= 0.0)) throw NumericError("smoothing parameter must be non-negative");
    const auto op = build_operators(knots);
    const auto band = factor(op, lambda);
    const std::size_t m = n - 2;
    trace_ = static_cast<double>(n) - lambda * trace_term(op, band);
    rss_ = 0.0;
    for (const auto& y : series) {
        if (y.size() != n) throw DataError("smoothing spline series length differs from knot count");
        std::vector<double> rhs(m);
        for (std::size_t j = 0; j < m; ++j) rhs[j] = op.q0[j] * y[j] + op.q1[j] * y[j + 1] + op.q2[j] * y[j + 2];
        const auto gamma = solve(band, std::move(rhs));
        std::vector<double> g = y;
        for (std::size_t j = 0; j < m; ++j) {
            g[j] -= lambda * op.q0[j] * gamma[j];
            g[j + 1] -= lambda * op.q1[j] * gamma[j];
            g[j + 2] -= lambda * op.q2[j] * gamma[j];
        }
        for (std::size_t i = 0; i < n; ++i) rss_ += (y[i] - g[i]) * (y[i] - g[i]);
        std::vector<double> second(n, 0.0);
        std::copy(gamma.begin(), gamma.end(), second.begin() + 1);
        values_.push_back(std::move(g));
        second_.push_back(std::move(second));
    }
}

double SmoothingSpline::gcv() const {
    const double n = static_cast<double>(knots_.size());
    const double dof = n - trace_;
    return dof > 0.0 ? n * rss_ / (dof * dof) : std::numeric_limits<double>::infinity();
}

SmoothingSpline SmoothingSpline::fit_gcv(std::span<const double> knots, const std::vector<std::vector<double>>& series) {
    const std::size_t n = knots.size();
    if (n < 4) throw DataError("smoothing spline needs at least 4 knots");
    const double mean_h = (knots.back() - knots.front()) / static_cast<double>(n - 1);
    const double base = 3.0 * std::log10(mean_h);
    const double lo = base - 3.0;
    const double hi = base + 4.0 * std::log10(static_cast<double>(n)) + 3.0;
    auto score = [&](double log_lambda) { return SmoothingSpline(knots, series, std::pow(10.0, log_lambda)).gcv(); };

    constexpr int kGrid = 48;
    double best_x = lo, best_s = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i <= kGrid; ++i) {
        const double x = lo + (hi - lo) * i / kGrid;
        const double s = score(x);
        if (s < best_s) {
            best_s = s;
            best_x = x;
            best_i = i;
        }
    }
    double a = lo + (hi - lo) * std::max(0, best_i - 1) / kGrid;
    double b = lo + (hi - lo) * std::min(kGrid, best_i + 1) / kGrid;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = score(c), fd = score(d);
    for (int it = 0; it < 40; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = score(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = score(d);
        }
    }
    const double x = fc < fd ? c : d;
    if (std::min(fc, fd) < best_s) best_x = x;
    return SmoothingSpline(knots, series, std::pow(10.0, best_x));
}

double SmoothingSpline::operator()(std::size_t s, double t) const {
    const auto& g = values_[s];
    const auto& gamma = second_[s];
    t = std::clamp(t, knots_.front(), knots_.back());
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t i = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
    if (i >= knots_.size() - 1) i = knots_.size() - 2;
    const double h = knots_[i + 1] - knots_[i];
    const double a = t - knots_[i];
    const double b = knots_[i + 1] - t;
    return (a * g[i + 1] + b * g[i]) / h - a * b / 6.0 * ((1.0 + a / h) * gamma[i + 1] + (1.0 + b / h) * gamma[i]);
}

}  // namespace spikevol::spline
