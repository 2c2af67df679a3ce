#include "spikevol/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "spikevol/types.hpp"

namespace spikevol::calib {

std::string to_string(CurveKind k) {
    switch (k) {
        case CurveKind::Linear: return "linear";
        case CurveKind::Quadratic: return "quadratic";
        case CurveKind::Exponential: return "exponential";
    }
    return "?";
}

std::string to_string(Signal s) { return s == Signal::Area ? "area" : "geometric"; }

CurveKind curve_kind_from_string(const std::string& s) {
    if (s == "linear") return CurveKind::Linear;
    if (s == "quadratic") return CurveKind::Quadratic;
    if (s == "exponential") return CurveKind::Exponential;
    throw ConfigError("unknown curve kind '" + s + "'");
}

Signal signal_from_string(const std::string& s) {
    if (s == "area") return Signal::Area;
    if (s == "geometric" || s == "geo") return Signal::Geometric;
    throw ConfigError("unknown signal '" + s + "'");
}

std::size_t coefficient_count(CurveKind kind) {
    switch (kind) {
        case CurveKind::Linear: return 2;
        case CurveKind::Quadratic: return 3;
        case CurveKind::Exponential: return 2;
    }
    return 0;
}

double evaluate(const CalibrationCurve& curve, double x) {
    const auto& c = curve.coefficients;
    if (c.size() != coefficient_count(curve.kind)) throw DataError("curve coefficient count does not match its kind");
    switch (curve.kind) {
        case CurveKind::Linear: return c[0] + c[1] * x;
        case CurveKind::Quadratic: return c[0] + c[1] * x + c[2] * x * x;
        case CurveKind::Exponential: return c[0] * std::exp(c[1] * x);
    }
    return 0.0;
}

Applied apply_curve(const CalibrationCurve& curve, double raw) {
    const double v = evaluate(curve, raw);
    if (v < 0.0) return {0.0, true};
    return {v, false};
}

double r_squared(const CalibrationCurve& curve, std::span<const double> xs, std::span<const double> ys) {
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - evaluate(curve, xs[i]);
        ss_res += e * e;
        ss_tot += (ys[i] - mean) * (ys[i] - mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

namespace {

Eigen::VectorXd least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Signal signal) {
    // Columns span many orders of magnitude (x^2 of pixel counts ~ 1e10), so
    // each is scaled to unit norm before the rank-revealing QR.
    Eigen::VectorXd scale(design.cols());
    Eigen::MatrixXd a = design;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        scale[j] = a.col(j).norm();
        if (scale[j] == 0.0) throw NumericError("singular normal equations for the " + to_string(signal) + " signal");
        a.col(j) /= scale[j];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-13);
    if (qr.rank() < a.cols()) throw NumericError("singular normal equations for the " + to_string(signal) + " signal");
    Eigen::VectorXd beta = qr.solve(y);
    return beta.cwiseQuotient(scale);
}

std::vector<double> fit_exponential(std::span<const double> xs, std::span<const double> ys, Signal signal) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd logy(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = xs[static_cast<std::size_t>(i)];
        logy[i] = std::log(ys[static_cast<std::size_t>(i)]);
    }
    const Eigen::VectorXd start = least_squares(design, logy, signal);
    double a = std::exp(start[0]), b = start[1];

    auto sse = [&](double aa, double bb) {
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = ys[i] - aa * std::exp(bb * xs[i]);
            s += r * r;
        }
        return s;
    };
    double current = sse(a, b);
    for (int it = 0; it < 50; ++it) {
        Eigen::MatrixXd jac(n, 2);
        Eigen::VectorXd res(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            const double e = std::exp(b * x);
            jac(i, 0) = e;
            jac(i, 1) = a * x * e;
            res[i] = ys[static_cast<std::size_t>(i)] - a * e;
        }
        Eigen::VectorXd step;
        try {
            step = least_squares(jac, res, signal);
        } catch (const NumericError&) {
            break;
        }
        double t = 1.0;
        double trial = sse(a + step[0], b + step[1]);
        while (trial > current && t > 1e-8) {
            t *= 0.5;
            trial = sse(a + t * step[0], b + t * step[1]);
        }
        if (trial > current) break;
        a += t * step[0];
        b += t * step[1];
        current = trial;
        const double rel = std::hypot(t * step[0] / std::max(std::abs(a), 1e-300), t * step[1] / std::max(std::abs(b), 1e-300));
        if (rel < 1e-10) break;
    }
    return {a, b};
}

}  // namespace

CalibrationCurve fit_curve(std::span<const double> xs, std::span<const double> ys, CurveKind kind, Signal signal,
                           int view_count) {
    if (xs.size() != ys.size()) throw DataError("calibration inputs differ in length");
    const std::size_t k = coefficient_count(kind);
    if (xs.size() < k + 1) {
        throw NumericError("underdetermined " + to_string(kind) + " fit: " + std::to_string(xs.size()) +
                           " points for " + std::to_string(k) + " coefficients");
    }
    CalibrationCurve curve;
    curve.kind = kind;
    curve.signal = signal;
    curve.view_count = view_count;
    if (kind == CurveKind::Exponential) {
        for (double y : ys) {
            if (!(y > 0.0)) throw DataError("exponential fit needs positive volumes");
        }
        curve.coefficients = fit_exponential(xs, ys, signal);
    } else {
        const auto n = static_cast<Eigen::Index>(xs.size());
        Eigen::MatrixXd design(n, static_cast<Eigen::Index>(k));
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            design(i, 0) = 1.0;
            design(i, 1) = x;
            if (k == 3) design(i, 2) = x * x;
            y[i] = ys[static_cast<std::size_t>(i)];
        }
        const Eigen::VectorXd beta = least_squares(design, y, signal);
        curve.coefficients.assign(beta.data(), beta.data() + beta.size());
    }
    curve.fitted_r2 = r_squared(curve, xs, ys);
    return curve;
}

CalibrationCurve select_best(std::span<const CalibrationCurve> candidates, std::span<const double> scores) {
    if (candidates.empty()) throw DataError("no calibration curves to choose from");
    if (!scores.empty() && scores.size() != candidates.size()) throw DataError("one score per candidate curve required");
    auto score = [&](std::size_t i) { return scores.empty() ? candidates[i].fitted_r2 : scores[i]; };
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double s = score(i), b = score(best);
        if (s > b || (s == b && candidates[i].kind == CurveKind::Quadratic)) best = i;
    }
    return candidates[best];
}

void to_json(nlohmann::json& j, const CalibrationCurve& c) {
    j = nlohmann::json{{"kind", to_string(c.kind)},
                       {"coefficients", c.coefficients},
                       {"fitted_r2", c.fitted_r2},
                       {"signal", to_string(c.signal)},
                       {"view_count", c.view_count}};
}

void from_json(const nlohmann::json& j, CalibrationCurve& c) {
    try {
        c.kind = curve_kind_from_string(j.at("kind").get<std::string>());
        c.coefficients = j.at("coefficients").get<std::vector<double>>();
        c.fitted_r2 = j.value("fitted_r2", 0.0);
        c.signal = signal_from_string(j.value("signal", std::string("area")));
        c.view_count = j.value("view_count", 6);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("calibration curve: ") + e.what());
    }
    if (c.coefficients.size() != coefficient_count(c.kind)) throw DataError("curve coefficient count does not match its kind");
    if (c.view_count != 1 && c.view_count != 2 && c.view_count != 4 && c.view_count != 6) {
        throw DataError("curve view_count must be 1, 2, 4 or 6");
    }
}

void save_curves(const std::vector<CalibrationCurve>& curves, const std::filesystem::path& path,
                 const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    nlohmann::json doc = curves;
    if (!config_hash.empty()) doc = nlohmann::json{{"config_hash", config_hash}, {"curves", doc}};
    out << doc.dump(2) << '\n';
}

std::vector<CalibrationCurve> load_curves(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("curve file " + path.string() + ": malformed JSON", e.byte);
    }
    if (j.is_object() && j.contains("curves")) j = j.at("curves");
    return j.get<std::vector<CalibrationCurve>>();
}

}  // namespace spikevol::calib
