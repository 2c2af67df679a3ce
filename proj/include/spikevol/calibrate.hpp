#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spikevol::calib {

enum class CurveKind { Linear, Quadratic, Exponential };
enum class Signal { Area, Geometric };

std::string to_string(CurveKind k);
std::string to_string(Signal s);
CurveKind curve_kind_from_string(const std::string& s);
Signal signal_from_string(const std::string& s);

/// Raw signal -> volume. Polynomials store (a0, a1[, a2]); the exponential
/// form a * exp(b * x) stores (a, b).
struct CalibrationCurve {
    CurveKind kind = CurveKind::Quadratic;
    std::vector<double> coefficients;
    double fitted_r2 = 0.0;
    int view_count = 6;
    Signal signal = Signal::Area;
};

std::size_t coefficient_count(CurveKind kind);

/// Least squares fit; polynomials through a column-scaled QR solve, the
/// exponential from a log-linear start refined by Gauss-Newton.
CalibrationCurve fit_curve(std::span<const double> xs, std::span<const double> ys, CurveKind kind,
                           Signal signal = Signal::Area, int view_count = 6);

struct Applied {
    double volume = 0.0;
    bool clamped = false;  // raw evaluation was negative
};

Applied apply_curve(const CalibrationCurve& curve, double raw);

/// Unclamped evaluation of the stored form.
double evaluate(const CalibrationCurve& curve, double raw);

/// Coefficient of determination of curve predictions (unclamped values).
double r_squared(const CalibrationCurve& curve, std::span<const double> xs, std::span<const double> ys);

/// Highest `score` wins; a quadratic wins any tie it is part of. Scores
/// default to fitted_r2 when empty.
CalibrationCurve select_best(std::span<const CalibrationCurve> candidates, std::span<const double> scores = {});

void to_json(nlohmann::json& j, const CalibrationCurve& c);
void from_json(const nlohmann::json& j, CalibrationCurve& c);

/// With a config hash the file is {"config_hash", "curves"}; otherwise a bare list.
void save_curves(const std::vector<CalibrationCurve>& curves, const std::filesystem::path& path,
                 const std::string& config_hash = {});
std::vector<CalibrationCurve> load_curves(const std::filesystem::path& path);

}  // namespace spikevol::calib
