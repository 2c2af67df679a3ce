#include "spikevol/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>

#include "spikevol/spline.hpp"

namespace spikevol::mask {

namespace {

double polyline_length(const std::vector<Vec2>& pts) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) len += norm(pts[i] - pts[i - 1]);
    return len;
}

// Point at arc distance `s` measured from the front of the polyline.
Vec2 point_at(const std::vector<Vec2>& pts, double s) {
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double seg = norm(pts[i] - pts[i - 1]);
        if (s <= seg && seg > 0.0) return pts[i - 1] + (s / seg) * (pts[i] - pts[i - 1]);
        s -= seg;
    }
    return pts.back();
}

bool inside(const BinaryMask& mask, Vec2 mm) {
    const double col = mm.x / mask.gsd();
    const double row = mm.y / mask.gsd();
    return mask.at(static_cast<int>(std::floor(row)), static_cast<int>(std::floor(col)));
}

// Distance (mm) from `origin` along unit `dir` to the first background
// crossing, refined by bisection. Assumes origin is inside.
double march_to_boundary(const BinaryMask& mask, Vec2 origin, Vec2 dir) {
    const double step = 0.5 * mask.gsd();
    const double limit = std::hypot(mask.width(), mask.height()) * mask.gsd() + step;
    double in = 0.0, out = step;
    while (out < limit && inside(mask, origin + out * dir)) {
        in = out;
        out += step;
    }
    for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (in + out);
        if (inside(mask, origin + mid * dir)) {
            in = mid;
        } else {
            out = mid;
        }
    }
    return 0.5 * (in + out);
}

SmoothedAxis principal_axis(const BinaryMask& mask) {
    double n = 0.0, sx = 0.0, sy = 0.0;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask.at(r, c)) continue;
            n += 1.0;
            sx += c + 0.5;
            sy += r + 0.5;
        }
    }
    if (n == 0.0) throw DataError("principal axis of an empty mask");
    const double mx = sx / n, my = sy / n;
    double cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask.at(r, c)) continue;
            const double dx = c + 0.5 - mx, dy = r + 0.5 - my;
            cxx += dx * dx;
            cyy += dy * dy;
            cxy += dx * dy;
        }
    }
    const double angle = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const Vec2 center{mx * mask.gsd(), my * mask.gsd()};
    const double eps = 1e-3 * mask.gsd();
    return SmoothedAxis{{center - eps * dir, center + eps * dir}, 2.0 * eps};
}

}  // namespace

SmoothedAxis resample(const std::vector<Vec2>& polyline, int samples) {
    if (polyline.size() < 2 || samples < 2) throw DataError("resample needs at least two points");
    const double total = polyline_length(polyline);
    SmoothedAxis out;
    out.points.reserve(static_cast<std::size_t>(samples));
    std::size_t seg = 1;
    double seg_start = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double s = total * i / (samples - 1);
        while (seg + 1 < polyline.size() && seg_start + norm(polyline[seg] - polyline[seg - 1]) < s) {
            seg_start += norm(polyline[seg] - polyline[seg - 1]);
            ++seg;
        }
        const double len = norm(polyline[seg] - polyline[seg - 1]);
        const double u = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
        out.points.push_back(polyline[seg - 1] + u * (polyline[seg] - polyline[seg - 1]));
    }
    out.length_mm = polyline_length(out.points);
    return out;
}

SmoothedAxis smooth_axis(const AxisPath& path, double gsd, int samples) {
    if (path.size() < 4) throw DataError("smooth_axis: path needs at least 4 pixels");
    std::vector<double> knots(path.size());
    std::vector<std::vector<double>> xy(2, std::vector<double>(path.size()));
    for (std::size_t i = 0; i < path.size(); ++i) {
        xy[0][i] = (path[i].col + 0.5) * gsd;
        xy[1][i] = (path[i].row + 0.5) * gsd;
        knots[i] = i == 0 ? 0.0 : knots[i - 1] + std::hypot(xy[0][i] - xy[0][i - 1], xy[1][i] - xy[1][i - 1]);
    }
    const auto fit = spline::SmoothingSpline::fit_gcv(knots, xy);
    SmoothedAxis out;
    out.points.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        const double t = knots.back() * i / (samples - 1);
        out.points.push_back({fit(0, t), fit(1, t)});
    }
    out.length_mm = polyline_length(out.points);
    return out;
}

SmoothedAxis extend_to_boundary(const BinaryMask& mask, const SmoothedAxis& axis, int samples) {
    std::vector<Vec2> pts = axis.points;
    if (pts.size() < 2) throw DataError("extend_to_boundary: axis needs at least two points");
    const double len = polyline_length(pts);
    const double back = std::clamp(0.15 * len, std::min(len, mask.gsd()), 20.0 * mask.gsd());

    auto tip = [&](const std::vector<Vec2>& line) -> std::optional<Vec2> {
        // `line` runs toward the end being extended.
        const Vec2 end = line.back();
        if (!inside(mask, end)) return std::nullopt;
        std::vector<Vec2> reversed(line.rbegin(), line.rend());
        const Vec2 from = point_at(reversed, back);
        Vec2 dir = end - from;
        const double n = norm(dir);
        if (n <= 0.0) return std::nullopt;
        dir = (1.0 / n) * dir;
        return end + march_to_boundary(mask, end, dir) * dir;
    };

    if (auto head = tip(pts)) pts.push_back(*head);
    std::reverse(pts.begin(), pts.end());
    if (auto head = tip(pts)) pts.push_back(*head);
    std::reverse(pts.begin(), pts.end());
    return resample(pts, samples);
}

RadiusProfile radius_profile(const BinaryMask& mask, const SmoothedAxis& axis) {
    const auto& pts = axis.points;
    const std::size_t n = pts.size();
    if (n < 2) throw DataError("radius_profile: axis needs at least two samples");
    RadiusProfile prof;
    prof.length_mm = axis.length_mm;
    prof.t.resize(n);
    prof.radius.assign(n, 0.0);
    prof.left.assign(n, 0.0);
    prof.right.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        prof.t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
        const Vec2 a = pts[i == 0 ? 0 : i - 1];
        const Vec2 b = pts[i + 1 == n ? n - 1 : i + 1];
        Vec2 tangent = b - a;
        const double tn = norm(tangent);
        if (tn <= 0.0 || !inside(mask, pts[i])) continue;
        tangent = (1.0 / tn) * tangent;
        const Vec2 normal{-tangent.y, tangent.x};
        prof.left[i] = march_to_boundary(mask, pts[i], normal);
        prof.right[i] = march_to_boundary(mask, pts[i], -1.0 * normal);
        prof.radius[i] = 0.5 * (prof.left[i] + prof.right[i]);
    }
    return prof;
}

double geometric_volume(const RadiusProfile& profile) {
    const std::size_t n = profile.radius.size();
    if (n < 2) return 0.0;
    const double h = profile.length_mm / static_cast<double>(n - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double area = std::numbers::pi * profile.radius[i] * profile.radius[i];
        sum += (i == 0 || i + 1 == n) ? 0.5 * area : area;
    }
    return sum * h;
}

AxisExtraction extract_axis(const BinaryMask& mask, int samples) {
    const BinaryMask body = largest_component(mask);
    if (pixel_area(body) == 0) throw DataError("geometric baseline: empty mask");
    const Skeleton skeleton = prune_spurs(thin(body), body);
    AxisExtraction out;
    if (skeleton.size() > 0) out.main_path = main_axis(skeleton, choose_start(skeleton));
    SmoothedAxis core;
    if (out.main_path.size() >= 4) {
        core = smooth_axis(out.main_path, body.gsd(), samples);
    } else {
        core = principal_axis(body);
        out.used_fallback = true;
    }
    out.axis = extend_to_boundary(body, core, samples);
    return out;
}

double view_geometric_volume(const BinaryMask& mask, RadiusProfile* profile_out) {
    const BinaryMask body = largest_component(mask);
    const auto extraction = extract_axis(body);
    auto profile = radius_profile(body, extraction.axis);
    const double v = geometric_volume(profile);
    if (profile_out) *profile_out = std::move(profile);
    return v;
}

double geometric_estimate(std::span<const BinaryMask> masks) {
    if (masks.empty()) throw DataError("geometric_estimate needs at least one mask");
    double sum = 0.0;
    for (const auto& m : masks) sum += view_geometric_volume(m);
    return sum / static_cast<double>(masks.size());
}

void write_profile_csv(const RadiusProfile& profile, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write profile " + path.string());
    out.precision(10);
    out << "t,radius_mm,left_mm,right_mm\n";
    for (std::size_t i = 0; i < profile.t.size(); ++i) {
        out << profile.t[i] << ',' << profile.radius[i] << ',' << profile.left[i] << ',' << profile.right[i] << '\n';
    }
}

}  // namespace spikevol::mask
