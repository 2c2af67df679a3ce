#include "spikevol/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "spikevol/parallel.hpp"
#include "spikevol/rng.hpp"

namespace spikevol::synth {

using geo::Face;
using geo::TriangleMesh;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// --- implicit primitives ---------------------------------------------------

struct Ellipsoid {
    Vec3 center;
    Vec3 axis[3];  // orthonormal frame
    double semi[3];

    double value(Vec3 p) const {
        const Vec3 d = p - center;
        const double q0 = dot(d, axis[0]) / semi[0];
        const double q1 = dot(d, axis[1]) / semi[1];
        const double q2 = dot(d, axis[2]) / semi[2];
        const double smallest = std::min({semi[0], semi[1], semi[2]});
        return (std::sqrt(q0 * q0 + q1 * q1 + q2 * q2) - 1.0) * smallest;
    }
    double reach() const { return std::max({semi[0], semi[1], semi[2]}); }
};

struct Capsule {
    Vec3 a, b;
    double radius;

    double value(Vec3 p) const {
        const Vec3 ab = b - a;
        const double len2 = dot(ab, ab);
        const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
        return norm(p - (a + t * ab)) - radius;
    }
};

struct SolidCone {
    geo::ConeSpec spec;

    double value(Vec3 p) const {
        const double h = spec.apex_height, r = spec.base_radius;
        const double rho = std::hypot(p.x - spec.center_xy.x, p.y - spec.center_xy.y);
        const double lateral = (rho - r * (1.0 - (p.z - spec.base_z) / h)) * h / std::hypot(h, r);
        return std::max(spec.base_z - p.z, lateral);
    }
};

struct Primitive {
    enum class Kind { Ellipsoid, Capsule, Cone } kind;
    Ellipsoid ellipsoid{};
    Capsule capsule{};
    SolidCone cone{};
    Vec3 lo, hi;  // bounding box

    double value(Vec3 p) const {
        switch (kind) {
            case Kind::Ellipsoid: return ellipsoid.value(p);
            case Kind::Capsule: return capsule.value(p);
            case Kind::Cone: return cone.value(p);
        }
        return std::numeric_limits<double>::infinity();
    }
};

Primitive make_primitive(const Ellipsoid& e) {
    const double r = e.reach();
    return {Primitive::Kind::Ellipsoid, e, {}, {}, e.center - Vec3{r, r, r}, e.center + Vec3{r, r, r}};
}

Primitive make_primitive(const Capsule& c) {
    const Vec3 r{c.radius, c.radius, c.radius};
    const Vec3 lo{std::min(c.a.x, c.b.x), std::min(c.a.y, c.b.y), std::min(c.a.z, c.b.z)};
    const Vec3 hi{std::max(c.a.x, c.b.x), std::max(c.a.y, c.b.y), std::max(c.a.z, c.b.z)};
    return {Primitive::Kind::Capsule, {}, c, {}, lo - r, hi + r};
}

Primitive make_primitive(const SolidCone& c) {
    const auto& s = c.spec;
    return {Primitive::Kind::Cone, {}, {}, c,
            {s.center_xy.x - s.base_radius, s.center_xy.y - s.base_radius, s.base_z},
            {s.center_xy.x + s.base_radius, s.center_xy.y + s.base_radius, s.apex_z()}};
}

double union_value(const std::vector<Primitive>& prims, Vec3 p) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& pr : prims) v = std::min(v, pr.value(p));
    return v;
}

// --- spike layout ----------------------------------------------------------

struct Layout {
    std::vector<Primitive> solids;
    std::vector<Ellipsoid> spikelets;
    std::vector<Vec3> axis;  // dense polyline
};

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
    const double t2 = t * t, t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + t * (p2 - p0) + t2 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) +
                  t3 * (3.0 * p1 - p0 - 3.0 * p2 + p3));
}

std::vector<Vec3> smooth_polyline(const std::vector<Vec3>& ctrl, int per_segment) {
    std::vector<Vec3> out;
    if (ctrl.size() == 2) {
        for (int i = 0; i <= per_segment; ++i) out.push_back(ctrl[0] + (double(i) / per_segment) * (ctrl[1] - ctrl[0]));
        return out;
    }
    for (std::size_t s = 0; s + 1 < ctrl.size(); ++s) {
        const Vec3 p0 = s == 0 ? 2.0 * ctrl[0] - ctrl[1] : ctrl[s - 1];
        const Vec3 p3 = s + 2 < ctrl.size() ? ctrl[s + 2] : 2.0 * ctrl[s + 1] - ctrl[s];
        for (int i = 0; i < per_segment; ++i) out.push_back(catmull_rom(p0, ctrl[s], ctrl[s + 1], p3, double(i) / per_segment));
    }
    out.push_back(ctrl.back());
    return out;
}

struct AxisFrame {
    Vec3 point, tangent, lateral, depth;
};

AxisFrame frame_at(const std::vector<Vec3>& axis, const std::vector<double>& arc, double s) {
    auto it = std::upper_bound(arc.begin(), arc.end(), s);
    std::size_t i = it == arc.begin() ? 0 : static_cast<std::size_t>(it - arc.begin()) - 1;
    i = std::min(i, axis.size() - 2);
    const double seg = arc[i + 1] - arc[i];
    const double u = seg > 0.0 ? std::clamp((s - arc[i]) / seg, 0.0, 1.0) : 0.0;
    AxisFrame f;
    f.point = axis[i] + u * (axis[i + 1] - axis[i]);
    f.tangent = normalized(axis[i + 1] - axis[i]);
    Vec3 lat = Vec3{1, 0, 0} - dot(Vec3{1, 0, 0}, f.tangent) * f.tangent;
    if (norm(lat) < 1e-6) lat = Vec3{0, 1, 0} - dot(Vec3{0, 1, 0}, f.tangent) * f.tangent;
    f.lateral = normalized(lat);
    f.depth = cross(f.tangent, f.lateral);
    return f;
}

double interpolate_profile(const std::vector<double>& profile, double u) {
    if (profile.size() == 1) return profile[0];
    const double x = std::clamp(u, 0.0, 1.0) * static_cast<double>(profile.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(x), profile.size() - 2);
    const double f = x - static_cast<double>(i);
    return profile[i] * (1.0 - f) + profile[i + 1] * f;
}

void validate(const SpikePhenotype& ph) {
    if (ph.spikelet_count < 3) throw DataError("spikelet_count must be at least 3");
    if (ph.axis_control_points.size() < 2) throw DataError("phenotype needs at least two axis control points");
    if (ph.spikelet_radius_profile.empty()) throw DataError("spikelet radius profile is empty");
    double largest = 0.0;
    for (double r : ph.spikelet_radius_profile) {
        if (!(r > 0.0)) throw DataError("spikelet radii must be positive");
        largest = std::max(largest, r);
    }
    if (ph.asymmetry < 1.0) throw DataError("asymmetry must be >= 1");
    if (!(ph.rachis_radius > 0.0)) throw DataError("rachis radius must be positive");
    if (ph.awn_density < 0.0) throw DataError("awn density must be non-negative");
    for (std::size_t i = 1; i < ph.axis_control_points.size(); ++i) {
        if (norm(ph.axis_control_points[i] - ph.axis_control_points[i - 1]) < largest) {
            throw DataError("self-intersecting axis: control points " + std::to_string(i - 1) + " and " +
                            std::to_string(i) + " are closer than the largest spikelet radius");
        }
    }
}

Layout layout_spike(const SpikePhenotype& ph) {
    validate(ph);
    Layout lay;
    lay.axis = smooth_polyline(ph.axis_control_points, 32);
    std::vector<double> arc(lay.axis.size(), 0.0);
    for (std::size_t i = 1; i < lay.axis.size(); ++i) arc[i] = arc[i - 1] + norm(lay.axis[i] - lay.axis[i - 1]);
    const double length = arc.back();

    Rng rng(ph.rng_seed);
    const int n = ph.spikelet_count;
    for (int i = 0; i < n; ++i) {
        const double u = (i + 0.5) / n;
        const double jitter_r = ph.noise_amplitude > 0.0 ? 1.0 + ph.noise_amplitude * rng.normal() : 1.0;
        const double jitter_s = ph.noise_amplitude > 0.0 ? ph.noise_amplitude * rng.normal() : 0.0;
        const double r = std::max(0.2, interpolate_profile(ph.spikelet_radius_profile, u) * jitter_r);
        const double s = std::clamp(u * length + jitter_s * r, 0.0, length);
        const auto f = frame_at(lay.axis, arc, s);
        const double side = (i % 2 == 0) ? 1.0 : -1.0;
        const double lateral_semi = r * ph.asymmetry;
        Ellipsoid e;
        e.center = f.point + (side * ph.lateral_offset * lateral_semi) * f.lateral;
        const double ct = std::cos(ph.tilt), st = std::sin(ph.tilt);
        e.axis[0] = ct * f.lateral - (side * st) * f.tangent;  // lateral
        e.axis[1] = f.depth;
        e.axis[2] = ct * f.tangent + (side * st) * f.lateral;  // along the rachis, leaning outward
        e.semi[0] = lateral_semi;
        e.semi[1] = r;
        e.semi[2] = r * ph.elongation;
        lay.spikelets.push_back(e);
        lay.solids.push_back(make_primitive(e));
    }
    for (std::size_t i = 0; i + 4 < lay.axis.size(); i += 4) {
        lay.solids.push_back(make_primitive(Capsule{lay.axis[i], lay.axis[std::min(i + 4, lay.axis.size() - 1)], ph.rachis_radius}));
    }
    return lay;
}

// --- marching tetrahedra ---------------------------------------------------

TriangleMesh march(const std::vector<Primitive>& prims, double h) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
    for (const auto& p : prims) {
        lo = {std::min(lo.x, p.lo.x), std::min(lo.y, p.lo.y), std::min(lo.z, p.lo.z)};
        hi = {std::max(hi.x, p.hi.x), std::max(hi.y, p.hi.y), std::max(hi.z, p.hi.z)};
    }
    const double margin = 3.0 * h;
    // Align the grid to multiples of h so meshes of overlapping solids share nodes.
    const Vec3 origin{std::floor((lo.x - margin) / h) * h, std::floor((lo.y - margin) / h) * h,
                      std::floor((lo.z - margin) / h) * h};
    const auto nx = static_cast<std::size_t>(std::ceil((hi.x + margin - origin.x) / h)) + 1;
    const auto ny = static_cast<std::size_t>(std::ceil((hi.y + margin - origin.y) / h)) + 1;
    const auto nz = static_cast<std::size_t>(std::ceil((hi.z + margin - origin.z) / h)) + 1;
    auto idx = [&](std::size_t i, std::size_t j, std::size_t k) { return (k * ny + j) * nx + i; };
    auto pos = [&](std::size_t i, std::size_t j, std::size_t k) {
        return Vec3{origin.x + i * h, origin.y + j * h, origin.z + k * h};
    };

    std::vector<float> field(nx * ny * nz, std::numeric_limits<float>::max());
    for (const auto& p : prims) {
        const double reach = 2.0 * h;
        const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor((p.lo.x - reach - origin.x) / h)));
        const auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor((p.lo.y - reach - origin.y) / h)));
        const auto k0 = static_cast<std::size_t>(std::max(0.0, std::floor((p.lo.z - reach - origin.z) / h)));
        const auto i1 = std::min(nx - 1, static_cast<std::size_t>(std::ceil((p.hi.x + reach - origin.x) / h)));
        const auto j1 = std::min(ny - 1, static_cast<std::size_t>(std::ceil((p.hi.y + reach - origin.y) / h)));
        const auto k1 = std::min(nz - 1, static_cast<std::size_t>(std::ceil((p.hi.z + reach - origin.z) / h)));
        for (std::size_t k = k0; k <= k1; ++k) {
            for (std::size_t j = j0; j <= j1; ++j) {
                for (std::size_t i = i0; i <= i1; ++i) {
                    float v = static_cast<float>(p.value(pos(i, j, k)));
                    if (v == 0.0f) v = 1e-7f;
                    float& slot = field[idx(i, j, k)];
                    slot = std::min(slot, v);
                }
            }
        }
    }

    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    // Cube corner c has offset bits x=1, y=2, z=4.
    auto corner_index = [&](std::size_t i, std::size_t j, std::size_t k, int c) {
        return idx(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
    };
    auto vertex_on = [&](std::size_t ga, std::size_t gb, int code, Vec3 pa, Vec3 pb, float fa, float fb) {
        const std::uint64_t key = static_cast<std::uint64_t>(ga) * 8 + static_cast<std::uint64_t>(code);
        if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
        (void)gb;
        const double t = static_cast<double>(fa) / (static_cast<double>(fa) - static_cast<double>(fb));
        mesh.vertices.push_back(pa + t * (pb - pa));
        const auto id = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
        edge_vertex.emplace(key, id);
        return id;
    };
    static constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                                        {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

    for (std::size_t k = 0; k + 1 < nz; ++k) {
        for (std::size_t j = 0; j + 1 < ny; ++j) {
            for (std::size_t i = 0; i + 1 < nx; ++i) {
                float f[8];
                int inside = 0;
                for (int c = 0; c < 8; ++c) {
                    f[c] = field[corner_index(i, j, k, c)];
                    inside += f[c] < 0.0f;
                }
                if (inside == 0 || inside == 8) continue;
                for (const auto& tet : kTets) {
                    int in[4], out[4], ni = 0, no = 0;
                    for (int v = 0; v < 4; ++v) {
                        if (f[tet[v]] < 0.0f) {
                            in[ni++] = tet[v];
                        } else {
                            out[no++] = tet[v];
                        }
                    }
                    if (ni == 0 || no == 0) continue;
                    Vec3 cin{}, cout{};
                    for (int v = 0; v < ni; ++v) {
                        const int c = in[v];
                        cin = cin + pos(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    }
                    for (int v = 0; v < no; ++v) {
                        const int c = out[v];
                        cout = cout + pos(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    }
                    const Vec3 outward = (1.0 / no) * cout - (1.0 / ni) * cin;
                    // Kuhn tetrahedra only contain monotone edges (a's bits subset of b's).
                    auto cut = [&](int a, int b) {
                        if (a > b) std::swap(a, b);
                        const auto ga = corner_index(i, j, k, a);
                        const auto gb = corner_index(i, j, k, b);
                        const Vec3 pa = pos(i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1));
                        const Vec3 pb = pos(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
                        return vertex_on(ga, gb, b ^ a, pa, pb, f[a], f[b]);
                    };
                    auto emit = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
                        const Vec3 n = cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
                        if (dot(n, outward) < 0.0) std::swap(b, c);
                        mesh.faces.push_back({a, b, c});
                    };
                    if (ni == 1) {
                        emit(cut(in[0], out[0]), cut(in[0], out[1]), cut(in[0], out[2]));
                    } else if (no == 1) {
                        emit(cut(out[0], in[0]), cut(out[0], in[1]), cut(out[0], in[2]));
                    } else {
                        const auto p0 = cut(in[0], out[0]);
                        const auto p1 = cut(in[0], out[1]);
                        const auto p2 = cut(in[1], out[1]);
                        const auto p3 = cut(in[1], out[0]);
                        emit(p0, p1, p2);
                        emit(p0, p2, p3);
                    }
                }
            }
        }
    }
    return mesh;
}

TriangleMesh make_prism(Vec3 base, Vec3 dir, double length, double width) {
    const Vec3 t = normalized(dir);
    Vec3 u = std::abs(t.z) < 0.9 ? cross(t, Vec3{0, 0, 1}) : cross(t, Vec3{1, 0, 0});
    u = normalized(u);
    const Vec3 v = cross(t, u);
    const double r = width / std::sqrt(3.0);
    TriangleMesh m;
    for (int end = 0; end < 2; ++end) {
        for (int k = 0; k < 3; ++k) {
            const double a = 2.0 * std::numbers::pi * k / 3.0;
            m.vertices.push_back(base + (end * length) * t + (r * std::cos(a)) * u + (r * std::sin(a)) * v);
        }
    }
    m.faces = {{0, 2, 1}, {3, 4, 5}};
    for (std::uint32_t k = 0; k < 3; ++k) {
        const std::uint32_t n = (k + 1) % 3;
        m.faces.push_back({k, n, 3 + n});
        m.faces.push_back({k, 3 + n, 3 + k});
    }
    const Vec3 center = base + (length / 2.0) * t;
    for (auto& f : m.faces) {
        const Vec3 c = (1.0 / 3.0) * (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]);
        const Vec3 n = cross(m.vertices[f[1]] - m.vertices[f[0]], m.vertices[f[2]] - m.vertices[f[0]]);
        if (dot(n, c - center) < 0.0) std::swap(f[1], f[2]);
    }
    return m;
}

// Awns start at spikelet tips and run outward; each prism is trimmed so it
// stays clear of the solid and can be appended as a disjoint component.
void add_awns(TriangleMesh& mesh, const SpikePhenotype& ph, const Layout& lay) {
    if (ph.awn_density <= 0.0) return;
    Rng rng(derive_seed(ph.rng_seed, 0xA3A3));
    const double clearance = 2.0 * ph.awn_width;
    for (std::size_t i = 0; i < lay.spikelets.size(); ++i) {
        const auto& e = lay.spikelets[i];
        const double whole = std::floor(ph.awn_density);
        const int count = static_cast<int>(whole) + (rng.uniform() < ph.awn_density - whole ? 1 : 0);
        for (int a = 0; a < count; ++a) {
            const double spread = rng.uniform(-0.25, 0.25);
            const Vec3 dir = normalized(e.axis[2] + spread * e.axis[0] + rng.uniform(-0.15, 0.15) * e.axis[1]);
            Vec3 start = e.center + e.semi[2] * e.axis[2];
            const double step = 0.05;
            int guard = 0;
            while (union_value(lay.solids, start) < clearance && guard++ < 400) start = start + step * dir;
            const double wanted = ph.awn_length * rng.uniform(0.8, 1.2);
            double length = 0.0;
            while (length < wanted && union_value(lay.solids, start + (length + step) * dir) >= clearance) length += step;
            if (length < 4.0 * step) continue;
            mesh.append(make_prism(start, dir, length, ph.awn_width));
        }
    }
}

}  // namespace

TriangleMesh generate_spike(const SpikePhenotype& phenotype, const MeshingOptions& options) {
    if (!(options.resolution > 0.0)) throw DataError("meshing resolution must be positive");
    const Layout lay = layout_spike(phenotype);
    TriangleMesh mesh = march(lay.solids, options.resolution);
    add_awns(mesh, phenotype, lay);
    return mesh;
}

TriangleMesh generate_spike_on_cone(const SpikePhenotype& phenotype, const geo::ConeSpec& cone,
                                    const MeshingOptions& options) {
    Layout lay = layout_spike(phenotype);
    lay.solids.push_back(make_primitive(SolidCone{cone}));
    TriangleMesh mesh = march(lay.solids, options.resolution);
    add_awns(mesh, phenotype, lay);
    return mesh;
}

bool spike_contains(const SpikePhenotype& phenotype, Vec3 p) {
    static thread_local const SpikePhenotype* cached_for = nullptr;
    static thread_local std::uint64_t cached_seed = 0;
    static thread_local Layout cached;
    if (cached_for != &phenotype || cached_seed != phenotype.rng_seed) {
        cached = layout_spike(phenotype);
        cached_for = &phenotype;
        cached_seed = phenotype.rng_seed;
    }
    return union_value(cached.solids, p) < 0.0;
}

// --- voxel oracle ----------------------------------------------------------

double voxel_volume(const TriangleMesh& mesh, double resolution) {
    if (!(resolution > 0.0)) throw DataError("voxel resolution must be positive");
    if (mesh.faces.empty()) return 0.0;
    const auto box = geo::bounding_box(mesh);
    const double extent = std::max({box.max.x - box.min.x, box.max.y - box.min.y, box.max.z - box.min.z});
    if (resolution > extent) throw DataError("voxel resolution exceeds the mesh bounding box");

    const auto nx = static_cast<std::size_t>(std::ceil((box.max.x - box.min.x) / resolution)) + 1;
    const auto ny = static_cast<std::size_t>(std::ceil((box.max.y - box.min.y) / resolution)) + 1;
    // Ray positions are offset by an irrational fraction so they never pass
    // exactly through mesh edges or vertices.
    const double jx = 0.5 + 1.2345678e-5, jy = 0.5 + 2.3456789e-5;
    std::vector<std::vector<double>> hits(nx * ny);
    for (const auto& f : mesh.faces) {
        const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
        const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if (det == 0.0) continue;
        const double x0 = std::min({a.x, b.x, c.x}), x1 = std::max({a.x, b.x, c.x});
        const double y0 = std::min({a.y, b.y, c.y}), y1 = std::max({a.y, b.y, c.y});
        const auto i0 = static_cast<std::ptrdiff_t>(std::ceil((x0 - box.min.x) / resolution - jx));
        const auto i1 = static_cast<std::ptrdiff_t>(std::floor((x1 - box.min.x) / resolution - jx));
        const auto j0 = static_cast<std::ptrdiff_t>(std::ceil((y0 - box.min.y) / resolution - jy));
        const auto j1 = static_cast<std::ptrdiff_t>(std::floor((y1 - box.min.y) / resolution - jy));
        for (auto j = std::max<std::ptrdiff_t>(0, j0); j <= std::min<std::ptrdiff_t>(ny - 1, j1); ++j) {
            for (auto i = std::max<std::ptrdiff_t>(0, i0); i <= std::min<std::ptrdiff_t>(nx - 1, i1); ++i) {
                const double px = box.min.x + (i + jx) * resolution;
                const double py = box.min.y + (j + jy) * resolution;
                const double u = ((px - a.x) * (c.y - a.y) - (c.x - a.x) * (py - a.y)) / det;
                const double v = ((b.x - a.x) * (py - a.y) - (px - a.x) * (b.y - a.y)) / det;
                if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
                hits[static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)].push_back(
                    a.z + u * (b.z - a.z) + v * (c.z - a.z));
            }
        }
    }
    std::uint64_t count = 0;
    for (auto& column : hits) {
        if (column.size() < 2) continue;
        std::sort(column.begin(), column.end());
        for (std::size_t k = 0; k + 1 < column.size(); k += 2) {
            const double z0 = (column[k] - box.min.z) / resolution - 0.5;
            const double z1 = (column[k + 1] - box.min.z) / resolution - 0.5;
            const auto first = static_cast<std::int64_t>(std::ceil(z0));
            const auto last = static_cast<std::int64_t>(std::floor(z1));
            if (last >= first) count += static_cast<std::uint64_t>(last - first + 1);
        }
    }
    return static_cast<double>(count) * resolution * resolution * resolution;
}

// --- rendering -------------------------------------------------------------

std::array<ViewSpec, 6> six_views(double gsd, int width, int height) {
    return {ViewSpec{0, 0, gsd, width, height},   ViewSpec{90, 0, gsd, width, height},
            ViewSpec{180, 0, gsd, width, height}, ViewSpec{270, 0, gsd, width, height},
            ViewSpec{45, 20, gsd, width, height}, ViewSpec{225, 20, gsd, width, height}};
}

ViewKind view_kind(std::size_t index) {
    if (index >= 4) return ViewKind::Oblique;
    return index % 2 == 0 ? ViewKind::Side : ViewKind::Front;
}

mask::BinaryMask render_mask(const TriangleMesh& mesh, const ViewSpec& view) {
    if (!(view.gsd > 0.0)) throw DataError("view gsd must be positive");
    if (view.width < 1 || view.height < 1) throw DataError("view image size must be positive");
    const double az = view.azimuth * kDeg, el = view.elevation * kDeg;
    const Vec3 toward_camera{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    Vec3 right = cross(Vec3{0, 0, 1}, toward_camera);
    if (norm(right) < 1e-9) right = cross(Vec3{0, 1, 0}, toward_camera);
    right = normalized(right);
    const Vec3 up = cross(toward_camera, right);

    mask::BinaryMask out(view.width, view.height, view.gsd);
    if (mesh.faces.empty()) return out;

    std::vector<Vec2> uv(mesh.vertices.size());
    double u0 = std::numeric_limits<double>::infinity(), u1 = -u0, v0 = u0, v1 = -u0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        uv[i] = {dot(mesh.vertices[i], right), dot(mesh.vertices[i], up)};
        u0 = std::min(u0, uv[i].x);
        u1 = std::max(u1, uv[i].x);
        v0 = std::min(v0, uv[i].y);
        v1 = std::max(v1, uv[i].y);
    }
    const double need_w = (u1 - u0) / view.gsd, need_h = (v1 - v0) / view.gsd;
    if (need_w > view.width || need_h > view.height) {
        throw DataError("mesh exceeds the image footprint; required image size at least " +
                        std::to_string(static_cast<int>(std::ceil(need_w)) + 2) + "x" +
                        std::to_string(static_cast<int>(std::ceil(need_h)) + 2) + " px");
    }
    const double uc = 0.5 * (u0 + u1), vc = 0.5 * (v0 + v1);
    // Pixel-index coordinates: column c and row r have their centers at X = c, Y = r.
    for (auto& p : uv) {
        p = {(p.x - uc) / view.gsd + 0.5 * view.width - 0.5, (vc - p.y) / view.gsd + 0.5 * view.height - 0.5};
    }
    constexpr double tol = 1e-9;
    for (const auto& f : mesh.faces) {
        const Vec2 a = uv[f[0]], b = uv[f[1]], c = uv[f[2]];
        double area = cross(b - a, c - a);
        if (std::abs(area) < 1e-12) continue;
        const double s = area > 0.0 ? 1.0 : -1.0;
        const int c0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x, b.x, c.x}) - tol)));
        const int c1 = std::min(view.width - 1, static_cast<int>(std::floor(std::max({a.x, b.x, c.x}) + tol)));
        const int r0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y, b.y, c.y}) - tol)));
        const int r1 = std::min(view.height - 1, static_cast<int>(std::floor(std::max({a.y, b.y, c.y}) + tol)));
        for (int r = r0; r <= r1; ++r) {
            for (int col = c0; col <= c1; ++col) {
                if (out.at(r, col)) continue;
                const Vec2 p{static_cast<double>(col), static_cast<double>(r)};
                const double e0 = s * cross(b - a, p - a);
                const double e1 = s * cross(c - b, p - b);
                const double e2 = s * cross(a - c, p - c);
                if (e0 >= -tol && e1 >= -tol && e2 >= -tol) out.set(r, col);
            }
        }
    }
    return out;
}

void add_salt_and_pepper(mask::BinaryMask& mask, double rate, std::uint64_t seed) {
    if (rate <= 0.0) return;
    Rng rng(seed);
    auto bits = mask.bits();
    for (auto& b : bits) {
        if (rng.uniform() < rate) b = b ? 0 : 1;
    }
}

}  // namespace spikevol::synth

// --- datasets ----------------------------------------------------------------

namespace spikevol::synth {

int GenerationConfig::image_width() const { return static_cast<int>(std::ceil(image_width_mm / gsd)); }
int GenerationConfig::image_height() const { return static_cast<int>(std::ceil(image_height_mm / gsd)); }

void to_json(nlohmann::json& j, const GenerationConfig& c) {
    j = nlohmann::json{{"genotypes", c.genotypes},
                       {"spikes_per_genotype", c.spikes_per_genotype},
                       {"field_spikes_per_genotype", c.field_spikes_per_genotype},
                       {"gsd", c.gsd},
                       {"image_width_mm", c.image_width_mm},
                       {"image_height_mm", c.image_height_mm},
                       {"mesh_resolution", c.mesh_resolution},
                       {"stage_scales", c.stage_scales},
                       {"field_awn_density", c.field_awn_density},
                       {"field_noise_rate", c.field_noise_rate},
                       {"write_meshes", c.write_meshes},
                       {"master_seed", c.master_seed}};
}

void from_json(const nlohmann::json& j, GenerationConfig& c) {
    static const char* known[] = {"genotypes",       "spikes_per_genotype", "field_spikes_per_genotype",
                                  "gsd",             "image_width_mm",      "image_height_mm",
                                  "mesh_resolution", "stage_scales",        "field_awn_density",
                                  "field_noise_rate", "write_meshes",       "master_seed"};
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
            throw ConfigError("unknown generation setting '" + key + "'");
        }
    }
    try {
        c.genotypes = j.value("genotypes", c.genotypes);
        c.spikes_per_genotype = j.value("spikes_per_genotype", c.spikes_per_genotype);
        c.field_spikes_per_genotype = j.value("field_spikes_per_genotype", c.field_spikes_per_genotype);
        c.gsd = j.value("gsd", c.gsd);
        c.image_width_mm = j.value("image_width_mm", c.image_width_mm);
        c.image_height_mm = j.value("image_height_mm", c.image_height_mm);
        c.mesh_resolution = j.value("mesh_resolution", c.mesh_resolution);
        c.stage_scales = j.value("stage_scales", c.stage_scales);
        c.field_awn_density = j.value("field_awn_density", c.field_awn_density);
        c.field_noise_rate = j.value("field_noise_rate", c.field_noise_rate);
        c.write_meshes = j.value("write_meshes", c.write_meshes);
        c.master_seed = j.value("master_seed", c.master_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("generation config: ") + e.what());
    }
    if (c.genotypes < 2) throw ConfigError("generation needs at least 2 genotypes");
    if (c.spikes_per_genotype < 1) throw ConfigError("spikes_per_genotype must be positive");
    if (c.field_spikes_per_genotype < 0) throw ConfigError("field_spikes_per_genotype must be non-negative");
    if (!(c.gsd > 0.0)) throw ConfigError("gsd must be positive");
    if (!(c.mesh_resolution > 0.0)) throw ConfigError("mesh_resolution must be positive");
}

std::string to_string(Domain d) { return d == Domain::Indoor ? "indoor" : "field"; }

Domain domain_from_string(const std::string& s) {
    if (s == "indoor") return Domain::Indoor;
    if (s == "field") return Domain::Field;
    throw DataError("unknown domain '" + s + "'");
}

namespace {

struct GenotypeTraits {
    double length, radius, asymmetry, elongation, bend, bend_angle;
    int spikelets;
    std::array<double, 5> taper;
};

GenotypeTraits genotype_traits(std::uint64_t master_seed, int genotype) {
    Rng rng(derive_seed(master_seed, 0x6E0000ULL + static_cast<std::uint64_t>(genotype)));
    GenotypeTraits g;
    g.length = rng.uniform(50.0, 95.0);
    g.spikelets = 14 + static_cast<int>(rng.below(11));
    g.radius = rng.uniform(1.6, 2.6);
    g.asymmetry = rng.uniform(1.1, 1.5);
    g.elongation = rng.uniform(1.4, 2.0);
    g.bend = rng.uniform(0.0, 0.08);
    g.bend_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // Narrow base, widest a little below the middle, tapering tip.
    const double base = rng.uniform(0.6, 0.85), tip = rng.uniform(0.45, 0.7);
    g.taper = {base, 0.5 * (base + 1.0), 1.0, rng.uniform(0.8, 0.95), tip};
    return g;
}

}  // namespace

SpikePhenotype phenotype_for(const GenerationConfig& config, int genotype, int replicate, Domain domain) {
    const auto g = genotype_traits(config.master_seed, genotype);
    const int per = domain == Domain::Indoor ? config.spikes_per_genotype : config.field_spikes_per_genotype;
    const std::uint64_t offset = domain == Domain::Indoor ? 0 : static_cast<std::uint64_t>(config.genotypes) *
                                                                static_cast<std::uint64_t>(config.spikes_per_genotype);
    const std::uint64_t index = offset + static_cast<std::uint64_t>(genotype) * static_cast<std::uint64_t>(per) +
                                static_cast<std::uint64_t>(replicate);
    const std::uint64_t seed = derive_seed(config.master_seed, index);
    Rng rng(derive_seed(seed, 0x5C));

    const int stage = replicate % 3;
    const double scale = config.stage_scales[static_cast<std::size_t>(stage)] * std::clamp(1.0 + 0.06 * rng.normal(), 0.85, 1.15);
    const double length = g.length * scale;

    SpikePhenotype ph;
    ph.genotype_id = "G" + std::string(3 - std::min<std::size_t>(3, std::to_string(genotype).size()), '0') + std::to_string(genotype);
    ph.spikelet_count = g.spikelets;
    for (double t : g.taper) ph.spikelet_radius_profile.push_back(g.radius * scale * t);
    ph.asymmetry = g.asymmetry;
    ph.elongation = g.elongation;
    ph.noise_amplitude = 0.05;
    ph.rng_seed = seed;
    const Vec3 bend_dir{std::cos(g.bend_angle), std::sin(g.bend_angle), 0.0};
    for (int i = 0; i < 4; ++i) {
        const double u = i / 3.0;
        ph.axis_control_points.push_back((u * length) * Vec3{0, 0, 1} + (g.bend * length * u * u) * bend_dir);
    }
    if (domain == Domain::Field) ph.awn_density = config.field_awn_density;
    return ph;
}

namespace {

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

std::vector<Sample> build_samples(const GenerationConfig& config, const BuildOptions& options,
                                  std::vector<geo::TriangleMesh>* meshes) {
    struct Job {
        int genotype, replicate;
        Domain domain;
    };
    std::vector<Job> jobs;
    for (int g = 0; g < config.genotypes; ++g)
        for (int r = 0; r < config.spikes_per_genotype; ++r) jobs.push_back({g, r, Domain::Indoor});
    for (int g = 0; g < config.genotypes; ++g)
        for (int r = 0; r < config.field_spikes_per_genotype; ++r) jobs.push_back({g, r, Domain::Field});

    std::vector<Sample> samples(jobs.size());
    std::vector<geo::TriangleMesh> kept(options.keep_meshes ? jobs.size() : 0);
    const auto views = six_views(config.gsd, config.image_width(), config.image_height());
    parallel_for(jobs.size(), [&](std::size_t i) {
        const Job& job = jobs[i];
        Sample s;
        s.phenotype = phenotype_for(config, job.genotype, job.replicate, job.domain);
        s.genotype = s.phenotype.genotype_id;
        s.domain = job.domain;
        s.stage = kStageNames[job.replicate % 3];
        s.spike_id = s.genotype + (job.domain == Domain::Indoor ? "-S" : "-F") + padded(job.replicate, 2);
        auto mesh = generate_spike(s.phenotype, MeshingOptions{config.mesh_resolution});
        s.volume_mm3 = geo::mesh_signed_volume(mesh).volume;
        if (job.domain == Domain::Indoor) {
            for (const auto& v : views) s.views.push_back(render_mask(mesh, v));
        } else {
            s.views.push_back(render_mask(mesh, views[0]));
            add_salt_and_pepper(s.views.back(), config.field_noise_rate, derive_seed(s.phenotype.rng_seed, 0x9E));
        }
        if (options.with_traits) s.traits = geo::extract_traits(mesh);
        if (options.keep_meshes) kept[i] = std::move(mesh);
        samples[i] = std::move(s);
    });
    if (meshes) *meshes = std::move(kept);
    return samples;
}

}  // namespace spikevol::synth
