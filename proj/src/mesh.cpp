#include "spikevol/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <unordered_map>

namespace spikevol::geo {

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; }

Vec3 face_normal(const TriangleMesh& m, const Face& f) {
    return cross(m.vertices[f[1]] - m.vertices[f[0]], m.vertices[f[2]] - m.vertices[f[0]]);
}

// Flips faces of a convex mesh so their normals point away from `inside`.
void orient_convex(TriangleMesh& m, Vec3 inside) {
    for (auto& f : m.faces) {
        const Vec3 c = (1.0 / 3.0) * (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]);
        if (dot(face_normal(m, f), c - inside) < 0.0) std::swap(f[1], f[2]);
    }
}

}  // namespace

void TriangleMesh::append(const TriangleMesh& other) {
    const auto offset = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    faces.reserve(faces.size() + other.faces.size());
    for (const auto& f : other.faces) faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
}

BoundingBox bounding_box(const TriangleMesh& mesh) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    BoundingBox box{{inf, inf, inf}, {-inf, -inf, -inf}};
    for (const auto& v : mesh.vertices) {
        box.min = {std::min(box.min.x, v.x), std::min(box.min.y, v.y), std::min(box.min.z, v.z)};
        box.max = {std::max(box.max.x, v.x), std::max(box.max.y, v.y), std::max(box.max.z, v.z)};
    }
    return box;
}

void check_watertight(const TriangleMesh& mesh) {
    const auto n = mesh.vertices.size();
    std::vector<std::uint64_t> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            if (f[k] >= n) {
                throw DataError("face references vertex " + std::to_string(f[k]) + " of " + std::to_string(n));
            }
            edges.push_back(edge_key(f[k], f[(k + 1) % 3]));
        }
    }
    std::sort(edges.begin(), edges.end());
    auto describe = [](std::uint64_t e) {
        return "(" + std::to_string(e >> 32) + ", " + std::to_string(e & 0xFFFFFFFFu) + ")";
    };
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto e = edges[i];
        if (i + 1 < edges.size() && edges[i + 1] == e) {
            throw DataError("mesh is not watertight: edge " + describe(e) + " is used twice with the same orientation");
        }
        const auto reverse = edge_key(static_cast<std::uint32_t>(e & 0xFFFFFFFFu), static_cast<std::uint32_t>(e >> 32));
        if (!std::binary_search(edges.begin(), edges.end(), reverse)) {
            throw DataError("mesh is not watertight: boundary edge " + describe(e));
        }
    }
}

double raw_signed_volume(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) return 0.0;
    // Summing relative to the vertex centroid keeps the result independent of
    // where the mesh sits in space.
    Vec3 ref;
    for (const auto& v : mesh.vertices) ref = ref + v;
    ref = ref * (1.0 / static_cast<double>(mesh.vertices.size()));
    double sum = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3 a = mesh.vertices[f[0]] - ref;
        const Vec3 b = mesh.vertices[f[1]] - ref;
        const Vec3 c = mesh.vertices[f[2]] - ref;
        sum += dot(a, cross(b, c));
    }
    return sum / 6.0;
}

SignedVolume mesh_signed_volume(const TriangleMesh& mesh) {
    check_watertight(mesh);
    const double v = raw_signed_volume(mesh);
    return {std::abs(v), v >= 0.0};
}

TriangleMesh flipped(const TriangleMesh& mesh) {
    TriangleMesh out = mesh;
    for (auto& f : out.faces) std::swap(f[1], f[2]);
    return out;
}

TriangleMesh transformed(const TriangleMesh& mesh, const std::array<double, 9>& r, Vec3 t) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) {
        const Vec3 p = v;
        v = {r[0] * p.x + r[1] * p.y + r[2] * p.z + t.x, r[3] * p.x + r[4] * p.y + r[5] * p.z + t.y,
             r[6] * p.x + r[7] * p.y + r[8] * p.z + t.z};
    }
    return out;
}

std::array<double, 9> rotation_from_euler(double rx, double ry, double rz) {
    const double cx = std::cos(rx), sx = std::sin(rx);
    const double cy = std::cos(ry), sy = std::sin(ry);
    const double cz = std::cos(rz), sz = std::sin(rz);
    // Rz * Ry * Rx
    return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
            sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
            -sy,     cy * sx,                cy * cx};
}

TriangleMesh make_box(Vec3 lo, Vec3 hi) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i) {
        m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
    }
    m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 5}, {0, 5, 4},
               {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

TriangleMesh make_icosphere(double radius, int subdivisions, Vec3 center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                               {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : verts) v = normalized(v);
    std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int level = 0; level < subdivisions; ++level) {
        std::unordered_map<std::uint64_t, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = edge_key(std::min(a, b), std::max(a, b));
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            verts.push_back(normalized(verts[a] + verts[b]));
            const auto idx = static_cast<std::uint32_t>(verts.size() - 1);
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const auto a = mid(f[0], f[1]);
            const auto b = mid(f[1], f[2]);
            const auto c = mid(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        faces = std::move(next);
    }
    TriangleMesh m;
    m.vertices.reserve(verts.size());
    for (const auto& v : verts) m.vertices.push_back(center + radius * v);
    m.faces = std::move(faces);
    orient_convex(m, center);
    return m;
}

TriangleMesh make_cylinder(double radius, double length, int segments, Vec3 base) {
    TriangleMesh m;
    const auto n = static_cast<std::uint32_t>(segments);
    for (int ring = 0; ring < 2; ++ring) {
        for (std::uint32_t i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * i / n;
            m.vertices.push_back({base.x + radius * std::cos(a), base.y + radius * std::sin(a), base.z + ring * length});
        }
    }
    m.vertices.push_back(base);
    m.vertices.push_back(base + Vec3{0, 0, length});
    const std::uint32_t bottom = 2 * n;
    const std::uint32_t top = 2 * n + 1;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t j = (i + 1) % n;
        m.faces.push_back({i, j, n + j});
        m.faces.push_back({i, n + j, n + i});
        m.faces.push_back({bottom, j, i});
        m.faces.push_back({top, n + i, n + j});
    }
    orient_convex(m, base + Vec3{0, 0, length / 2});
    return m;
}

TriangleMesh make_cone(Vec2 center, double base_z, double apex_height, double base_radius, int segments) {
    TriangleMesh m;
    const auto n = static_cast<std::uint32_t>(segments);
    for (std::uint32_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n;
        m.vertices.push_back({center.x + base_radius * std::cos(a), center.y + base_radius * std::sin(a), base_z});
    }
    m.vertices.push_back({center.x, center.y, base_z});
    m.vertices.push_back({center.x, center.y, base_z + apex_height});
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t j = (i + 1) % n;
        m.faces.push_back({n, j, i});
        m.faces.push_back({n + 1, i, j});
    }
    orient_convex(m, {center.x, center.y, base_z + apex_height / 4});
    return m;
}

// --- cones -----------------------------------------------------------------

bool ConeSpec::contains(Vec3 p) const {
    if (apex_height <= 0.0 || base_radius <= 0.0) return false;
    const double h = p.z - base_z;
    if (h < 0.0 || h > apex_height) return false;
    const double allowed = base_radius * (1.0 - h / apex_height);
    return std::hypot(p.x - center_xy.x, p.y - center_xy.y) <= allowed;
}

ConeSpec locate_cone(const TriangleMesh& mesh, double base_z, double apex_height, double base_radius, double z_band) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double x0 = inf, x1 = -inf, y0 = inf, y1 = -inf;
    bool any = false;
    for (const auto& v : mesh.vertices) {
        if (v.z < base_z || v.z > base_z + z_band) continue;
        any = true;
        x0 = std::min(x0, v.x);
        x1 = std::max(x1, v.x);
        y0 = std::min(y0, v.y);
        y1 = std::max(y1, v.y);
    }
    if (!any) throw DataError("no cone vertices in band");
    return ConeSpec{{(x0 + x1) / 2.0, (y0 + y1) / 2.0}, base_z, apex_height, base_radius};
}

namespace {

double signed_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
    return a / 2.0;
}

bool inside_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double orientation) {
    const double d1 = cross(b - a, p - a) * orientation;
    const double d2 = cross(c - b, p - b) * orientation;
    const double d3 = cross(a - c, p - c) * orientation;
    return d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0;
}

// Ear clipping that keeps the winding of `loop`; triangles reference the
// caller's vertex ids.
void triangulate_loop(const std::vector<std::uint32_t>& loop, const std::vector<Vec3>& vertices,
                      std::vector<Face>& out) {
    std::vector<Vec2> pts;
    pts.reserve(loop.size());
    for (auto id : loop) pts.push_back({vertices[id].x, vertices[id].y});
    const double orientation = signed_area(pts) >= 0.0 ? 1.0 : -1.0;

    std::vector<std::size_t> idx(loop.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    while (idx.size() > 3) {
        const std::size_t n = idx.size();
        std::size_t ear = n;
        double best_convexity = -std::numeric_limits<double>::infinity();
        std::size_t fallback = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 a = pts[idx[(i + n - 1) % n]];
            const Vec2 b = pts[idx[i]];
            const Vec2 c = pts[idx[(i + 1) % n]];
            const double convexity = cross(b - a, c - b) * orientation;
            if (convexity > best_convexity) {
                best_convexity = convexity;
                fallback = i;
            }
            if (convexity <= 0.0) continue;
            bool blocked = false;
            for (std::size_t k = 0; k < n && !blocked; ++k) {
                if (k == i || k == (i + 1) % n || k == (i + n - 1) % n) continue;
                blocked = inside_triangle(pts[idx[k]], a, b, c, orientation);
            }
            if (!blocked) {
                ear = i;
                break;
            }
        }
        if (ear == n) ear = fallback;
        out.push_back({loop[idx[(ear + n - 1) % n]], loop[idx[ear]], loop[idx[(ear + 1) % n]]});
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(ear));
    }
    out.push_back({loop[idx[0]], loop[idx[1]], loop[idx[2]]});
}

}  // namespace

TriangleMesh clip_below(const TriangleMesh& mesh, double level) {
    // Nudge the plane off any vertex so every crossing edge has a strict sign change.
    double z = level;
    for (int attempt = 0; attempt < 64; ++attempt) {
        const bool touches = std::any_of(mesh.vertices.begin(), mesh.vertices.end(),
                                         [&](const Vec3& v) { return std::abs(v.z - z) < 1e-9; });
        if (!touches) break;
        z += 1e-7;
    }

    TriangleMesh out;
    constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> remap(mesh.vertices.size(), kNone);
    auto keep = [&](std::uint32_t v) {
        if (remap[v] == kNone) {
            remap[v] = static_cast<std::uint32_t>(out.vertices.size());
            out.vertices.push_back(mesh.vertices[v]);
        }
        return remap[v];
    };
    std::unordered_map<std::uint64_t, std::uint32_t> cut_vertex;
    auto cut = [&](std::uint32_t a, std::uint32_t b) {
        const auto key = edge_key(std::min(a, b), std::max(a, b));
        if (auto it = cut_vertex.find(key); it != cut_vertex.end()) return it->second;
        const Vec3 pa = mesh.vertices[a];
        const Vec3 pb = mesh.vertices[b];
        const double t = (z - pa.z) / (pb.z - pa.z);
        out.vertices.push_back({pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y), z});
        const auto idx = static_cast<std::uint32_t>(out.vertices.size() - 1);
        cut_vertex.emplace(key, idx);
        return idx;
    };

    // Cap edges run opposite to the open boundary left by the clipped surface.
    std::unordered_map<std::uint32_t, std::uint32_t> cap_next;
    for (const auto& f : mesh.faces) {
        const bool above[3] = {mesh.vertices[f[0]].z > z, mesh.vertices[f[1]].z > z, mesh.vertices[f[2]].z > z};
        const int count = above[0] + above[1] + above[2];
        if (count == 0) continue;
        if (count == 3) {
            out.faces.push_back({keep(f[0]), keep(f[1]), keep(f[2])});
            continue;
        }
        // Rotate so that `a` is the odd vertex out; winding stays a -> b -> c.
        int r = 0;
        while (above[r] != (count == 1)) ++r;
        const std::uint32_t a = f[r], b = f[(r + 1) % 3], c = f[(r + 2) % 3];
        if (count == 1) {
            const auto pab = cut(a, b);
            const auto pca = cut(c, a);
            out.faces.push_back({keep(a), pab, pca});
            cap_next[pca] = pab;
        } else {
            // a below; b and c survive along with the two cut points.
            const auto pab = cut(a, b);
            const auto pca = cut(c, a);
            out.faces.push_back({pab, keep(b), keep(c)});
            out.faces.push_back({pab, keep(c), pca});
            cap_next[pab] = pca;
        }
    }

    while (!cap_next.empty()) {
        // Start from the smallest id so the cap triangulation is deterministic.
        auto start_it = std::min_element(cap_next.begin(), cap_next.end(),
                                         [](const auto& l, const auto& r) { return l.first < r.first; });
        std::vector<std::uint32_t> loop;
        std::uint32_t v = start_it->first;
        while (true) {
            auto it = cap_next.find(v);
            if (it == cap_next.end()) break;
            loop.push_back(v);
            v = it->second;
            cap_next.erase(it);
        }
        if (loop.size() >= 3) triangulate_loop(loop, out.vertices, out.faces);
    }
    return out;
}

TriangleMesh remove_cone(const TriangleMesh& mesh, const ConeSpec& cone) {
    if (cone.base_radius <= 0.0 || cone.apex_height <= 0.0) return mesh;
    std::size_t inside = 0;
    for (const auto& v : mesh.vertices) inside += cone.contains(v) ? 1 : 0;
    if (inside == 0) return mesh;
    if (inside == mesh.vertices.size()) throw DataError("nothing remains after cone removal");
    TriangleMesh out = clip_below(mesh, cone.apex_z());
    if (out.faces.empty()) throw DataError("nothing remains after cone removal");
    return out;
}

// --- traits ----------------------------------------------------------------

Slice slice_at(const TriangleMesh& mesh, double z) {
    double area2 = 0.0, cx = 0.0, cy = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3 p[3] = {mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]};
        const bool up[3] = {p[0].z >= z, p[1].z >= z, p[2].z >= z};
        const int count = up[0] + up[1] + up[2];
        if (count == 0 || count == 3) continue;
        Vec2 hits[2];
        int h = 0;
        for (int k = 0; k < 3 && h < 2; ++k) {
            const Vec3 a = p[k], b = p[(k + 1) % 3];
            if (up[k] == up[(k + 1) % 3]) continue;
            const double t = (z - a.z) / (b.z - a.z);
            hits[h++] = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        }
        if (h < 2) continue;
        const Vec3 n = cross(p[1] - p[0], p[2] - p[0]);
        Vec2 s = hits[0], e = hits[1];
        // Outward normal on the right of the segment means the section is traversed counter-clockwise.
        if (cross(e - s, Vec2{n.x, n.y}) > 0.0) std::swap(s, e);
        const double c = cross(s, e);
        area2 += c;
        cx += (s.x + e.x) * c;
        cy += (s.y + e.y) * c;
    }
    Slice out;
    out.z = z;
    out.area = area2 / 2.0;
    if (std::abs(area2) > 0.0) out.centroid = {cx / (3.0 * area2), cy / (3.0 * area2)};
    return out;
}

SpikeTraits extract_traits(const TriangleMesh& mesh, int slice_count) {
    if (mesh.faces.empty() || slice_count < 3) throw DataError("fewer than 3 nonempty slices");
    const auto box = bounding_box(mesh);
    const double span = box.max.z - box.min.z;
    std::vector<Slice> slices;
    for (int k = 0; k < slice_count; ++k) {
        const double z = box.min.z + (k + 0.5) * span / slice_count;
        const auto s = slice_at(mesh, z);
        if (s.area > 1e-12) slices.push_back(s);
    }
    if (slices.size() < 3) throw DataError("fewer than 3 nonempty slices");

    double arc = 0.0;
    for (std::size_t i = 1; i < slices.size(); ++i) {
        const Vec3 a{slices[i - 1].centroid.x, slices[i - 1].centroid.y, slices[i - 1].z};
        const Vec3 b{slices[i].centroid.x, slices[i].centroid.y, slices[i].z};
        arc += norm(b - a);
    }
    const Vec3 first{slices.front().centroid.x, slices.front().centroid.y, slices.front().z};
    const Vec3 last{slices.back().centroid.x, slices.back().centroid.y, slices.back().z};
    const double chord = norm(last - first);

    const std::size_t n = slices.size();
    const std::size_t lo = n / 4;
    const std::size_t hi = std::max(lo + 1, (3 * n + 3) / 4);
    double radius_sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) radius_sum += std::sqrt(slices[i].area / std::numbers::pi);

    SpikeTraits t;
    t.length = arc + (slices.front().z - box.min.z) + (box.max.z - slices.back().z);
    t.width = 2.0 * radius_sum / static_cast<double>(hi - lo);
    t.curvature = chord > 0.0 ? std::max(0.0, arc / chord - 1.0) : 0.0;
    return t;
}

}  // namespace spikevol::geo
