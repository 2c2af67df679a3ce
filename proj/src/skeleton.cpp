#include "spikevol/skeleton.hpp"

#include <algorithm>
#include <array>

namespace spikevol::mask {

namespace {

// P2..P9 in Zhang-Suen order: N, NE, E, SE, S, SW, W, NW.
constexpr std::array<int, 8> kDr = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kDc = {0, 1, 1, 1, 0, -1, -1, -1};

std::array<int, 8> ring(const BinaryMask& m, int r, int c) {
    std::array<int, 8> p{};
    for (int k = 0; k < 8; ++k) p[k] = m.at(r + kDr[k], c + kDc[k]) ? 1 : 0;
    return p;
}

int transitions(const std::array<int, 8>& p) {
    int a = 0;
    for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
    return a;
}

}  // namespace

std::vector<Pixel> Skeleton::pixels() const {
    std::vector<Pixel> out;
    for (int r = 0; r < raster.height(); ++r) {
        for (int c = 0; c < raster.width(); ++c) {
            if (raster.at(r, c)) out.push_back({r, c});
        }
    }
    return out;
}

namespace {

// Parallel deletion can erase a whole component at once (a 2x2 block is the
// classic case). Drops from `doomed` the topmost-leftmost pixel of any
// component whose pixels are all marked.
void spare_last_pixels(const BinaryMask& img, std::vector<Pixel>& doomed, std::vector<int>& mark, int& stamp) {
    const auto at = [&](Pixel p) {
        return static_cast<std::size_t>(p.row) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(p.col);
    };
    const int doomed_tag = ++stamp;
    for (const auto& px : doomed) mark[at(px)] = doomed_tag;
    std::vector<Pixel> spared, stack;
    for (const auto& px : doomed) {
        if (mark[at(px)] != doomed_tag) continue;  // already visited
        // Flood the component; stop as soon as a surviving pixel shows up.
        const int visit_tag = ++stamp;
        bool survives = false;
        Pixel first = px;
        stack.assign(1, px);
        mark[at(px)] = visit_tag;
        while (!stack.empty() && !survives) {
            const Pixel p = stack.back();
            stack.pop_back();
            if (p < first) first = p;
            for (int k = 0; k < 8 && !survives; ++k) {
                const Pixel q{p.row + kDr[k], p.col + kDc[k]};
                if (!img.at(q)) continue;
                const int m = mark[at(q)];
                if (m == visit_tag) continue;
                if (m != doomed_tag) {
                    survives = true;
                    break;
                }
                mark[at(q)] = visit_tag;
                stack.push_back(q);
            }
        }
        // After an early stop, later seeds in this component run into the
        // pixels visited here and count them as survivors, which is correct.
        if (!survives) spared.push_back(first);
    }
    if (!spared.empty()) {
        std::erase_if(doomed, [&](const Pixel& p) { return std::find(spared.begin(), spared.end(), p) != spared.end(); });
    }
}

}  // namespace

Skeleton thin(const BinaryMask& mask) {
    BinaryMask img = mask;
    std::vector<Pixel> active;
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            if (img.at(r, c)) active.push_back({r, c});
        }
    }
    std::vector<Pixel> doomed;
    std::vector<int> mark(static_cast<std::size_t>(img.width()) * static_cast<std::size_t>(img.height()), 0);
    int stamp = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            doomed.clear();
            for (const auto& px : active) {
                const auto p = ring(img, px.row, px.col);
                const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
                if (b < 2 || b > 6 || transitions(p) != 1) continue;
                // p[0]=P2, p[2]=P4, p[4]=P6, p[6]=P8
                const bool ok = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                          : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
                if (ok) doomed.push_back(px);
            }
            spare_last_pixels(img, doomed, mark, stamp);
            for (const auto& px : doomed) img.set(px.row, px.col, false);
            if (!doomed.empty()) {
                changed = true;
                std::erase_if(active, [&](const Pixel& px) { return !img.at(px); });
            }
        }
    }
    return Skeleton{std::move(img)};
}

int neighbor_count(const BinaryMask& raster, Pixel p) {
    int n = 0;
    for (int k = 0; k < 8; ++k) n += raster.at(p.row + kDr[k], p.col + kDc[k]) ? 1 : 0;
    return n;
}

Pixel choose_start(const Skeleton& skeleton) {
    const auto& s = skeleton.raster;
    bool have_first = false;
    Pixel first{};
    for (int r = 0; r < s.height(); ++r) {
        for (int c = 0; c < s.width(); ++c) {
            if (!s.at(r, c)) continue;
            if (neighbor_count(s, {r, c}) == 1) return {r, c};
            if (!have_first) {
                first = {r, c};
                have_first = true;
            }
        }
    }
    if (!have_first) throw DataError("choose_start: empty skeleton");
    return first;
}

AxisPath main_axis(const Skeleton& skeleton, Pixel start) {
    if (!skeleton.contains(start)) throw DataError("main_axis: start pixel is not on the skeleton");
    BinaryMask remaining = skeleton.raster;

    // Collects N(p) from the remaining set and removes p and N(p) from it.
    auto consume = [&](Pixel p) {
        std::vector<Pixel> nbrs;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const Pixel q{p.row + dr, p.col + dc};
                if (remaining.at(q)) nbrs.push_back(q);
            }
        }
        remaining.set(p.row, p.col, false);
        for (const auto& q : nbrs) remaining.set(q.row, q.col, false);
        return nbrs;
    };

    struct Frame {
        Pixel pixel;
        std::vector<Pixel> neighbors;
        std::size_t next = 0;
        std::vector<Pixel> best;  // longest sub-path so far, stored tail-first
    };
    std::vector<Frame> stack;
    stack.push_back({start, consume(start), 0, {}});
    std::vector<Pixel> result;
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next < top.neighbors.size()) {
            const Pixel child = top.neighbors[top.next++];
            auto nbrs = consume(child);
            stack.push_back({child, std::move(nbrs), 0, {}});
            continue;
        }
        std::vector<Pixel> path = std::move(top.best);
        path.push_back(top.pixel);
        stack.pop_back();
        if (stack.empty()) {
            result = std::move(path);
        } else if (path.size() > stack.back().best.size()) {
            stack.back().best = std::move(path);
        }
    }
    std::reverse(result.begin(), result.end());
    return result;
}

Skeleton prune_spurs(const Skeleton& skeleton, const BinaryMask& mask, double factor) {
    const auto& s = skeleton.raster;
    const auto dt = distance_transform(mask);
    auto crossing = [&](Pixel p) { return transitions(ring(s, p.row, p.col)); };
    auto is_junction = [&](Pixel p) { return crossing(p) >= 3; };

    BinaryMask pruned = s;
    BinaryMask visited(s.width(), s.height(), s.gsd());
    for (const auto& start : skeleton.pixels()) {
        if (neighbor_count(s, start) == 0 || crossing(start) != 1 || visited.at(start)) continue;
        // Flood the branch from this end until junction pixels are met.
        std::vector<Pixel> branch{start};
        std::vector<Pixel> frontier{start};
        BinaryMask seen(s.width(), s.height(), s.gsd());
        seen.set(start.row, start.col);
        double junction_depth = -1.0;
        while (!frontier.empty()) {
            const Pixel p = frontier.back();
            frontier.pop_back();
            for (int k = 0; k < 8; ++k) {
                const Pixel q{p.row + kDr[k], p.col + kDc[k]};
                if (!s.at(q) || seen.at(q)) continue;
                seen.set(q.row, q.col);
                if (is_junction(q)) {
                    const auto idx = static_cast<std::size_t>(q.row) * s.width() + q.col;
                    junction_depth = std::max(junction_depth, dt[idx]);
                    continue;
                }
                branch.push_back(q);
                frontier.push_back(q);
            }
        }
        for (const auto& p : branch) visited.set(p.row, p.col);
        // A branch that never meets a junction is a whole curve, not a spur.
        if (junction_depth < 0.0) continue;
        if (static_cast<double>(branch.size()) < factor * junction_depth) {
            for (const auto& p : branch) pruned.set(p.row, p.col, false);
        }
    }
    return Skeleton{std::move(pruned)};
}

}  // namespace spikevol::mask
