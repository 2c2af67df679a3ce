#include "spikevol/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace spikevol::mask {

BinaryMask::BinaryMask(int width, int height, double gsd) : width_(width), height_(height), gsd_(gsd) {
    if (width < 1 || height < 1) throw DataError("mask dimensions must be at least 1x1");
    if (!(gsd > 0.0)) throw DataError("mask gsd must be positive");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

std::int64_t pixel_area(const BinaryMask& mask) {
    std::int64_t n = 0;
    for (auto b : mask.bits()) n += b != 0;
    return n;
}

double mean_area(std::span<const BinaryMask> masks) {
    if (masks.empty()) throw DataError("mean_area needs at least one mask");
    double sum = 0.0;
    for (const auto& m : masks) {
        if (m.gsd() != masks.front().gsd()) throw DataError("mean_area: masks have different gsd");
        sum += static_cast<double>(pixel_area(m));
    }
    return sum / static_cast<double>(masks.size());
}

BinaryMask largest_component(const BinaryMask& mask) {
    const int w = mask.width(), h = mask.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
    std::vector<std::int64_t> sizes{0};
    std::vector<Pixel> stack;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!mask.at(r, c) || label[static_cast<std::size_t>(r) * w + c] != 0) continue;
            const int id = static_cast<int>(sizes.size());
            sizes.push_back(0);
            stack.push_back({r, c});
            label[static_cast<std::size_t>(r) * w + c] = id;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                ++sizes[id];
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = p.row + dr, cc = p.col + dc;
                        if (!mask.at(rr, cc)) continue;
                        auto& l = label[static_cast<std::size_t>(rr) * w + cc];
                        if (l != 0) continue;
                        l = id;
                        stack.push_back({rr, cc});
                    }
                }
            }
        }
    }
    BinaryMask out(w, h, mask.gsd());
    if (sizes.size() == 1) return out;
    const auto best = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < label.size(); ++i) out.bits()[i] = label[i] == best ? 1 : 0;
    return out;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == inf) continue;
        if (f[v[0]] == inf) {
            v[0] = q;
            continue;
        }
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (f[v[0]] == inf) {
        std::fill(d.begin(), d.end(), inf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_transform(const BinaryMask& mask) {
    // Pad by one pixel so the raster border counts as background.
    const int w = mask.width() + 2, h = mask.height() + 2;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = mask.at(r - 1, c - 1) ? inf : 0.0;
    }
    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    f.resize(h);
    d.resize(h);
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
        edt_1d(f, d, v, z);
        for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
    }
    f.resize(w);
    d.resize(w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
        edt_1d(f, d, v, z);
        for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = d[c];
    }
    std::vector<double> out(static_cast<std::size_t>(mask.width()) * mask.height());
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            out[static_cast<std::size_t>(r) * mask.width() + c] = std::sqrt(grid[static_cast<std::size_t>(r + 1) * w + c + 1]);
        }
    }
    return out;
}

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write mask " + path.string());
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << '\n';
    out << mask.width() << ' ' << mask.height() << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(mask.width()));
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) row[c] = mask.at(r, c) ? static_cast<char>(255) : 0;
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("failed writing mask " + path.string());
}

BinaryMask read_pgm(const std::filesystem::path& path, double gsd) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open mask " + path.string());
    auto token = [&]() {
        std::string t;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(ch);
        }
        return t;
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P2") throw DataError("not a PGM file: " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw DataError("malformed PGM header: " + path.string());
    }
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw DataError("unsupported PGM geometry: " + path.string());
    BinaryMask mask(w, h, gsd);
    if (magic == "P5") {
        std::vector<char> row(static_cast<std::size_t>(w));
        for (int r = 0; r < h; ++r) {
            if (!in.read(row.data(), w)) throw DataError("truncated PGM payload: " + path.string());
            for (int c = 0; c < w; ++c) mask.set(r, c, static_cast<unsigned char>(row[c]) * 2 > maxval);
        }
    } else {
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                int v = 0;
                if (!(in >> v)) throw DataError("truncated PGM payload: " + path.string());
                mask.set(r, c, v * 2 > maxval);
            }
        }
    }
    return mask;
}

}  // namespace spikevol::mask
