#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikevol/types.hpp"

namespace spikevol::mask {

struct Pixel {
    int row = 0;
    int col = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Silhouette raster, row-major, with its ground sampling distance in mm/px.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, double gsd);

    int width() const { return width_; }
    int height() const { return height_; }
    double gsd() const { return gsd_; }

    bool at(int row, int col) const {
        return row >= 0 && col >= 0 && row < height_ && col < width_ && bits_[index(row, col)] != 0;
    }
    bool at(Pixel p) const { return at(p.row, p.col); }
    void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }

    std::span<const std::uint8_t> bits() const { return bits_; }
    std::span<std::uint8_t> bits() { return bits_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
    }

    int width_ = 0;
    int height_ = 0;
    double gsd_ = 0.05;
    std::vector<std::uint8_t> bits_;
};

std::int64_t pixel_area(const BinaryMask& mask);

/// Mean foreground pixel count across views; all masks must share one gsd.
double mean_area(std::span<const BinaryMask> masks);

/// Keeps only the largest 8-connected foreground component.
BinaryMask largest_component(const BinaryMask& mask);

/// Exact Euclidean distance (in pixels) from each pixel to the nearest
/// background pixel; zero on background. Pixels outside the raster count as
/// background.
std::vector<double> distance_transform(const BinaryMask& mask);

/// 8-bit binary PGM (P5): 0 background, 255 foreground. The gsd is not stored
/// in the file and must be supplied when reading. A comment, if given, goes
/// into the header.
void write_pgm(const BinaryMask& mask, const std::filesystem::path& path, const std::string& comment = {});
BinaryMask read_pgm(const std::filesystem::path& path, double gsd);

}  // namespace spikevol::mask
