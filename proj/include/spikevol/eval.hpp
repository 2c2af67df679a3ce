#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spikevol/mesh.hpp"

namespace spikevol::eval {

// --- manifests ---------------------------------------------------------------

inline constexpr std::size_t kMaxViews = 6;

struct ManifestRow {
    std::string spike_id;
    std::string genotype;
    std::string stage;
    std::string domain;  // "indoor" | "field"
    double volume_mm3 = 0.0;
    std::vector<std::string> views;  // capture order: side, front, side, front, oblique, oblique
};

struct DatasetManifest {
    std::vector<ManifestRow> rows;
    std::filesystem::path root;  // view paths are relative to this directory
};

/// Unique ids, positive volumes, 6 views for indoor rows and 1 for field rows.
void validate(const DatasetManifest& manifest);

/// Header: spike_id,genotype,stage,domain,volume_mm3,view1..view6.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

DatasetManifest filter_domain(const DatasetManifest& manifest, const std::string& domain);

// --- splits ------------------------------------------------------------------

inline constexpr std::array<double, 3> kDefaultRatios = {0.7, 0.1, 0.2};

/// Item indices for train / validation / test. Genotypes are shuffled by
/// `seed`, then placed largest first, each into the split furthest below its
/// spike-count target.
std::array<std::vector<std::size_t>, 3> split_indices_by_genotype(std::span<const std::string> genotypes,
                                                                  std::array<double, 3> ratios, std::uint64_t seed);

struct Split {
    DatasetManifest train, validation, test;
};

Split split_by_genotype(const DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);

// --- metrics -----------------------------------------------------------------

/// Pearson correlation; empty when either series has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

struct MetricsReport {
    std::string method;
    int view_count = 0;
    std::size_t n = 0;
    std::optional<double> correlation;  // undefined for constant inputs
    std::optional<double> r2;           // undefined for constant targets; never clamped
    double mape = 0.0;                  // percent
    double mae = 0.0;                   // mm^3
};

MetricsReport metrics(std::span<const double> preds, std::span<const double> targets, std::string method = {},
                      int view_count = 0);

/// Canonical first-k capture positions: 1 -> side, 2 -> side + front,
/// 4 -> both sides and fronts, 6 -> all.
std::vector<std::size_t> canonical_views(int k);

/// Percent decrease between consecutive entries: 100 (m[i] - m[i+1]) / m[i].
std::vector<double> percent_decreases(std::span<const double> mapes);

/// Predicts spike `item` from the given capture positions.
using Estimator = std::function<double(std::size_t item, std::span<const std::size_t> views)>;

struct Ablation {
    std::vector<MetricsReport> reports;  // in the requested order
    std::vector<int> ascending_counts;
    std::vector<double> decreases;  // between consecutive ascending counts
};

/// `available_views` is 6 for indoor data and 1 for field data.
Ablation view_ablation(const std::string& method, const Estimator& estimator, std::span<const double> targets,
                       std::span<const int> view_counts, std::size_t available_views = kMaxViews);

// --- error analysis ----------------------------------------------------------

struct TraitErrorRow {
    std::string spike_id;
    double signed_error = 0.0;  // predicted - measured
    double volume = 0.0;
    double length = 0.0;
    double width = 0.0;
    double curvature = 0.0;
};

struct TraitErrorTable {
    std::vector<TraitErrorRow> rows;
    std::optional<double> r_volume, r_length, r_width, r_curvature;
};

TraitErrorTable error_vs_traits(std::span<const double> preds, std::span<const double> measured,
                                std::span<const geo::SpikeTraits> traits, std::span<const std::string> spike_ids = {});

void write_trait_errors(const TraitErrorTable& table, const std::filesystem::path& path, const std::string& config_hash);

// --- reports -----------------------------------------------------------------

/// Text form used in CSV cells; "NA" for undefined values.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// metrics.csv (rows sorted by method, then view count) and summary.json in
/// `dir`. `summary` is merged into the JSON document.
void emit_report(std::vector<MetricsReport> reports, const std::filesystem::path& dir, const std::string& config_hash,
                 const nlohmann::json& summary = nlohmann::json::object());

std::string metrics_csv(std::vector<MetricsReport> reports, const std::string& config_hash);
std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the compact JSON text.
std::string config_hash(const nlohmann::json& config);

}  // namespace spikevol::eval
