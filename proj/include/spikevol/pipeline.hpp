#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spikevol/calibrate.hpp"
#include "spikevol/eval.hpp"
#include "spikevol/regress.hpp"
#include "spikevol/synthgen.hpp"

// Glue shared by the command-line tool and the acceptance suite: per-spike
// view signals, baseline calibration/evaluation and model evaluation.
namespace spikevol::pipeline {

/// Everything the estimators need from one spike's masks.
struct SpikeRecord {
    std::string spike_id;
    std::string genotype;
    std::string stage;
    std::string domain;
    double volume_mm3 = 0.0;
    std::vector<double> area_px;  // per view
    std::vector<double> geo_mm3;  // per view; empty unless requested
    Eigen::MatrixXd features;     // D x views; empty unless requested
    std::optional<geo::SpikeTraits> traits;
};

struct RecordOptions {
    bool geometric = true;
    bool features = true;
    regress::FeatureOptions feature_options;
};

SpikeRecord make_record(std::span<const mask::BinaryMask> views, const RecordOptions& options);

std::vector<SpikeRecord> records_from_samples(const std::vector<synth::Sample>& samples, const RecordOptions& options);

std::vector<SpikeRecord> records_from_manifest(const eval::DatasetManifest& manifest, double gsd,
                                               const RecordOptions& options);

std::vector<SpikeRecord> filter_domain(const std::vector<SpikeRecord>& records, const std::string& domain);

struct RecordSplit {
    std::vector<SpikeRecord> train, validation, test;
};

RecordSplit split_records(const std::vector<SpikeRecord>& records, std::array<double, 3> ratios, std::uint64_t seed);

/// Mean of the per-view signal over the chosen capture positions.
double signal_value(const SpikeRecord& record, calib::Signal signal, std::span<const std::size_t> views);

/// Fits linear, quadratic and exponential curves on the training spikes and
/// keeps the one with the best validation R^2 (quadratic on ties).
calib::CalibrationCurve fit_baseline(const std::vector<SpikeRecord>& train, const std::vector<SpikeRecord>& validation,
                                     calib::Signal signal, int view_count);

std::string method_name(calib::Signal signal);

/// Calibrated baseline ablation; `curves` maps view count -> curve.
eval::Ablation evaluate_baseline(const std::map<int, calib::CalibrationCurve>& curves,
                                 const std::vector<SpikeRecord>& records, std::span<const int> view_counts);

regress::FeatureDataset feature_dataset(const std::vector<SpikeRecord>& records);

/// Neural ablation; `models` maps view count -> model (a single entry under
/// key 0 is used for every count).
eval::Ablation evaluate_models(const std::string& method, const std::map<int, regress::RegressorModel>& models,
                               const std::vector<SpikeRecord>& records, std::span<const int> view_counts,
                               std::size_t available_views = eval::kMaxViews);

std::vector<double> volumes(const std::vector<SpikeRecord>& records);

}  // namespace spikevol::pipeline
