#include "spikevol/pipeline.hpp"

#include "spikevol/parallel.hpp"
#include "spikevol/profile.hpp"

namespace spikevol::pipeline {

SpikeRecord make_record(std::span<const mask::BinaryMask> views, const RecordOptions& options) {
    SpikeRecord r;
    for (const auto& v : views) {
        r.area_px.push_back(static_cast<double>(mask::pixel_area(v)));
        if (options.geometric) r.geo_mm3.push_back(mask::view_geometric_volume(v));
    }
    if (options.features) {
        r.features.resize(options.feature_options.dim, static_cast<Eigen::Index>(views.size()));
        for (std::size_t k = 0; k < views.size(); ++k) {
            const auto f = regress::extract_features(views[k], options.feature_options);
            r.features.col(static_cast<Eigen::Index>(k)) =
                Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
        }
    }
    return r;
}

std::vector<SpikeRecord> records_from_samples(const std::vector<synth::Sample>& samples, const RecordOptions& options) {
    std::vector<SpikeRecord> out(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto& s = samples[i];
        SpikeRecord r = make_record(s.views, options);
        r.spike_id = s.spike_id;
        r.genotype = s.genotype;
        r.stage = s.stage;
        r.domain = synth::to_string(s.domain);
        r.volume_mm3 = s.volume_mm3;
        r.traits = s.traits;
        out[i] = std::move(r);
    });
    return out;
}

std::vector<SpikeRecord> records_from_manifest(const eval::DatasetManifest& manifest, double gsd,
                                               const RecordOptions& options) {
    std::vector<SpikeRecord> out(manifest.rows.size());
    parallel_for(manifest.rows.size(), [&](std::size_t i) {
        const auto& row = manifest.rows[i];
        std::vector<mask::BinaryMask> views;
        for (const auto& rel : row.views) views.push_back(mask::read_pgm(manifest.root / rel, gsd));
        SpikeRecord r = make_record(views, options);
        r.spike_id = row.spike_id;
        r.genotype = row.genotype;
        r.stage = row.stage;
        r.domain = row.domain;
        r.volume_mm3 = row.volume_mm3;
        out[i] = std::move(r);
    });
    return out;
}

std::vector<SpikeRecord> filter_domain(const std::vector<SpikeRecord>& records, const std::string& domain) {
    std::vector<SpikeRecord> out;
    for (const auto& r : records) {
        if (r.domain == domain) out.push_back(r);
    }
    return out;
}

RecordSplit split_records(const std::vector<SpikeRecord>& records, std::array<double, 3> ratios, std::uint64_t seed) {
    std::vector<std::string> genotypes;
    for (const auto& r : records) genotypes.push_back(r.genotype);
    const auto idx = eval::split_indices_by_genotype(genotypes, ratios, seed);
    RecordSplit s;
    for (auto i : idx[0]) s.train.push_back(records[i]);
    for (auto i : idx[1]) s.validation.push_back(records[i]);
    for (auto i : idx[2]) s.test.push_back(records[i]);
    return s;
}

double signal_value(const SpikeRecord& record, calib::Signal signal, std::span<const std::size_t> views) {
    const auto& per_view = signal == calib::Signal::Area ? record.area_px : record.geo_mm3;
    if (views.empty()) throw DataError("signal needs at least one view");
    double sum = 0.0;
    for (auto v : views) {
        if (v >= per_view.size()) {
            throw DataError("spike " + record.spike_id + " has no " + calib::to_string(signal) + " signal for view " +
                            std::to_string(v + 1));
        }
        sum += per_view[v];
    }
    return sum / static_cast<double>(views.size());
}

std::string method_name(calib::Signal signal) { return signal == calib::Signal::Area ? "area" : "geo"; }

calib::CalibrationCurve fit_baseline(const std::vector<SpikeRecord>& train, const std::vector<SpikeRecord>& validation,
                                     calib::Signal signal, int view_count) {
    const auto views = eval::canonical_views(view_count);
    std::vector<double> xs, ys, vx, vy;
    for (const auto& r : train) {
        xs.push_back(signal_value(r, signal, views));
        ys.push_back(r.volume_mm3);
    }
    for (const auto& r : validation) {
        vx.push_back(signal_value(r, signal, views));
        vy.push_back(r.volume_mm3);
    }
    std::vector<calib::CalibrationCurve> candidates;
    std::vector<double> scores;
    for (auto kind : {calib::CurveKind::Linear, calib::CurveKind::Quadratic, calib::CurveKind::Exponential}) {
        try {
            candidates.push_back(calib::fit_curve(xs, ys, kind, signal, view_count));
        } catch (const NumericError&) {
            continue;  // e.g. exponential overflow on a degenerate signal
        }
        scores.push_back(vx.size() >= 2 ? calib::r_squared(candidates.back(), vx, vy) : candidates.back().fitted_r2);
    }
    return calib::select_best(candidates, scores);
}

eval::Ablation evaluate_baseline(const std::map<int, calib::CalibrationCurve>& curves,
                                 const std::vector<SpikeRecord>& records, std::span<const int> view_counts) {
    if (curves.empty()) throw DataError("no calibration curves");
    const auto signal = curves.begin()->second.signal;
    std::vector<double> targets = volumes(records);
    // The estimator is called with the canonical subset for each count.
    eval::Estimator est = [&](std::size_t i, std::span<const std::size_t> views) {
        const int k = static_cast<int>(views.size());
        const auto it = curves.find(k);
        if (it == curves.end()) throw DataError("no calibration curve for " + std::to_string(k) + " view(s)");
        return calib::apply_curve(it->second, signal_value(records[i], signal, views)).volume;
    };
    return eval::view_ablation(method_name(signal), est, targets, view_counts);
}

regress::FeatureDataset feature_dataset(const std::vector<SpikeRecord>& records) {
    regress::FeatureDataset out;
    for (const auto& r : records) {
        if (r.features.size() == 0) throw DataError("spike " + r.spike_id + " has no features");
        out.push_back({r.features, r.volume_mm3});
    }
    return out;
}

eval::Ablation evaluate_models(const std::string& method, const std::map<int, regress::RegressorModel>& models,
                               const std::vector<SpikeRecord>& records, std::span<const int> view_counts,
                               std::size_t available_views) {
    if (models.empty()) throw DataError("no models to evaluate");
    std::vector<double> targets = volumes(records);
    eval::Estimator est = [&](std::size_t i, std::span<const std::size_t> views) {
        const int k = static_cast<int>(views.size());
        auto it = models.find(k);
        if (it == models.end()) it = models.find(0);
        if (it == models.end()) throw DataError("no model for " + std::to_string(k) + " view(s)");
        Eigen::MatrixXd x(records[i].features.rows(), static_cast<Eigen::Index>(views.size()));
        for (std::size_t j = 0; j < views.size(); ++j) {
            x.col(static_cast<Eigen::Index>(j)) = records[i].features.col(static_cast<Eigen::Index>(views[j]));
        }
        return regress::predict_volume(it->second, x);
    };
    return eval::view_ablation(method, est, targets, view_counts, available_views);
}

std::vector<double> volumes(const std::vector<SpikeRecord>& records) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.volume_mm3);
    return v;
}

}  // namespace spikevol::pipeline
