#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "spikevol/mask.hpp"

namespace spikevol::regress {

// --- features ----------------------------------------------------------------

inline constexpr int kFeatureDim = 384;

struct FeatureOptions {
    int resize_width = 256;
    int resize_height = 341;
    int crop = 244;  // square center crop of the resized image
    int grid = 18;   // occupancy cells per side
    int dim = kFeatureDim;
};

/// Layout of the vector:
///   [0, grid^2)         occupancy: mean of each cell of the resized, cropped mask
///   grid^2 + 0          area, mm^2
///   grid^2 + 1          perimeter, mm (4-neighbour boundary edges)
///   grid^2 + 2, 3       bounding-box width and height, mm
///   grid^2 + 4 .. 10    scale-normalized central moments eta20 eta11 eta02 eta30 eta21 eta12 eta03
///   grid^2 + 11, 12     radii of gyration about the centroid along x and y, mm
///   grid^2 + 13         area^1.5, mm^3
///   rest                zero
/// Moments are taken on the full-resolution mask.
inline constexpr int kMomentCount = 14;

std::vector<double> extract_features(const mask::BinaryMask& mask, const FeatureOptions& options = {});

/// Bilinear resampling of the 0/1 raster to the target size (pixel centers aligned).
std::vector<double> resize_bilinear(const mask::BinaryMask& mask, int width, int height);

// --- losses ------------------------------------------------------------------

struct LossWeights {
    std::vector<double> weights;  // one per input volume, max exactly 1
    int bin_count = 1;
    std::vector<double> edges;        // bin_count + 1 edges over [min, max]
    std::vector<double> bin_weights;  // normalized weight of each bin (0 for empty bins)

    int bin_of(double volume) const;
    /// Weight for a volume outside the fitting set (clamped to the end bins;
    /// empty bins take the largest weight).
    double weight_for(double volume) const;
};

LossWeights compute_bin_weights(std::span<const double> volumes, int bin_count);

double scaled_mse(std::span<const double> preds, std::span<const double> targets, std::span<const double> weights);

/// step_preds[i][j]: prediction for sample i at sequence step j.
double seq_scaled_mse(const std::vector<std::vector<double>>& step_preds, std::span<const double> targets,
                      std::span<const double> weights);

// --- models ------------------------------------------------------------------

enum class Architecture { Mlp, LstmSeq2Seq, LstmSeq2One };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct TrainConfig {
    Architecture architecture = Architecture::Mlp;
    int view_count = 6;  // MLP training subset size; sequence models use every view
    int epochs = 500;
    int batch_size = 32;
    std::uint64_t seed = 1;
    int bin_count = 20;
    double lr_start = 1e-4;
    double lr_end = 1e-6;
    std::vector<int> hidden = {256, 64};
    int lstm_hidden = 32;
    double dropout = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool last_step_only = false;  // seq2seq aggregation at prediction time
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Parameters are stored as a flat list of matrices so that optimizers and
/// gradient checks can treat every architecture alike:
///   MLP:  W1, b1, ..., Wk, bk, Wout, bout         (W is out x in, b is out x 1)
///   LSTM: Wx (4H x D), Wh (4H x H), b (4H x 1), Wout (1 x H), bout (1 x 1)
/// with gate blocks ordered input, forget, candidate, output.
struct RegressorModel {
    Architecture architecture = Architecture::Mlp;
    int input_dim = kFeatureDim;
    std::vector<int> hidden;  // MLP widths, or {H} for the LSTM
    std::vector<Eigen::MatrixXd> params;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;
    double dropout = 0.5;
    bool last_step_only = false;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
};

RegressorModel init_model(Architecture arch, int input_dim, const std::vector<int>& hidden, std::uint64_t seed);

/// Per-spike view features: one column per view, capture order.
struct SpikeFeatures {
    Eigen::MatrixXd views;  // D x V
    double volume = 0.0;
};

using FeatureDataset = std::vector<SpikeFeatures>;

/// Normalized prediction(s) in evaluation mode. MLP: one value from the mean
/// view feature. LSTM: one value per step (seq2one still returns every step;
/// only the last is used).
std::vector<double> forward(const RegressorModel& model, const Eigen::MatrixXd& views);

/// Volume in mm^3: MLP output, mean of steps (seq2seq; last step if
/// configured), or last step (seq2one), denormalized.
double predict_volume(const RegressorModel& model, const Eigen::MatrixXd& views);

struct Batch {
    std::vector<Eigen::MatrixXd> inputs;  // standardized features, D x J each (equal J)
    std::vector<double> targets;           // normalized
    std::vector<double> weights;
};

/// Loss and gradients with dropout disabled; seq2seq uses the summed
/// per-step loss, the others the single-output loss.
double loss_and_gradients(const RegressorModel& model, const Batch& batch, std::vector<Eigen::MatrixXd>* grads);

/// Largest relative difference between analytic and central-difference
/// gradients (step 1e-5) over every parameter entry. Entries where both are
/// below 1e-9 in magnitude are treated as equal.
double gradient_check(const RegressorModel& model, const Batch& batch, double step = 1e-5);

struct HistoryRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    RegressorModel model;  // best-validation snapshot
    std::vector<HistoryRow> history;
    int best_epoch = -1;
};

TrainResult train(const FeatureDataset& train_set, const FeatureDataset& validation_set, const TrainConfig& config);

/// Continues training on single-view field data after replacing the target
/// statistics with the field training set's.
TrainResult fine_tune(const RegressorModel& model, const FeatureDataset& train_set, const FeatureDataset& validation_set,
                      const TrainConfig& config);

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path,
                       const std::string& config_hash);

nlohmann::json to_json(const RegressorModel& model);
RegressorModel model_from_json(const nlohmann::json& j);
void save_model(const RegressorModel& model, const std::filesystem::path& path);
RegressorModel load_model(const std::filesystem::path& path);

}  // namespace spikevol::regress
