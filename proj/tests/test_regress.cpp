#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "spikevol/regress.hpp"
#include "spikevol/rng.hpp"
#include "spikevol/types.hpp"

using namespace spikevol;
using namespace spikevol::regress;
using Eigen::MatrixXd;

namespace {

constexpr int kMomentStart = 18 * 18;

mask::BinaryMask blob_at(int dr, int dc) {
    mask::BinaryMask m(300, 200, 0.1);
    for (int r = 0; r < 200; ++r)
        for (int c = 0; c < 300; ++c) {
            const double x = c - 100.0 - dc, y = r - 90.0 - dr;
            if ((x * x) / 1600.0 + (y * y) / 400.0 <= 1.0 || (x > 0 && x < 70 && std::abs(y + 0.3 * x) < 6)) m.set(r, c);
        }
    return m;
}

MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

Batch random_batch(Rng& rng, int dim, int steps, int n) {
    Batch b;
    for (int i = 0; i < n; ++i) {
        b.inputs.push_back(random_matrix(rng, dim, steps));
        b.targets.push_back(rng.normal());
        b.weights.push_back(rng.uniform(0.1, 1.0));
    }
    return b;
}

// Volumes linear in a hidden latent; every view is the latent-dependent base
// plus small view noise.
FeatureDataset toy_dataset(Rng& rng, int n, int dim, double gain, int views = 6) {
    FeatureDataset out;
    for (int i = 0; i < n; ++i) {
        const double latent = rng.uniform(0.0, 1.0);
        SpikeFeatures s;
        s.views.resize(dim, views);
        for (int v = 0; v < views; ++v)
            for (int d = 0; d < dim; ++d) s.views(d, v) = latent * (1.0 + 0.3 * d) + 0.02 * rng.normal();
        s.volume = gain * (200.0 + 800.0 * latent);
        out.push_back(std::move(s));
    }
    return out;
}

double mape(const RegressorModel& m, const FeatureDataset& data) {
    double s = 0.0;
    for (const auto& x : data) s += std::abs(predict_volume(m, x.views) - x.volume) / x.volume;
    return 100.0 * s / static_cast<double>(data.size());
}

TrainConfig toy_config(Architecture arch) {
    TrainConfig c;
    c.architecture = arch;
    c.epochs = 120;
    c.batch_size = 16;
    c.hidden = {16};
    c.lstm_hidden = 8;
    c.lr_start = 1e-2;
    c.lr_end = 1e-4;
    c.dropout = 0.0;
    c.bin_count = 5;
    c.seed = 11;
    return c;
}

}  // namespace

// --- features ----------------------------------------------------------------

TEST(Features, EmptyMaskRejected) {
    EXPECT_THROW(extract_features(mask::BinaryMask(50, 50, 0.1)), DataError);
}

TEST(Features, LayoutAndDeterminism) {
    const auto m = blob_at(0, 0);
    const auto a = extract_features(m), b = extract_features(m);
    ASSERT_EQ(a.size(), static_cast<std::size_t>(kFeatureDim));
    EXPECT_EQ(a, b);
    EXPECT_DOUBLE_EQ(a[kMomentStart], static_cast<double>(mask::pixel_area(m)) * 0.01);
    EXPECT_NEAR(a[kMomentStart + 13], std::pow(a[kMomentStart], 1.5), 1e-9 * a[kMomentStart + 13]);
    for (int i = kMomentStart + kMomentCount; i < kFeatureDim; ++i) EXPECT_EQ(a[static_cast<std::size_t>(i)], 0.0);
    for (int i = 0; i < kMomentStart; ++i) {
        EXPECT_GE(a[static_cast<std::size_t>(i)], 0.0);
        EXPECT_LE(a[static_cast<std::size_t>(i)], 1.0);
    }
}

TEST(Features, ShapeBlockIsTranslationInvariant) {
    const auto a = extract_features(blob_at(0, 0));
    const auto b = extract_features(blob_at(17, -23));
    for (int i = kMomentStart; i < kMomentStart + kMomentCount; ++i) {
        const auto k = static_cast<std::size_t>(i);
        EXPECT_NEAR(a[k], b[k], 1e-6 * std::max(1.0, std::abs(a[k]))) << "index " << i;
    }
}

TEST(Features, NormalizedMomentsOfDiskAreNearAnalytic) {
    // For a disk eta20 = eta02 = 1 / (4 pi) and odd moments vanish.
    const auto f = extract_features(oracle::disk(200, 100, 100, 60, 0.1));
    const double expected = 1.0 / (4.0 * std::numbers::pi);
    EXPECT_NEAR(f[kMomentStart + 4], expected, 0.01 * expected);
    EXPECT_NEAR(f[kMomentStart + 6], expected, 0.01 * expected);
    EXPECT_NEAR(f[kMomentStart + 5], 0.0, 1e-9);
    for (int i = 7; i <= 10; ++i) EXPECT_NEAR(f[kMomentStart + i], 0.0, 1e-9);
}

TEST(Features, ResizeOfFullMaskIsOnes) {
    mask::BinaryMask m(40, 30, 0.1);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 40; ++c) m.set(r, c);
    const auto img = resize_bilinear(m, 256, 341);
    ASSERT_EQ(img.size(), 256u * 341u);
    for (double v : img) EXPECT_DOUBLE_EQ(v, 1.0);
}

// --- losses ------------------------------------------------------------------

TEST(BinWeights, EqualFrequenciesGiveOnes) {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto w = compute_bin_weights(v, 5);
    for (double x : w.weights) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(BinWeights, InverseFrequencyNormalizedByMax) {
    std::vector<double> v(9, 1.0);
    v.push_back(10.0);
    const auto w = compute_bin_weights(v, 2);
    for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(w.weights[static_cast<std::size_t>(i)], 1.0 / 9.0);
    EXPECT_DOUBLE_EQ(w.weights[9], 1.0);
}

TEST(BinWeights, SingleBinAndProperties) {
    const auto one = compute_bin_weights(std::vector<double>{3, 1, 4, 1, 5}, 1);
    for (double x : one.weights) EXPECT_DOUBLE_EQ(x, 1.0);
    EXPECT_THROW(compute_bin_weights(std::vector<double>{}, 3), DataError);

    Rng rng(3);
    std::vector<double> v;
    for (int i = 0; i < 500; ++i) v.push_back(std::exp(rng.normal()));
    const auto w = compute_bin_weights(v, 20);
    double top = 0.0;
    for (double x : w.weights) {
        EXPECT_GT(x, 0.0);
        top = std::max(top, x);
    }
    EXPECT_DOUBLE_EQ(top, 1.0);
}

TEST(Loss, ScaledMseHandCase) {
    const std::vector<double> p = {1, 2}, t = {3, 6}, w = {1.0, 0.5};
    EXPECT_DOUBLE_EQ(scaled_mse(p, t, w), 6.0);
    EXPECT_DOUBLE_EQ(scaled_mse(t, t, w), 0.0);
    const std::vector<double> ones = {1, 1};
    EXPECT_DOUBLE_EQ(scaled_mse(p, t, ones), (4.0 + 16.0) / 2.0);
    EXPECT_THROW(scaled_mse(p, std::vector<double>{1}, w), DataError);
}

TEST(Loss, SequenceLossSumsSteps) {
    const std::vector<double> t = {3, 6}, w = {1.0, 0.5};
    EXPECT_DOUBLE_EQ(seq_scaled_mse({{1}, {2}}, t, w), 6.0);
    EXPECT_DOUBLE_EQ(seq_scaled_mse({std::vector<double>(6, 1.0), std::vector<double>(6, 2.0)}, t, w), 36.0);
    EXPECT_DOUBLE_EQ(seq_scaled_mse({{1, 3}, {2, 6}}, t, w), 6.0);
    EXPECT_THROW(seq_scaled_mse({{1, 2}, {2}}, t, w), DataError);
}

// --- forward passes ------------------------------------------------------------

TEST(Forward, MlpWithZeroWeightsReturnsBias) {
    auto m = init_model(Architecture::Mlp, 8, {5, 3}, 1);
    for (auto& p : m.params) p.setZero();
    m.params.back()(0, 0) = 0.75;
    Rng rng(2);
    for (int t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(forward(m, random_matrix(rng, 8, 3)).at(0), 0.75);
    m.target_mean = 500.0;
    m.target_std = 100.0;
    EXPECT_DOUBLE_EQ(predict_volume(m, random_matrix(rng, 8, 6)), 575.0);
}

TEST(Forward, MlpIgnoresViewOrderAndDuplication) {
    const auto m = init_model(Architecture::Mlp, 10, {12, 6}, 5);
    Rng rng(6);
    const MatrixXd v = random_matrix(rng, 10, 4);
    MatrixXd perm(10, 4), dup(10, 8);
    perm << v.col(2), v.col(0), v.col(3), v.col(1);
    dup << v, v;
    const double y = predict_volume(m, v);
    EXPECT_NEAR(predict_volume(m, perm), y, 1e-12);
    EXPECT_NEAR(predict_volume(m, dup), y, 1e-12);
}

TEST(Forward, SingleViewSequenceModelsAgree) {
    auto a = init_model(Architecture::LstmSeq2Seq, 7, {6}, 9);
    auto b = a;
    b.architecture = Architecture::LstmSeq2One;
    Rng rng(10);
    const MatrixXd v = random_matrix(rng, 7, 1);
    EXPECT_DOUBLE_EQ(predict_volume(a, v), predict_volume(b, v));
    EXPECT_EQ(forward(a, v).size(), 1u);
}

TEST(Forward, WithoutRecurrenceEachStepSeesOnlyItsView) {
    // Zero recurrent weights plus a shut forget gate leave no path between steps.
    auto m = init_model(Architecture::LstmSeq2Seq, 6, {5}, 12);
    m.params[1].setZero();
    m.params[2].block(5, 0, 5, 1).setConstant(-1000.0);
    Rng rng(13);
    const MatrixXd v = random_matrix(rng, 6, 6);
    const auto steps = forward(m, v);
    ASSERT_EQ(steps.size(), 6u);
    for (Eigen::Index j = 0; j < 6; ++j) {
        EXPECT_DOUBLE_EQ(steps[static_cast<std::size_t>(j)], forward(m, MatrixXd(v.col(j))).at(0)) << "step " << j;
    }
    MatrixXd same(6, 6);
    same.colwise() = v.col(0);
    const auto flat = forward(m, same);
    for (double y : flat) EXPECT_DOUBLE_EQ(y, flat.front());
}

TEST(Forward, IdenticalViewsApproachAFixedPoint) {
    const auto m = init_model(Architecture::LstmSeq2Seq, 6, {8}, 14);
    Rng rng(15);
    MatrixXd same(6, 12);
    same.colwise() = random_matrix(rng, 6, 1).col(0);
    const auto y = forward(m, same);
    EXPECT_LT(std::abs(y[11] - y[10]), std::abs(y[1] - y[0]));
}

TEST(Forward, FeatureDimensionMismatch) {
    const auto m = init_model(Architecture::Mlp, 8, {4}, 1);
    EXPECT_THROW(forward(m, MatrixXd::Zero(9, 2)), DataError);
    EXPECT_THROW(forward(m, MatrixXd::Zero(8, 0)), DataError);
}

// --- gradients -----------------------------------------------------------------

TEST(Gradients, MatchFiniteDifferences) {
    Rng rng(21);
    {
        const auto m = init_model(Architecture::Mlp, 6, {7, 5}, 22);
        EXPECT_LT(gradient_check(m, random_batch(rng, 6, 3, 5)), 1e-4) << "mlp";
    }
    {
        const auto m = init_model(Architecture::LstmSeq2Seq, 5, {4}, 23);
        EXPECT_LT(gradient_check(m, random_batch(rng, 5, 6, 4)), 1e-4) << "seq2seq";
    }
    {
        const auto m = init_model(Architecture::LstmSeq2One, 5, {4}, 24);
        EXPECT_LT(gradient_check(m, random_batch(rng, 5, 6, 4)), 1e-4) << "seq2one";
    }
}

TEST(Gradients, ZeroModelOnZeroBatchHasZeroGradient) {
    for (auto arch : {Architecture::Mlp, Architecture::LstmSeq2Seq, Architecture::LstmSeq2One}) {
        auto m = init_model(arch, 4, {3}, 1);
        for (auto& p : m.params) p.setZero();
        Batch b;
        b.inputs = {MatrixXd::Zero(4, 2), MatrixXd::Zero(4, 2)};
        b.targets = {0.0, 0.0};
        b.weights = {1.0, 0.5};
        std::vector<MatrixXd> grads;
        EXPECT_DOUBLE_EQ(loss_and_gradients(m, b, &grads), 0.0);
        ASSERT_EQ(grads.size(), m.params.size());
        for (const auto& g : grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0) << to_string(arch);
    }
}

// --- training ------------------------------------------------------------------

TEST(Training, MlpConvergesOnToyProblem) {
    Rng rng(31);
    const auto tr = toy_dataset(rng, 96, 8, 1.0), va = toy_dataset(rng, 24, 8, 1.0);
    auto cfg = toy_config(Architecture::Mlp);
    cfg.view_count = 2;
    const auto r = train(tr, va, cfg);
    ASSERT_EQ(r.history.size(), 120u);
    EXPECT_LT(r.history.back().train_loss, 0.1 * r.history.front().train_loss);
    EXPECT_LT(mape(r.model, va), 10.0);
    for (const auto& s : tr) EXPECT_TRUE(std::isfinite(predict_volume(r.model, s.views)));
    // Learning rate falls linearly from start to end.
    EXPECT_DOUBLE_EQ(r.history.front().lr, 1e-2);
    EXPECT_NEAR(r.history.back().lr, 1e-4, 1e-15);
}

TEST(Training, SequenceModelsConverge) {
    Rng rng(32);
    const auto tr = toy_dataset(rng, 64, 6, 1.0), va = toy_dataset(rng, 16, 6, 1.0);
    for (auto arch : {Architecture::LstmSeq2Seq, Architecture::LstmSeq2One}) {
        const auto r = train(tr, va, toy_config(arch));
        EXPECT_LT(r.history.back().train_loss, 0.1 * r.history.front().train_loss) << to_string(arch);
    }
}

TEST(Training, DeterministicUnderSeed) {
    Rng rng(33);
    const auto tr = toy_dataset(rng, 40, 5, 1.0), va = toy_dataset(rng, 10, 5, 1.0);
    auto cfg = toy_config(Architecture::Mlp);
    cfg.epochs = 15;
    cfg.dropout = 0.5;
    const auto a = train(tr, va, cfg), b = train(tr, va, cfg);
    ASSERT_EQ(a.model.params.size(), b.model.params.size());
    for (std::size_t k = 0; k < a.model.params.size(); ++k) EXPECT_TRUE(a.model.params[k] == b.model.params[k]);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    cfg.seed = 34;
    const auto c = train(tr, va, cfg);
    EXPECT_FALSE(c.model.params[0] == a.model.params[0]);
}

TEST(Training, ZeroEpochsAndBadInput) {
    Rng rng(35);
    const auto tr = toy_dataset(rng, 20, 4, 1.0), va = toy_dataset(rng, 5, 4, 1.0);
    auto cfg = toy_config(Architecture::Mlp);
    cfg.epochs = 0;
    const auto r = train(tr, va, cfg);
    EXPECT_TRUE(r.history.empty());
    EXPECT_EQ(r.best_epoch, -1);
    const auto fresh = init_model(Architecture::Mlp, 4, cfg.hidden, r.model.seed);
    EXPECT_TRUE(fresh.params[0] == r.model.params[0]);

    EXPECT_THROW(train({}, va, cfg), DataError);
    auto wide = toy_dataset(rng, 5, 5, 1.0);
    EXPECT_THROW(train(tr, wide, cfg), DataError);
    cfg.view_count = 7;
    EXPECT_THROW(train(tr, va, cfg), DataError);
}

TEST(FineTune, ZeroEpochsReplacesTargetStatisticsOnly) {
    Rng rng(41);
    const auto tr = toy_dataset(rng, 40, 4, 1.0), va = toy_dataset(rng, 10, 4, 1.0);
    auto cfg = toy_config(Architecture::Mlp);
    cfg.epochs = 10;
    const auto base = train(tr, va, cfg).model;
    const auto ftr = toy_dataset(rng, 12, 4, 2.0, 1), fva = toy_dataset(rng, 4, 4, 2.0, 1);
    auto ft = cfg;
    ft.epochs = 0;
    const auto r = fine_tune(base, ftr, fva, ft);
    for (std::size_t k = 0; k < base.params.size(); ++k) EXPECT_TRUE(base.params[k] == r.model.params[k]);
    double mean = 0.0;
    for (const auto& s : ftr) mean += s.volume;
    EXPECT_NEAR(r.model.target_mean, mean / 12.0, 1e-9);
    EXPECT_TRUE(base.feature_mean == r.model.feature_mean);
    EXPECT_THROW(fine_tune(base, tr, fva, ft), DataError);
}

TEST(FineTune, ImprovesShiftedDomain) {
    Rng rng(42);
    const auto tr = toy_dataset(rng, 96, 6, 1.0), va = toy_dataset(rng, 24, 6, 1.0);
    auto cfg = toy_config(Architecture::Mlp);
    cfg.view_count = 1;
    const auto base = train(tr, va, cfg).model;
    const auto ftr = toy_dataset(rng, 40, 6, 1.6, 1), fva = toy_dataset(rng, 10, 6, 1.6, 1),
               fte = toy_dataset(rng, 30, 6, 1.6, 1);
    auto ft = cfg;
    ft.epochs = 60;
    const auto tuned = fine_tune(base, ftr, fva, ft).model;
    EXPECT_LT(mape(tuned, fte), mape(base, fte));
}

// --- checkpoints ---------------------------------------------------------------

TEST(Checkpoint, RoundTripPredictsIdentically) {
    Rng rng(51);
    const auto tr = toy_dataset(rng, 30, 5, 1.0), va = toy_dataset(rng, 8, 5, 1.0);
    for (auto arch : {Architecture::Mlp, Architecture::LstmSeq2Seq, Architecture::LstmSeq2One}) {
        auto cfg = toy_config(arch);
        cfg.epochs = 3;
        const auto m = train(tr, va, cfg).model;
        const auto path = std::filesystem::temp_directory_path() / "spikevol_test_model.json";
        save_model(m, path);
        const auto back = load_model(path);
        for (const auto& s : va) EXPECT_EQ(predict_volume(back, s.views), predict_volume(m, s.views)) << to_string(arch);
        EXPECT_EQ(back.architecture, arch);
        std::filesystem::remove(path);
    }
}

TEST(Checkpoint, ShapeMismatchRejected) {
    const auto m = init_model(Architecture::LstmSeq2One, 5, {4}, 1);
    auto j = to_json(m);
    j["params"][1]["rows"] = 3;
    EXPECT_THROW(model_from_json(j), DataError);
    auto k = to_json(m);
    k["architecture"] = "transformer";
    EXPECT_THROW(model_from_json(k), Error);
}
