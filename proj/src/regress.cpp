#include "spikevol/regress.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "spikevol/rng.hpp"
#include "spikevol/types.hpp"

namespace spikevol::regress {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- features ----------------------------------------------------------------

std::vector<double> resize_bilinear(const mask::BinaryMask& mask, int width, int height) {
    if (width < 1 || height < 1) throw ConfigError("resize target must be positive");
    std::vector<double> out(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
    const double sx = static_cast<double>(mask.width()) / width;
    const double sy = static_cast<double>(mask.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(mask.height() - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, mask.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(mask.width() - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, mask.width() - 1);
            const double tx = fx - x0;
            const double top = (1.0 - tx) * mask.at(y0, x0) + tx * mask.at(y0, x1);
            const double bottom = (1.0 - tx) * mask.at(y1, x0) + tx * mask.at(y1, x1);
            out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
                (1.0 - ty) * top + ty * bottom;
        }
    }
    return out;
}

std::vector<double> extract_features(const mask::BinaryMask& mask, const FeatureOptions& o) {
    if (o.crop > o.resize_width || o.crop > o.resize_height) throw ConfigError("crop larger than the resized image");
    if (o.grid < 1 || o.grid > o.crop) throw ConfigError("occupancy grid must be between 1 and the crop size");
    if (o.grid * o.grid + kMomentCount > o.dim) throw ConfigError("feature dimension too small for the layout");

    const double gsd = mask.gsd();
    double m00 = 0.0, mx = 0.0, my = 0.0, perimeter = 0.0;
    int cmin = mask.width(), cmax = -1, rmin = mask.height(), rmax = -1;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask.at(r, c)) continue;
            m00 += 1.0;
            mx += c + 0.5;
            my += r + 0.5;
            perimeter += !mask.at(r - 1, c) + !mask.at(r + 1, c) + !mask.at(r, c - 1) + !mask.at(r, c + 1);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
        }
    }
    if (m00 == 0.0) throw DataError("cannot extract features from an empty mask");
    mx /= m00;
    my /= m00;
    double mu[4][4] = {};
    for (int r = rmin; r <= rmax; ++r) {
        for (int c = cmin; c <= cmax; ++c) {
            if (!mask.at(r, c)) continue;
            const double dx = (c + 0.5 - mx) * gsd, dy = (r + 0.5 - my) * gsd;
            double px = 1.0;
            for (int p = 0; p <= 3; ++p) {
                double py = 1.0;
                for (int q = 0; p + q <= 3; ++q) {
                    mu[p][q] += px * py;
                    py *= dy;
                }
                px *= dx;
            }
        }
    }
    const double area = m00 * gsd * gsd;
    for (auto& row : mu)
        for (double& v : row) v *= gsd * gsd;  // pixel area element
    auto eta = [&](int p, int q) { return mu[p][q] / std::pow(area, 1.0 + 0.5 * (p + q)); };

    std::vector<double> f(static_cast<std::size_t>(o.dim), 0.0);
    const auto resized = resize_bilinear(mask, o.resize_width, o.resize_height);
    const int x0 = (o.resize_width - o.crop) / 2, y0 = (o.resize_height - o.crop) / 2;
    for (int gi = 0; gi < o.grid; ++gi) {
        const int r0 = gi * o.crop / o.grid, r1 = (gi + 1) * o.crop / o.grid;
        for (int gj = 0; gj < o.grid; ++gj) {
            const int c0 = gj * o.crop / o.grid, c1 = (gj + 1) * o.crop / o.grid;
            double sum = 0.0;
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    sum += resized[static_cast<std::size_t>(y0 + r) * static_cast<std::size_t>(o.resize_width) +
                                   static_cast<std::size_t>(x0 + c)];
            f[static_cast<std::size_t>(gi * o.grid + gj)] = sum / ((r1 - r0) * (c1 - c0));
        }
    }
    const auto base = static_cast<std::size_t>(o.grid * o.grid);
    const double moments[kMomentCount] = {area,
                                          perimeter * gsd,
                                          (cmax - cmin + 1) * gsd,
                                          (rmax - rmin + 1) * gsd,
                                          eta(2, 0),
                                          eta(1, 1),
                                          eta(0, 2),
                                          eta(3, 0),
                                          eta(2, 1),
                                          eta(1, 2),
                                          eta(0, 3),
                                          std::sqrt(mu[2][0] / area),
                                          std::sqrt(mu[0][2] / area),
                                          std::pow(area, 1.5)};
    std::copy(std::begin(moments), std::end(moments), f.begin() + static_cast<std::ptrdiff_t>(base));
    return f;
}

// --- losses ------------------------------------------------------------------

int LossWeights::bin_of(double volume) const {
    if (bin_count <= 1 || edges.size() < 2 || edges.back() == edges.front()) return 0;
    const double width = (edges.back() - edges.front()) / bin_count;
    const auto b = static_cast<int>(std::floor((volume - edges.front()) / width));
    return std::clamp(b, 0, bin_count - 1);
}

double LossWeights::weight_for(double volume) const {
    const double w = bin_weights.empty() ? 1.0 : bin_weights[static_cast<std::size_t>(bin_of(volume))];
    return w > 0.0 ? w : 1.0;
}

LossWeights compute_bin_weights(std::span<const double> volumes, int bin_count) {
    if (volumes.empty()) throw DataError("bin weights need at least one volume");
    if (bin_count < 1) throw ConfigError("bin_count must be at least 1");
    LossWeights lw;
    lw.bin_count = bin_count;
    const auto [lo, hi] = std::minmax_element(volumes.begin(), volumes.end());
    lw.edges.resize(static_cast<std::size_t>(bin_count) + 1);
    for (int b = 0; b <= bin_count; ++b) lw.edges[static_cast<std::size_t>(b)] = *lo + (*hi - *lo) * b / bin_count;
    lw.edges.back() = *hi;
    std::vector<std::size_t> freq(static_cast<std::size_t>(bin_count), 0);
    for (double v : volumes) ++freq[static_cast<std::size_t>(lw.bin_of(v))];
    std::size_t rarest = std::numeric_limits<std::size_t>::max();
    for (auto f : freq) {
        if (f > 0) rarest = std::min(rarest, f);
    }
    // w' = 1 / freq normalized by max w' = 1 / rarest.
    lw.bin_weights.assign(freq.size(), 0.0);
    for (std::size_t b = 0; b < freq.size(); ++b) {
        if (freq[b] > 0) lw.bin_weights[b] = static_cast<double>(rarest) / static_cast<double>(freq[b]);
    }
    for (double v : volumes) lw.weights.push_back(lw.bin_weights[static_cast<std::size_t>(lw.bin_of(v))]);
    return lw;
}

double scaled_mse(std::span<const double> preds, std::span<const double> targets, std::span<const double> weights) {
    if (preds.size() != targets.size() || preds.size() != weights.size()) throw DataError("loss inputs differ in length");
    if (preds.empty()) throw DataError("loss of an empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = targets[i] - preds[i];
        sum += weights[i] * e * e;
    }
    return sum / static_cast<double>(preds.size());
}

double seq_scaled_mse(const std::vector<std::vector<double>>& step_preds, std::span<const double> targets,
                      std::span<const double> weights) {
    if (step_preds.size() != targets.size() || targets.size() != weights.size()) {
        throw DataError("loss inputs differ in length");
    }
    if (step_preds.empty()) throw DataError("loss of an empty batch");
    const std::size_t steps = step_preds.front().size();
    if (steps == 0) throw DataError("sequence loss needs at least one step");
    double sum = 0.0;
    for (std::size_t i = 0; i < step_preds.size(); ++i) {
        if (step_preds[i].size() != steps) throw DataError("ragged step prediction matrix");
        for (double p : step_preds[i]) {
            const double e = targets[i] - p;
            sum += weights[i] * e * e;
        }
    }
    return sum / static_cast<double>(step_preds.size());
}

// --- models ------------------------------------------------------------------

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::Mlp: return "mlp";
        case Architecture::LstmSeq2Seq: return "lstm_seq2seq";
        case Architecture::LstmSeq2One: return "lstm_seq2one";
    }
    return "?";
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "mlp") return Architecture::Mlp;
    if (s == "lstm_seq2seq") return Architecture::LstmSeq2Seq;
    if (s == "lstm_seq2one") return Architecture::LstmSeq2One;
    throw ConfigError("unknown architecture '" + s + "'");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"architecture", to_string(c.architecture)},
                       {"view_count", c.view_count},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"bin_count", c.bin_count},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"hidden", c.hidden},
                       {"lstm_hidden", c.lstm_hidden},
                       {"dropout", c.dropout},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"epsilon", c.epsilon},
                       {"last_step_only", c.last_step_only}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    try {
        if (j.contains("architecture")) c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
        c.view_count = j.value("view_count", c.view_count);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.bin_count = j.value("bin_count", c.bin_count);
        c.lr_start = j.value("lr_start", c.lr_start);
        c.lr_end = j.value("lr_end", c.lr_end);
        c.hidden = j.value("hidden", c.hidden);
        c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
        c.dropout = j.value("dropout", c.dropout);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.last_step_only = j.value("last_step_only", c.last_step_only);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    if (c.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (c.view_count != 1 && c.view_count != 2 && c.view_count != 4 && c.view_count != 6) {
        throw ConfigError("view_count must be 1, 2, 4 or 6");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (c.lstm_hidden < 1) throw ConfigError("lstm_hidden must be positive");
    for (int h : c.hidden) {
        if (h < 1) throw ConfigError("hidden widths must be positive");
    }
}

namespace {

bool is_lstm(Architecture a) { return a != Architecture::Mlp; }

MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double limit) {
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
    return m;
}

double celu(double x) { return x > 0.0 ? x : std::expm1(x); }
double celu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
    MatrixXd m(rows, cols);
    const double keep = 1.0 - p;
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return m;
}

// Forward pass over a batch. `inputs[t]` is D x B for step t (MLP: a single
// step holding the mean view feature). Returns step outputs (steps x B).
// `dropout` enables training mode. When `grads` is set, `dout` (steps x B)
// is back-propagated and parameter gradients are accumulated.
struct Pass {
    Pass(const RegressorModel& m, Rng* d) : model(m), dropout(d) {}

    const RegressorModel& model;
    Rng* dropout = nullptr;

    // caches
    std::vector<MatrixXd> z, a, masks;            // MLP
    std::vector<MatrixXd> gi, gf, gg, go, c, h;   // LSTM, index t+1 for state after step t
    std::vector<MatrixXd> head_masks;

    MatrixXd forward(const std::vector<MatrixXd>& inputs) {
        const auto& p = model.params;
        if (!is_lstm(model.architecture)) {
            const std::size_t layers = p.size() / 2;
            a.assign(1, inputs.front());
            z.clear();
            masks.clear();
            for (std::size_t l = 0; l < layers; ++l) {
                MatrixXd zl = p[2 * l] * a.back();
                zl.colwise() += p[2 * l + 1].col(0);
                if (l + 1 == layers) {
                    z.push_back(zl);
                    return zl;
                }
                MatrixXd al = zl.unaryExpr(&celu);
                if (dropout && model.dropout > 0.0) {
                    masks.push_back(dropout_mask(*dropout, al.rows(), al.cols(), model.dropout));
                    al = al.cwiseProduct(masks.back());
                } else {
                    masks.push_back(MatrixXd::Ones(al.rows(), al.cols()));
                }
                z.push_back(std::move(zl));
                a.push_back(std::move(al));
            }
            return {};
        }
        const auto& wx = p[0];
        const auto& wh = p[1];
        const auto& b = p[2];
        const auto& wout = p[3];
        const auto& bout = p[4];
        const Eigen::Index hdim = wh.cols();
        const Eigen::Index batch = inputs.front().cols();
        const auto steps = inputs.size();
        c.assign(1, MatrixXd::Zero(hdim, batch));
        h.assign(1, MatrixXd::Zero(hdim, batch));
        gi.clear();
        gf.clear();
        gg.clear();
        go.clear();
        head_masks.clear();
        MatrixXd out(static_cast<Eigen::Index>(steps), batch);
        for (std::size_t t = 0; t < steps; ++t) {
            MatrixXd g = wx * inputs[t] + wh * h.back();
            g.colwise() += b.col(0);
            gi.push_back(g.topRows(hdim).unaryExpr(&sigmoid));
            gf.push_back(g.middleRows(hdim, hdim).unaryExpr(&sigmoid));
            gg.push_back(g.middleRows(2 * hdim, hdim).array().tanh().matrix());
            go.push_back(g.bottomRows(hdim).unaryExpr(&sigmoid));
            c.push_back(gf.back().cwiseProduct(c.back()) + gi.back().cwiseProduct(gg.back()));
            h.push_back(go.back().cwiseProduct(c.back().array().tanh().matrix()));
            if (dropout && model.dropout > 0.0) {
                head_masks.push_back(dropout_mask(*dropout, hdim, batch, model.dropout));
            } else {
                head_masks.push_back(MatrixXd::Ones(hdim, batch));
            }
            MatrixXd y = wout * h.back().cwiseProduct(head_masks.back());
            y.array() += bout(0, 0);
            out.row(static_cast<Eigen::Index>(t)) = y.row(0);
        }
        return out;
    }

    void backward(const std::vector<MatrixXd>& inputs, const MatrixXd& dout, std::vector<MatrixXd>& grads) {
        const auto& p = model.params;
        grads.resize(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) grads[k] = MatrixXd::Zero(p[k].rows(), p[k].cols());
        if (!is_lstm(model.architecture)) {
            const std::size_t layers = p.size() / 2;
            MatrixXd dz = dout;
            for (std::size_t l = layers; l-- > 0;) {
                grads[2 * l] = dz * a[l].transpose();
                grads[2 * l + 1] = dz.rowwise().sum();
                if (l == 0) break;
                MatrixXd da = p[2 * l].transpose() * dz;
                dz = da.cwiseProduct(masks[l - 1]).cwiseProduct(z[l - 1].unaryExpr(&celu_grad));
            }
            return;
        }
        const auto& wx = p[0];
        const auto& wh = p[1];
        const auto& wout = p[3];
        const Eigen::Index hdim = wh.cols();
        const Eigen::Index batch = inputs.front().cols();
        MatrixXd dh_next = MatrixXd::Zero(hdim, batch);
        MatrixXd dc_next = MatrixXd::Zero(hdim, batch);
        MatrixXd dg(4 * hdim, batch);
        for (std::size_t t = inputs.size(); t-- > 0;) {
            const MatrixXd dy = dout.row(static_cast<Eigen::Index>(t));
            const MatrixXd hm = h[t + 1].cwiseProduct(head_masks[t]);
            grads[3] += dy * hm.transpose();
            grads[4](0, 0) += dy.sum();
            const MatrixXd dh = (wout.transpose() * dy).cwiseProduct(head_masks[t]) + dh_next;
            const MatrixXd tc = c[t + 1].array().tanh().matrix();
            const MatrixXd dc = dh.cwiseProduct(go[t]).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;
            const MatrixXd d_o = dh.cwiseProduct(tc);
            const MatrixXd d_i = dc.cwiseProduct(gg[t]);
            const MatrixXd d_g = dc.cwiseProduct(gi[t]);
            const MatrixXd d_f = dc.cwiseProduct(c[t]);
            dc_next = dc.cwiseProduct(gf[t]);
            dg.topRows(hdim) = d_i.cwiseProduct((gi[t].array() * (1.0 - gi[t].array())).matrix());
            dg.middleRows(hdim, hdim) = d_f.cwiseProduct((gf[t].array() * (1.0 - gf[t].array())).matrix());
            dg.middleRows(2 * hdim, hdim) = d_g.cwiseProduct((1.0 - gg[t].array().square()).matrix());
            dg.bottomRows(hdim) = d_o.cwiseProduct((go[t].array() * (1.0 - go[t].array())).matrix());
            grads[0] += dg * inputs[t].transpose();
            grads[1] += dg * h[t].transpose();
            grads[2] += dg.rowwise().sum();
            dh_next = wh.transpose() * dg;
        }
        (void)wx;
    }
};

// Weighted loss and its derivative with respect to the step outputs.
double batch_loss(Architecture arch, const MatrixXd& out, const std::vector<double>& targets,
                  const std::vector<double>& weights, MatrixXd* dout) {
    const Eigen::Index steps = out.rows(), batch = out.cols();
    const double n = static_cast<double>(batch);
    if (dout) *dout = MatrixXd::Zero(steps, batch);
    double loss = 0.0;
    const Eigen::Index first = arch == Architecture::LstmSeq2Seq ? 0 : steps - 1;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (Eigen::Index t = first; t < steps; ++t) {
            const double e = targets[ui] - out(t, i);
            loss += weights[ui] * e * e;
            if (dout) (*dout)(t, i) = -2.0 * weights[ui] * e / n;
        }
    }
    return loss / n;
}

std::vector<MatrixXd> batch_steps(const RegressorModel& model, const Batch& batch) {
    if (batch.inputs.empty()) throw DataError("empty batch");
    if (batch.targets.size() != batch.inputs.size() || batch.weights.size() != batch.inputs.size()) {
        throw DataError("batch targets and weights must match the inputs");
    }
    const Eigen::Index steps = batch.inputs.front().cols();
    const auto bsize = static_cast<Eigen::Index>(batch.inputs.size());
    for (const auto& x : batch.inputs) {
        if (x.rows() != model.input_dim) throw DataError("feature dimension mismatch");
        if (x.cols() != steps || steps < 1) throw DataError("batch sequences must share one non-zero length");
    }
    if (!is_lstm(model.architecture)) {
        MatrixXd x(model.input_dim, bsize);
        for (Eigen::Index i = 0; i < bsize; ++i) x.col(i) = batch.inputs[static_cast<std::size_t>(i)].rowwise().mean();
        return {x};
    }
    std::vector<MatrixXd> seq(static_cast<std::size_t>(steps), MatrixXd(model.input_dim, bsize));
    for (Eigen::Index t = 0; t < steps; ++t)
        for (Eigen::Index i = 0; i < bsize; ++i) seq[static_cast<std::size_t>(t)].col(i) = batch.inputs[static_cast<std::size_t>(i)].col(t);
    return seq;
}

double run_batch(const RegressorModel& model, const Batch& batch, Rng* dropout, std::vector<MatrixXd>* grads) {
    const auto inputs = batch_steps(model, batch);
    Pass pass(model, dropout);
    const MatrixXd out = pass.forward(inputs);
    MatrixXd dout;
    const double loss = batch_loss(model.architecture, out, batch.targets, batch.weights, grads ? &dout : nullptr);
    if (grads) pass.backward(inputs, dout, *grads);
    return loss;
}

// Occupancy cells that are almost always empty in training have a tiny
// spread; clipping keeps an unusual view from producing huge z-scores.
constexpr double kInputClip = 5.0;

MatrixXd standardize(const RegressorModel& model, const MatrixXd& views) {
    if (views.rows() != model.input_dim) {
        throw DataError("feature dimension mismatch: model expects " + std::to_string(model.input_dim) + ", got " +
                        std::to_string(views.rows()));
    }
    if (views.cols() < 1) throw DataError("prediction needs at least one view");
    MatrixXd x = views;
    x.colwise() -= model.feature_mean;
    x.array().colwise() /= model.feature_std.array();
    return x.cwiseMax(-kInputClip).cwiseMin(kInputClip);
}

}  // namespace

RegressorModel init_model(Architecture arch, int input_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    if (input_dim < 1) throw DataError("input dimension must be positive");
    RegressorModel m;
    m.architecture = arch;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.seed = seed;
    m.feature_mean = VectorXd::Zero(input_dim);
    m.feature_std = VectorXd::Ones(input_dim);
    Rng rng(seed);
    if (!is_lstm(arch)) {
        int in = input_dim;
        std::vector<int> widths = hidden;
        widths.push_back(1);
        for (int out : widths) {
            m.params.push_back(uniform_matrix(rng, out, in, std::sqrt(6.0 / (in + out))));
            m.params.push_back(MatrixXd::Zero(out, 1));
            in = out;
        }
    } else {
        if (hidden.size() != 1) throw ConfigError("the sequence model takes exactly one hidden size");
        const int h = hidden[0];
        m.params.push_back(uniform_matrix(rng, 4 * h, input_dim, std::sqrt(6.0 / (input_dim + h))));
        m.params.push_back(uniform_matrix(rng, 4 * h, h, std::sqrt(6.0 / (2 * h))));
        MatrixXd b = MatrixXd::Zero(4 * h, 1);
        b.block(h, 0, h, 1).setOnes();  // forget gate starts open
        m.params.push_back(b);
        m.params.push_back(uniform_matrix(rng, 1, h, std::sqrt(6.0 / (h + 1))));
        m.params.push_back(MatrixXd::Zero(1, 1));
    }
    return m;
}

std::vector<double> forward(const RegressorModel& model, const Eigen::MatrixXd& views) {
    const MatrixXd x = standardize(model, views);
    Pass pass(model, nullptr);
    MatrixXd out;
    if (!is_lstm(model.architecture)) {
        out = pass.forward({MatrixXd(x.rowwise().mean())});
    } else {
        std::vector<MatrixXd> seq;
        for (Eigen::Index t = 0; t < x.cols(); ++t) seq.emplace_back(x.col(t));
        out = pass.forward(seq);
    }
    return std::vector<double>(out.data(), out.data() + out.size());
}

double predict_volume(const RegressorModel& model, const Eigen::MatrixXd& views) {
    const auto steps = forward(model, views);
    double y = steps.back();
    if (model.architecture == Architecture::LstmSeq2Seq && !model.last_step_only) {
        y = std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
    }
    return y * model.target_std + model.target_mean;
}

double loss_and_gradients(const RegressorModel& model, const Batch& batch, std::vector<Eigen::MatrixXd>* grads) {
    return run_batch(model, batch, nullptr, grads);
}

double gradient_check(const RegressorModel& model, const Batch& batch, double step) {
    std::vector<MatrixXd> analytic;
    loss_and_gradients(model, batch, &analytic);
    RegressorModel probe = model;
    double worst = 0.0;
    for (std::size_t k = 0; k < probe.params.size(); ++k) {
        auto& p = probe.params[k];
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                const double saved = p(i, j);
                p(i, j) = saved + step;
                const double up = loss_and_gradients(probe, batch, nullptr);
                p(i, j) = saved - step;
                const double down = loss_and_gradients(probe, batch, nullptr);
                p(i, j) = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double a = analytic[k](i, j);
                const double scale = std::max(std::abs(a), std::abs(numeric));
                if (scale < 1e-9) continue;
                worst = std::max(worst, std::abs(a - numeric) / scale);
            }
        }
    }
    return worst;
}

// --- training ----------------------------------------------------------------

namespace {

void check_dataset(const FeatureDataset& data, const char* name, int dim) {
    if (data.empty()) throw DataError(std::string("empty ") + name + " split");
    for (const auto& s : data) {
        if (s.views.rows() != dim) throw DataError(std::string("feature dimension mismatch in the ") + name + " split");
        if (s.views.cols() < 1) throw DataError(std::string("spike without views in the ") + name + " split");
        if (!s.views.allFinite()) throw DataError(std::string("non-finite features in the ") + name + " split");
    }
}

struct Adam {
    std::vector<MatrixXd> m, v;
    long t = 0;

    void step(std::vector<MatrixXd>& params, const std::vector<MatrixXd>& grads, double lr, const TrainConfig& c) {
        if (m.empty()) {
            for (const auto& p : params) {
                m.push_back(MatrixXd::Zero(p.rows(), p.cols()));
                v.push_back(MatrixXd::Zero(p.rows(), p.cols()));
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < params.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grads[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grads[k].cwiseProduct(grads[k]);
            params[k].array() -= lr * (m[k].array() / bc1) / ((v[k].array() / bc2).sqrt() + c.epsilon);
        }
    }
};

// Indices of `k` views drawn uniformly without replacement, kept in capture order.
std::vector<Eigen::Index> draw_views(Rng& rng, Eigen::Index available, int k) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(available));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(available - i));
        std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }
    all.resize(static_cast<std::size_t>(k));
    std::sort(all.begin(), all.end());
    return all;
}

MatrixXd select_columns(const MatrixXd& m, const std::vector<Eigen::Index>& cols) {
    MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
    return out;
}

double validation_loss(const RegressorModel& model, const FeatureDataset& data, const LossWeights& weights,
                       int view_count) {
    double sum = 0.0;
    for (const auto& s : data) {
        Batch b;
        MatrixXd x = standardize(model, s.views);
        if (!is_lstm(model.architecture)) {
            const Eigen::Index k = std::min<Eigen::Index>(view_count, x.cols());
            x = x.leftCols(k).eval();
        }
        b.inputs.push_back(std::move(x));
        b.targets.push_back((s.volume - model.target_mean) / model.target_std);
        b.weights.push_back(weights.weight_for(s.volume));
        sum += run_batch(model, b, nullptr, nullptr);
    }
    return sum / static_cast<double>(data.size());
}

TrainResult run_epochs(RegressorModel model, const FeatureDataset& train_set, const FeatureDataset& validation_set,
                       const TrainConfig& config, int view_count) {
    std::vector<double> volumes;
    for (const auto& s : train_set) volumes.push_back(s.volume);
    const LossWeights weights = compute_bin_weights(volumes, config.bin_count);

    TrainResult result;
    result.model = model;
    Rng rng(derive_seed(config.seed, 0x7124));
    Adam adam;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const auto bsize = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.epochs > 1
                              ? config.lr_start + (config.lr_end - config.lr_start) * epoch / (config.epochs - 1)
                              : config.lr_start;
        rng.shuffle(order.begin(), order.end());
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bsize) {
            const std::size_t stop = std::min(order.size(), start + bsize);
            Batch batch;
            for (std::size_t k = start; k < stop; ++k) {
                const auto& s = train_set[order[k]];
                MatrixXd x = standardize(model, s.views);
                if (!is_lstm(model.architecture)) x = select_columns(x, draw_views(rng, x.cols(), view_count));
                batch.inputs.push_back(std::move(x));
                batch.targets.push_back((s.volume - model.target_mean) / model.target_std);
                batch.weights.push_back(weights.weights[order[k]]);
            }
            std::vector<MatrixXd> grads;
            const double loss = run_batch(model, batch, &rng, &grads);
            adam.step(model.params, grads, lr, config);
            total += loss * static_cast<double>(stop - start);
        }
        HistoryRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = total / static_cast<double>(train_set.size());
        row.val_loss = validation_loss(model, validation_set, weights, view_count);
        if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_loss)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
        }
        result.history.push_back(row);
        if (row.val_loss < best) {
            best = row.val_loss;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

}  // namespace

TrainResult train(const FeatureDataset& train_set, const FeatureDataset& validation_set, const TrainConfig& config) {
    if (train_set.empty()) throw DataError("empty train split");
    const auto dim = static_cast<int>(train_set.front().views.rows());
    check_dataset(train_set, "train", dim);
    check_dataset(validation_set, "validation", dim);
    if (config.architecture == Architecture::Mlp) {
        for (const auto* set : {&train_set, &validation_set})
            for (const auto& s : *set) {
                if (s.views.cols() < config.view_count) throw DataError("spike has fewer views than view_count");
            }
    } else {
        const auto steps = train_set.front().views.cols();
        for (const auto* set : {&train_set, &validation_set})
            for (const auto& s : *set) {
                if (s.views.cols() != steps) throw DataError("sequence models need the same view count for every spike");
            }
    }

    const std::vector<int> hidden = config.architecture == Architecture::Mlp ? config.hidden
                                                                             : std::vector<int>{config.lstm_hidden};
    RegressorModel model = init_model(config.architecture, dim, hidden, derive_seed(config.seed, 0x1417));
    model.dropout = config.dropout;
    model.last_step_only = config.last_step_only;
    nlohmann::json cj = config;
    model.config = cj;

    // Feature statistics over every training view.
    Eigen::Index columns = 0;
    VectorXd sum = VectorXd::Zero(dim), sq = VectorXd::Zero(dim);
    for (const auto& s : train_set) {
        sum += s.views.rowwise().sum();
        sq += s.views.cwiseProduct(s.views).rowwise().sum();
        columns += s.views.cols();
    }
    model.feature_mean = sum / static_cast<double>(columns);
    model.feature_std = (sq / static_cast<double>(columns) - model.feature_mean.cwiseProduct(model.feature_mean))
                            .cwiseMax(0.0)
                            .cwiseSqrt();
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (!(model.feature_std[i] > 1e-12 * std::max(1.0, std::abs(model.feature_mean[i])))) model.feature_std[i] = 1.0;
    }

    double mean = 0.0, var = 0.0;
    for (const auto& s : train_set) mean += s.volume;
    mean /= static_cast<double>(train_set.size());
    for (const auto& s : train_set) var += (s.volume - mean) * (s.volume - mean);
    var /= static_cast<double>(train_set.size());
    model.target_mean = mean;
    model.target_std = var > 0.0 ? std::sqrt(var) : 1.0;

    return run_epochs(std::move(model), train_set, validation_set, config, config.view_count);
}

TrainResult fine_tune(const RegressorModel& model, const FeatureDataset& train_set, const FeatureDataset& validation_set,
                      const TrainConfig& config) {
    check_dataset(train_set, "field train", model.input_dim);
    check_dataset(validation_set, "field validation", model.input_dim);
    for (const auto* set : {&train_set, &validation_set})
        for (const auto& s : *set) {
            if (s.views.cols() != 1) throw DataError("fine-tuning expects single-view field data");
        }
    RegressorModel m = model;
    double mean = 0.0, var = 0.0;
    for (const auto& s : train_set) mean += s.volume;
    mean /= static_cast<double>(train_set.size());
    for (const auto& s : train_set) var += (s.volume - mean) * (s.volume - mean);
    var /= static_cast<double>(train_set.size());
    m.target_mean = mean;
    m.target_std = var > 0.0 ? std::sqrt(var) : 1.0;
    m.dropout = config.dropout;
    return run_epochs(std::move(m), train_set, validation_set, config, 1);
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path, const std::string& hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,lr,config_hash\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,", r.epoch, r.train_loss, r.val_loss, r.lr);
        out << buf << hash << '\n';
    }
}

// --- checkpoints -------------------------------------------------------------

namespace {

nlohmann::json matrix_json(const MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
        throw DataError("checkpoint matrix size does not match its data");
    }
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
    return m;
}

}  // namespace

nlohmann::json to_json(const RegressorModel& model) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : model.params) params.push_back(matrix_json(p));
    return {{"format", "spikevol-regressor-1"},
            {"architecture", to_string(model.architecture)},
            {"input_dim", model.input_dim},
            {"hidden", model.hidden},
            {"params", params},
            {"feature_mean", std::vector<double>(model.feature_mean.data(), model.feature_mean.data() + model.feature_mean.size())},
            {"feature_std", std::vector<double>(model.feature_std.data(), model.feature_std.data() + model.feature_std.size())},
            {"target_mean", model.target_mean},
            {"target_std", model.target_std},
            {"dropout", model.dropout},
            {"last_step_only", model.last_step_only},
            {"seed", model.seed},
            {"config", model.config}};
}

RegressorModel model_from_json(const nlohmann::json& j) {
    RegressorModel m;
    try {
        m.architecture = architecture_from_string(j.at("architecture").get<std::string>());
        m.input_dim = j.at("input_dim").get<int>();
        m.hidden = j.at("hidden").get<std::vector<int>>();
        for (const auto& p : j.at("params")) m.params.push_back(matrix_from(p));
        const auto mean = j.at("feature_mean").get<std::vector<double>>();
        const auto std_ = j.at("feature_std").get<std::vector<double>>();
        m.feature_mean = Eigen::Map<const VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        m.feature_std = Eigen::Map<const VectorXd>(std_.data(), static_cast<Eigen::Index>(std_.size()));
        m.target_mean = j.at("target_mean").get<double>();
        m.target_std = j.at("target_std").get<double>();
        m.dropout = j.value("dropout", 0.5);
        m.last_step_only = j.value("last_step_only", false);
        m.seed = j.value("seed", std::uint64_t{0});
        m.config = j.value("config", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    // Dimension chain check against a freshly initialized model of the same shape.
    const auto shape = init_model(m.architecture, m.input_dim, m.hidden, 0);
    if (shape.params.size() != m.params.size()) throw DataError("checkpoint has the wrong number of parameter tensors");
    for (std::size_t k = 0; k < m.params.size(); ++k) {
        if (shape.params[k].rows() != m.params[k].rows() || shape.params[k].cols() != m.params[k].cols()) {
            throw DataError("checkpoint tensor " + std::to_string(k) + " has the wrong shape");
        }
    }
    if (m.feature_mean.size() != m.input_dim || m.feature_std.size() != m.input_dim) {
        throw DataError("checkpoint normalization statistics do not match input_dim");
    }
    if (!(m.target_std > 0.0)) throw DataError("checkpoint target_std must be positive");
    return m;
}

void save_model(const RegressorModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << to_json(model).dump() << '\n';
}

RegressorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint not found: " + path.string());
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("checkpoint " + path.string() + ": malformed JSON", e.byte);
    }
}

}  // namespace spikevol::regress
