#include "spikevol/commands.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "spikevol/dataset.hpp"
#include "spikevol/pipeline.hpp"
#include "spikevol/ply.hpp"
#include "spikevol/rng.hpp"
#include "spikevol/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spikevol::cli {

namespace {

const std::vector<int> kDefaultViewCounts = {6, 4, 2, 1};

json block(const json& config, const char* key) {
    if (!config.contains(key)) return json::object();
    const auto& b = config.at(key);
    if (!b.is_object()) throw ConfigError(std::string("config block '") + key + "' must be an object");
    return b;
}

std::uint64_t master_seed(const json& config) {
    if (!config.contains("master_seed")) throw ConfigError("master_seed is required");
    const auto& s = config.at("master_seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
        throw ConfigError("master_seed must be a non-negative integer");
    }
    return s.get<std::uint64_t>();
}

struct Paths {
    fs::path dataset;
    fs::path output;
};

Paths paths(const json& config, bool need_dataset) {
    const json p = block(config, "paths");
    Paths out;
    try {
        if (p.contains("dataset")) out.dataset = p.at("dataset").get<std::string>();
        if (!p.contains("output")) throw ConfigError("paths.output is required");
        out.output = p.at("output").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("paths: ") + e.what());
    }
    if (need_dataset && out.dataset.empty()) throw ConfigError("paths.dataset is required");
    if (!out.dataset.empty() && fs::weakly_canonical(out.dataset) == fs::weakly_canonical(out.output)) {
        throw ConfigError("paths.output must differ from paths.dataset");
    }
    return out;
}

std::vector<int> view_counts(const json& b) {
    if (!b.contains("view_counts")) return kDefaultViewCounts;
    std::vector<int> v;
    try {
        v = b.at("view_counts").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("view_counts: ") + e.what());
    }
    if (v.empty()) throw ConfigError("view_counts must not be empty");
    for (int k : v) eval::canonical_views(k);  // validates
    return v;
}

std::array<double, 3> split_ratios(const json& config) {
    const json s = block(config, "split");
    if (!s.contains("ratios")) return eval::kDefaultRatios;
    try {
        const auto r = s.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("split.ratios needs three entries");
        return {r[0], r[1], r[2]};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("split.ratios: ") + e.what());
    }
}

std::string domain_of(const json& b, const char* fallback) {
    const std::string d = b.value("domain", std::string(fallback));
    synth::domain_from_string(d);  // validates
    return d;
}

struct LoadedData {
    std::vector<pipeline::SpikeRecord> records;
    double gsd = 0.0;
};

LoadedData load_records(const Paths& p, const std::string& domain, const pipeline::RecordOptions& options) {
    const fs::path manifest_path = p.dataset / "manifest.csv";
    if (!fs::exists(manifest_path)) throw DataError("missing manifest " + manifest_path.string());
    const auto gen = synth::read_dataset_config(p.dataset);
    auto manifest = eval::filter_domain(eval::read_manifest(manifest_path), domain);
    if (manifest.rows.empty()) throw DataError("dataset has no " + domain + " spikes");
    LoadedData out;
    out.gsd = gen.gsd;
    out.records = pipeline::records_from_manifest(manifest, gen.gsd, options);
    return out;
}

pipeline::RecordSplit split(const json& config, const std::vector<pipeline::SpikeRecord>& records) {
    const json s = block(config, "split");
    const std::uint64_t seed = s.value("seed", master_seed(config));
    return pipeline::split_records(records, split_ratios(config), seed);
}

regress::TrainConfig training_config(const json& config, const json& overrides = json::object()) {
    json t = block(config, "training");
    if (!t.contains("seed")) t["seed"] = master_seed(config);
    t.merge_patch(overrides);
    return t.get<regress::TrainConfig>();
}

// Attaches mesh traits when the dataset kept its meshes.
void attach_traits(std::vector<pipeline::SpikeRecord>& records, const fs::path& dataset) {
    for (auto& r : records) {
        const fs::path mesh = dataset / "meshes" / (r.spike_id + ".ply");
        if (!fs::exists(mesh)) return;
        r.traits = geo::extract_traits(geo::load_ply(mesh));
    }
}

void write_errors(const std::vector<pipeline::SpikeRecord>& test, const std::vector<double>& preds, const fs::path& path,
                  const std::string& hash) {
    std::vector<geo::SpikeTraits> traits;
    std::vector<std::string> ids;
    for (const auto& r : test) {
        if (!r.traits) return;
        traits.push_back(*r.traits);
        ids.push_back(r.spike_id);
    }
    const auto table = eval::error_vs_traits(preds, pipeline::volumes(test), traits, ids);
    eval::write_trait_errors(table, path, hash);
}

constexpr const char* kAwnModel = "synthetic awns are triangular prisms at spikelet tips";

json ablation_summary(const eval::Ablation& a) {
    return json{{"ascending_view_counts", a.ascending_counts}, {"percent_decreases", a.decreases}};
}

bool is_model_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
    return j.is_object() && j.contains("architecture");
}

}  // namespace

void apply_overrides(json& config, const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
        const std::string key = a.substr(0, eq);
        const std::string text = a.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded()) value = text;
        json* node = &config;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        *node = value;
    }
}

json load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

namespace {

// Input files enter the hash by content so that moving a run tree keeps it.
json content_ref(const json& path) {
    if (!path.is_string()) return path;
    std::ifstream in(path.get<std::string>(), std::ios::binary);
    if (!in) return path;
    std::ostringstream bytes;
    bytes << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a:%016llx", static_cast<unsigned long long>(fnv1a64(bytes.str())));
    return buf;
}

}  // namespace

std::string run_hash(const json& config) {
    json c = config;
    c.erase("paths");
    if (c.contains("evaluation") && c["evaluation"].is_object() && c["evaluation"].contains("method")) {
        c["evaluation"]["method"] = content_ref(c["evaluation"]["method"]);
    }
    if (c.contains("finetune") && c["finetune"].is_object() && c["finetune"].contains("checkpoint")) {
        c["finetune"]["checkpoint"] = content_ref(c["finetune"]["checkpoint"]);
    }
    if (c.contains("report") && c["report"].is_object() && c["report"].contains("inputs") &&
        c["report"]["inputs"].is_array()) {
        for (auto& in : c["report"]["inputs"]) in = content_ref(in);
    }
    return eval::config_hash(c);
}

void cmd_gen(const json& config) {
    const Paths p = paths(config, true);
    json g = block(config, "generation");
    g["master_seed"] = master_seed(config);
    const auto gen = g.get<synth::GenerationConfig>();
    const auto manifest = synth::make_dataset(gen, p.dataset);
    std::printf("%s\n%zu spikes\n", (p.dataset / "manifest.csv").string().c_str(), manifest.rows.size());
}

void cmd_baseline(const json& config, const std::string& method) {
    const auto signal = calib::signal_from_string(method);
    const Paths p = paths(config, true);
    const json b = block(config, "calibration");
    const auto counts = view_counts(b);
    const std::string hash = run_hash(config);

    pipeline::RecordOptions options;
    options.geometric = signal == calib::Signal::Geometric;
    options.features = false;
    const std::string domain = domain_of(b, "indoor");
    auto data = load_records(p, domain, options);
    auto s = split(config, data.records);
    if (s.train.empty() || s.test.empty()) throw DataError("split left train or test empty");

    std::map<int, calib::CalibrationCurve> curves;
    std::vector<calib::CalibrationCurve> all;
    for (int k : counts) {
        curves[k] = pipeline::fit_baseline(s.train, s.validation, signal, k);
        all.push_back(curves[k]);
    }
    fs::create_directories(p.output);
    calib::save_curves(all, p.output / ("curves_" + pipeline::method_name(signal) + ".json"), hash);
    const auto ablation = pipeline::evaluate_baseline(curves, s.test, counts);
    json summary = ablation_summary(ablation);
    summary["domain"] = domain;
    if (domain == "field") summary["awn_model"] = kAwnModel;
    eval::emit_report(ablation.reports, p.output, hash, summary);

    attach_traits(s.test, p.dataset);
    const int k_max = *std::max_element(counts.begin(), counts.end());
    const auto views = eval::canonical_views(k_max);
    std::vector<double> preds;
    for (const auto& r : s.test) {
        preds.push_back(calib::apply_curve(curves[k_max], pipeline::signal_value(r, signal, views)).volume);
    }
    write_errors(s.test, preds, p.output / "trait_errors.csv", hash);
    std::printf("%s\n", (p.output / "metrics.csv").string().c_str());
}

void cmd_train(const json& config) {
    const Paths p = paths(config, true);
    const auto tc = training_config(config);
    const json e = block(config, "evaluation");
    const auto counts = view_counts(e);
    const std::string hash = run_hash(config);

    pipeline::RecordOptions options;
    options.geometric = false;
    auto data = load_records(p, "indoor", options);
    const auto s = split(config, data.records);
    if (s.train.empty() || s.validation.empty() || s.test.empty()) throw DataError("split left a partition empty");

    const auto result =
        regress::train(pipeline::feature_dataset(s.train), pipeline::feature_dataset(s.validation), tc);
    fs::create_directories(p.output);
    auto model = result.model;
    model.config["config_hash"] = hash;
    regress::save_model(model, p.output / "model.json");
    regress::write_history_csv(result.history, p.output / "history.csv", hash);

    const std::map<int, regress::RegressorModel> models{{0, result.model}};
    const auto ablation = pipeline::evaluate_models(regress::to_string(tc.architecture), models, s.test, counts);
    json summary = ablation_summary(ablation);
    summary["best_epoch"] = result.best_epoch;
    eval::emit_report(ablation.reports, p.output, hash, summary);
    std::printf("%s\n", (p.output / "model.json").string().c_str());
}

void cmd_finetune(const json& config) {
    const Paths p = paths(config, true);
    const json f = block(config, "finetune");
    if (!f.contains("checkpoint")) throw ConfigError("finetune.checkpoint is required");
    const auto base = regress::load_model(f.at("checkpoint").get<std::string>());
    auto tc = training_config(config, f.value("training", json::object()));
    tc.architecture = base.architecture;
    tc.view_count = 1;
    const std::string hash = run_hash(config);

    pipeline::RecordOptions options;
    options.geometric = false;
    auto data = load_records(p, "field", options);
    const auto s = split(config, data.records);
    if (s.train.empty() || s.validation.empty() || s.test.empty()) throw DataError("split left a partition empty");

    const auto result =
        regress::fine_tune(base, pipeline::feature_dataset(s.train), pipeline::feature_dataset(s.validation), tc);
    fs::create_directories(p.output);
    auto tuned = result.model;
    tuned.config["config_hash"] = hash;
    regress::save_model(tuned, p.output / "model_finetuned.json");
    regress::write_history_csv(result.history, p.output / "history.csv", hash);

    const std::vector<int> one = {1};
    const std::string name = regress::to_string(base.architecture);
    auto before = pipeline::evaluate_models(name, {{0, base}}, s.test, one, 1);
    auto after = pipeline::evaluate_models(name + "_finetuned", {{0, result.model}}, s.test, one, 1);
    std::vector<eval::MetricsReport> reports = before.reports;
    reports.insert(reports.end(), after.reports.begin(), after.reports.end());
    eval::emit_report(reports, p.output, hash, json{{"domain", "field"}, {"awn_model", kAwnModel}, {"best_epoch", result.best_epoch}});
    std::printf("%s\n", (p.output / "model_finetuned.json").string().c_str());
}

void cmd_eval(const json& config) {
    const Paths p = paths(config, true);
    const json e = block(config, "evaluation");
    if (!e.contains("method")) throw ConfigError("evaluation.method must name a curve file or checkpoint");
    const fs::path method_path = e.at("method").get<std::string>();
    const std::string domain = domain_of(e, "indoor");
    const std::size_t available = domain == "field" ? 1 : eval::kMaxViews;
    auto counts = view_counts(e);
    if (domain == "field" && !e.contains("view_counts")) counts = {1};
    const std::string hash = run_hash(config);

    eval::Ablation ablation;
    std::vector<double> preds;
    pipeline::RecordSplit s;
    if (is_model_file(method_path)) {
        const auto model = regress::load_model(method_path);
        pipeline::RecordOptions options;
        options.geometric = false;
        auto data = load_records(p, domain, options);
        if (!data.records.empty() && data.records.front().features.rows() != model.input_dim) {
            throw DataError("checkpoint expects " + std::to_string(model.input_dim) + " features, dataset gives " +
                            std::to_string(data.records.front().features.rows()));
        }
        s = split(config, data.records);
        const std::string name = e.value("name", regress::to_string(model.architecture));
        ablation = pipeline::evaluate_models(name, {{0, model}}, s.test, counts, available);
        const int k = static_cast<int>(std::min<std::size_t>(available, eval::kMaxViews));
        const auto views = eval::canonical_views(std::min(k, *std::max_element(counts.begin(), counts.end())));
        for (const auto& r : s.test) {
            Eigen::MatrixXd x(r.features.rows(), static_cast<Eigen::Index>(views.size()));
            for (std::size_t j = 0; j < views.size(); ++j) {
                x.col(static_cast<Eigen::Index>(j)) = r.features.col(static_cast<Eigen::Index>(views[j]));
            }
            preds.push_back(regress::predict_volume(model, x));
        }
    } else {
        const auto curves = calib::load_curves(method_path);
        if (curves.empty()) throw DataError(method_path.string() + " holds no curves");
        std::map<int, calib::CalibrationCurve> by_count;
        for (const auto& c : curves) by_count[c.view_count] = c;
        const auto signal = curves.front().signal;
        pipeline::RecordOptions options;
        options.geometric = signal == calib::Signal::Geometric;
        options.features = false;
        auto data = load_records(p, domain, options);
        s = split(config, data.records);
        ablation = pipeline::evaluate_baseline(by_count, s.test, counts);
        const int k_max = *std::max_element(counts.begin(), counts.end());
        const auto views = eval::canonical_views(k_max);
        for (const auto& r : s.test) {
            preds.push_back(calib::apply_curve(by_count.at(k_max), pipeline::signal_value(r, signal, views)).volume);
        }
    }
    fs::create_directories(p.output);
    json summary = ablation_summary(ablation);
    summary["domain"] = domain;
    if (domain == "field") summary["awn_model"] = kAwnModel;
    eval::emit_report(ablation.reports, p.output, hash, summary);
    attach_traits(s.test, p.dataset);
    write_errors(s.test, preds, p.output / "trait_errors.csv", hash);
    std::printf("%s\n", (p.output / "metrics.csv").string().c_str());
}

void cmd_report(const json& config) {
    const Paths p = paths(config, false);
    const json r = block(config, "report");
    std::vector<std::string> inputs;
    try {
        inputs = r.at("inputs").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("report.inputs: ") + e.what());
    }
    if (inputs.empty()) throw ConfigError("report.inputs must list metrics files");
    const std::string hash = run_hash(config);

    std::vector<eval::MetricsReport> all;
    for (const auto& in : inputs) {
        auto rows = eval::read_metrics_csv(in);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    fs::create_directories(p.output);
    std::ofstream table(p.output / "comparison.csv");
    table << eval::metrics_csv(all, hash);

    std::map<std::string, std::map<int, double>> by_method;
    for (const auto& m : all) by_method[m.method][m.view_count] = m.mape;
    std::ofstream dec(p.output / "decreases.csv");
    dec << "method,from_views,to_views,mape_from,mape_to,percent_decrease,config_hash\n";
    for (const auto& [method, mapes] : by_method) {
        std::vector<int> ks;
        std::vector<double> ms;
        for (const auto& [k, m] : mapes) {
            ks.push_back(k);
            ms.push_back(m);
        }
        const auto d = eval::percent_decreases(ms);
        for (std::size_t i = 0; i < d.size(); ++i) {
            dec << method << ',' << ks[i] << ',' << ks[i + 1] << ',' << eval::format_number(ms[i]) << ','
                << eval::format_number(ms[i + 1]) << ',' << eval::format_number(d[i]) << ',' << hash << '\n';
        }
    }
    if (!table || !dec) throw DataError("cannot write report files in " + p.output.string());
    std::printf("%s\n", (p.output / "comparison.csv").string().c_str());
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 2;
    return 1;
}

}  // namespace spikevol::cli
