#include "spikevol/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "spikevol/rng.hpp"
#include "spikevol/types.hpp"

namespace spikevol::eval {

namespace {

const char* const kManifestHeader = "spike_id,genotype,stage,domain,volume_mm3,view1,view2,view3,view4,view5,view6";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

void validate(const DatasetManifest& manifest) {
    std::set<std::string> ids;
    for (const auto& row : manifest.rows) {
        if (row.spike_id.empty()) throw DataError("manifest row with an empty spike_id");
        if (!ids.insert(row.spike_id).second) throw DataError("duplicate spike_id " + row.spike_id);
        if (!(row.volume_mm3 > 0.0)) throw DataError("non-positive volume for " + row.spike_id);
        if (row.domain == "indoor") {
            if (row.views.size() != 6) throw DataError("indoor spike " + row.spike_id + " needs 6 views");
        } else if (row.domain == "field") {
            if (row.views.size() != 1) throw DataError("field spike " + row.spike_id + " needs exactly 1 view");
        } else {
            throw DataError("unknown domain '" + row.domain + "' for " + row.spike_id);
        }
    }
}

std::string serialize_manifest(const DatasetManifest& manifest) {
    std::ostringstream out;
    out << kManifestHeader << '\n';
    for (const auto& row : manifest.rows) {
        out << row.spike_id << ',' << row.genotype << ',' << row.stage << ',' << row.domain << ','
            << format_number(row.volume_mm3);
        for (std::size_t v = 0; v < kMaxViews; ++v) out << ',' << (v < row.views.size() ? row.views[v] : "");
        out << '\n';
    }
    return out.str();
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << serialize_manifest(manifest);
    if (!out) throw DataError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("manifest not found: " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
        throw ParseError("manifest " + path.string() + ": unexpected header", 0);
    }
    offset += line.size() + 1;
    while (std::getline(in, line)) {
        const std::uint64_t line_start = offset;
        offset += line.size() + 1;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 5 + kMaxViews) {
            throw ParseError("manifest " + path.string() + ": expected 11 columns", line_start);
        }
        ManifestRow row;
        row.spike_id = cells[0];
        row.genotype = cells[1];
        row.stage = cells[2];
        row.domain = cells[3];
        try {
            std::size_t used = 0;
            row.volume_mm3 = std::stod(cells[4], &used);
            if (used != cells[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("manifest " + path.string() + ": bad volume '" + cells[4] + "'", line_start);
        }
        for (std::size_t v = 0; v < kMaxViews; ++v) {
            if (!cells[5 + v].empty()) row.views.push_back(cells[5 + v]);
        }
        m.rows.push_back(std::move(row));
    }
    validate(m);
    return m;
}

DatasetManifest filter_domain(const DatasetManifest& manifest, const std::string& domain) {
    DatasetManifest out;
    out.root = manifest.root;
    for (const auto& row : manifest.rows) {
        if (row.domain == domain) out.rows.push_back(row);
    }
    return out;
}

std::array<std::vector<std::size_t>, 3> split_indices_by_genotype(std::span<const std::string> genotypes,
                                                                  std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    }
    const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
    if (!(ratio_sum > 0.0)) throw ConfigError("split ratios must not all be zero");

    std::map<std::string, std::size_t> counts;
    for (const auto& g : genotypes) ++counts[g];
    if (counts.size() < 3) throw DataError("genotype split needs at least 3 genotypes, got " + std::to_string(counts.size()));

    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    const double total = static_cast<double>(genotypes.size());
    std::array<double, 3> assigned{};
    std::array<std::vector<std::string>, 3> members;
    for (const auto& [g, n] : order) {
        std::size_t best = 0;
        double best_deficit = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < 3; ++s) {
            const double deficit = ratios[s] / ratio_sum * total - assigned[s];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = s;
            }
        }
        assigned[best] += static_cast<double>(n);
        members[best].push_back(g);
    }
    // Every split with a positive ratio gets at least one genotype.
    for (std::size_t s = 0; s < 3; ++s) {
        if (!members[s].empty() || ratios[s] == 0.0) continue;
        std::size_t donor = 0;
        for (std::size_t d = 1; d < 3; ++d) {
            if (members[d].size() > members[donor].size()) donor = d;
        }
        if (members[donor].size() < 2) continue;
        // Move the donor's smallest genotype (the last placed).
        members[s].push_back(members[donor].back());
        members[donor].pop_back();
    }
    std::map<std::string, std::size_t> which;
    for (std::size_t s = 0; s < 3; ++s)
        for (const auto& g : members[s]) which[g] = s;
    std::array<std::vector<std::size_t>, 3> out;
    for (std::size_t i = 0; i < genotypes.size(); ++i) out[which[genotypes[i]]].push_back(i);
    return out;
}

Split split_by_genotype(const DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed) {
    std::vector<std::string> genotypes;
    for (const auto& row : manifest.rows) genotypes.push_back(row.genotype);
    const auto idx = split_indices_by_genotype(genotypes, ratios, seed);
    Split out;
    DatasetManifest* parts[3] = {&out.train, &out.validation, &out.test};
    for (std::size_t s = 0; s < 3; ++s) {
        parts[s]->root = manifest.root;
        for (auto i : idx[s]) parts[s]->rows.push_back(manifest.rows[i]);
    }
    std::set<std::string> seen[3];
    for (std::size_t s = 0; s < 3; ++s)
        for (const auto& r : parts[s]->rows) seen[s].insert(r.genotype);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b)
            for (const auto& g : seen[a]) {
                if (seen[b].count(g)) throw Error("genotype " + g + " appears in two splits");
            }
    return out;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("correlation inputs differ in length");
    if (a.size() < 2) return std::nullopt;
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

MetricsReport metrics(std::span<const double> preds, std::span<const double> targets, std::string method, int view_count) {
    if (preds.size() != targets.size()) throw DataError("predictions and targets differ in length");
    if (preds.size() < 2) throw DataError("metrics need at least 2 samples");
    MetricsReport r;
    r.method = std::move(method);
    r.view_count = view_count;
    r.n = preds.size();
    const double n = static_cast<double>(preds.size());
    double mean = 0.0;
    for (double y : targets) mean += y;
    mean /= n;
    double ape = 0.0, ae = 0.0, ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!(targets[i] > 0.0)) throw DataError("MAPE needs positive targets");
        const double e = targets[i] - preds[i];
        ape += std::abs(e) / targets[i];
        ae += std::abs(e);
        ss_res += e * e;
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    r.mape = 100.0 * ape / n;
    r.mae = ae / n;
    if (ss_tot > 0.0) r.r2 = 1.0 - ss_res / ss_tot;
    r.correlation = pearson(preds, targets);
    return r;
}

std::vector<std::size_t> canonical_views(int k) {
    switch (k) {
        case 1: return {0};
        case 2: return {0, 1};
        case 4: return {0, 1, 2, 3};
        case 6: return {0, 1, 2, 3, 4, 5};
        default: throw ConfigError("unsupported view count " + std::to_string(k) + " (use 1, 2, 4 or 6)");
    }
}

std::vector<double> percent_decreases(std::span<const double> mapes) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < mapes.size(); ++i) {
        if (mapes[i] == 0.0) {
            out.push_back(0.0);
        } else {
            out.push_back(100.0 * (mapes[i] - mapes[i + 1]) / mapes[i]);
        }
    }
    return out;
}

Ablation view_ablation(const std::string& method, const Estimator& estimator, std::span<const double> targets,
                       std::span<const int> view_counts, std::size_t available_views) {
    Ablation out;
    std::map<int, double> mape_by_count;
    for (int k : view_counts) {
        const auto views = canonical_views(k);
        if (views.size() > available_views) {
            throw DataError("view count " + std::to_string(k) + " exceeds the " + std::to_string(available_views) +
                            " view(s) available");
        }
        std::vector<double> preds(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) preds[i] = estimator(i, views);
        out.reports.push_back(metrics(preds, targets, method, k));
        mape_by_count[k] = out.reports.back().mape;
    }
    std::vector<double> ascending;
    for (const auto& [k, m] : mape_by_count) {
        out.ascending_counts.push_back(k);
        ascending.push_back(m);
    }
    out.decreases = percent_decreases(ascending);
    return out;
}

TraitErrorTable error_vs_traits(std::span<const double> preds, std::span<const double> measured,
                                std::span<const geo::SpikeTraits> traits, std::span<const std::string> spike_ids) {
    if (preds.size() != measured.size() || preds.size() != traits.size()) {
        throw DataError("error_vs_traits inputs differ in length");
    }
    if (!spike_ids.empty() && spike_ids.size() != preds.size()) throw DataError("one spike id per prediction required");
    TraitErrorTable t;
    std::vector<double> err, vol, len, wid, cur;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        TraitErrorRow row;
        if (!spike_ids.empty()) row.spike_id = spike_ids[i];
        row.signed_error = preds[i] - measured[i];
        row.volume = measured[i];
        row.length = traits[i].length;
        row.width = traits[i].width;
        row.curvature = traits[i].curvature;
        err.push_back(row.signed_error);
        vol.push_back(row.volume);
        len.push_back(row.length);
        wid.push_back(row.width);
        cur.push_back(row.curvature);
        t.rows.push_back(std::move(row));
    }
    t.r_volume = pearson(err, vol);
    t.r_length = pearson(err, len);
    t.r_width = pearson(err, wid);
    t.r_curvature = pearson(err, cur);
    return t;
}

void write_trait_errors(const TraitErrorTable& table, const std::filesystem::path& path, const std::string& hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "spike_id,signed_error_mm3,volume_mm3,length_mm,width_mm,curvature,config_hash\n";
    for (const auto& r : table.rows) {
        out << r.spike_id << ',' << format_number(r.signed_error) << ',' << format_number(r.volume) << ','
            << format_number(r.length) << ',' << format_number(r.width) << ',' << format_number(r.curvature) << ','
            << hash << '\n';
    }
    out << "# pearson(signed_error, .),volume=" << format_optional(table.r_volume)
        << ",length=" << format_optional(table.r_length) << ",width=" << format_optional(table.r_width)
        << ",curvature=" << format_optional(table.r_curvature) << '\n';
}

std::string format_number(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

std::string metrics_csv(std::vector<MetricsReport> reports, const std::string& hash) {
    std::stable_sort(reports.begin(), reports.end(), [](const MetricsReport& a, const MetricsReport& b) {
        return a.method != b.method ? a.method < b.method : a.view_count < b.view_count;
    });
    std::ostringstream out;
    out << "method,view_count,n,correlation,r2,mape_percent,mae_mm3,config_hash\n";
    for (const auto& r : reports) {
        out << r.method << ',' << r.view_count << ',' << r.n << ',' << format_optional(r.correlation) << ','
            << format_optional(r.r2) << ',' << format_number(r.mape) << ',' << format_number(r.mae) << ',' << hash
            << '\n';
    }
    return out.str();
}

void emit_report(std::vector<MetricsReport> reports, const std::filesystem::path& dir, const std::string& hash,
                 const nlohmann::json& summary) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto csv_path = dir / "metrics.csv";
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw DataError("cannot write " + csv_path.string());
        out << metrics_csv(reports, hash);
        if (!out) throw DataError("failed writing " + csv_path.string());
    }
    nlohmann::json doc = summary;
    doc["config_hash"] = hash;
    doc["view_subsets"] = {{"1", "view1 (side)"},
                           {"2", "view1-view2 (side, front)"},
                           {"4", "view1-view4 (sides, fronts)"},
                           {"6", "view1-view6"}};
    nlohmann::json rows = nlohmann::json::array();
    std::stable_sort(reports.begin(), reports.end(), [](const MetricsReport& a, const MetricsReport& b) {
        return a.method != b.method ? a.method < b.method : a.view_count < b.view_count;
    });
    for (const auto& r : reports) {
        nlohmann::json row{{"method", r.method}, {"view_count", r.view_count}, {"n", r.n}, {"mape", r.mape}, {"mae", r.mae}};
        row["correlation"] = r.correlation ? nlohmann::json(*r.correlation) : nlohmann::json(nullptr);
        row["r2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
        rows.push_back(row);
    }
    doc["reports"] = rows;
    const auto json_path = dir / "summary.json";
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + json_path.string());
    out << doc.dump(2) << '\n';
}

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    std::uint64_t offset = line.size() + 1;
    std::vector<MetricsReport> out;
    auto opt = [](const std::string& s) -> std::optional<double> {
        if (s == "NA") return std::nullopt;
        return std::stod(s);
    };
    while (std::getline(in, line)) {
        const auto start = offset;
        offset += line.size() + 1;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() < 7) throw ParseError("metrics file " + path.string() + ": short row", start);
        try {
            MetricsReport r;
            r.method = c[0];
            r.view_count = std::stoi(c[1]);
            r.n = static_cast<std::size_t>(std::stoull(c[2]));
            r.correlation = opt(c[3]);
            r.r2 = opt(c[4]);
            r.mape = std::stod(c[5]);
            r.mae = std::stod(c[6]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ParseError("metrics file " + path.string() + ": non-numeric cell", start);
        }
    }
    return out;
}

std::string config_hash(const nlohmann::json& config) {
    const std::uint64_t h = fnv1a64(config.dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace spikevol::eval
