#include "hpt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hpt/classifier.hpp"
#include "hpt/image_io.hpp"

namespace hpt {

using ordered_json = nlohmann::ordered_json;

double harmonic_mean(double base, double novel) {
    if (base < 0.0 || novel < 0.0) throw std::invalid_argument("harmonic_mean needs non-negative inputs");
    if (base + novel == 0.0) return 0.0;
    return 2.0 * base * novel / (base + novel);
}

double percent_correct(const std::vector<int>& predictions, const std::vector<int>& truths) {
    if (predictions.size() != truths.size() || predictions.empty())
        throw std::invalid_argument("empty evaluation pool");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == truths[i]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double accuracy_on(const TrainedState& state, const Encoders& encoders, const DatasetManifest& manifest,
                   const std::vector<int>& class_ids, const std::vector<std::size_t>& exclude_records,
                   const TrainConfig& config, const std::string& manifest_dir) {
    if (class_ids.empty()) throw std::invalid_argument("empty class set");
    std::vector<int> ids = class_ids;
    std::sort(ids.begin(), ids.end());
    std::set<int> id_set(ids.begin(), ids.end());
    std::set<std::size_t> excluded(exclude_records.begin(), exclude_records.end());

    const auto templates = embed_class_templates(encoders.text, manifest, ids, config.use_hierarchy);

    // static prompts: text features are image-independent, compute them once
    std::vector<Vec> static_feats;
    if (!config.use_text_bias) {
        Vec zero(state.ctx.v.cols, 0.0);
        static_feats = class_text_features(state, encoders.text, templates, zero);
    }

    std::vector<int> predictions, truths;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const ImageRecord& rec = manifest.records[i];
        if (!id_set.count(rec.class_id) || excluded.count(i)) continue;
        Image img = load_image_ref(rec.image_ref, rec.height, rec.width, manifest_dir);
        FrozenImageFeatures frozen = encode_frozen(encoders, img);
        Vec image_feat = fused_feature(state, config, frozen);
        const std::vector<Vec>& feats =
            config.use_text_bias
                ? class_text_features(state, encoders.text, templates, conditional_bias(state, config, frozen))
                : static_feats;
        ClassProbabilities probs = class_probabilities(image_feat, feats, ids, config.tau);
        predictions.push_back(predict(probs));
        truths.push_back(rec.class_id);
    }
    if (predictions.empty()) throw std::runtime_error("empty evaluation pool");
    return percent_correct(predictions, truths);
}

ColumnStats ReportRow::mean() const {
    ColumnStats m;
    if (seeds.empty()) return m;
    for (const auto& s : seeds) {
        m.base += s.base_acc;
        m.novel += s.new_acc;
        m.h += s.h;
    }
    const auto n = static_cast<double>(seeds.size());
    m.base /= n;
    m.novel /= n;
    m.h /= n;
    return m;
}

ColumnStats ReportRow::stddev() const {
    ColumnStats sd;
    if (seeds.size() < 2) return sd;
    const ColumnStats m = mean();
    for (const auto& s : seeds) {
        sd.base += (s.base_acc - m.base) * (s.base_acc - m.base);
        sd.novel += (s.new_acc - m.novel) * (s.new_acc - m.novel);
        sd.h += (s.h - m.h) * (s.h - m.h);
    }
    const auto n = static_cast<double>(seeds.size() - 1);
    sd.base = std::sqrt(sd.base / n);
    sd.novel = std::sqrt(sd.novel / n);
    sd.h = std::sqrt(sd.h / n);
    return sd;
}

namespace {

ReportRow run_row(const std::string& label, const TrainConfig& config, const DatasetManifest& manifest,
                  const SplitSpec& split, const Encoders& encoders, const std::vector<std::uint64_t>& seeds,
                  const std::string& manifest_dir) {
    ReportRow row;
    row.label = label;
    row.config = config;
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = config;
        cfg.seed = seed;
        TrainedState state = train_episode(cfg, manifest, split, encoders, manifest_dir);
        SeedMetrics m;
        m.seed = seed;
        if (!state.loss_history.empty()) {
            m.first_epoch_loss = state.loss_history.front();
            m.final_epoch_loss = state.loss_history.back();
        }
        m.base_acc =
            accuracy_on(state, encoders, manifest, split.base_class_ids, state.episode_records, cfg, manifest_dir);
        m.new_acc = accuracy_on(state, encoders, manifest, split.new_class_ids, {}, cfg, manifest_dir);
        m.h = harmonic_mean(m.base_acc, m.new_acc);
        row.seeds.push_back(m);
    }
    return row;
}

}  // namespace

MetricsReport run_base_to_new(const TrainConfig& config, const DatasetManifest& manifest, const SplitSpec& split,
                              const Encoders& encoders, const std::vector<std::uint64_t>& seeds,
                              const std::string& manifest_dir, const std::string& label) {
    if (seeds.empty()) throw std::invalid_argument("run_base_to_new needs at least one seed");
    MetricsReport report;
    report.config = config;
    report.rows.push_back(run_row(label, config, manifest, split, encoders, seeds, manifest_dir));
    return report;
}

MetricsReport run_ablation(const TrainConfig& base_config, const DatasetManifest& manifest, const SplitSpec& split,
                           const Encoders& encoders, const std::vector<std::uint64_t>& seeds,
                           const std::string& manifest_dir) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation needs at least one seed");

    // Table-style ablation: baseline is the image-conditional prompt fed by
    // the primary visual encoder with flat class names; the two toggles are
    // the multi-granularity prompt and the remote-sensing bias.
    auto with_flags = [&](bool hierarchy, bool rs_bias) {
        TrainConfig cfg = base_config;
        cfg.use_text_bias = true;
        cfg.use_hierarchy = hierarchy;
        cfg.image_conditional_source = rs_bias ? BiasSource::auxiliary : BiasSource::primary_visual;
        cfg.use_visual_bias = rs_bias;
        return cfg;
    };

    MetricsReport report;
    report.config = base_config;
    report.rows.push_back(run_row("baseline", with_flags(false, false), manifest, split, encoders, seeds, manifest_dir));
    report.rows.push_back(
        run_row("+multi-granularity", with_flags(true, false), manifest, split, encoders, seeds, manifest_dir));
    report.rows.push_back(run_row("+rs-bias", with_flags(false, true), manifest, split, encoders, seeds, manifest_dir));
    report.rows.push_back(run_row("+both", with_flags(true, true), manifest, split, encoders, seeds, manifest_dir));
    return report;
}

TrainConfig baseline_config(BaselineKind kind) {
    TrainConfig cfg;
    cfg.use_hierarchy = false;
    cfg.use_text_bias = false;
    cfg.use_visual_bias = false;
    if (kind == BaselineKind::cocoop) {
        cfg.use_text_bias = true;
        cfg.image_conditional_source = BiasSource::primary_visual;
    }
    return cfg;
}

TrainConfig baseline_config(const std::string& kind) {
    if (kind == "coop") return baseline_config(BaselineKind::coop);
    if (kind == "cocoop") return baseline_config(BaselineKind::cocoop);
    throw std::invalid_argument("unknown baseline kind: " + kind);
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

ordered_json config_json(const TrainConfig& config) {
    ordered_json j;
    std::istringstream lines(config_to_string(config));
    std::string line;
    while (std::getline(lines, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

TrainConfig config_from_json(const ordered_json& j) {
    TrainConfig config;
    for (auto it = j.begin(); it != j.end(); ++it)
        apply_config_override(config, it.key(), it.value().get<std::string>());
    return config;
}

ordered_json stats_json(const ColumnStats& s) {
    ordered_json j;
    j["base"] = round2(s.base);
    j["new"] = round2(s.novel);
    j["h"] = round2(s.h);
    return j;
}

}  // namespace

void write_report(const MetricsReport& report, const std::string& path) {
    ordered_json j;
    j["config"] = config_json(report.config);
    j["rows"] = ordered_json::array();
    for (const auto& row : report.rows) {
        ordered_json jr;
        jr["label"] = row.label;
        jr["config"] = config_json(row.config);
        jr["seeds"] = ordered_json::array();
        for (const auto& s : row.seeds) {
            ordered_json js;
            js["seed"] = s.seed;
            js["base"] = round2(s.base_acc);
            js["new"] = round2(s.new_acc);
            js["h"] = round2(s.h);
            jr["seeds"].push_back(std::move(js));
        }
        jr["mean"] = stats_json(row.mean());
        jr["std"] = stats_json(row.stddev());
        j["rows"].push_back(std::move(jr));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

MetricsReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("report parse error: " + std::string(e.what()));
    }
    MetricsReport report;
    report.config = config_from_json(j.at("config"));
    for (const auto& jr : j.at("rows")) {
        ReportRow row;
        row.label = jr.at("label").get<std::string>();
        row.config = config_from_json(jr.at("config"));
        for (const auto& js : jr.at("seeds")) {
            SeedMetrics s;
            s.seed = js.at("seed").get<std::uint64_t>();
            s.base_acc = js.at("base").get<double>();
            s.new_acc = js.at("new").get<double>();
            s.h = js.at("h").get<double>();
            row.seeds.push_back(s);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string render_report_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s %6s %16s %16s %16s\n", "Row", "Seeds", "Base", "New", "H");
    out << line;
    out << std::string(80, '-') << "\n";
    for (const auto& row : report.rows) {
        const ColumnStats m = row.mean();
        const ColumnStats sd = row.stddev();
        std::snprintf(line, sizeof(line), "%-22s %6zu %8.2f +-%-6.2f %8.2f +-%-6.2f %8.2f +-%-6.2f\n",
                      row.label.c_str(), row.seeds.size(), m.base, sd.base, m.novel, sd.novel, m.h, sd.h);
        out << line;
    }
    return out.str();
}

Mat frozen_attention_heatmap(const EncoderParams& visual, const Image& image) {
    EncoderOutput out = encode_visual(visual, image);
    return attention_heatmap(out, image.height, image.width);
}

Mat trained_relevance_heatmap(const TrainedState& state, const Encoders& encoders, const TrainConfig& config,
                              const DatasetManifest& manifest, const Image& image) {
    EncoderOutput av = encode_visual(encoders.visual, image);
    EncoderOutput bv = encode_visual(encoders.aux, image);
    FrozenImageFeatures frozen{av.pooled, bv.pooled};

    std::vector<int> ids = manifest.class_ids();
    std::sort(ids.begin(), ids.end());
    const auto templates = embed_class_templates(encoders.text, manifest, ids, config.use_hierarchy);
    Vec delta = conditional_bias(state, config, frozen);
    std::vector<Vec> feats = class_text_features(state, encoders.text, templates, delta);
    Vec image_feat = fused_feature(state, config, frozen);
    ClassProbabilities probs = class_probabilities(image_feat, feats, ids, config.tau);
    const int predicted = predict(probs);
    std::size_t pred_idx = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == predicted) pred_idx = i;
    const Vec& f = feats[pred_idx];

    double fn = 0.0;
    for (double v : f) fn += v * v;
    fn = std::sqrt(fn);

    const std::size_t n = av.tokens.rows;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    Mat grid(side, side);
    for (std::size_t j = 0; j < n; ++j) {
        Vec token(av.tokens.row(j), av.tokens.row(j) + av.tokens.cols);
        if (config.use_visual_bias) {
            Vec btok(bv.tokens.row(j), bv.tokens.row(j) + bv.tokens.cols);
            Vec bias = bottleneck_forward(state.visual_net, btok);
            for (std::size_t k = 0; k < token.size(); ++k) token[k] += bias[k];
        }
        double tn = 0.0, dot = 0.0;
        for (std::size_t k = 0; k < token.size(); ++k) {
            tn += token[k] * token[k];
            dot += token[k] * f[k];
        }
        tn = std::sqrt(tn);
        grid.a[j] = (tn > 0.0 && fn > 0.0) ? dot / (tn * fn) : 0.0;
    }

    double lo = grid.a[0], hi = grid.a[0];
    for (double v : grid.a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo)
        for (auto& v : grid.a) v = (v - lo) / (hi - lo);
    else
        std::fill(grid.a.begin(), grid.a.end(), 0.0);
    return bilinear_upsample(grid, image.height, image.width);
}

double heatmap_mass_in_mask(const Mat& heat, const std::vector<std::uint8_t>& mask) {
    if (mask.size() != heat.a.size()) throw std::invalid_argument("mask size mismatch");
    double total = 0.0, inside = 0.0;
    for (std::size_t i = 0; i < heat.a.size(); ++i) {
        total += heat.a[i];
        if (mask[i]) inside += heat.a[i];
    }
    return total > 0.0 ? inside / total : 0.0;
}

}  // namespace hpt
