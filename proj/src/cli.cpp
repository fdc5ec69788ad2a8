#include "hpt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "hpt/evaluation.hpp"
#include "hpt/synthdata.hpp"

namespace hpt {

namespace fs = std::filesystem;

namespace {

struct RunSettings {
    TrainConfig train;
    std::string manifest;
    std::string checkpoint;
    std::string image;   // image path or "record:<index>"
    std::string report;  // report file for the `report` subcommand
    std::string label = "method";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double base_fraction = 0.5;
    SplitOrdering ordering = SplitOrdering::alphabetical_by_final;
    SynthSpec synth;
    ArchDescriptor arch;
};

bool is_train_key(const std::string& key) {
    static const char* keys[] = {"K",          "epochs",        "lr0",           "weight_decay",
                                 "milestones", "gamma",         "seed",          "M",
                                 "tau",        "\xcf\x84",      "use_hierarchy", "use_text_bias",
                                 "use_visual_bias", "image_conditional_source", "batch_size", "momentum"};
    return std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return key == k; }) !=
           std::end(keys);
}

int parse_int_value(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for '" + key + "': " + value);
    }
}

double parse_double_value(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for '" + key + "': " + value);
    }
}

void apply_setting(RunSettings& s, const std::string& key, const std::string& value) {
    if (is_train_key(key)) {
        apply_config_override(s.train, key, value);
        return;
    }
    if (key == "manifest") {
        s.manifest = value;
    } else if (key == "checkpoint") {
        s.checkpoint = value;
    } else if (key == "image") {
        s.image = value;
    } else if (key == "report") {
        s.report = value;
    } else if (key == "label") {
        s.label = value;
    } else if (key == "seeds") {
        std::vector<std::uint64_t> seeds;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) {
                try {
                    seeds.push_back(std::stoull(item));
                } catch (const std::exception&) {
                    throw std::invalid_argument("invalid value for 'seeds': " + value);
                }
            }
        if (seeds.empty()) throw std::invalid_argument("invalid value for 'seeds': " + value);
        s.seeds = std::move(seeds);
    } else if (key == "base_fraction") {
        s.base_fraction = parse_double_value(key, value);
    } else if (key == "ordering") {
        s.ordering = parse_split_ordering(value);
    } else if (key == "synth_primaries") {
        s.synth.primaries = parse_int_value(key, value);
    } else if (key == "synth_secondaries") {
        s.synth.secondaries_per_primary = parse_int_value(key, value);
    } else if (key == "synth_finals") {
        s.synth.finals_per_secondary = parse_int_value(key, value);
    } else if (key == "synth_images_per_class") {
        s.synth.images_per_class = parse_int_value(key, value);
    } else if (key == "synth_image_size") {
        s.synth.image_size = parse_int_value(key, value);
    } else if (key == "synth_clutter") {
        s.synth.clutter_level = parse_double_value(key, value);
    } else if (key == "arch_patch") {
        s.arch.patch_size = parse_int_value(key, value);
    } else if (key == "arch_image") {
        s.arch.image_size = parse_int_value(key, value);
    } else if (key == "arch_blocks") {
        s.arch.n_blocks = parse_int_value(key, value);
    } else if (key == "arch_heads") {
        s.arch.n_heads = parse_int_value(key, value);
    } else if (key == "arch_model_dim") {
        s.arch.model_dim = parse_int_value(key, value);
    } else if (key == "arch_output_dim") {
        s.arch.output_dim = parse_int_value(key, value);
    } else if (key == "arch_vocab") {
        s.arch.text_vocab = parse_int_value(key, value);
    } else if (key == "arch_window") {
        s.arch.context_window = parse_int_value(key, value);
    } else if (key == "arch_aux_dim") {
        s.arch.aux_output_dim = parse_int_value(key, value);
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

RunSettings build_settings(const CommandInvocation& inv) {
    RunSettings s;
    if (!inv.config_path.empty()) {
        std::ifstream in(inv.config_path);
        if (!in) throw std::runtime_error("cannot open config: " + inv.config_path);
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty() || line.front() == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("malformed config line: " + line);
            apply_setting(s, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const auto& [key, value] : inv.overrides) apply_setting(s, key, value);
    s.train.validate();
    return s;
}

std::string out_path(const CommandInvocation& inv, const std::string& file) {
    fs::create_directories(inv.out_dir);
    return (fs::path(inv.out_dir) / file).string();
}

std::string manifest_dir_of(const std::string& manifest_path) {
    return fs::path(manifest_path).parent_path().string();
}

DatasetManifest require_manifest(const RunSettings& s) {
    if (s.manifest.empty()) throw std::runtime_error("missing required key 'manifest'");
    return load_manifest(s.manifest);
}

Checkpoint require_checkpoint(const RunSettings& s) {
    if (s.checkpoint.empty()) throw std::runtime_error("missing required key 'checkpoint'");
    return load_checkpoint(s.checkpoint);
}

int cmd_gen_data(const CommandInvocation& inv, RunSettings& s) {
    s.synth.seed = s.train.seed;
    DatasetManifest manifest = generate_dataset(s.synth);
    const std::string path = out_path(inv, "manifest.json");
    save_manifest(manifest, path);
    std::cout << "wrote " << path << " (" << manifest.classes.size() << " classes, " << manifest.records.size()
              << " records)\n";
    return 0;
}

int cmd_train(const CommandInvocation& inv, RunSettings& s) {
    DatasetManifest manifest = require_manifest(s);
    SplitSpec split = make_base_new_split(manifest, s.base_fraction, s.ordering);
    Encoders encoders = make_tiny_encoders(s.train.seed, s.arch);
    TrainedState state = train_episode(s.train, manifest, split, encoders, manifest_dir_of(s.manifest));

    const std::string ckpt_path = out_path(inv, "checkpoint.bin");
    save_checkpoint(state, encoders, s.train, ckpt_path);

    const std::string hist_path = out_path(inv, "loss_history.txt");
    std::ofstream hist(hist_path);
    if (!hist) throw std::runtime_error("cannot open for write: " + hist_path);
    char buf[64];
    for (double loss : state.loss_history) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", loss);
        hist << buf;
    }
    std::cout << "wrote " << ckpt_path << " and " << hist_path;
    if (!state.loss_history.empty())
        std::cout << " (first-epoch loss " << state.loss_history.front() << ", final " << state.loss_history.back()
                  << ")";
    std::cout << "\n";
    return 0;
}

int cmd_eval(const CommandInvocation& inv, RunSettings& s) {
    DatasetManifest manifest = require_manifest(s);
    Checkpoint ckpt = require_checkpoint(s);
    SplitSpec split = make_base_new_split(manifest, s.base_fraction, s.ordering);
    const std::string dir = manifest_dir_of(s.manifest);

    SeedMetrics m;
    m.seed = ckpt.config.seed;
    m.base_acc = accuracy_on(ckpt.state, ckpt.encoders, manifest, split.base_class_ids,
                             ckpt.state.episode_records, ckpt.config, dir);
    m.new_acc = accuracy_on(ckpt.state, ckpt.encoders, manifest, split.new_class_ids, {}, ckpt.config, dir);
    m.h = harmonic_mean(m.base_acc, m.new_acc);

    MetricsReport report;
    report.config = ckpt.config;
    ReportRow row;
    row.label = "eval";
    row.config = ckpt.config;
    row.seeds.push_back(m);
    report.rows.push_back(std::move(row));

    const std::string path = out_path(inv, "eval.json");
    write_report(report, path);
    std::cout << render_report_table(report);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_b2n(const CommandInvocation& inv, RunSettings& s) {
    DatasetManifest manifest = require_manifest(s);
    SplitSpec split = make_base_new_split(manifest, s.base_fraction, s.ordering);
    Encoders encoders = make_tiny_encoders(s.train.seed, s.arch);
    MetricsReport report =
        run_base_to_new(s.train, manifest, split, encoders, s.seeds, manifest_dir_of(s.manifest), s.label);

    const std::string json_path = out_path(inv, "report.json");
    write_report(report, json_path);
    const std::string table = render_report_table(report);
    const std::string txt_path = out_path(inv, "report.txt");
    std::ofstream txt(txt_path);
    txt << table;
    std::cout << table << "wrote " << json_path << " and " << txt_path << "\n";
    return 0;
}

int cmd_ablate(const CommandInvocation& inv, RunSettings& s) {
    DatasetManifest manifest = require_manifest(s);
    SplitSpec split = make_base_new_split(manifest, s.base_fraction, s.ordering);
    Encoders encoders = make_tiny_encoders(s.train.seed, s.arch);
    MetricsReport report = run_ablation(s.train, manifest, split, encoders, s.seeds, manifest_dir_of(s.manifest));

    const std::string json_path = out_path(inv, "ablation.json");
    write_report(report, json_path);
    const std::string table = render_report_table(report);
    const std::string txt_path = out_path(inv, "ablation.txt");
    std::ofstream txt(txt_path);
    txt << table;
    std::cout << table << "wrote " << json_path << " and " << txt_path << "\n";
    return 0;
}

int cmd_heatmap(const CommandInvocation& inv, RunSettings& s) {
    DatasetManifest manifest = require_manifest(s);
    Checkpoint ckpt = require_checkpoint(s);
    if (s.image.empty()) throw std::runtime_error("missing required key 'image'");

    Image image;
    if (s.image.rfind("record:", 0) == 0) {
        const int idx = parse_int_value("image", s.image.substr(7));
        if (idx < 0 || static_cast<std::size_t>(idx) >= manifest.records.size())
            throw std::runtime_error("record index out of range: " + s.image);
        const ImageRecord& rec = manifest.records[static_cast<std::size_t>(idx)];
        image = load_image_ref(rec.image_ref, rec.height, rec.width, manifest_dir_of(s.manifest));
    } else {
        image = read_pnm(s.image);
    }

    Mat frozen = frozen_attention_heatmap(ckpt.encoders.visual, image);
    Mat trained = trained_relevance_heatmap(ckpt.state, ckpt.encoders, ckpt.config, manifest, image);

    // panel layout: raw | frozen | trained
    const int h = image.height, w = image.width;
    Mat panel(static_cast<std::size_t>(h), static_cast<std::size_t>(3) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gray = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
            panel.at(y, x) = gray;
            panel.at(y, static_cast<std::size_t>(w) + x) = frozen.at(y, x);
            panel.at(y, static_cast<std::size_t>(2) * w + x) = trained.at(y, x);
        }
    const std::string path = out_path(inv, "heatmap.pgm");
    write_pgm(path, panel);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_report(const CommandInvocation& inv, RunSettings& s) {
    if (s.report.empty()) throw std::runtime_error("missing required key 'report'");
    MetricsReport report = read_report(s.report);
    const std::string table = render_report_table(report);
    const std::string txt_path = out_path(inv, "report.txt");
    std::ofstream txt(txt_path);
    txt << table;
    std::cout << table;
    return 0;
}

}  // namespace

int dispatch(const CommandInvocation& invocation) {
    try {
        RunSettings settings = build_settings(invocation);
        if (invocation.subcommand == "gen-data") return cmd_gen_data(invocation, settings);
        if (invocation.subcommand == "train") return cmd_train(invocation, settings);
        if (invocation.subcommand == "eval") return cmd_eval(invocation, settings);
        if (invocation.subcommand == "b2n") return cmd_b2n(invocation, settings);
        if (invocation.subcommand == "ablate") return cmd_ablate(invocation, settings);
        if (invocation.subcommand == "heatmap") return cmd_heatmap(invocation, settings);
        if (invocation.subcommand == "report") return cmd_report(invocation, settings);
        throw std::runtime_error("unknown subcommand '" + invocation.subcommand + "'");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

CommandInvocation parse_cli_args(int argc, const char* const* argv) {
    if (argc < 2) throw std::invalid_argument("missing subcommand");
    CommandInvocation inv;
    inv.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) throw std::invalid_argument("flag " + arg + " needs a value");
            return argv[++i];
        };
        if (arg == "--config") {
            inv.config_path = next();
        } else if (arg == "--set") {
            const std::string kv = next();
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
            inv.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (arg == "--out") {
            inv.out_dir = next();
        } else if (arg == "--seed") {
            inv.overrides.emplace_back("seed", next());
        } else {
            throw std::invalid_argument("unknown flag '" + arg + "'");
        }
    }
    return inv;
}

std::string cli_usage() {
    return "usage: hpt <gen-data|train|eval|b2n|ablate|heatmap|report>"
           " [--config PATH] [--set key=value ...] [--out DIR] [--seed N]\n";
}

}  // namespace hpt
