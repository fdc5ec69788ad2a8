#pragma once

#include <string>
#include <vector>

#include "hpt/training.hpp"

namespace hpt {

// 2*base*new/(base+new); 0 when both are 0.
double harmonic_mean(double base, double novel);

double percent_correct(const std::vector<int>& predictions, const std::vector<int>& truths);

// Accuracy over records of the given classes, candidate set restricted to
// those classes, with the training-episode records excluded.
double accuracy_on(const TrainedState& state, const Encoders& encoders, const DatasetManifest& manifest,
                   const std::vector<int>& class_ids, const std::vector<std::size_t>& exclude_records,
                   const TrainConfig& config, const std::string& manifest_dir = "");

struct SeedMetrics {
    std::uint64_t seed = 0;
    double base_acc = 0.0;
    double new_acc = 0.0;
    double h = 0.0;
    // in-memory diagnostics, not part of the report file schema
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
};

struct ColumnStats {
    double base = 0.0;
    double novel = 0.0;
    double h = 0.0;
};

struct ReportRow {
    std::string label;
    TrainConfig config;
    std::vector<SeedMetrics> seeds;

    ColumnStats mean() const;
    ColumnStats stddev() const;  // sample std, 0 for a single seed
};

struct MetricsReport {
    TrainConfig config;
    std::vector<ReportRow> rows;
};

// Train on base classes per seed, evaluate base and new accuracy plus H.
MetricsReport run_base_to_new(const TrainConfig& config, const DatasetManifest& manifest, const SplitSpec& split,
                              const Encoders& encoders, const std::vector<std::uint64_t>& seeds,
                              const std::string& manifest_dir = "", const std::string& label = "method");

// The four ablation configurations (baseline / +prompt / +bias / +both) on a
// shared split and seed set.
MetricsReport run_ablation(const TrainConfig& base_config, const DatasetManifest& manifest, const SplitSpec& split,
                           const Encoders& encoders, const std::vector<std::uint64_t>& seeds,
                           const std::string& manifest_dir = "");

enum class BaselineKind { coop, cocoop };
TrainConfig baseline_config(BaselineKind kind);
TrainConfig baseline_config(const std::string& kind);

// JSON report file plus a plain-text Base/New/H table.
void write_report(const MetricsReport& report, const std::string& path);
MetricsReport read_report(const std::string& path);
std::string render_report_table(const MetricsReport& report);

// Heatmap diagnostics. The frozen panel is the class-token attention of the
// primary visual encoder; the trained panel scores each patch token (with the
// visual bias applied) against the predicted class text feature.
Mat frozen_attention_heatmap(const EncoderParams& visual, const Image& image);
Mat trained_relevance_heatmap(const TrainedState& state, const Encoders& encoders, const TrainConfig& config,
                              const DatasetManifest& manifest, const Image& image);
double heatmap_mass_in_mask(const Mat& heat, const std::vector<std::uint8_t>& mask);

}  // namespace hpt
