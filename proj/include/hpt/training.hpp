#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpt/biasnets.hpp"
#include "hpt/encoders.hpp"
#include "hpt/prompting.hpp"
#include "hpt/taxonomy.hpp"

namespace hpt {

enum class BiasSource { auxiliary, primary_visual };

// Hyperparameters of one training episode. Config files are flat key=value
// lines using the keys noted on the right.
struct TrainConfig {
    int k_shots = 4;                         // K
    int epochs = 100;                        // epochs (0 = evaluate at initialization)
    double lr0 = 1e-3;                       // lr0
    double weight_decay = 1e-4;              // weight_decay
    std::vector<double> milestones = {0.6, 0.8};  // milestones (epoch fractions)
    double gamma = 0.1;                      // gamma
    std::uint64_t seed = 1;                  // seed
    int context_len = 16;                    // M
    double tau = 0.01;                       // tau
    bool use_hierarchy = true;               // use_hierarchy
    bool use_text_bias = true;               // use_text_bias
    bool use_visual_bias = true;             // use_visual_bias
    BiasSource image_conditional_source = BiasSource::auxiliary;  // image_conditional_source
    int batch_size = 1;                      // batch_size
    double momentum = 0.0;                   // momentum

    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

TrainConfig parse_config_file(const std::string& path);
void apply_config_override(TrainConfig& config, const std::string& key, const std::string& value);
std::string config_to_string(const TrainConfig& config);

struct Encoders {
    EncoderParams visual;  // A
    EncoderParams text;    // T
    EncoderParams aux;     // B

    bool operator==(const Encoders&) const = default;
};

// Three frozen encoders with sub-seeds derived from one root seed.
Encoders make_tiny_encoders(std::uint64_t seed, const ArchDescriptor& arch);

// Exactly K record indices per base class, drawn without replacement from a
// per-class seeded shuffle.
std::vector<std::size_t> sample_k_shot(const DatasetManifest& manifest, const SplitSpec& split, int k,
                                       std::uint64_t seed);

// MultiStep schedule: lr0 * gamma^(#milestone epochs <= epoch).
double lr_at_epoch(const TrainConfig& config, int epoch);

struct TrainedState {
    ContextVectors ctx;
    BottleneckParams remote_net;
    BottleneckParams visual_net;
    std::vector<double> loss_history;
    std::vector<std::size_t> episode_records;

    bool operator==(const TrainedState&) const = default;
};

// Pooled features of the two frozen image encoders for one image.
struct FrozenImageFeatures {
    Vec a_pooled;
    Vec b_pooled;
};

FrozenImageFeatures encode_frozen(const Encoders& encoders, const Image& image);

// Template embeddings for the given classes, hierarchical or flat.
std::vector<TokenEmbeddingSequence> embed_class_templates(const EncoderParams& text_params,
                                                          const DatasetManifest& manifest,
                                                          const std::vector<int>& class_ids, bool hierarchical);

// delta = r_theta(source feature); zero vector when the text bias is off.
Vec conditional_bias(const TrainedState& state, const TrainConfig& config, const FrozenImageFeatures& frozen);

// I_x per the fusion rule; reduces to the frozen pooled feature when the
// visual bias is off.
Vec fused_feature(const TrainedState& state, const TrainConfig& config, const FrozenImageFeatures& frozen);

// Text features for all classes under one image-conditional delta.
std::vector<Vec> class_text_features(const TrainedState& state, const EncoderParams& text_params,
                                     const std::vector<TokenEmbeddingSequence>& templates, const Vec& delta);

// K-shot episode on base classes: SGD with weight decay on exactly the
// enabled subset of {V, Remote-Net, Visual-Net}; encoders stay untouched.
TrainedState train_episode(const TrainConfig& config, const DatasetManifest& manifest, const SplitSpec& split,
                           const Encoders& encoders, const std::string& manifest_dir = "");

void save_checkpoint(const TrainedState& state, const Encoders& encoders, const TrainConfig& config,
                     const std::string& path);

struct Checkpoint {
    TrainedState state;
    Encoders encoders;
    TrainConfig config;
};

Checkpoint load_checkpoint(const std::string& path);

// p -= lr * (g + weight_decay * p), with optional heavy-ball momentum.
void sgd_update(Vec& param, const Vec& grad, Vec& velocity, double lr, double weight_decay, double momentum);

}  // namespace hpt
