#include "hpt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hpt/classifier.hpp"
#include "hpt/container.hpp"
#include "hpt/image_io.hpp"

namespace hpt {

void TrainConfig::validate() const {
    if (k_shots < 1) throw std::invalid_argument("K must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (lr0 < 0.0) throw std::invalid_argument("lr0 must be non-negative");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (context_len < 1) throw std::invalid_argument("M must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
    for (double m : milestones)
        if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("milestones must be epoch fractions in (0, 1)");
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    throw std::invalid_argument("invalid value for '" + key + "': " + value);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for '" + key + "': " + value);
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for '" + key + "': " + value);
    }
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_override(TrainConfig& config, const std::string& key, const std::string& value) {
    if (key == "K") {
        config.k_shots = parse_int(key, value);
    } else if (key == "epochs") {
        config.epochs = parse_int(key, value);
    } else if (key == "lr0") {
        config.lr0 = parse_double(key, value);
    } else if (key == "weight_decay") {
        config.weight_decay = parse_double(key, value);
    } else if (key == "milestones") {
        std::vector<double> ms;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) ms.push_back(parse_double(key, item));
        }
        config.milestones = std::move(ms);
    } else if (key == "gamma") {
        config.gamma = parse_double(key, value);
    } else if (key == "seed") {
        try {
            config.seed = std::stoull(value);
        } catch (const std::exception&) {
            throw std::invalid_argument("invalid value for 'seed': " + value);
        }
    } else if (key == "M") {
        config.context_len = parse_int(key, value);
    } else if (key == "tau" || key == "\xcf\x84") {  // accept the ASCII and Greek spellings
        config.tau = parse_double("tau", value);
    } else if (key == "use_hierarchy") {
        config.use_hierarchy = parse_bool(key, value);
    } else if (key == "use_text_bias") {
        config.use_text_bias = parse_bool(key, value);
    } else if (key == "use_visual_bias") {
        config.use_visual_bias = parse_bool(key, value);
    } else if (key == "image_conditional_source") {
        if (value == "auxiliary")
            config.image_conditional_source = BiasSource::auxiliary;
        else if (value == "primary-visual")
            config.image_conditional_source = BiasSource::primary_visual;
        else
            throw std::invalid_argument("invalid value for 'image_conditional_source': " + value);
    } else if (key == "batch_size") {
        config.batch_size = parse_int(key, value);
    } else if (key == "momentum") {
        config.momentum = parse_double(key, value);
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    TrainConfig config;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("malformed config line: " + line);
        apply_config_override(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    config.validate();
    return config;
}

std::string config_to_string(const TrainConfig& c) {
    std::ostringstream out;
    out << "K=" << c.k_shots << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "lr0=" << c.lr0 << "\n";
    out << "weight_decay=" << c.weight_decay << "\n";
    out << "milestones=";
    for (std::size_t i = 0; i < c.milestones.size(); ++i) out << (i ? "," : "") << c.milestones[i];
    out << "\n";
    out << "gamma=" << c.gamma << "\n";
    out << "seed=" << c.seed << "\n";
    out << "M=" << c.context_len << "\n";
    out << "tau=" << c.tau << "\n";
    out << "use_hierarchy=" << (c.use_hierarchy ? "true" : "false") << "\n";
    out << "use_text_bias=" << (c.use_text_bias ? "true" : "false") << "\n";
    out << "use_visual_bias=" << (c.use_visual_bias ? "true" : "false") << "\n";
    out << "image_conditional_source="
        << (c.image_conditional_source == BiasSource::auxiliary ? "auxiliary" : "primary-visual") << "\n";
    out << "batch_size=" << c.batch_size << "\n";
    out << "momentum=" << c.momentum << "\n";
    return out.str();
}

Encoders make_tiny_encoders(std::uint64_t seed, const ArchDescriptor& arch) {
    ArchDescriptor aux_arch = arch;
    aux_arch.output_dim = arch.aux_output_dim;
    Encoders e{init_tiny_encoder(derive_seed(seed, seed_label::encoder_visual), arch, EncoderKind::visual),
               init_tiny_encoder(derive_seed(seed, seed_label::encoder_text), arch, EncoderKind::text),
               init_tiny_encoder(derive_seed(seed, seed_label::encoder_aux), aux_arch, EncoderKind::visual)};
    tie_patch_embedding_channels(e.visual);
    tie_patch_embedding_channels(e.aux);
    return e;
}

std::vector<std::size_t> sample_k_shot(const DatasetManifest& manifest, const SplitSpec& split, int k,
                                       std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    std::vector<std::size_t> chosen;
    for (int class_id : split.base_class_ids) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < manifest.records.size(); ++i)
            if (manifest.records[i].class_id == class_id) pool.push_back(i);
        if (pool.size() < static_cast<std::size_t>(k)) {
            const ClassDescriptor* cls = manifest.find_class(class_id);
            const std::string name = cls ? cls->final : ("id " + std::to_string(class_id));
            throw std::runtime_error("class '" + name + "' has " + std::to_string(pool.size()) +
                                     " records, fewer than K=" + std::to_string(k));
        }
        Rng rng(derive_seed(seed, "kshot.class", static_cast<std::uint64_t>(class_id)));
        deterministic_shuffle(pool, rng);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + k);
    }
    return chosen;
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 0 || epoch >= config.epochs)
        throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) +
                                ")");
    int decays = 0;
    for (double frac : config.milestones) {
        const int milestone_epoch = static_cast<int>(std::floor(frac * config.epochs));
        if (milestone_epoch <= epoch) ++decays;
    }
    return config.lr0 * std::pow(config.gamma, decays);
}

FrozenImageFeatures encode_frozen(const Encoders& encoders, const Image& image) {
    return FrozenImageFeatures{encode_visual(encoders.visual, image).pooled,
                               encode_visual(encoders.aux, image).pooled};
}

std::vector<TokenEmbeddingSequence> embed_class_templates(const EncoderParams& text_params,
                                                          const DatasetManifest& manifest,
                                                          const std::vector<int>& class_ids, bool hierarchical) {
    std::vector<TokenEmbeddingSequence> out;
    out.reserve(class_ids.size());
    for (int id : class_ids) {
        const ClassDescriptor* cls = manifest.find_class(id);
        if (!cls) throw std::runtime_error("unresolved class " + std::to_string(id));
        PromptTemplate tmpl = hierarchical ? build_template(*cls) : build_flat_template(*cls);
        out.push_back(embed_template(text_params, tmpl));
    }
    return out;
}

Vec conditional_bias(const TrainedState& state, const TrainConfig& config, const FrozenImageFeatures& frozen) {
    if (!config.use_text_bias) return Vec(state.ctx.v.cols, 0.0);
    const Vec& src =
        config.image_conditional_source == BiasSource::auxiliary ? frozen.b_pooled : frozen.a_pooled;
    return bottleneck_forward(state.remote_net, src);
}

Vec fused_feature(const TrainedState& state, const TrainConfig& config, const FrozenImageFeatures& frozen) {
    if (!config.use_visual_bias) return frozen.a_pooled;
    return fuse_image_feature(frozen.a_pooled, state.visual_net, frozen.b_pooled);
}

std::vector<Vec> class_text_features(const TrainedState& state, const EncoderParams& text_params,
                                     const std::vector<TokenEmbeddingSequence>& templates, const Vec& delta) {
    std::vector<Vec> feats;
    feats.reserve(templates.size());
    for (const auto& tmpl : templates) {
        PromptTokens prompt = assemble_prompt(state.ctx, delta, tmpl, text_params.arch.context_window);
        feats.push_back(encode_text(text_params, prompt.seq));
    }
    return feats;
}

void sgd_update(Vec& param, const Vec& grad, Vec& velocity, double lr, double weight_decay, double momentum) {
    if (param.size() != grad.size()) throw std::invalid_argument("sgd_update size mismatch");
    if (momentum > 0.0 && velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad[i] + weight_decay * param[i];
        if (momentum > 0.0) {
            velocity[i] = momentum * velocity[i] + g;
            g = velocity[i];
        }
        param[i] -= lr * g;
    }
}

namespace {

struct ParamGroup {
    Vec* param = nullptr;
    Vec grad;
    Vec velocity;
    bool enabled = false;
};

void check_encoder_compat(const TrainConfig& config, const Encoders& encoders) {
    if (encoders.visual.kind != EncoderKind::visual || encoders.aux.kind != EncoderKind::visual ||
        encoders.text.kind != EncoderKind::text)
        throw std::invalid_argument("encoder kinds do not match their roles");
    if (encoders.visual.arch.output_dim != encoders.text.arch.output_dim)
        throw std::invalid_argument("visual and text output dims differ");
    const int needed = config.context_len + 2;
    if (needed > encoders.text.arch.context_window)
        throw std::invalid_argument("context window cannot hold M context vectors plus a template");
}

}  // namespace

TrainedState train_episode(const TrainConfig& config, const DatasetManifest& manifest, const SplitSpec& split,
                           const Encoders& encoders, const std::string& manifest_dir) {
    config.validate();
    check_encoder_compat(config, encoders);

    const int d_t = encoders.text.arch.model_dim;
    const int d = encoders.visual.arch.output_dim;
    const int d_rs = encoders.aux.arch.output_dim;
    const int remote_in = config.image_conditional_source == BiasSource::auxiliary ? d_rs : d;

    TrainedState state;
    state.ctx = init_context(config.context_len, d_t, derive_seed(config.seed, seed_label::context));
    state.remote_net = init_bottleneck(remote_in, d_t, derive_seed(config.seed, seed_label::remote_net), true);
    state.visual_net = init_bottleneck(d_rs, d, derive_seed(config.seed, seed_label::visual_net), true);

    state.episode_records = sample_k_shot(manifest, split, config.k_shots,
                                          derive_seed(config.seed, seed_label::sampler));
    const std::size_t n_samples = state.episode_records.size();

    // candidate classes in ascending id order for a fixed reduction order
    std::vector<int> class_ids = split.base_class_ids;
    std::sort(class_ids.begin(), class_ids.end());
    const auto templates = embed_class_templates(encoders.text, manifest, class_ids, config.use_hierarchy);

    // frozen per-record features, computed once
    std::vector<FrozenImageFeatures> frozen(n_samples);
    std::vector<int> labels(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const ImageRecord& rec = manifest.records[state.episode_records[i]];
        Image img = load_image_ref(rec.image_ref, rec.height, rec.width, manifest_dir);
        frozen[i] = encode_frozen(encoders, img);
        labels[i] = rec.class_id;
    }

    ParamGroup groups[9];
    groups[0] = {&state.ctx.v.a, Vec(state.ctx.v.a.size(), 0.0), {}, true};
    groups[1] = {&state.remote_net.w1.a, Vec(state.remote_net.w1.a.size(), 0.0), {}, config.use_text_bias};
    groups[2] = {&state.remote_net.b1, Vec(state.remote_net.b1.size(), 0.0), {}, config.use_text_bias};
    groups[3] = {&state.remote_net.w2.a, Vec(state.remote_net.w2.a.size(), 0.0), {}, config.use_text_bias};
    groups[4] = {&state.remote_net.b2, Vec(state.remote_net.b2.size(), 0.0), {}, config.use_text_bias};
    groups[5] = {&state.visual_net.w1.a, Vec(state.visual_net.w1.a.size(), 0.0), {}, config.use_visual_bias};
    groups[6] = {&state.visual_net.b1, Vec(state.visual_net.b1.size(), 0.0), {}, config.use_visual_bias};
    groups[7] = {&state.visual_net.w2.a, Vec(state.visual_net.w2.a.size(), 0.0), {}, config.use_visual_bias};
    groups[8] = {&state.visual_net.b2, Vec(state.visual_net.b2.size(), 0.0), {}, config.use_visual_bias};

    const std::size_t n_classes = class_ids.size();
    std::vector<TextTrace> traces(n_classes);
    std::vector<Vec> feats(n_classes);
    const auto m = static_cast<std::size_t>(config.context_len);

    // returns the sample loss and accumulates gradients into the groups
    auto forward_backward = [&](std::size_t sample) -> double {
        const FrozenImageFeatures& ff = frozen[sample];

        Vec delta(static_cast<std::size_t>(d_t), 0.0);
        BottleneckCache remote_cache;
        if (config.use_text_bias) {
            const Vec& src = config.image_conditional_source == BiasSource::auxiliary ? ff.b_pooled : ff.a_pooled;
            delta = bottleneck_forward_cached(state.remote_net, src, remote_cache);
        }

        Vec image_feat = ff.a_pooled;
        BottleneckCache visual_cache;
        if (config.use_visual_bias) {
            Vec bias = bottleneck_forward_cached(state.visual_net, ff.b_pooled, visual_cache);
            for (std::size_t k = 0; k < image_feat.size(); ++k) image_feat[k] += bias[k];
        }

        for (std::size_t c = 0; c < n_classes; ++c) {
            PromptTokens prompt =
                assemble_prompt(state.ctx, delta, templates[c], encoders.text.arch.context_window);
            feats[c] = encode_text_traced(encoders.text, prompt.seq, traces[c]);
        }

        ClassifierGrads cg =
            cross_entropy_backward(image_feat, feats, class_ids, config.tau, labels[sample]);

        Vec d_delta(static_cast<std::size_t>(d_t), 0.0);
        for (std::size_t c = 0; c < n_classes; ++c) {
            Mat d_input = encode_text_backward(encoders.text, traces[c], cg.d_text[c]);
            for (std::size_t i = 0; i < m; ++i) {
                const double* src = d_input.row(i);
                double* dst = groups[0].grad.data() + i * static_cast<std::size_t>(d_t);
                for (std::size_t k = 0; k < static_cast<std::size_t>(d_t); ++k) {
                    dst[k] += src[k];
                    d_delta[k] += src[k];
                }
            }
        }

        if (config.use_text_bias) {
            BottleneckGrads rg = bottleneck_backward(state.remote_net, remote_cache, d_delta);
            for (std::size_t i = 0; i < rg.w1.a.size(); ++i) groups[1].grad[i] += rg.w1.a[i];
            for (std::size_t i = 0; i < rg.b1.size(); ++i) groups[2].grad[i] += rg.b1[i];
            for (std::size_t i = 0; i < rg.w2.a.size(); ++i) groups[3].grad[i] += rg.w2.a[i];
            for (std::size_t i = 0; i < rg.b2.size(); ++i) groups[4].grad[i] += rg.b2[i];
        }
        if (config.use_visual_bias) {
            BottleneckGrads vg = bottleneck_backward(state.visual_net, visual_cache, cg.d_image);
            for (std::size_t i = 0; i < vg.w1.a.size(); ++i) groups[5].grad[i] += vg.w1.a[i];
            for (std::size_t i = 0; i < vg.b1.size(); ++i) groups[6].grad[i] += vg.b1[i];
            for (std::size_t i = 0; i < vg.w2.a.size(); ++i) groups[7].grad[i] += vg.w2.a[i];
            for (std::size_t i = 0; i < vg.b2.size(); ++i) groups[8].grad[i] += vg.b2[i];
        }
        return cg.loss;
    };

    state.loss_history.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        Rng shuffle_rng(derive_seed(config.seed, seed_label::shuffle, static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < n_samples) {
            const std::size_t batch_end = std::min(pos + static_cast<std::size_t>(config.batch_size), n_samples);
            const auto batch_n = static_cast<double>(batch_end - pos);
            for (std::size_t b = pos; b < batch_end; ++b) {
                const double loss = forward_backward(order[b]);
                if (!std::isfinite(loss))
                    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                             std::to_string(order[b]));
                epoch_loss += loss;
            }
            for (auto& grp : groups) {
                if (!grp.enabled) {
                    std::fill(grp.grad.begin(), grp.grad.end(), 0.0);
                    continue;
                }
                if (batch_n > 1.0)
                    for (auto& g : grp.grad) g /= batch_n;
                sgd_update(*grp.param, grp.grad, grp.velocity, lr, config.weight_decay, config.momentum);
                std::fill(grp.grad.begin(), grp.grad.end(), 0.0);
            }
            pos = batch_end;
        }
        state.loss_history.push_back(epoch_loss / static_cast<double>(n_samples));
    }
    return state;
}

namespace {

constexpr const char* kCkptConfig = "config";
constexpr const char* kCkptMilestones = "config.milestones";

std::vector<double> config_scalars(const TrainConfig& c) {
    return {static_cast<double>(c.k_shots),
            static_cast<double>(c.epochs),
            c.lr0,
            c.weight_decay,
            c.gamma,
            static_cast<double>(c.seed),
            static_cast<double>(c.context_len),
            c.tau,
            c.use_hierarchy ? 1.0 : 0.0,
            c.use_text_bias ? 1.0 : 0.0,
            c.use_visual_bias ? 1.0 : 0.0,
            c.image_conditional_source == BiasSource::auxiliary ? 0.0 : 1.0,
            static_cast<double>(c.batch_size),
            c.momentum};
}

TrainConfig config_from_scalars(const std::vector<double>& s, const std::vector<double>& milestones) {
    if (s.size() != 14) throw std::runtime_error("shape mismatch: config");
    TrainConfig c;
    c.k_shots = static_cast<int>(s[0]);
    c.epochs = static_cast<int>(s[1]);
    c.lr0 = s[2];
    c.weight_decay = s[3];
    c.gamma = s[4];
    c.seed = static_cast<std::uint64_t>(s[5]);
    c.context_len = static_cast<int>(s[6]);
    c.tau = s[7];
    c.use_hierarchy = s[8] != 0.0;
    c.use_text_bias = s[9] != 0.0;
    c.use_visual_bias = s[10] != 0.0;
    c.image_conditional_source = s[11] == 0.0 ? BiasSource::auxiliary : BiasSource::primary_visual;
    c.batch_size = static_cast<int>(s[12]);
    c.momentum = s[13];
    c.milestones = milestones;
    return c;
}

void append_bottleneck(const BottleneckParams& p, const std::string& prefix, std::vector<NamedArray>& arrays) {
    arrays.push_back(array_from_mat(prefix + "w1", p.w1));
    arrays.push_back(array_from_vec(prefix + "b1", p.b1));
    arrays.push_back(array_from_mat(prefix + "w2", p.w2));
    arrays.push_back(array_from_vec(prefix + "b2", p.b2));
}

BottleneckParams bottleneck_from_arrays(const std::vector<NamedArray>& arrays, const std::string& prefix) {
    BottleneckParams p;
    p.w1 = mat_from_array(find_array(arrays, prefix + "w1"));
    p.b1 = vec_from_array(find_array(arrays, prefix + "b1"));
    p.w2 = mat_from_array(find_array(arrays, prefix + "w2"));
    p.b2 = vec_from_array(find_array(arrays, prefix + "b2"));
    return p;
}

}  // namespace

void save_checkpoint(const TrainedState& state, const Encoders& encoders, const TrainConfig& config,
                     const std::string& path) {
    std::vector<NamedArray> arrays;
    arrays.push_back(NamedArray{kCkptConfig, {14}, config_scalars(config)});
    arrays.push_back(array_from_vec(kCkptMilestones, config.milestones));
    arrays.push_back(array_from_mat("state.ctx", state.ctx.v));
    append_bottleneck(state.remote_net, "state.remote.", arrays);
    append_bottleneck(state.visual_net, "state.visualnet.", arrays);
    arrays.push_back(array_from_vec("state.loss_history", state.loss_history));
    Vec episode(state.episode_records.size());
    for (std::size_t i = 0; i < episode.size(); ++i) episode[i] = static_cast<double>(state.episode_records[i]);
    arrays.push_back(array_from_vec("state.episode", episode));
    append_encoder_arrays(encoders.visual, "visual.", arrays);
    append_encoder_arrays(encoders.text, "text.", arrays);
    append_encoder_arrays(encoders.aux, "aux.", arrays);
    write_container(path, arrays);
}

Checkpoint load_checkpoint(const std::string& path) {
    auto arrays = read_container(path);
    Checkpoint ckpt;
    ckpt.config = config_from_scalars(find_array(arrays, kCkptConfig).data,
                                      find_array(arrays, kCkptMilestones).data);
    ckpt.state.ctx.v = mat_from_array(find_array(arrays, "state.ctx"));
    ckpt.state.remote_net = bottleneck_from_arrays(arrays, "state.remote.");
    ckpt.state.visual_net = bottleneck_from_arrays(arrays, "state.visualnet.");
    ckpt.state.loss_history = vec_from_array(find_array(arrays, "state.loss_history"));
    Vec episode = vec_from_array(find_array(arrays, "state.episode"));
    ckpt.state.episode_records.resize(episode.size());
    for (std::size_t i = 0; i < episode.size(); ++i)
        ckpt.state.episode_records[i] = static_cast<std::size_t>(episode[i]);
    ckpt.encoders.visual = encoder_from_arrays(arrays, "visual.");
    ckpt.encoders.text = encoder_from_arrays(arrays, "text.");
    ckpt.encoders.aux = encoder_from_arrays(arrays, "aux.");
    return ckpt;
}

}  // namespace hpt
