#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpt/common.hpp"
#include "hpt/container.hpp"
#include "hpt/image_io.hpp"

namespace hpt {

enum class EncoderKind { visual, text };

struct ArchDescriptor {
    int patch_size = 4;
    int image_size = 32;
    int n_blocks = 2;
    int n_heads = 2;
    int model_dim = 32;   // transformer width (also the text embedding dim)
    int output_dim = 16;  // shared image/text feature dim d
    int text_vocab = 256;
    int context_window = 64;
    int aux_output_dim = 128;  // feature dim of the auxiliary encoder (d_rs)

    int grid() const { return image_size / patch_size; }
    int n_patches() const { return grid() * grid(); }

    bool operator==(const ArchDescriptor&) const = default;
};

struct BlockParams {
    Mat w_qkv;  // (3D, D)
    Vec b_qkv;
    Mat w_out;  // (D, D)
    Vec b_out;
    Mat w_ff1;  // (4D, D)
    Vec b_ff1;
    Mat w_ff2;  // (D, 4D)
    Vec b_ff2;

    bool operator==(const BlockParams&) const = default;
};

// Frozen encoder parameters. Nothing in the artifact mutates these after
// init/load; training-side code treats them as read-only.
struct EncoderParams {
    EncoderKind kind = EncoderKind::visual;
    ArchDescriptor arch;

    // visual-only
    Mat patch_embed;  // (D, 3*patch^2)
    Vec patch_bias;
    Vec class_token;  // (D)
    Mat pos_embed;    // (N+1, D)

    // text-only
    Mat token_embed;     // (vocab, D)
    Mat text_pos_embed;  // (context_window, D)

    std::vector<BlockParams> blocks;
    Mat proj;  // (d, D)

    // derived at init/load, not part of the parameter inventory: pooled and
    // token responses to the blank image, subtracted so features measure
    // content deviation rather than the encoder's intrinsic offsets
    Vec ref_pooled;
    Mat ref_tokens;

    // Visits every parameter array with a stable name; used by serialization
    // and by the frozen-parameter conservation checks.
    template <typename Fn>
    void for_each_array(Fn&& fn) const;
    template <typename Fn>
    void for_each_array_mut(Fn&& fn);

    std::uint64_t content_hash() const;

    bool operator==(const EncoderParams&) const = default;
};

struct EncoderOutput {
    Mat tokens;                 // (N, d) per-patch features
    Vec pooled;                 // (d) class-token feature after projection
    std::vector<Mat> attn_last;  // n_heads x (N+1, N+1), rows sum to 1
};

// Carrier for prompt sequences entering the text encoder. Positions flagged
// learnable are the ones whose input gradient the trainer consumes; summary
// positions (the class-name tokens) are the ones the pooled feature reads.
struct TokenEmbeddingSequence {
    Mat embeddings;  // (L, d_t)
    std::vector<std::uint8_t> learnable;
    std::vector<std::uint8_t> summary;

    std::size_t length() const { return embeddings.rows; }
};

// Opaque forward activations kept for the input-gradient pass.
struct BlockTrace {
    Mat x_in;
    Mat q, k, v;            // (L, D) head-concatenated
    std::vector<Mat> attn;  // per head (L, L)
    Mat ctx;                // (L, D)
    Mat x_mid;
    Mat u;  // pre-GELU (L, 4D)
};

struct TextTrace {
    std::size_t length = 0;
    std::vector<BlockTrace> blocks;
    Mat x_final;
    std::vector<std::uint8_t> pooled;  // positions contributing to the feature
    Vec unit_feature;
    double feature_norm = 0.0;
};

EncoderParams init_tiny_encoder(std::uint64_t seed, const ArchDescriptor& arch, EncoderKind kind);

// Ties the patch embedding across intra-patch offsets so each patch is read
// as its per-channel intensity profile; small translations then barely move
// the encoding. Used for the auxiliary encoder.
void tie_patch_embedding_channels(EncoderParams& params);

EncoderOutput encode_visual(const EncoderParams& params, const Image& image);

Vec encode_text(const EncoderParams& params, const TokenEmbeddingSequence& seq);
Vec encode_text_traced(const EncoderParams& params, const TokenEmbeddingSequence& seq, TextTrace& trace);
// Gradient of <d_feature, feature> with respect to the input embeddings.
// Gradients flow through the frozen encoder, never into it.
Mat encode_text_backward(const EncoderParams& params, const TextTrace& trace, const Vec& d_feature);

// Class-token attention averaged over heads, min-max normalized, bilinearly
// upsampled. A constant attention map normalizes to all-zeros.
Mat attention_heatmap(const EncoderOutput& output, int out_h, int out_w);

// Bilinear upsampling with integer anchors at (cell-1)/2 within each cell so
// grid samples are reproduced exactly inside their cells.
Mat bilinear_upsample(const Mat& grid, int out_h, int out_w);

void save_weights(const EncoderParams& params, const std::string& path);
EncoderParams load_weights(const std::string& path);

// Container plumbing shared with training checkpoints.
void append_encoder_arrays(const EncoderParams& params, const std::string& prefix, std::vector<NamedArray>& arrays);
EncoderParams encoder_from_arrays(const std::vector<NamedArray>& arrays, const std::string& prefix);

// Toy deterministic tokenizer: lowercase, split on anything that is not a
// letter or digit, id = stable hash mod (vocab-3). The top three ids are
// reserved for start/end/pad. Output is [start, words..., end].
std::vector<int> tokenize(const std::string& text, int vocab);
int start_token_id(int vocab);
int end_token_id(int vocab);
int pad_token_id(int vocab);

template <typename Fn>
void EncoderParams::for_each_array(Fn&& fn) const {
    auto visit_mat = [&](const std::string& name, const Mat& m) { fn(name, m.a); };
    auto visit_vec = [&](const std::string& name, const Vec& v) { fn(name, v); };
    if (kind == EncoderKind::visual) {
        visit_mat("patch_embed.w", patch_embed);
        visit_vec("patch_embed.b", patch_bias);
        visit_vec("cls", class_token);
        visit_mat("pos", pos_embed);
    } else {
        visit_mat("tok", token_embed);
        visit_mat("pos", text_pos_embed);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        std::string p = "blk" + std::to_string(i) + ".";
        visit_mat(p + "qkv.w", b.w_qkv);
        visit_vec(p + "qkv.b", b.b_qkv);
        visit_mat(p + "attn_out.w", b.w_out);
        visit_vec(p + "attn_out.b", b.b_out);
        visit_mat(p + "ff1.w", b.w_ff1);
        visit_vec(p + "ff1.b", b.b_ff1);
        visit_mat(p + "ff2.w", b.w_ff2);
        visit_vec(p + "ff2.b", b.b_ff2);
    }
    visit_mat("proj", proj);
}

template <typename Fn>
void EncoderParams::for_each_array_mut(Fn&& fn) {
    auto visit_mat = [&](const std::string& name, Mat& m) { fn(name, m.a); };
    auto visit_vec = [&](const std::string& name, Vec& v) { fn(name, v); };
    if (kind == EncoderKind::visual) {
        visit_mat("patch_embed.w", patch_embed);
        visit_vec("patch_embed.b", patch_bias);
        visit_vec("cls", class_token);
        visit_mat("pos", pos_embed);
    } else {
        visit_mat("tok", token_embed);
        visit_mat("pos", text_pos_embed);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& b = blocks[i];
        std::string p = "blk" + std::to_string(i) + ".";
        visit_mat(p + "qkv.w", b.w_qkv);
        visit_vec(p + "qkv.b", b.b_qkv);
        visit_mat(p + "attn_out.w", b.w_out);
        visit_vec(p + "attn_out.b", b.b_out);
        visit_mat(p + "ff1.w", b.w_ff1);
        visit_vec(p + "ff1.b", b.b_ff1);
        visit_mat(p + "ff2.w", b.w_ff2);
        visit_vec(p + "ff2.b", b.b_ff2);
    }
    visit_mat("proj", proj);
}

}  // namespace hpt
