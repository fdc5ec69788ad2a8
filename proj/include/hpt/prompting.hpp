#pragma once

#include <cstdint>
#include <string>

#include "hpt/encoders.hpp"
#include "hpt/taxonomy.hpp"

namespace hpt {

// The M learnable context vectors V = {v_1..v_M}.
struct ContextVectors {
    Mat v;  // (M, d_t)

    int count() const { return static_cast<int>(v.rows); }

    bool operator==(const ContextVectors&) const = default;
};

struct PromptTemplate {
    std::string text;
    std::vector<std::string> level_names;  // name slots, in template order
};

// Assembled prompt: M context positions (flagged learnable) followed by the
// embedded template suffix.
struct PromptTokens {
    TokenEmbeddingSequence seq;
    int context_count = 0;
};

// Hierarchical three-level template.
PromptTemplate build_template(const ClassDescriptor& cls);
// Flat single-level template used by the CoOp/CoCoOp baseline presets.
PromptTemplate build_flat_template(const ClassDescriptor& cls);

TokenEmbeddingSequence embed_template(const EncoderParams& text_params, const PromptTemplate& tmpl);

ContextVectors init_context(int m, int d_t, std::uint64_t seed);

// Positions 1..M hold v_m + delta (one shared delta); the template suffix is
// appended bit-unchanged.
PromptTokens assemble_prompt(const ContextVectors& context, const Vec& delta,
                             const TokenEmbeddingSequence& template_embeddings, int context_window);

}  // namespace hpt
