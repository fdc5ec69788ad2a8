#include "hpt/prompting.hpp"

#include <stdexcept>

namespace hpt {

PromptTemplate build_template(const ClassDescriptor& cls) {
    if (cls.primary.empty() || cls.secondary.empty() || cls.final.empty())
        throw std::invalid_argument("empty level name in class " + std::to_string(cls.class_id));
    return PromptTemplate{"a photo of a ship, the primary type is " + cls.primary + ", secondary type is " +
                              cls.secondary + ", final type is " + cls.final,
                          {cls.primary, cls.secondary, cls.final}};
}

PromptTemplate build_flat_template(const ClassDescriptor& cls) {
    if (cls.final.empty()) throw std::invalid_argument("empty level name in class " + std::to_string(cls.class_id));
    return PromptTemplate{"a photo of a " + cls.final, {cls.final}};
}

namespace {

// word ids only, no start/end wrapping
std::vector<int> tokenize_words(const std::string& text, int vocab) {
    auto ids = tokenize(text, vocab);
    return std::vector<int>(ids.begin() + 1, ids.end() - 1);
}

}  // namespace

TokenEmbeddingSequence embed_template(const EncoderParams& text_params, const PromptTemplate& tmpl) {
    if (text_params.kind != EncoderKind::text) throw std::invalid_argument("embed_template needs a text encoder");
    if (tmpl.text.empty()) throw std::invalid_argument("empty template");
    const auto& arch = text_params.arch;
    auto ids = tokenize(tmpl.text, arch.text_vocab);
    if (ids.size() > static_cast<std::size_t>(arch.context_window))
        throw std::invalid_argument("context overflow: template uses " + std::to_string(ids.size()) +
                                    " tokens, window is " + std::to_string(arch.context_window));

    // Mark the class-name tokens. The templates have a fixed shape, so each
    // name sits right after its anchor phrase; anchoring avoids mismarking a
    // name that happens to repeat a boilerplate word.
    std::vector<std::uint8_t> summary(ids.size(), 0);
    if (!tmpl.level_names.empty()) {
        static const char* kHierarchyAnchors[3] = {"primary type is ", "secondary type is ", "final type is "};
        std::size_t search_from = 0;
        for (std::size_t level = 0; level < tmpl.level_names.size(); ++level) {
            const std::string& name = tmpl.level_names[level];
            std::size_t at;
            if (tmpl.level_names.size() == 3) {
                const auto anchor_at = tmpl.text.find(kHierarchyAnchors[level], search_from);
                if (anchor_at == std::string::npos) continue;
                at = anchor_at + std::string(kHierarchyAnchors[level]).size();
            } else {
                at = tmpl.text.find(name, search_from);
                if (at == std::string::npos) continue;
            }
            const auto before = tokenize_words(tmpl.text.substr(0, at), arch.text_vocab).size();
            const auto span = tokenize_words(name, arch.text_vocab).size();
            for (std::size_t j = 0; j < span && 1 + before + j < ids.size() - 1; ++j)
                summary[1 + before + j] = 1;
            search_from = at + name.size();
        }
    }

    TokenEmbeddingSequence seq;
    seq.embeddings = Mat(ids.size(), static_cast<std::size_t>(arch.model_dim));
    seq.learnable.assign(ids.size(), 0);
    seq.summary = std::move(summary);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* row = text_params.token_embed.row(static_cast<std::size_t>(ids[i]));
        std::copy(row, row + seq.embeddings.cols, seq.embeddings.row(i));
    }
    return seq;
}

ContextVectors init_context(int m, int d_t, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("context length M must be >= 1");
    if (d_t < 1) throw std::invalid_argument("context dim must be >= 1");
    ContextVectors ctx;
    ctx.v = Mat(static_cast<std::size_t>(m), static_cast<std::size_t>(d_t));
    Rng rng(seed);
    fill_normal(ctx.v, rng, 0.02);
    return ctx;
}

PromptTokens assemble_prompt(const ContextVectors& context, const Vec& delta,
                             const TokenEmbeddingSequence& template_embeddings, int context_window) {
    const std::size_t m = context.v.rows;
    const std::size_t d_t = context.v.cols;
    if (delta.size() != d_t) throw std::invalid_argument("dimension mismatch: delta vs context vectors");
    if (template_embeddings.embeddings.cols != d_t)
        throw std::invalid_argument("dimension mismatch: template embeddings vs context vectors");
    const std::size_t total = m + template_embeddings.embeddings.rows;
    if (total > static_cast<std::size_t>(context_window))
        throw std::invalid_argument("context overflow: prompt uses " + std::to_string(total) +
                                    " positions, window is " + std::to_string(context_window));

    PromptTokens prompt;
    prompt.context_count = static_cast<int>(m);
    prompt.seq.embeddings = Mat(total, d_t);
    prompt.seq.learnable.assign(total, 0);
    prompt.seq.summary.assign(total, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* src = context.v.row(i);
        double* dst = prompt.seq.embeddings.row(i);
        for (std::size_t k = 0; k < d_t; ++k) dst[k] = src[k] + delta[k];
        prompt.seq.learnable[i] = 1;
    }
    for (std::size_t i = 0; i < template_embeddings.embeddings.rows; ++i) {
        const double* src = template_embeddings.embeddings.row(i);
        std::copy(src, src + d_t, prompt.seq.embeddings.row(m + i));
        if (i < template_embeddings.summary.size() && template_embeddings.summary[i])
            prompt.seq.summary[m + i] = 1;
    }
    return prompt;
}

}  // namespace hpt
