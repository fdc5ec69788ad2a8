#include <cmath>

#include "doctest.h"
#include "hpt/prompting.hpp"
#include "test_util.hpp"

using namespace hpt;

TEST_CASE("build_template renders the exact hierarchical string") {
    ClassDescriptor cls{0, "warship", "destroyer", "Arleigh Burke class"};
    CHECK(build_template(cls).text ==
          "a photo of a ship, the primary type is warship, secondary type is destroyer, final type is Arleigh "
          "Burke class");
    ClassDescriptor mono{1, "a", "a", "a"};
    CHECK(build_template(mono).text ==
          "a photo of a ship, the primary type is a, secondary type is a, final type is a");
}

TEST_CASE("build_template rejects empty level names") {
    ClassDescriptor cls{0, "warship", "", "arleigh-burke"};
    CHECK_THROWS_WITH_AS(build_template(cls), doctest::Contains("empty level name"), std::invalid_argument);
}

TEST_CASE("build_flat_template uses only the final name") {
    ClassDescriptor cls{0, "warship", "destroyer", "arleigh-burke"};
    CHECK(build_flat_template(cls).text == "a photo of a arleigh-burke");
}

TEST_CASE("embed_template is deterministic and word-sensitive") {
    ArchDescriptor arch;
    EncoderParams enc = init_tiny_encoder(4, arch, EncoderKind::text);
    PromptTemplate t1{"a photo of a ship"};
    PromptTemplate t2{"a photo of a boat"};
    TokenEmbeddingSequence a = embed_template(enc, t1);
    TokenEmbeddingSequence b = embed_template(enc, t1);
    CHECK(a.embeddings == b.embeddings);
    TokenEmbeddingSequence c = embed_template(enc, t2);
    CHECK(a.embeddings != c.embeddings);
    CHECK(a.embeddings.rows == 7);  // start + 5 words + end
    for (auto flag : a.learnable) CHECK(flag == 0);
}

TEST_CASE("embed_template marks the class-name tokens as the summary span") {
    ArchDescriptor arch;
    EncoderParams enc = init_tiny_encoder(4, arch, EncoderKind::text);

    SUBCASE("hierarchical template") {
        ClassDescriptor cls{0, "warship", "destroyer", "arleigh burke"};
        TokenEmbeddingSequence seq = embed_template(enc, build_template(cls));
        // [start] a photo of a ship the primary type is warship secondary
        // type is destroyer final type is arleigh burke [end]
        REQUIRE(seq.summary.size() == seq.embeddings.rows);
        std::vector<std::size_t> marked;
        for (std::size_t i = 0; i < seq.summary.size(); ++i)
            if (seq.summary[i]) marked.push_back(i);
        CHECK(marked == std::vector<std::size_t>{10, 14, 18, 19});
    }
    SUBCASE("a name that repeats a boilerplate word still marks its own slot") {
        ClassDescriptor cls{0, "ship", "a", "type"};
        TokenEmbeddingSequence seq = embed_template(enc, build_template(cls));
        std::vector<std::size_t> marked;
        for (std::size_t i = 0; i < seq.summary.size(); ++i)
            if (seq.summary[i]) marked.push_back(i);
        CHECK(marked == std::vector<std::size_t>{10, 14, 18});
    }
    SUBCASE("flat template marks the final name") {
        ClassDescriptor cls{0, "warship", "destroyer", "nimitz"};
        TokenEmbeddingSequence seq = embed_template(enc, build_flat_template(cls));
        // [start] a photo of a nimitz [end]
        std::vector<std::size_t> marked;
        for (std::size_t i = 0; i < seq.summary.size(); ++i)
            if (seq.summary[i]) marked.push_back(i);
        CHECK(marked == std::vector<std::size_t>{5});
    }
}

TEST_CASE("embed_template overflows on a 100-word template with window 32") {
    ArchDescriptor arch;
    arch.context_window = 32;
    EncoderParams enc = init_tiny_encoder(4, arch, EncoderKind::text);
    std::string text;
    for (int i = 0; i < 100; ++i) text += "word" + std::to_string(i) + " ";
    CHECK_THROWS_WITH_AS(embed_template(enc, PromptTemplate{text}), doctest::Contains("context overflow"),
                         std::invalid_argument);
}

TEST_CASE("init_context draws the configured shape deterministically") {
    ContextVectors a = init_context(16, 16, 5);
    CHECK(a.v.rows == 16);
    CHECK(a.v.cols == 16);
    ContextVectors b = init_context(16, 16, 5);
    CHECK(a == b);
    ContextVectors single = init_context(1, 8, 5);
    CHECK(single.v.rows == 1);
    CHECK_THROWS_AS(init_context(0, 16, 5), std::invalid_argument);
}

namespace {

TokenEmbeddingSequence small_template(const EncoderParams& enc) {
    return embed_template(enc, PromptTemplate{"a photo of a ship"});
}

}  // namespace

TEST_CASE("assemble_prompt") {
    ArchDescriptor arch;
    EncoderParams enc = init_tiny_encoder(4, arch, EncoderKind::text);
    TokenEmbeddingSequence tmpl = small_template(enc);
    const int m = 4;
    const auto d_t = static_cast<std::size_t>(arch.model_dim);

    SUBCASE("zero delta reproduces the context vectors exactly") {
        ContextVectors ctx = init_context(m, arch.model_dim, 7);
        Vec delta(d_t, 0.0);
        PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
        for (int i = 0; i < m; ++i)
            for (std::size_t k = 0; k < d_t; ++k) CHECK(p.seq.embeddings.at(i, k) == ctx.v.at(i, k));
    }

    SUBCASE("zero context broadcasts delta to every position") {
        ContextVectors ctx;
        ctx.v = Mat(m, d_t);
        Vec delta(d_t);
        Rng rng(3);
        for (auto& v : delta) v = rng.normal(1.0);
        PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
        for (int i = 0; i < m; ++i)
            for (std::size_t k = 0; k < d_t; ++k) CHECK(p.seq.embeddings.at(i, k) == delta[k]);
    }

    SUBCASE("random case matches element-wise addition") {
        ContextVectors ctx = init_context(m, arch.model_dim, 7);
        Vec delta(d_t);
        Rng rng(9);
        for (auto& v : delta) v = rng.normal(0.5);
        PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
        for (int i = 0; i < m; ++i)
            for (std::size_t k = 0; k < d_t; ++k)
                CHECK(p.seq.embeddings.at(i, k) == ctx.v.at(i, k) + delta[k]);
    }

    SUBCASE("delta cancels in pairwise position differences") {
        ContextVectors ctx = init_context(m, arch.model_dim, 7);
        Vec delta(d_t);
        Rng rng(11);
        for (auto& v : delta) v = rng.normal(0.5);
        PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
        for (std::size_t k = 0; k < d_t; ++k) {
            const double lhs = p.seq.embeddings.at(0, k) - p.seq.embeddings.at(3, k);
            const double rhs = ctx.v.at(0, k) - ctx.v.at(3, k);
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        }
    }

    SUBCASE("template suffix is appended bit-identically and flags are set") {
        ContextVectors ctx = init_context(m, arch.model_dim, 7);
        Vec delta(d_t, 0.25);
        PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
        CHECK(p.seq.embeddings.rows == static_cast<std::size_t>(m) + tmpl.embeddings.rows);
        for (std::size_t i = 0; i < tmpl.embeddings.rows; ++i)
            for (std::size_t k = 0; k < d_t; ++k)
                CHECK(p.seq.embeddings.at(m + i, k) == tmpl.embeddings.at(i, k));
        for (int i = 0; i < m; ++i) CHECK(p.seq.learnable[static_cast<std::size_t>(i)] == 1);
        for (std::size_t i = m; i < p.seq.learnable.size(); ++i) CHECK(p.seq.learnable[i] == 0);
    }

    SUBCASE("dimension mismatch and overflow are rejected") {
        ContextVectors ctx = init_context(m, arch.model_dim, 7);
        Vec wrong(static_cast<std::size_t>(arch.model_dim) + 1, 0.0);
        CHECK_THROWS_WITH_AS(assemble_prompt(ctx, wrong, tmpl, arch.context_window),
                             doctest::Contains("dimension mismatch"), std::invalid_argument);
        Vec delta(d_t, 0.0);
        CHECK_THROWS_WITH_AS(assemble_prompt(ctx, delta, tmpl, 8), doctest::Contains("context overflow"),
                             std::invalid_argument);
    }
}

TEST_CASE("loss gradients reach the context vectors") {
    ArchDescriptor arch;
    EncoderParams enc = init_tiny_encoder(4, arch, EncoderKind::text);
    TokenEmbeddingSequence tmpl = small_template(enc);
    const int m = 4;
    ContextVectors ctx = init_context(m, arch.model_dim, 7);
    Vec delta(static_cast<std::size_t>(arch.model_dim), 0.0);

    Rng rng(55);
    Vec u(static_cast<std::size_t>(arch.output_dim));
    for (auto& v : u) v = rng.normal(1.0);

    auto objective = [&](const ContextVectors& c) {
        PromptTokens p = assemble_prompt(c, delta, tmpl, arch.context_window);
        Vec f = encode_text(enc, p.seq);
        double s = 0.0;
        for (std::size_t o = 0; o < u.size(); ++o) s += u[o] * f[o];
        return s;
    };

    PromptTokens p = assemble_prompt(ctx, delta, tmpl, arch.context_window);
    TextTrace trace;
    encode_text_traced(enc, p.seq, trace);
    Mat d_input = encode_text_backward(enc, trace, u);

    const double h = 1e-6;
    Rng pick(77);
    int nonzero = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t i = pick.bounded(static_cast<std::size_t>(m));
        const std::size_t k = pick.bounded(static_cast<std::size_t>(arch.model_dim));
        ContextVectors plus = ctx, minus = ctx;
        plus.v.at(i, k) += h;
        minus.v.at(i, k) -= h;
        const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
        const double an = d_input.at(i, k);  // position i is context vector i
        if (std::fabs(an) > 1e-12) ++nonzero;
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        CHECK(std::fabs(fd - an) / denom <= 1e-4);
    }
    CHECK(nonzero > 0);
}
