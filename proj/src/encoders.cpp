#include "hpt/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "hpt/container.hpp"

namespace hpt {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
// embeddings are drawn at std 0.02 and rescaled to unit variance on entry
constexpr double kInitStd = 0.02;
constexpr double kEmbedScale = 1.0 / kInitStd;

double gelu(double u) { return u * 0.5 * std::erfc(-u * 0.7071067811865475); }

double gelu_grad(double u) {
    double phi_cdf = 0.5 * std::erfc(-u * 0.7071067811865475);
    double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * u * u);
    return phi_cdf + u * phi_pdf;
}

// y = x * W^T + b, W is (out, in)
void linear_forward(const Mat& x, const Mat& w, const Vec& b, Mat& y) {
    const std::size_t out = w.rows, in = w.cols;
    y.rows = x.rows;
    y.cols = out;
    y.a.resize(x.rows * out);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w.row(o);
            double acc = b[o];
            for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xi[k];
            yi[o] = acc;
        }
    }
}

// dx += dy * W
void linear_backward_input(const Mat& dy, const Mat& w, Mat& dx) {
    const std::size_t out = w.rows, in = w.cols;
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = dy.row(i);
        double* dxi = dx.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dyi[o];
            if (g == 0.0) continue;
            const double* wo = w.row(o);
            for (std::size_t k = 0; k < in; ++k) dxi[k] += g * wo[k];
        }
    }
}

void softmax_row(double* row, std::size_t n) {
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

void resize(Mat& m, std::size_t r, std::size_t c) {
    m.rows = r;
    m.cols = c;
    m.a.assign(r * c, 0.0);
}

// scale to unit variance (norm sqrt(dim)); returns the original norm
double unit_variance_scale(Vec& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 1e-30) {
        const double target = std::sqrt(static_cast<double>(v.size()));
        for (auto& x : v) x = x / n * target;
    }
    return n;
}

// One residual transformer block (norm-free), writing activations into the trace.
void block_forward(const BlockParams& bp, int n_heads, Mat& x, BlockTrace& t, std::vector<Mat>* attn_out) {
    const std::size_t len = x.rows, dim = x.cols;
    const std::size_t hd = dim / static_cast<std::size_t>(n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    t.x_in = x;

    Mat qkv;
    linear_forward(t.x_in, bp.w_qkv, bp.b_qkv, qkv);
    resize(t.q, len, dim);
    resize(t.k, len, dim);
    resize(t.v, len, dim);
    for (std::size_t i = 0; i < len; ++i) {
        const double* src = qkv.row(i);
        std::copy(src, src + dim, t.q.row(i));
        std::copy(src + dim, src + 2 * dim, t.k.row(i));
        std::copy(src + 2 * dim, src + 3 * dim, t.v.row(i));
    }

    t.attn.resize(static_cast<std::size_t>(n_heads));
    resize(t.ctx, len, dim);
    for (int h = 0; h < n_heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * hd;
        Mat& p = t.attn[static_cast<std::size_t>(h)];
        resize(p, len, len);
        for (std::size_t i = 0; i < len; ++i) {
            const double* qi = t.q.row(i) + off;
            double* pi = p.row(i);
            for (std::size_t j = 0; j < len; ++j) {
                const double* kj = t.k.row(j) + off;
                double acc = 0.0;
                for (std::size_t m = 0; m < hd; ++m) acc += qi[m] * kj[m];
                pi[j] = acc * scale;
            }
            softmax_row(pi, len);
        }
        for (std::size_t i = 0; i < len; ++i) {
            const double* pi = p.row(i);
            double* ci = t.ctx.row(i) + off;
            for (std::size_t j = 0; j < len; ++j) {
                const double w = pi[j];
                const double* vj = t.v.row(j) + off;
                for (std::size_t m = 0; m < hd; ++m) ci[m] += w * vj[m];
            }
        }
    }
    if (attn_out) *attn_out = t.attn;

    Mat o;
    linear_forward(t.ctx, bp.w_out, bp.b_out, o);
    resize(t.x_mid, len, dim);
    for (std::size_t i = 0; i < x.a.size(); ++i) t.x_mid.a[i] = t.x_in.a[i] + o.a[i];

    linear_forward(t.x_mid, bp.w_ff1, bp.b_ff1, t.u);
    Mat gmat;
    resize(gmat, len, t.u.cols);
    for (std::size_t i = 0; i < t.u.a.size(); ++i) gmat.a[i] = gelu(t.u.a[i]);
    Mat f;
    linear_forward(gmat, bp.w_ff2, bp.b_ff2, f);
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] = t.x_mid.a[i] + f.a[i];
}

// Reverse of block_forward; consumes and replaces dx.
void block_backward(const BlockParams& bp, int n_heads, const BlockTrace& t, Mat& dx) {
    const std::size_t len = dx.rows, dim = dx.cols;
    const std::size_t hd = dim / static_cast<std::size_t>(n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // FFN half: x_out = x_mid + W2 gelu(W1 x_mid + b1) + b2
    Mat dg;
    resize(dg, len, t.u.cols);
    linear_backward_input(dx, bp.w_ff2, dg);
    for (std::size_t i = 0; i < dg.a.size(); ++i) dg.a[i] *= gelu_grad(t.u.a[i]);
    Mat dx_mid = dx;  // residual path
    linear_backward_input(dg, bp.w_ff1, dx_mid);

    // attention half: x_mid = x_in + W_out ctx + b_out
    Mat dctx;
    resize(dctx, len, dim);
    linear_backward_input(dx_mid, bp.w_out, dctx);

    Mat dqkv;
    resize(dqkv, len, 3 * dim);
    for (int h = 0; h < n_heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * hd;
        const Mat& p = t.attn[static_cast<std::size_t>(h)];
        Mat dp;
        resize(dp, len, len);
        for (std::size_t i = 0; i < len; ++i) {
            const double* dci = dctx.row(i) + off;
            double* dpi = dp.row(i);
            for (std::size_t j = 0; j < len; ++j) {
                const double* vj = t.v.row(j) + off;
                double acc = 0.0;
                for (std::size_t m = 0; m < hd; ++m) acc += dci[m] * vj[m];
                dpi[j] = acc;
            }
            // dV accumulation
            const double* pi = p.row(i);
            for (std::size_t j = 0; j < len; ++j) {
                const double w = pi[j];
                double* dvj = dqkv.row(j) + 2 * dim + off;
                for (std::size_t m = 0; m < hd; ++m) dvj[m] += w * dci[m];
            }
        }
        // softmax backward then dQ, dK
        for (std::size_t i = 0; i < len; ++i) {
            const double* pi = p.row(i);
            double* dpi = dp.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += dpi[j] * pi[j];
            for (std::size_t j = 0; j < len; ++j) dpi[j] = pi[j] * (dpi[j] - dot);
        }
        for (std::size_t i = 0; i < len; ++i) {
            const double* dpi = dp.row(i);
            double* dqi = dqkv.row(i) + off;
            for (std::size_t j = 0; j < len; ++j) {
                const double s = dpi[j] * scale;
                if (s == 0.0) continue;
                const double* kj = t.k.row(j) + off;
                double* dkj = dqkv.row(j) + dim + off;
                const double* qi = t.q.row(i) + off;
                for (std::size_t m = 0; m < hd; ++m) {
                    dqi[m] += s * kj[m];
                    dkj[m] += s * qi[m];
                }
            }
        }
    }

    linear_backward_input(dqkv, bp.w_qkv, dx_mid);
    dx = std::move(dx_mid);
}

void run_stack(const EncoderParams& params, Mat& seq, TextTrace& trace, std::vector<Mat>* attn_last) {
    trace.length = seq.rows;
    trace.blocks.resize(params.blocks.size());
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        std::vector<Mat>* capture = (b + 1 == params.blocks.size()) ? attn_last : nullptr;
        block_forward(params.blocks[b], params.arch.n_heads, seq, trace.blocks[b], capture);
    }
    trace.x_final = seq;
}

EncoderOutput encode_visual_raw(const EncoderParams& params, const Image& image);

void refresh_blank_reference(EncoderParams& p) {
    if (p.kind != EncoderKind::visual) return;
    p.ref_pooled.clear();
    p.ref_tokens = Mat();
    EncoderOutput blank = encode_visual_raw(p, Image(p.arch.image_size, p.arch.image_size));
    p.ref_pooled = blank.pooled;
    p.ref_tokens = blank.tokens;
}

void check_arch(const ArchDescriptor& a, EncoderKind kind) {
    if (a.patch_size < 1 || a.image_size < 1 || a.n_blocks < 1 || a.n_heads < 1 || a.model_dim < 1 ||
        a.output_dim < 1)
        throw std::invalid_argument("invalid descriptor: dimensions must be positive");
    if (a.model_dim % a.n_heads != 0)
        throw std::invalid_argument("invalid descriptor: model_dim not divisible by n_heads");
    if (kind == EncoderKind::visual && a.image_size % a.patch_size != 0)
        throw std::invalid_argument("invalid descriptor: image_size not divisible by patch_size");
    if (kind == EncoderKind::text && (a.text_vocab < 4 || a.context_window < 1))
        throw std::invalid_argument("invalid descriptor: text_vocab/context_window too small");
}

}  // namespace

EncoderParams init_tiny_encoder(std::uint64_t seed, const ArchDescriptor& arch, EncoderKind kind) {
    check_arch(arch, kind);
    EncoderParams p;
    p.kind = kind;
    p.arch = arch;
    Rng rng(seed);
    const auto dim = static_cast<std::size_t>(arch.model_dim);
    const double std0 = 0.02;

    if (kind == EncoderKind::visual) {
        p.patch_embed = Mat(dim, static_cast<std::size_t>(3) * arch.patch_size * arch.patch_size);
        fill_normal(p.patch_embed, rng, std0);
        p.patch_bias.assign(dim, 0.0);
        // class-token slot starts empty: its final state is purely what
        // attention reads from the image
        p.class_token.assign(dim, 0.0);
        p.pos_embed = Mat(static_cast<std::size_t>(arch.n_patches()) + 1, dim);
        fill_normal(p.pos_embed, rng, std0);
        for (std::size_t k = 0; k < dim; ++k) p.pos_embed.at(0, k) = 0.0;
    } else {
        p.token_embed = Mat(static_cast<std::size_t>(arch.text_vocab), dim);
        fill_normal(p.token_embed, rng, std0);
        p.text_pos_embed = Mat(static_cast<std::size_t>(arch.context_window), dim);
        fill_normal(p.text_pos_embed, rng, std0);
    }

    p.blocks.resize(static_cast<std::size_t>(arch.n_blocks));
    for (auto& b : p.blocks) {
        b.w_qkv = Mat(3 * dim, dim);
        fill_normal(b.w_qkv, rng, std0);
        b.b_qkv.assign(3 * dim, 0.0);
        b.w_out = Mat(dim, dim);
        fill_normal(b.w_out, rng, std0);
        b.b_out.assign(dim, 0.0);
        b.w_ff1 = Mat(4 * dim, dim);
        fill_normal(b.w_ff1, rng, std0);
        b.b_ff1.assign(4 * dim, 0.0);
        b.w_ff2 = Mat(dim, 4 * dim);
        fill_normal(b.w_ff2, rng, std0);
        b.b_ff2.assign(dim, 0.0);
    }
    p.proj = Mat(static_cast<std::size_t>(arch.output_dim), dim);
    fill_normal(p.proj, rng, std0);
    refresh_blank_reference(p);
    return p;
}

namespace {

// raw (unreferenced, unnormalized) visual forward
EncoderOutput encode_visual_raw(const EncoderParams& params, const Image& image) {
    const auto& arch = params.arch;
    if (image.height != arch.image_size || image.width != arch.image_size)
        throw std::invalid_argument("shape mismatch: image must be " + std::to_string(arch.image_size) + "x" +
                                    std::to_string(arch.image_size));
    if (image.height % arch.patch_size != 0 || image.width % arch.patch_size != 0)
        throw std::invalid_argument("shape mismatch: image not divisible by patch size");
    for (double v : image.px)
        if (!std::isfinite(v)) throw std::invalid_argument("image pixels must be finite");

    const int grid = arch.grid();
    const int n = arch.n_patches();
    const int ps = arch.patch_size;
    const auto dim = static_cast<std::size_t>(arch.model_dim);
    const double embed_scale = kEmbedScale;

    Mat seq(static_cast<std::size_t>(n) + 1, dim);
    for (std::size_t k = 0; k < dim; ++k) seq.at(0, k) = params.class_token[k] + params.pos_embed.at(0, k);

    Vec patch(static_cast<std::size_t>(3) * ps * ps);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            std::size_t idx = 0;
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < ps; ++dy)
                    for (int dxp = 0; dxp < ps; ++dxp) patch[idx++] = image.at(c, py * ps + dy, px * ps + dxp);
            const std::size_t pos = static_cast<std::size_t>(py) * grid + px + 1;
            double* out = seq.row(pos);
            for (std::size_t o = 0; o < dim; ++o) {
                const double* w = params.patch_embed.row(o);
                double acc = params.patch_bias[o];
                for (std::size_t k = 0; k < patch.size(); ++k) acc += w[k] * patch[k];
                out[o] = acc * embed_scale + params.pos_embed.at(pos, o);
            }
        }

    TextTrace scratch;
    EncoderOutput out;
    run_stack(params, seq, scratch, &out.attn_last);

    const auto d = static_cast<std::size_t>(arch.output_dim);
    out.pooled.assign(d, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
        const double* w = params.proj.row(o);
        const double* h = scratch.x_final.row(0);
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) acc += w[k] * h[k];
        out.pooled[o] = acc;
    }
    out.tokens = Mat(static_cast<std::size_t>(n), d);
    for (int i = 0; i < n; ++i) {
        const double* h = scratch.x_final.row(static_cast<std::size_t>(i) + 1);
        double* t = out.tokens.row(static_cast<std::size_t>(i));
        for (std::size_t o = 0; o < d; ++o) {
            const double* w = params.proj.row(o);
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) acc += w[k] * h[k];
            t[o] = acc;
        }
    }
    return out;
}

}  // namespace

void tie_patch_embedding_channels(EncoderParams& params) {
    if (params.kind != EncoderKind::visual) throw std::invalid_argument("needs a visual encoder");
    const int ps = params.arch.patch_size;
    const auto per_channel = static_cast<std::size_t>(ps) * ps;
    for (std::size_t o = 0; o < params.patch_embed.rows; ++o) {
        double* row = params.patch_embed.row(o);
        for (int c = 0; c < 3; ++c) {
            const double w = row[static_cast<std::size_t>(c) * per_channel];
            for (std::size_t k = 0; k < per_channel; ++k)
                row[static_cast<std::size_t>(c) * per_channel + k] = w / static_cast<double>(per_channel);
        }
    }
    refresh_blank_reference(params);
}

EncoderOutput encode_visual(const EncoderParams& params, const Image& image) {
    if (params.kind != EncoderKind::visual) throw std::invalid_argument("encode_visual needs a visual encoder");
    EncoderOutput out = encode_visual_raw(params, image);
    if (params.ref_pooled.size() == out.pooled.size()) {
        for (std::size_t o = 0; o < out.pooled.size(); ++o) out.pooled[o] -= params.ref_pooled[o];
        for (std::size_t i = 0; i < out.tokens.rows; ++i) {
            double* t = out.tokens.row(i);
            const double* r = params.ref_tokens.row(i);
            for (std::size_t o = 0; o < out.tokens.cols; ++o) t[o] -= r[o];
        }
    }
    // unit-variance features, the usual contrastive-encoder convention
    unit_variance_scale(out.pooled);
    Vec token(out.tokens.cols, 0.0);
    for (std::size_t i = 0; i < out.tokens.rows; ++i) {
        double* t = out.tokens.row(i);
        std::copy(t, t + out.tokens.cols, token.begin());
        unit_variance_scale(token);
        std::copy(token.begin(), token.end(), t);
    }
    return out;
}

Vec encode_text_traced(const EncoderParams& params, const TokenEmbeddingSequence& seq, TextTrace& trace) {
    if (params.kind != EncoderKind::text) throw std::invalid_argument("encode_text needs a text encoder");
    const auto& arch = params.arch;
    const std::size_t len = seq.embeddings.rows;
    if (len == 0) throw std::invalid_argument("empty token sequence");
    if (len > static_cast<std::size_t>(arch.context_window))
        throw std::invalid_argument("sequence too long: " + std::to_string(len) + " > context window " +
                                    std::to_string(arch.context_window));
    if (seq.embeddings.cols != static_cast<std::size_t>(arch.model_dim))
        throw std::invalid_argument("shape mismatch: embedding dim");

    const double embed_scale = kEmbedScale;
    Mat x = seq.embeddings;
    for (std::size_t i = 0; i < len; ++i) {
        const double* pe = params.text_pos_embed.row(i);
        double* xi = x.row(i);
        for (std::size_t k = 0; k < x.cols; ++k) xi[k] = xi[k] * embed_scale + pe[k];
    }
    run_stack(params, x, trace, nullptr);

    // The feature summarizes the class-name tokens when the sequence marks
    // them; the other positions (context vectors, boilerplate words) steer it
    // through attention but cannot drown the name footprint out of the pool.
    // Unmarked sequences fall back to the non-learnable span, then everything.
    trace.pooled.assign(len, 1);
    std::size_t pooled_count = len;
    auto use_mask = [&](const std::vector<std::uint8_t>& mask, bool invert) {
        if (mask.size() != len) return false;
        std::size_t n = 0;
        for (std::size_t i = 0; i < len; ++i)
            if (static_cast<bool>(mask[i]) != invert) ++n;
        if (n == 0) return false;
        pooled_count = n;
        for (std::size_t i = 0; i < len; ++i) trace.pooled[i] = (static_cast<bool>(mask[i]) != invert) ? 1 : 0;
        return true;
    };
    if (!use_mask(seq.summary, false)) use_mask(seq.learnable, true);

    const auto d = static_cast<std::size_t>(arch.output_dim);
    const auto dim = static_cast<std::size_t>(arch.model_dim);
    Vec mean(dim, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
        if (!trace.pooled[i]) continue;
        const double* h = trace.x_final.row(i);
        for (std::size_t k = 0; k < dim; ++k) mean[k] += h[k];
    }
    for (auto& v : mean) v /= static_cast<double>(pooled_count);
    Vec feature(d, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
        const double* w = params.proj.row(o);
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) acc += w[k] * mean[k];
        feature[o] = acc;
    }
    trace.feature_norm = unit_variance_scale(feature);
    trace.unit_feature = feature;
    return feature;
}

Vec encode_text(const EncoderParams& params, const TokenEmbeddingSequence& seq) {
    TextTrace trace;
    return encode_text_traced(params, seq, trace);
}

Mat encode_text_backward(const EncoderParams& params, const TextTrace& trace, const Vec& d_feature) {
    const auto dim = static_cast<std::size_t>(params.arch.model_dim);
    const auto d = static_cast<std::size_t>(params.arch.output_dim);
    if (d_feature.size() != d) throw std::invalid_argument("shape mismatch: d_feature");
    const std::size_t len = trace.length;

    // through the unit-variance scaling y = u * (sqrt(d)/|u|):
    // du = (dy - y (y . dy)/d) * sqrt(d) / |u|
    Vec d_raw = d_feature;
    if (trace.feature_norm > 1e-30) {
        const double target = std::sqrt(static_cast<double>(d));
        double dot = 0.0;
        for (std::size_t o = 0; o < d; ++o) dot += trace.unit_feature[o] * d_feature[o];
        dot /= static_cast<double>(d);
        for (std::size_t o = 0; o < d; ++o)
            d_raw[o] = (d_feature[o] - trace.unit_feature[o] * dot) * target / trace.feature_norm;
    }

    // feature = proj * mean(final positions)
    Vec dmean(dim, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
        const double g = d_raw[o];
        if (g == 0.0) continue;
        const double* w = params.proj.row(o);
        for (std::size_t k = 0; k < dim; ++k) dmean[k] += g * w[k];
    }
    Mat dx;
    resize(dx, len, dim);
    std::size_t pooled_count = 0;
    for (std::size_t i = 0; i < len; ++i) pooled_count += trace.pooled[i] ? 1 : 0;
    const double inv_len = 1.0 / static_cast<double>(pooled_count);
    for (std::size_t i = 0; i < len; ++i) {
        if (!trace.pooled[i]) continue;
        double* row = dx.row(i);
        for (std::size_t k = 0; k < dim; ++k) row[k] = dmean[k] * inv_len;
    }

    for (std::size_t b = params.blocks.size(); b-- > 0;)
        block_backward(params.blocks[b], params.arch.n_heads, trace.blocks[b], dx);

    // inputs entered as embedding * scale + position embedding
    for (auto& g : dx.a) g *= kEmbedScale;
    return dx;
}

Mat bilinear_upsample(const Mat& grid, int out_h, int out_w) {
    const auto n_r = static_cast<int>(grid.rows);
    const auto n_c = static_cast<int>(grid.cols);
    const double cell_h = static_cast<double>(out_h) / n_r;
    const double cell_w = static_cast<double>(out_w) / n_c;
    // integer anchor inside each cell; samples reproduce exactly there
    const double off_y = std::floor((cell_h - 1.0) / 2.0);
    const double off_x = std::floor((cell_w - 1.0) / 2.0);

    Mat out(static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w));
    for (int y = 0; y < out_h; ++y) {
        double gy = (static_cast<double>(y) - off_y) / cell_h;
        gy = std::clamp(gy, 0.0, static_cast<double>(n_r - 1));
        int y0 = static_cast<int>(std::floor(gy));
        int y1 = std::min(y0 + 1, n_r - 1);
        double ty = gy - y0;
        for (int x = 0; x < out_w; ++x) {
            double gx = (static_cast<double>(x) - off_x) / cell_w;
            gx = std::clamp(gx, 0.0, static_cast<double>(n_c - 1));
            int x0 = static_cast<int>(std::floor(gx));
            int x1 = std::min(x0 + 1, n_c - 1);
            double tx = gx - x0;
            double v = (1.0 - ty) * ((1.0 - tx) * grid.at(y0, x0) + tx * grid.at(y0, x1)) +
                       ty * ((1.0 - tx) * grid.at(y1, x0) + tx * grid.at(y1, x1));
            out.at(y, x) = v;
        }
    }
    return out;
}

Mat attention_heatmap(const EncoderOutput& output, int out_h, int out_w) {
    if (output.attn_last.empty()) throw std::invalid_argument("output carries no attention");
    const std::size_t n_plus_1 = output.attn_last.front().rows;
    const std::size_t n = n_plus_1 - 1;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw std::invalid_argument("attention grid is not square");

    // class-token row, averaged over heads, class self-attention dropped
    Vec weights(n, 0.0);
    for (const auto& head : output.attn_last) {
        if (head.rows != n_plus_1 || head.cols != n_plus_1) throw std::invalid_argument("attention shape mismatch");
        for (std::size_t j = 0; j < n; ++j) weights[j] += head.at(0, j + 1);
    }
    for (auto& w : weights) w /= static_cast<double>(output.attn_last.size());

    double lo = weights[0], hi = weights[0];
    for (double w : weights) {
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    Mat gridmap(side, side);
    if (hi > lo) {
        for (std::size_t j = 0; j < n; ++j) gridmap.a[j] = (weights[j] - lo) / (hi - lo);
    }  // constant attention normalizes to all-zeros
    return bilinear_upsample(gridmap, out_h, out_w);
}

std::uint64_t EncoderParams::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for_each_array([&](const std::string& name, const Vec& data) {
        h = fnv1a64_bytes(name.data(), name.size(), h);
        h = fnv1a64_bytes(data.data(), data.size() * sizeof(double), h);
    });
    return h;
}

void append_encoder_arrays(const EncoderParams& params, const std::string& prefix, std::vector<NamedArray>& arrays) {
    const auto& a = params.arch;
    arrays.push_back(NamedArray{prefix + "meta",
                                {10},
                                {params.kind == EncoderKind::visual ? 0.0 : 1.0, static_cast<double>(a.patch_size),
                                 static_cast<double>(a.image_size), static_cast<double>(a.n_blocks),
                                 static_cast<double>(a.n_heads), static_cast<double>(a.model_dim),
                                 static_cast<double>(a.output_dim), static_cast<double>(a.text_vocab),
                                 static_cast<double>(a.context_window), static_cast<double>(a.aux_output_dim)}});
    params.for_each_array([&](const std::string& name, const Vec& data) {
        arrays.push_back(NamedArray{prefix + name, {data.size()}, data});
    });
}

EncoderParams encoder_from_arrays(const std::vector<NamedArray>& arrays, const std::string& prefix) {
    const auto& meta = find_array(arrays, prefix + "meta");
    if (meta.data.size() != 10) throw std::runtime_error("shape mismatch: " + prefix + "meta");
    ArchDescriptor arch;
    EncoderKind kind = meta.data[0] == 0.0 ? EncoderKind::visual : EncoderKind::text;
    arch.patch_size = static_cast<int>(meta.data[1]);
    arch.image_size = static_cast<int>(meta.data[2]);
    arch.n_blocks = static_cast<int>(meta.data[3]);
    arch.n_heads = static_cast<int>(meta.data[4]);
    arch.model_dim = static_cast<int>(meta.data[5]);
    arch.output_dim = static_cast<int>(meta.data[6]);
    arch.text_vocab = static_cast<int>(meta.data[7]);
    arch.context_window = static_cast<int>(meta.data[8]);
    arch.aux_output_dim = static_cast<int>(meta.data[9]);

    EncoderParams params = init_tiny_encoder(0, arch, kind);
    params.for_each_array_mut([&](const std::string& name, Vec& dst) {
        const auto& src = find_array(arrays, prefix + name);
        if (src.data.size() != dst.size()) throw std::runtime_error("shape mismatch with descriptor: " + name);
        dst = src.data;
    });
    refresh_blank_reference(params);
    return params;
}

void save_weights(const EncoderParams& params, const std::string& path) {
    std::vector<NamedArray> arrays;
    append_encoder_arrays(params, "", arrays);
    write_container(path, arrays);
}

EncoderParams load_weights(const std::string& path) {
    auto arrays = read_container(path);
    return encoder_from_arrays(arrays, "");
}

std::vector<int> tokenize(const std::string& text, int vocab) {
    if (vocab < 4) throw std::invalid_argument("vocab too small");
    const int word_space = vocab - 3;
    std::vector<int> ids;
    ids.push_back(start_token_id(vocab));
    std::string word;
    auto flush = [&]() {
        if (!word.empty()) {
            ids.push_back(static_cast<int>(fnv1a64(word) % static_cast<std::uint64_t>(word_space)));
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            word.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    ids.push_back(end_token_id(vocab));
    return ids;
}

int start_token_id(int vocab) { return vocab - 3; }
int end_token_id(int vocab) { return vocab - 2; }
int pad_token_id(int vocab) { return vocab - 1; }

}  // namespace hpt
