#include "hpt/biasnets.hpp"

#include <algorithm>
#include <stdexcept>

namespace hpt {

BottleneckParams init_bottleneck(int in, int out, std::uint64_t seed, bool zero_last) {
    if (in < 1 || out < 1) throw std::invalid_argument("bottleneck dims must be positive");
    const int hidden = std::max(1, in / 16);
    BottleneckParams p;
    p.w1 = Mat(static_cast<std::size_t>(hidden), static_cast<std::size_t>(in));
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2 = Mat(static_cast<std::size_t>(out), static_cast<std::size_t>(hidden));
    p.b2.assign(static_cast<std::size_t>(out), 0.0);
    Rng rng(seed);
    fill_normal(p.w1, rng, 0.02);
    fill_normal(p.b1, rng, 0.02);
    if (!zero_last) {
        fill_normal(p.w2, rng, 0.02);
        fill_normal(p.b2, rng, 0.02);
    }
    return p;
}

Vec bottleneck_forward_cached(const BottleneckParams& params, const Vec& x, BottleneckCache& cache) {
    const auto in = static_cast<std::size_t>(params.in_dim());
    const auto hidden = static_cast<std::size_t>(params.hidden_dim());
    const auto out = static_cast<std::size_t>(params.out_dim());
    if (x.size() != in)
        throw std::invalid_argument("dimension mismatch: bottleneck input has " + std::to_string(x.size()) +
                                    " entries, expected " + std::to_string(in));
    cache.input = x;
    cache.pre_act.assign(hidden, 0.0);
    cache.hidden.assign(hidden, 0.0);
    for (std::size_t h = 0; h < hidden; ++h) {
        const double* w = params.w1.row(h);
        double acc = params.b1[h];
        for (std::size_t k = 0; k < in; ++k) acc += w[k] * x[k];
        cache.pre_act[h] = acc;
        cache.hidden[h] = acc > 0.0 ? acc : 0.0;
    }
    Vec y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const double* w = params.w2.row(o);
        double acc = params.b2[o];
        for (std::size_t h = 0; h < hidden; ++h) acc += w[h] * cache.hidden[h];
        y[o] = acc;
    }
    return y;
}

Vec bottleneck_forward(const BottleneckParams& params, const Vec& x) {
    BottleneckCache cache;
    return bottleneck_forward_cached(params, x, cache);
}

BottleneckGrads bottleneck_backward(const BottleneckParams& params, const BottleneckCache& cache,
                                    const Vec& d_out) {
    const auto in = static_cast<std::size_t>(params.in_dim());
    const auto hidden = static_cast<std::size_t>(params.hidden_dim());
    const auto out = static_cast<std::size_t>(params.out_dim());
    if (d_out.size() != out) throw std::invalid_argument("dimension mismatch: d_out");

    BottleneckGrads g;
    g.w1 = Mat(hidden, in);
    g.b1.assign(hidden, 0.0);
    g.w2 = Mat(out, hidden);
    g.b2 = d_out;
    g.input.assign(in, 0.0);

    Vec d_hidden(hidden, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const double go = d_out[o];
        double* gw2 = g.w2.row(o);
        const double* w2 = params.w2.row(o);
        for (std::size_t h = 0; h < hidden; ++h) {
            gw2[h] = go * cache.hidden[h];
            d_hidden[h] += go * w2[h];
        }
    }
    for (std::size_t h = 0; h < hidden; ++h) {
        const double dpre = cache.pre_act[h] > 0.0 ? d_hidden[h] : 0.0;
        g.b1[h] = dpre;
        double* gw1 = g.w1.row(h);
        const double* w1 = params.w1.row(h);
        for (std::size_t k = 0; k < in; ++k) {
            gw1[k] = dpre * cache.input[k];
            g.input[k] += dpre * w1[k];
        }
    }
    return g;
}

Vec text_bias(const BottleneckParams& remote_net, const Vec& rs_pooled) {
    return bottleneck_forward(remote_net, rs_pooled);
}

Vec fuse_image_feature(const Vec& clip_pooled, const BottleneckParams& visual_net, const Vec& rs_pooled) {
    Vec bias = bottleneck_forward(visual_net, rs_pooled);
    if (bias.size() != clip_pooled.size())
        throw std::invalid_argument("dimension mismatch: visual net output vs pooled feature");
    Vec fused = clip_pooled;
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += bias[i];
    return fused;
}

}  // namespace hpt
