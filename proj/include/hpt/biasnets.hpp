#pragma once

#include <cstdint>

#include "hpt/common.hpp"

namespace hpt {

// Two-layer bottleneck (Linear-ReLU-Linear) with hidden width in/16.
struct BottleneckParams {
    Mat w1;  // (h, in)
    Vec b1;
    Mat w2;  // (out, h)
    Vec b2;

    int in_dim() const { return static_cast<int>(w1.cols); }
    int hidden_dim() const { return static_cast<int>(w1.rows); }
    int out_dim() const { return static_cast<int>(w2.rows); }

    bool operator==(const BottleneckParams&) const = default;
};

struct BottleneckCache {
    Vec input;
    Vec pre_act;  // w1 x + b1
    Vec hidden;   // relu(pre_act)
};

struct BottleneckGrads {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
    Vec input;  // gradient w.r.t. the input; discarded by callers feeding frozen features
};

// zero_last zeroes the output layer so the net starts as the zero map.
BottleneckParams init_bottleneck(int in, int out, std::uint64_t seed, bool zero_last);

Vec bottleneck_forward(const BottleneckParams& params, const Vec& x);
Vec bottleneck_forward_cached(const BottleneckParams& params, const Vec& x, BottleneckCache& cache);
BottleneckGrads bottleneck_backward(const BottleneckParams& params, const BottleneckCache& cache, const Vec& d_out);

// Eq: delta = r_theta(pooled auxiliary feature)
Vec text_bias(const BottleneckParams& remote_net, const Vec& rs_pooled);

// Eq: I_x = pooled CLIP feature + Net(pooled auxiliary feature)
Vec fuse_image_feature(const Vec& clip_pooled, const BottleneckParams& visual_net, const Vec& rs_pooled);

}  // namespace hpt
