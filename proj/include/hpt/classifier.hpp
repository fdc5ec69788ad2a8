#pragma once

#include <vector>

#include "hpt/common.hpp"

namespace hpt {

struct ClassProbabilities {
    Vec p;
    std::vector<int> class_ids;
    double tau = 0.0;
    Vec logits;  // cosine / tau, kept so the loss can work in log space
};

// Cosine-softmax over candidate classes, computed with max subtraction.
ClassProbabilities class_probabilities(const Vec& image_feat, const std::vector<Vec>& text_feats,
                                       const std::vector<int>& class_ids, double tau);

// -log p(label), computed from logits, never from the normalized probabilities.
double cross_entropy(const ClassProbabilities& probs, int label);

// Argmax class id; ties break toward the smallest class id.
int predict(const ClassProbabilities& probs);

struct ClassifierGrads {
    double loss = 0.0;
    Vec d_image;
    std::vector<Vec> d_text;
};

// Loss plus gradients of cross_entropy(class_probabilities(...)) w.r.t. the
// image feature and every text feature.
ClassifierGrads cross_entropy_backward(const Vec& image_feat, const std::vector<Vec>& text_feats,
                                       const std::vector<int>& class_ids, double tau, int label);

}  // namespace hpt
