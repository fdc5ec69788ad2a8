#include "hpt/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpt {

namespace {

double vec_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double vec_dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vec cosines(const Vec& image_feat, const std::vector<Vec>& text_feats) {
    const double nu = vec_norm(image_feat);
    if (nu == 0.0) throw std::invalid_argument("zero-norm vector: image feature");
    Vec cos(text_feats.size(), 0.0);
    for (std::size_t i = 0; i < text_feats.size(); ++i) {
        if (text_feats[i].size() != image_feat.size())
            throw std::invalid_argument("dimension mismatch: text feature " + std::to_string(i));
        const double nf = vec_norm(text_feats[i]);
        if (nf == 0.0) throw std::invalid_argument("zero-norm vector: text feature " + std::to_string(i));
        cos[i] = vec_dot(image_feat, text_feats[i]) / (nu * nf);
    }
    return cos;
}

Vec softmax_from_logits(const Vec& logits) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    Vec p(logits.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

double log_sum_exp(const Vec& logits) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    return mx + std::log(sum);
}

std::size_t label_index(const std::vector<int>& class_ids, int label) {
    for (std::size_t i = 0; i < class_ids.size(); ++i)
        if (class_ids[i] == label) return i;
    throw std::invalid_argument("label " + std::to_string(label) + " not among candidate classes");
}

}  // namespace

ClassProbabilities class_probabilities(const Vec& image_feat, const std::vector<Vec>& text_feats,
                                       const std::vector<int>& class_ids, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
    if (text_feats.empty() || text_feats.size() != class_ids.size())
        throw std::invalid_argument("class feature/id count mismatch");
    ClassProbabilities out;
    out.class_ids = class_ids;
    out.tau = tau;
    Vec cos = cosines(image_feat, text_feats);
    out.logits.resize(cos.size());
    for (std::size_t i = 0; i < cos.size(); ++i) out.logits[i] = cos[i] / tau;
    out.p = softmax_from_logits(out.logits);
    return out;
}

double cross_entropy(const ClassProbabilities& probs, int label) {
    const std::size_t idx = label_index(probs.class_ids, label);
    return log_sum_exp(probs.logits) - probs.logits[idx];
}

int predict(const ClassProbabilities& probs) {
    if (probs.p.empty()) throw std::invalid_argument("empty probabilities");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.p.size(); ++i) {
        if (probs.p[i] > probs.p[best] ||
            (probs.p[i] == probs.p[best] && probs.class_ids[i] < probs.class_ids[best]))
            best = i;
    }
    return probs.class_ids[best];
}

ClassifierGrads cross_entropy_backward(const Vec& image_feat, const std::vector<Vec>& text_feats,
                                       const std::vector<int>& class_ids, double tau, int label) {
    if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
    const std::size_t n = text_feats.size();
    const std::size_t idx = label_index(class_ids, label);

    const double nu = vec_norm(image_feat);
    if (nu == 0.0) throw std::invalid_argument("zero-norm vector: image feature");
    Vec cos(n, 0.0), nf(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        nf[i] = vec_norm(text_feats[i]);
        if (nf[i] == 0.0) throw std::invalid_argument("zero-norm vector: text feature " + std::to_string(i));
        cos[i] = vec_dot(image_feat, text_feats[i]) / (nu * nf[i]);
    }
    Vec logits(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) logits[i] = cos[i] / tau;
    Vec p = softmax_from_logits(logits);

    ClassifierGrads g;
    g.loss = log_sum_exp(logits) - logits[idx];
    g.d_image.assign(image_feat.size(), 0.0);
    g.d_text.assign(n, Vec(image_feat.size(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double dcos = (p[i] - (i == idx ? 1.0 : 0.0)) / tau;
        const double inv_uf = 1.0 / (nu * nf[i]);
        const double inv_uu = cos[i] / (nu * nu);
        const double inv_ff = cos[i] / (nf[i] * nf[i]);
        const Vec& f = text_feats[i];
        Vec& df = g.d_text[i];
        for (std::size_t k = 0; k < image_feat.size(); ++k) {
            g.d_image[k] += dcos * (f[k] * inv_uf - image_feat[k] * inv_uu);
            df[k] = dcos * (image_feat[k] * inv_uf - f[k] * inv_ff);
        }
    }
    return g;
}

}  // namespace hpt
