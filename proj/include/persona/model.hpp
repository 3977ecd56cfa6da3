#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "persona/autograd.hpp"
#include "persona/errors.hpp"
#include "persona/matrix.hpp"

namespace persona {

enum class Pooling { mean, last, gru_lite };

inline const char* to_string(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::last: return "last";
        case Pooling::gru_lite: return "gru_lite";
    }
    return "?";
}

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "last") return Pooling::last;
    if (s == "gru_lite") return Pooling::gru_lite;
    throw config_error("unknown pooling: " + s);
}

struct BackboneSpec {
    std::uint32_t vocab_size = 0;
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 16;
    Pooling pooling = Pooling::mean;

    std::size_t feature_dim() const {
        return pooling == Pooling::gru_lite ? hidden_dim : embed_dim;
    }

    void validate() const {
        if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1)
            throw config_error("BackboneSpec: all dims must be >= 1");
    }
};

/// Shared layers: item embedding table plus, for gru_lite, one minimal
/// gated recurrent cell. Frozen after global training.
struct Backbone {
    BackboneSpec spec;
    ParamTensor embeddings;                 // vocab x embed_dim
    ParamTensor gru_wx, gru_wh, gru_b;      // candidate path (gru_lite only)
    ParamTensor gru_zx, gru_zh, gru_zb;     // update gate   (gru_lite only)

    Backbone() = default;

    Backbone(const BackboneSpec& s, std::uint64_t seed) : spec(s) {
        spec.validate();
        std::mt19937_64 rng(seed);
        embeddings = ParamTensor(xavier_init(spec.vocab_size, spec.embed_dim, rng), "backbone.embeddings");
        if (spec.pooling == Pooling::gru_lite) {
            gru_wx = ParamTensor(xavier_init(spec.embed_dim, spec.hidden_dim, rng), "backbone.gru_wx");
            gru_wh = ParamTensor(xavier_init(spec.hidden_dim, spec.hidden_dim, rng), "backbone.gru_wh");
            gru_b = ParamTensor(Matrix(1, spec.hidden_dim, 0.0), "backbone.gru_b");
            gru_zx = ParamTensor(xavier_init(spec.embed_dim, spec.hidden_dim, rng), "backbone.gru_zx");
            gru_zh = ParamTensor(xavier_init(spec.hidden_dim, spec.hidden_dim, rng), "backbone.gru_zh");
            gru_zb = ParamTensor(Matrix(1, spec.hidden_dim, 0.0), "backbone.gru_zb");
        }
    }

    std::vector<ParamTensor*> trainable() {
        std::vector<ParamTensor*> out{&embeddings};
        if (spec.pooling == Pooling::gru_lite)
            for (ParamTensor* p : {&gru_wx, &gru_wh, &gru_b, &gru_zx, &gru_zh, &gru_zb}) out.push_back(p);
        return out;
    }

    std::vector<const ParamTensor*> tensors() const {
        std::vector<const ParamTensor*> out{&embeddings};
        if (spec.pooling == Pooling::gru_lite)
            for (const ParamTensor* p : {&gru_wx, &gru_wh, &gru_b, &gru_zx, &gru_zh, &gru_zb}) out.push_back(p);
        return out;
    }
};

namespace detail {
inline void check_sequence(const BackboneSpec& spec, const std::vector<std::uint32_t>& seq) {
    if (seq.empty()) throw invalid_input_error("backbone_forward: empty sequence");
    for (auto id : seq)
        if (id >= spec.vocab_size) throw data_error("backbone_forward: item id out of vocabulary");
}
}  // namespace detail

/// Sequence features on the tape. Pass leaves to train the backbone, or
/// constants built from the same tensors to keep it frozen.
inline ag::Value backbone_forward_ag(const Backbone& bb, const ag::Value& emb_table,
                                     const std::vector<ag::Value>& gru_params,
                                     const std::vector<std::uint32_t>& seq) {
    detail::check_sequence(bb.spec, seq);
    switch (bb.spec.pooling) {
        case Pooling::mean:
            return ag::rows_mean(emb_table, seq);
        case Pooling::last:
            return ag::row(emb_table, seq.back());
        case Pooling::gru_lite: {
            const auto& wx = gru_params[0];
            const auto& wh = gru_params[1];
            const auto& b = gru_params[2];
            const auto& zx = gru_params[3];
            const auto& zh = gru_params[4];
            const auto& zb = gru_params[5];
            ag::Value h = ag::constant(Matrix(1, bb.spec.hidden_dim, 0.0));
            for (auto id : seq) {
                ag::Value x = ag::row(emb_table, id);
                ag::Value z = ag::sigmoid(ag::add(ag::add(ag::matmul(x, zx), ag::matmul(h, zh)), zb));
                ag::Value cand = ag::tanh_act(ag::add(ag::add(ag::matmul(x, wx), ag::matmul(h, wh)), b));
                // h <- (1-z)*h + z*cand
                h = ag::add(ag::hadamard(ag::affine(z, -1.0, 1.0), h), ag::hadamard(z, cand));
            }
            return h;
        }
    }
    throw config_error("backbone_forward: bad pooling");
}

inline ag::Value backbone_forward_frozen(const Backbone& bb, const std::vector<std::uint32_t>& seq) {
    ag::Value emb = ag::constant(bb.embeddings.value);
    std::vector<ag::Value> gru;
    if (bb.spec.pooling == Pooling::gru_lite)
        for (const ParamTensor* p : {&bb.gru_wx, &bb.gru_wh, &bb.gru_b, &bb.gru_zx, &bb.gru_zh, &bb.gru_zb})
            gru.push_back(ag::constant(p->value));
    return backbone_forward_ag(bb, emb, gru, seq);
}

/// Plain (no-tape) forward for serving.
inline Matrix backbone_forward(const Backbone& bb, const std::vector<std::uint32_t>& seq) {
    return backbone_forward_frozen(bb, seq).mat();
}

/// Swappable adaptive weights: a stack of bias-free affine layers with ReLU
/// between them (none after the last).
struct AdaptiveLayerSet {
    std::vector<Matrix> layers;

    AdaptiveLayerSet() = default;
    explicit AdaptiveLayerSet(std::vector<Matrix> ls) : layers(std::move(ls)) { validate(); }

    std::size_t layer_count() const { return layers.size(); }
    std::size_t in_dim() const { return layers.front().rows(); }
    std::size_t out_dim() const { return layers.back().cols(); }

    void validate() const {
        if (layers.empty()) throw shape_error("AdaptiveLayerSet: need >= 1 layer");
        for (std::size_t i = 0; i + 1 < layers.size(); ++i)
            if (layers[i].cols() != layers[i + 1].rows())
                throw shape_error("AdaptiveLayerSet: layer " + std::to_string(i) +
                                  " out dim != layer " + std::to_string(i + 1) + " in dim");
    }

    bool same_shapes(const AdaptiveLayerSet& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (!layers[i].same_shape(o.layers[i])) return false;
        return true;
    }

    static AdaptiveLayerSet random(std::size_t in_dim, const std::vector<std::size_t>& widths,
                                   std::mt19937_64& rng) {
        std::vector<Matrix> ls;
        std::size_t d = in_dim;
        for (std::size_t w : widths) {
            ls.push_back(xavier_init(d, w, rng));
            d = w;
        }
        return AdaptiveLayerSet(std::move(ls));
    }
};

inline ag::Value adaptive_forward_ag(const ag::Value& features, const std::vector<ag::Value>& layers) {
    if (layers.empty()) throw shape_error("adaptive_forward: no layers");
    ag::Value h = features;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = ag::matmul(h, layers[i]);
        if (i + 1 < layers.size()) h = ag::relu(h);
    }
    return h;
}

inline Matrix adaptive_forward(const Matrix& features, const AdaptiveLayerSet& adaptive) {
    if (features.cols() != adaptive.in_dim())
        throw shape_error("adaptive_forward: feature dim != first layer in dim");
    std::vector<ag::Value> ls;
    ls.reserve(adaptive.layers.size());
    for (const auto& m : adaptive.layers) ls.push_back(ag::constant(m));
    return adaptive_forward_ag(ag::constant(features), ls).mat();
}

/// Softmax cross-entropy over candidate logits (plain, no tape).
inline double loss_ce(const Matrix& logits, std::size_t target) {
    return ag::cross_entropy(ag::constant(logits), target).scalar();
}

/// One simulated device model: frozen shared backbone plus the currently
/// installed adaptive weights. install_adaptive swaps the whole set
/// atomically; readers see old or new weights, never a mix.
class DeviceModel {
public:
    DeviceModel(std::shared_ptr<const Backbone> backbone, AdaptiveLayerSet adaptive)
        : backbone_(std::move(backbone)),
          adaptive_(std::make_shared<const AdaptiveLayerSet>(std::move(adaptive))) {
        if (backbone_->spec.feature_dim() != adaptive_->in_dim())
            throw shape_error("DeviceModel: backbone output dim != adaptive input dim");
    }

    const Backbone& backbone() const { return *backbone_; }
    std::shared_ptr<const Backbone> backbone_ptr() const { return backbone_; }

    std::shared_ptr<const AdaptiveLayerSet> adaptive() const {
        std::lock_guard<std::mutex> lk(mu_);
        return adaptive_;
    }

    void install_adaptive(AdaptiveLayerSet weights) {
        auto cur = adaptive();
        if (!cur->same_shapes(weights))
            throw protocol_error("install_adaptive: shape mismatch with installed set");
        auto next = std::make_shared<const AdaptiveLayerSet>(std::move(weights));
        std::lock_guard<std::mutex> lk(mu_);
        adaptive_ = std::move(next);
    }

    /// User representation for the current window.
    Matrix user_vector(const std::vector<std::uint32_t>& seq) const {
        auto ad = adaptive();
        return adaptive_forward(backbone_forward(*backbone_, seq), *ad);
    }

    /// Candidate score = dot(user vector, candidate embedding).
    std::vector<double> score_candidates(const std::vector<std::uint32_t>& seq,
                                         const std::vector<std::uint32_t>& candidates) const {
        const Matrix u = user_vector(seq);
        const Matrix& emb = backbone_->embeddings.value;
        std::vector<double> scores;
        scores.reserve(candidates.size());
        for (auto c : candidates) {
            if (c >= backbone_->spec.vocab_size) throw data_error("score: candidate out of vocabulary");
            double s = 0.0;
            for (std::size_t j = 0; j < emb.cols(); ++j) s += u(0, j) * emb(c, j);
            scores.push_back(s);
        }
        return scores;
    }

    /// Top-k candidates by score, ties broken by ascending item id.
    std::vector<std::uint32_t> predict_topk(const std::vector<std::uint32_t>& seq,
                                            const std::vector<std::uint32_t>& candidates,
                                            std::size_t k) const {
        if (k > candidates.size()) throw invalid_input_error("predict_topk: k > candidate count");
        const auto scores = score_candidates(seq, candidates);
        std::vector<std::size_t> idx(candidates.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return candidates[a] < candidates[b];
        });
        std::vector<std::uint32_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[idx[i]]);
        return out;
    }

private:
    std::shared_ptr<const Backbone> backbone_;
    std::shared_ptr<const AdaptiveLayerSet> adaptive_;
    mutable std::mutex mu_;
};

}  // namespace persona
