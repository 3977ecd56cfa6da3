#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "persona/autograd.hpp"
#include "persona/errors.hpp"
#include "persona/matrix.hpp"
#include "persona/model.hpp"

namespace persona {

/// Clipped per-layer weight deltas, one matrix per adaptive layer.
struct EditSet {
    std::vector<Matrix> deltas;
    std::optional<std::size_t> source_group;
    double threshold_used = 0.0;
};

struct EditorSpec {
    std::size_t embed_dim = 32;   // shared embedding dim d_e
    double threshold = 1.0;       // clip bound T
    bool clkt_enabled = true;
    // scale on the output-head initialization; sets the magnitude of raw
    // (pre-clip) deltas relative to the clip bound
    double head_gain = 1.0;

    void validate() const {
        if (embed_dim < 1) throw config_error("EditorSpec: embed_dim must be >= 1");
        if (!(threshold > 0.0)) throw config_error("EditorSpec: threshold must be > 0");
        if (!(head_gain > 0.0)) throw config_error("EditorSpec: head_gain must be > 0");
    }
};

/// The hypernetwork: encoder (item embedding + mean pooling + 2-layer
/// perceptron), per-layer context transforms, an optional gated cross-layer
/// transition, and per-layer heads emitting flat weight deltas.
struct EditorNetwork {
    EditorSpec spec;
    std::uint32_t vocab_size = 0;
    std::vector<std::pair<std::size_t, std::size_t>> target_shapes;  // per adaptive layer

    ParamTensor emb;                       // vocab x d_e
    ParamTensor enc_w1, enc_b1, enc_w2, enc_b2;
    std::vector<ParamTensor> ctx_w, ctx_b;     // L^n : d_e -> d_e
    std::vector<ParamTensor> head_w, head_b;   // g^n : d_e -> N_in*N_out
    ParamTensor tz_e, tz_h, tz_b;              // transition update gate
    ParamTensor tc_e, tc_h, tc_b;              // transition candidate
    bool trained = false;

    EditorNetwork() = default;

    /// `emb_init`, when given, warm-starts the item-embedding table (for
    /// example from already-trained backbone embeddings) instead of random
    /// initialization; it must be vocab x embed_dim.
    EditorNetwork(const EditorSpec& s, std::uint32_t vocab, const AdaptiveLayerSet& target,
                  std::uint64_t seed, const Matrix* emb_init = nullptr)
        : spec(s), vocab_size(vocab) {
        spec.validate();
        if (vocab < 1) throw config_error("EditorNetwork: empty vocabulary");
        for (const auto& l : target.layers) target_shapes.emplace_back(l.rows(), l.cols());
        const std::size_t d = spec.embed_dim;
        std::mt19937_64 rng(seed);
        if (emb_init) {
            if (emb_init->rows() != vocab || emb_init->cols() != d)
                throw shape_error("EditorNetwork: embedding warm-start shape mismatch");
            emb = ParamTensor(*emb_init, "editor.emb");
            xavier_init(vocab, d, rng);  // keep the rng stream position stable
        } else {
            emb = ParamTensor(xavier_init(vocab, d, rng), "editor.emb");
        }
        enc_w1 = ParamTensor(xavier_init(d, d, rng), "editor.enc_w1");
        enc_b1 = ParamTensor(Matrix(1, d, 0.0), "editor.enc_b1");
        enc_w2 = ParamTensor(xavier_init(d, d, rng), "editor.enc_w2");
        enc_b2 = ParamTensor(Matrix(1, d, 0.0), "editor.enc_b2");
        for (std::size_t n = 0; n < target_shapes.size(); ++n) {
            const std::size_t flat = target_shapes[n].first * target_shapes[n].second;
            ctx_w.emplace_back(xavier_init(d, d, rng), "editor.ctx_w" + std::to_string(n));
            ctx_b.emplace_back(Matrix(1, d, 0.0), "editor.ctx_b" + std::to_string(n));
            Matrix hw = xavier_init(d, flat, rng);
            if (spec.head_gain != 1.0)
                for (double& x : hw.data()) x *= spec.head_gain;
            head_w.emplace_back(std::move(hw), "editor.head_w" + std::to_string(n));
            head_b.emplace_back(Matrix(1, flat, 0.0), "editor.head_b" + std::to_string(n));
        }
        tz_e = ParamTensor(xavier_init(d, d, rng), "editor.tz_e");
        tz_h = ParamTensor(xavier_init(d, d, rng), "editor.tz_h");
        tz_b = ParamTensor(Matrix(1, d, 0.0), "editor.tz_b");
        tc_e = ParamTensor(xavier_init(d, d, rng), "editor.tc_e");
        tc_h = ParamTensor(xavier_init(d, d, rng), "editor.tc_h");
        tc_b = ParamTensor(Matrix(1, d, 0.0), "editor.tc_b");
    }

    std::size_t layer_count() const { return target_shapes.size(); }

    std::vector<ParamTensor*> trainable() {
        std::vector<ParamTensor*> out{&emb, &enc_w1, &enc_b1, &enc_w2, &enc_b2};
        for (std::size_t n = 0; n < layer_count(); ++n) {
            out.push_back(&ctx_w[n]);
            out.push_back(&ctx_b[n]);
            out.push_back(&head_w[n]);
            out.push_back(&head_b[n]);
        }
        if (spec.clkt_enabled)
            for (ParamTensor* p : {&tz_e, &tz_h, &tz_b, &tc_e, &tc_h, &tc_b}) out.push_back(p);
        return out;
    }

    std::vector<const ParamTensor*> tensors() const {
        auto* self = const_cast<EditorNetwork*>(this);
        std::vector<ParamTensor*> t{&self->emb, &self->enc_w1, &self->enc_b1, &self->enc_w2, &self->enc_b2};
        for (std::size_t n = 0; n < layer_count(); ++n) {
            t.push_back(&self->ctx_w[n]);
            t.push_back(&self->ctx_b[n]);
            t.push_back(&self->head_w[n]);
            t.push_back(&self->head_b[n]);
        }
        for (ParamTensor* p : {&self->tz_e, &self->tz_h, &self->tz_b, &self->tc_e, &self->tc_h, &self->tc_b})
            t.push_back(p);
        return {t.begin(), t.end()};
    }
};

/// Tape handles for one editor, either trainable leaves or frozen constants.
struct EditorValues {
    const EditorNetwork* net = nullptr;
    ag::Value emb, enc_w1, enc_b1, enc_w2, enc_b2;
    std::vector<ag::Value> ctx_w, ctx_b, head_w, head_b;
    ag::Value tz_e, tz_h, tz_b, tc_e, tc_h, tc_b;
};

inline EditorValues editor_values(EditorNetwork& net, bool trainable) {
    auto lift = [&](ParamTensor& p) { return trainable ? ag::leaf(p) : ag::constant(p.value); };
    EditorValues v;
    v.net = &net;
    v.emb = lift(net.emb);
    v.enc_w1 = lift(net.enc_w1);
    v.enc_b1 = lift(net.enc_b1);
    v.enc_w2 = lift(net.enc_w2);
    v.enc_b2 = lift(net.enc_b2);
    for (std::size_t n = 0; n < net.layer_count(); ++n) {
        v.ctx_w.push_back(lift(net.ctx_w[n]));
        v.ctx_b.push_back(lift(net.ctx_b[n]));
        v.head_w.push_back(lift(net.head_w[n]));
        v.head_b.push_back(lift(net.head_b[n]));
    }
    v.tz_e = lift(net.tz_e);
    v.tz_h = lift(net.tz_h);
    v.tz_b = lift(net.tz_b);
    v.tc_e = lift(net.tc_e);
    v.tc_h = lift(net.tc_h);
    v.tc_b = lift(net.tc_b);
    return v;
}

/// Shared embedding e for a real-time window: mean-pooled item embeddings
/// through the two-layer perceptron.
inline ag::Value encode_batch_ag(const EditorValues& v, const std::vector<std::uint32_t>& batch) {
    if (batch.empty()) throw invalid_input_error("encode_batch: empty batch");
    for (auto id : batch)
        if (id >= v.net->vocab_size) throw data_error("encode_batch: item id out of vocabulary");
    ag::Value pooled = ag::rows_mean(v.emb, batch);
    ag::Value h = ag::relu(ag::add(ag::matmul(pooled, v.enc_w1), v.enc_b1));
    return ag::add(ag::matmul(h, v.enc_w2), v.enc_b2);
}

/// Per-layer features e^1..e^{N_l}. With CLKT the layer features are read
/// off a gated state chained over layer index, so layer n+1's feature
/// depends on layer n's.
inline std::vector<ag::Value> layer_contexts_ag(const EditorValues& v, const ag::Value& e) {
    std::vector<ag::Value> contexts;
    const std::size_t nl = v.net->layer_count();
    if (!v.net->spec.clkt_enabled) {
        for (std::size_t n = 0; n < nl; ++n)
            contexts.push_back(ag::add(ag::matmul(e, v.ctx_w[n]), v.ctx_b[n]));
        return contexts;
    }
    ag::Value h = ag::constant(Matrix(1, v.net->spec.embed_dim, 0.0));
    for (std::size_t n = 0; n < nl; ++n) {
        ag::Value z = ag::sigmoid(ag::add(ag::add(ag::matmul(e, v.tz_e), ag::matmul(h, v.tz_h)), v.tz_b));
        ag::Value cand = ag::tanh_act(ag::add(ag::add(ag::matmul(e, v.tc_e), ag::matmul(h, v.tc_h)), v.tc_b));
        h = ag::add(ag::hadamard(ag::affine(z, -1.0, 1.0), h), ag::hadamard(z, cand));
        // the state itself is the layer feature: the recurrence replaces the
        // independent per-layer transforms, which is what carries knowledge
        // from one layer's edit to the next
        contexts.push_back(h);
    }
    return contexts;
}

/// Clipped per-layer deltas as tape values: clamp(reshape(head_n(e^n)), T).
inline std::vector<ag::Value> generate_edit_ag(const EditorValues& v,
                                               const std::vector<std::uint32_t>& batch) {
    ag::Value e = encode_batch_ag(v, batch);
    auto contexts = layer_contexts_ag(v, e);
    std::vector<ag::Value> deltas;
    for (std::size_t n = 0; n < v.net->layer_count(); ++n) {
        ag::Value flat = ag::add(ag::matmul(contexts[n], v.head_w[n]), v.head_b[n]);
        const auto [r, c] = v.net->target_shapes[n];
        deltas.push_back(ag::clamp_st(ag::reshape(flat, r, c), v.net->spec.threshold));
    }
    return deltas;
}

inline Matrix encode_batch(EditorNetwork& editor, const std::vector<std::uint32_t>& batch) {
    return encode_batch_ag(editor_values(editor, false), batch).mat();
}

inline std::vector<Matrix> layer_contexts(EditorNetwork& editor, const Matrix& e) {
    auto v = editor_values(editor, false);
    auto ctx = layer_contexts_ag(v, ag::constant(e));
    std::vector<Matrix> out;
    for (auto& c : ctx) out.push_back(c.mat());
    return out;
}

inline EditSet generate_edit(EditorNetwork& editor, const std::vector<std::uint32_t>& batch,
                             const AdaptiveLayerSet& target) {
    if (editor.target_shapes.size() != target.layers.size())
        throw config_error("generate_edit: editor head count != target layer count");
    for (std::size_t n = 0; n < target.layers.size(); ++n) {
        const auto& [r, c] = editor.target_shapes[n];
        if (r != target.layers[n].rows() || c != target.layers[n].cols())
            throw config_error("generate_edit: head " + std::to_string(n) + " shape mismatch");
    }
    auto deltas = generate_edit_ag(editor_values(editor, false), batch);
    EditSet out;
    out.threshold_used = editor.spec.threshold;
    for (auto& d : deltas) out.deltas.push_back(d.mat());
    return out;
}

inline AdaptiveLayerSet apply_edit(const AdaptiveLayerSet& base, const EditSet& edit) {
    if (base.layers.size() != edit.deltas.size())
        throw protocol_error("apply_edit: layer count mismatch");
    std::vector<Matrix> out;
    out.reserve(base.layers.size());
    for (std::size_t n = 0; n < base.layers.size(); ++n) {
        if (!base.layers[n].same_shape(edit.deltas[n]))
            throw protocol_error("apply_edit: shape mismatch at layer " + std::to_string(n));
        out.push_back(add(base.layers[n], edit.deltas[n]));
    }
    return AdaptiveLayerSet(std::move(out));
}

/// Frobenius norm over the concatenation of all layers' deltas.
inline double edit_norm(const EditSet& edit) {
    double s = 0.0;
    for (const auto& d : edit.deltas)
        for (std::size_t i = 0; i < d.size(); ++i) s += d.at(i) * d.at(i);
    return std::sqrt(s);
}

/// Layer-order, row-major concatenation into one vector.
inline std::vector<double> flatten_edit(const EditSet& edit) {
    std::vector<double> out;
    for (const auto& d : edit.deltas) out.insert(out.end(), d.data().begin(), d.data().end());
    return out;
}

}  // namespace persona
