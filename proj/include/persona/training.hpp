#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <random>
#include <vector>

#include "persona/autograd.hpp"
#include "persona/data.hpp"
#include "persona/editor.hpp"
#include "persona/errors.hpp"
#include "persona/model.hpp"
#include "persona/optim.hpp"

namespace persona {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    std::size_t negatives_per_positive = 4;
    std::uint64_t seed = 1;
    std::size_t early_stop_patience = 3;
    // L2 penalty on the generated editing matrices (editor training only).
    // Shrinks edits toward zero wherever the task loss does not resist, so a
    // prototype's editor emits small matrices on data its base already fits.
    double edit_penalty = 0.0;

    void validate() const {
        if (batch_size < 1 || negatives_per_positive < 1 || early_stop_patience < 1)
            throw config_error("TrainConfig: counts must be >= 1");
        if (!(learning_rate > 0.0)) throw config_error("TrainConfig: learning_rate must be > 0");
    }
};

struct TrainReport {
    std::vector<double> train_loss;       // per completed epoch
    std::vector<double> val_metric;       // NDCG@5 trace when validation given
    double wall_clock_seconds = 0.0;
    std::uint64_t param_checksum = 0;
};

inline std::uint64_t fnv_checksum(const std::vector<const ParamTensor*>& tensors) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto* t : tensors) {
        const std::uint64_t r = t->value.rows(), c = t->value.cols();
        mix(&r, sizeof r);
        mix(&c, sizeof c);
        mix(t->value.data().data(), t->value.size() * sizeof(double));
    }
    return h;
}

namespace detail {

/// Rank of the positive among 1 positive + negatives (1-based, ties broken
/// by ascending item id, positive listed first).
inline std::size_t positive_rank(const std::vector<double>& scores,
                                 const std::vector<std::uint32_t>& candidates) {
    std::size_t rank = 1;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[0]) ++rank;
        else if (scores[i] == scores[0] && candidates[i] < candidates[0]) ++rank;
    }
    return rank;
}

inline double ndcg5_validation(const Backbone& bb, const AdaptiveLayerSet& adaptive,
                               const std::vector<TrainingExample>& val) {
    if (val.empty()) return 0.0;
    DeviceModel model(std::make_shared<Backbone>(bb), adaptive);
    double total = 0.0;
    for (const auto& ex : val) {
        std::vector<std::uint32_t> cands{ex.positive};
        cands.insert(cands.end(), ex.negatives.begin(), ex.negatives.end());
        const auto scores = model.score_candidates(ex.window, cands);
        const std::size_t rank = positive_rank(scores, cands);
        if (rank <= 5) total += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    return total / static_cast<double>(val.size());
}

inline std::vector<std::uint32_t> candidates_of(const TrainingExample& ex) {
    std::vector<std::uint32_t> cands{ex.positive};
    cands.insert(cands.end(), ex.negatives.begin(), ex.negatives.end());
    return cands;
}

}  // namespace detail

struct GlobalModel {
    Backbone backbone;
    std::vector<ParamTensor> base_adaptive;  // base adaptive weights as tensors

    AdaptiveLayerSet adaptive_set() const {
        std::vector<Matrix> ls;
        for (const auto& p : base_adaptive) ls.push_back(p.value);
        return AdaptiveLayerSet(std::move(ls));
    }
};

/// Phase 1: train backbone + base adaptive weights jointly on history.
/// After this the backbone is frozen for the rest of the pipeline.
inline GlobalModel train_global_dam(const std::vector<TrainingExample>& examples,
                                    const BackboneSpec& spec,
                                    const std::vector<std::size_t>& adaptive_widths,
                                    const TrainConfig& cfg, TrainReport* report = nullptr,
                                    const std::vector<TrainingExample>& val = {}) {
    cfg.validate();
    if (examples.empty()) throw invalid_input_error("train_global_dam: no training examples");
    const auto t0 = std::chrono::steady_clock::now();

    GlobalModel gm;
    gm.backbone = Backbone(spec, cfg.seed);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    {
        std::size_t d = spec.feature_dim();
        std::size_t idx = 0;
        for (std::size_t w : adaptive_widths) {
            gm.base_adaptive.emplace_back(xavier_init(d, w, rng), "base_adaptive." + std::to_string(idx++));
            d = w;
        }
    }

    std::vector<ParamTensor*> params = gm.backbone.trainable();
    for (auto& p : gm.base_adaptive) params.push_back(&p);
    Optimizer opt(OptimizerKind::adam, cfg.learning_rate);

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    double best_val = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t in_batch = 0;
        zero_grads(params);
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const auto& ex = examples[order[oi]];
            ag::Value emb = ag::leaf(gm.backbone.embeddings);
            std::vector<ag::Value> gru;
            if (spec.pooling == Pooling::gru_lite)
                for (ParamTensor* p : {&gm.backbone.gru_wx, &gm.backbone.gru_wh, &gm.backbone.gru_b,
                                       &gm.backbone.gru_zx, &gm.backbone.gru_zh, &gm.backbone.gru_zb})
                    gru.push_back(ag::leaf(*p));
            ag::Value feat = backbone_forward_ag(gm.backbone, emb, gru, ex.window);
            std::vector<ag::Value> layers;
            for (auto& p : gm.base_adaptive) layers.push_back(ag::leaf(p));
            ag::Value user = adaptive_forward_ag(feat, layers);
            std::vector<ag::Value> scores;
            scores.push_back(ag::dot(user, ag::row(emb, ex.positive)));
            for (auto n : ex.negatives) scores.push_back(ag::dot(user, ag::row(emb, n)));
            ag::Value loss = ag::cross_entropy(ag::concat_scalars(scores), 0);
            epoch_loss += loss.scalar();
            ag::affine(loss, 1.0 / static_cast<double>(cfg.batch_size), 0.0).backward();
            if (++in_batch == cfg.batch_size || oi + 1 == order.size()) {
                opt.step(params);
                zero_grads(params);
                in_batch = 0;
            }
        }
        epoch_loss /= static_cast<double>(examples.size());
        if (!std::isfinite(epoch_loss))
            throw training_error("train_global_dam: diverged at epoch " + std::to_string(epoch));
        if (report) report->train_loss.push_back(epoch_loss);
        if (!val.empty()) {
            const double v = detail::ndcg5_validation(gm.backbone, gm.adaptive_set(), val);
            if (report) report->val_metric.push_back(v);
            if (v > best_val) {
                best_val = v;
                since_best = 0;
            } else if (++since_best >= cfg.early_stop_patience) {
                break;
            }
        }
    }

    if (report) {
        report->wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::vector<const ParamTensor*> ts;
        for (const auto* t : gm.backbone.tensors()) ts.push_back(t);
        for (const auto& p : gm.base_adaptive) ts.push_back(&p);
        report->param_checksum = fnv_checksum(ts);
    }
    return gm;
}

/// One editor-training objective step shared by train_editor and the group
/// fine-tune: CE of the sample under base + generated edit, editor trainable,
/// backbone and base frozen.
inline ag::Value editor_example_loss(EditorNetwork& editor, const Backbone& backbone,
                                     const AdaptiveLayerSet& base, const TrainingExample& ex,
                                     bool trainable, double edit_penalty = 0.0) {
    auto vals = editor_values(editor, trainable);
    auto deltas = generate_edit_ag(vals, ex.window);
    std::vector<ag::Value> layers;
    for (std::size_t n = 0; n < base.layers.size(); ++n)
        layers.push_back(ag::add(ag::constant(base.layers[n]), deltas[n]));
    ag::Value feat = backbone_forward_frozen(backbone, ex.window);
    ag::Value user = adaptive_forward_ag(feat, layers);
    ag::Value emb = ag::constant(backbone.embeddings.value);
    std::vector<ag::Value> scores;
    scores.push_back(ag::dot(user, ag::row(emb, ex.positive)));
    for (auto n : ex.negatives) scores.push_back(ag::dot(user, ag::row(emb, n)));
    ag::Value loss = ag::cross_entropy(ag::concat_scalars(scores), 0);
    if (edit_penalty > 0.0) {
        ag::Value sq = ag::sum_all(ag::hadamard(deltas[0], deltas[0]));
        for (std::size_t n = 1; n < deltas.size(); ++n)
            sq = ag::add(sq, ag::sum_all(ag::hadamard(deltas[n], deltas[n])));
        loss = ag::add(loss, ag::affine(sq, edit_penalty, 0.0));
    }
    return loss;
}

/// Phase 2: train only the editor against a frozen prototype.
inline TrainReport train_editor(EditorNetwork& editor, const Backbone& backbone,
                                const AdaptiveLayerSet& base,
                                const std::vector<TrainingExample>& examples,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (examples.empty()) throw invalid_input_error("train_editor: no training examples");
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    auto params = editor.trainable();
    Optimizer opt(OptimizerKind::adam, cfg.learning_rate);
    std::mt19937_64 rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t in_batch = 0;
        zero_grads(params);
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            ag::Value loss = editor_example_loss(editor, backbone, base, examples[order[oi]], true,
                                                 cfg.edit_penalty);
            epoch_loss += loss.scalar();
            ag::affine(loss, 1.0 / static_cast<double>(cfg.batch_size), 0.0).backward();
            if (++in_batch == cfg.batch_size || oi + 1 == order.size()) {
                opt.step(params);
                zero_grads(params);
                in_batch = 0;
            }
        }
        epoch_loss /= static_cast<double>(examples.size());
        if (!std::isfinite(epoch_loss))
            throw training_error("train_editor: diverged at epoch " + std::to_string(epoch));
        report.train_loss.push_back(epoch_loss);
    }
    editor.trained = true;
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.param_checksum = fnv_checksum(editor.tensors());
    return report;
}

struct GroupModel {
    AdaptiveLayerSet base;
    EditorNetwork editor;
};

/// Group fine-tune: (a) adapt the base adaptive weights on group data with
/// the editor detached, (b) re-train the group editor against the new base.
/// The editor retrain can use its own schedule; by default it mirrors `cfg`.
inline GroupModel finetune_group(const Backbone& backbone, const AdaptiveLayerSet& global_base,
                                 const EditorNetwork& global_editor,
                                 const std::vector<TrainingExample>& group_examples,
                                 const TrainConfig& cfg, const TrainConfig* editor_cfg = nullptr) {
    cfg.validate();
    GroupModel gm{global_base, global_editor};
    if (group_examples.empty()) return gm;
    if (cfg.epochs == 0 && (!editor_cfg || editor_cfg->epochs == 0)) return gm;

    // (a) adaptive base fine-tune, backbone and editor untouched
    std::vector<ParamTensor> base_params;
    for (std::size_t n = 0; n < gm.base.layers.size(); ++n)
        base_params.emplace_back(gm.base.layers[n], "group_base." + std::to_string(n));
    std::vector<ParamTensor*> params;
    for (auto& p : base_params) params.push_back(&p);
    Optimizer opt(OptimizerKind::adam, cfg.learning_rate);
    std::mt19937_64 rng(cfg.seed ^ 0xa0761d6478bd642fULL);
    std::vector<std::size_t> order(group_examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t in_batch = 0;
        zero_grads(params);
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const auto& ex = group_examples[order[oi]];
            ag::Value feat = backbone_forward_frozen(backbone, ex.window);
            std::vector<ag::Value> layers;
            for (auto& p : base_params) layers.push_back(ag::leaf(p));
            ag::Value user = adaptive_forward_ag(feat, layers);
            ag::Value emb = ag::constant(backbone.embeddings.value);
            std::vector<ag::Value> scores;
            scores.push_back(ag::dot(user, ag::row(emb, ex.positive)));
            for (auto n : ex.negatives) scores.push_back(ag::dot(user, ag::row(emb, n)));
            ag::Value loss = ag::cross_entropy(ag::concat_scalars(scores), 0);
            epoch_loss += loss.scalar();
            ag::affine(loss, 1.0 / static_cast<double>(cfg.batch_size), 0.0).backward();
            if (++in_batch == cfg.batch_size || oi + 1 == order.size()) {
                opt.step(params);
                zero_grads(params);
                in_batch = 0;
            }
        }
        if (!std::isfinite(epoch_loss))
            throw training_error("finetune_group: diverged at epoch " + std::to_string(epoch));
    }
    for (std::size_t n = 0; n < gm.base.layers.size(); ++n) gm.base.layers[n] = base_params[n].value;

    // (b) editor fine-tune against the new prototype
    train_editor(gm.editor, backbone, gm.base, group_examples, editor_cfg ? *editor_cfg : cfg);
    return gm;
}

struct FinetuneResult {
    AdaptiveLayerSet adaptive;
    double wall_clock_seconds = 0.0;
    double final_loss = 0.0;
};

/// Evaluation-only baseline: gradient fine-tuning of the adaptive layers on
/// one labeled real-time window.
inline FinetuneResult finetune_on_device_baseline(const Backbone& backbone,
                                                  const AdaptiveLayerSet& installed,
                                                  const std::vector<TrainingExample>& window_examples,
                                                  const TrainConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    FinetuneResult out{installed, 0.0, 0.0};
    if (cfg.epochs == 0 || window_examples.empty()) {
        out.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }
    std::vector<ParamTensor> base_params;
    for (std::size_t n = 0; n < out.adaptive.layers.size(); ++n)
        base_params.emplace_back(out.adaptive.layers[n], "device_ft." + std::to_string(n));
    std::vector<ParamTensor*> params;
    for (auto& p : base_params) params.push_back(&p);
    Optimizer opt(OptimizerKind::adam, cfg.learning_rate);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        zero_grads(params);
        for (const auto& ex : window_examples) {
            ag::Value feat = backbone_forward_frozen(backbone, ex.window);
            std::vector<ag::Value> layers;
            for (auto& p : base_params) layers.push_back(ag::leaf(p));
            ag::Value user = adaptive_forward_ag(feat, layers);
            ag::Value emb = ag::constant(backbone.embeddings.value);
            std::vector<ag::Value> scores;
            scores.push_back(ag::dot(user, ag::row(emb, ex.positive)));
            for (auto n : ex.negatives) scores.push_back(ag::dot(user, ag::row(emb, n)));
            ag::Value loss = ag::cross_entropy(ag::concat_scalars(scores), 0);
            epoch_loss += loss.scalar();
            ag::affine(loss, 1.0 / static_cast<double>(window_examples.size()), 0.0).backward();
        }
        opt.step(params);
        if (!std::isfinite(epoch_loss))
            throw training_error("finetune_on_device_baseline: diverged at epoch " + std::to_string(epoch));
        out.final_loss = epoch_loss / static_cast<double>(window_examples.size());
    }
    for (std::size_t n = 0; n < out.adaptive.layers.size(); ++n)
        out.adaptive.layers[n] = base_params[n].value;
    out.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace persona
