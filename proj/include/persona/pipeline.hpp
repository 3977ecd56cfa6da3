#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "persona/config.hpp"
#include "persona/data.hpp"
#include "persona/editor.hpp"
#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/harness.hpp"
#include "persona/kmeans.hpp"
#include "persona/model.hpp"
#include "persona/prototypes.hpp"
#include "persona/training.hpp"

namespace persona {

/// Everything one training run produces: the data split, the history
/// examples (aligned with the partition), and the trained prototype set.
struct PipelineResult {
    std::uint32_t vocab = 0;
    SplitResult split;
    std::vector<TrainingExample> history_examples;
    PrototypeSet set;
    TrainReport dam_report;
    TrainReport editor_report;
    ArchetypeLabels labels;  // ground truth when data is synthetic
    bool has_labels = false;
};

inline SyntheticDataset generate_dataset(const RunConfig& cfg, std::uint64_t seed) {
    MixtureSpec spec = MixtureSpec::make_default(cfg.archetypes, cfg.clusters, cfg.items_per_cluster,
                                                 cfg.devices_per_archetype, cfg.sequence_length,
                                                 cfg.peakedness, cfg.shift_fraction, seed);
    spec.persistence = cfg.persistence;
    return gen_synthetic(spec);
}

namespace detail {

/// Deterministic 90/10 train/validation split of the history examples.
inline void split_train_val(const std::vector<TrainingExample>& all, std::uint64_t seed,
                            std::vector<TrainingExample>& train, std::vector<TrainingExample>& val) {
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x94d049bb133111ebULL);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(1, all.size() / 10);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_val ? val : train).push_back(all[order[i]]);
    if (train.empty()) std::swap(train, val);
}

}  // namespace detail

/// Data half of a run: load or synthesize, split, window. Deterministic in
/// (config, seed), so staged commands can rebuild identical examples.
struct PreparedData {
    std::uint32_t vocab = 0;
    SplitResult split;
    std::vector<TrainingExample> history_examples;
    ArchetypeLabels labels;
    bool has_labels = false;
};

inline PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PreparedData out;
    InteractionLog log;
    if (cfg.dataset_path.empty()) {
        SyntheticDataset ds = generate_dataset(cfg, seed);
        log = std::move(ds.log);
        out.labels = std::move(ds.labels);
        out.has_labels = true;
    } else {
        log = load_csv(cfg.dataset_path);
    }
    out.vocab = log.vocab_size;
    if (out.vocab < 2) throw data_error("prepare_data: vocabulary too small");
    out.split = split_history_realtime(log, {cfg.history_fraction, cfg.window});
    out.history_examples = make_training_windows(out.split.history, cfg.window, cfg.negatives, seed);
    if (out.history_examples.empty()) throw data_error("prepare_data: no history examples after split");
    return out;
}

/// Cloud-side training: backbone + base adaptive weights on history, then
/// the editor, then partition the history edits and fine-tune per group.
inline PipelineResult run_training_pipeline(const RunConfig& cfg, std::uint64_t seed) {
    PreparedData data = prepare_data(cfg, seed);
    PipelineResult out;
    out.vocab = data.vocab;
    out.split = std::move(data.split);
    out.history_examples = std::move(data.history_examples);
    out.labels = std::move(data.labels);
    out.has_labels = data.has_labels;

    std::vector<TrainingExample> train, val;
    detail::split_train_val(out.history_examples, seed, train, val);

    TrainConfig dam_cfg{cfg.dam_epochs, cfg.batch_size, cfg.dam_lr, cfg.negatives, seed, cfg.patience};
    GlobalModel gm = train_global_dam(train, cfg.backbone_spec(out.vocab), cfg.adaptive_widths(),
                                      dam_cfg, &out.dam_report, val);

    PrototypeModel global;
    global.backbone = std::make_shared<const Backbone>(std::move(gm.backbone));
    global.base = gm.adaptive_set();
    EditorSpec espec{cfg.editor_dim, cfg.threshold, cfg.clkt, cfg.editor_head_gain};
    // warm-start the editor's item table from the trained backbone so the
    // encoder sees the learned co-occurrence geometry from step one
    const Matrix* emb_init = cfg.editor_dim == cfg.embed_dim
                                 ? &global.backbone->embeddings.value
                                 : nullptr;
    global.editor = EditorNetwork(espec, out.vocab, global.base, seed, emb_init);
    TrainConfig editor_cfg{cfg.editor_epochs, cfg.batch_size, cfg.editor_lr, cfg.negatives, seed,
                           cfg.patience};
    out.editor_report = train_editor(global.editor, *global.backbone, global.base,
                                     out.history_examples, editor_cfg);

    // one editing matrix per device from its recent history (a longer window
    // than the serving one to average out item-level noise), clustered into
    // groups; every example inherits its device's group
    std::vector<std::uint32_t> device_ids;
    std::vector<std::vector<std::uint32_t>> device_windows;
    const std::size_t cluster_window = 3 * cfg.window;
    for (const auto& [dev, events] : out.split.history.devices) {
        const std::size_t lo = events.size() > cluster_window ? events.size() - cluster_window : 0;
        std::vector<std::uint32_t> w;
        for (std::size_t i = lo; i < events.size(); ++i) w.push_back(events[i].item);
        device_ids.push_back(dev);
        device_windows.push_back(std::move(w));
    }
    // average each device's edit over a few staggered sub-windows to damp
    // item-level noise before clustering
    auto edits = compute_history_edits(global, device_windows);
    for (std::size_t di = 0; di < edits.size(); ++di) {
        const auto& w = device_windows[di];
        std::size_t n_used = 1;
        for (std::size_t off = 4; off + cfg.window <= w.size(); off += 4) {
            std::vector<std::uint32_t> sub(w.begin(), w.end() - off);
            auto e = flatten_edit(generate_edit(global.editor, sub, global.base));
            for (std::size_t j = 0; j < e.size(); ++j) edits[di][j] += e[j];
            ++n_used;
        }
        for (double& x : edits[di]) x /= static_cast<double>(n_used);
    }
    const std::size_t k = std::min<std::size_t>(cfg.groups, edits.size());
    // k-means is sensitive to its start; keep the best of several restarts
    PartitionMap device_partition = kmeans(edits, k, seed);
    for (std::uint64_t r = 1; r < 10; ++r) {
        PartitionMap alt = kmeans(edits, k, seed + 0x51ed270b * r);
        if (alt.inertia < device_partition.inertia) device_partition = alt;
    }
    std::unordered_map<std::uint32_t, std::size_t> device_group;
    for (std::size_t i = 0; i < device_ids.size(); ++i)
        device_group[device_ids[i]] = device_partition.assignments[i];
    PartitionMap partition;
    partition.group_count = k;
    partition.centroids = device_partition.centroids;
    partition.inertia = device_partition.inertia;
    for (const auto& ex : out.history_examples)
        partition.assignments.push_back(device_group.at(ex.device_id));

    TrainConfig group_cfg{cfg.group_epochs, cfg.batch_size, cfg.group_lr, cfg.negatives, seed,
                          cfg.patience};
    // the per-group editor retrain has its own schedule: pushing each group's
    // editor harder on its own slice is what differentiates the groups at
    // serve time
    TrainConfig group_editor_cfg{cfg.group_editor_epochs, cfg.batch_size, cfg.group_editor_lr,
                                 cfg.negatives, seed, cfg.patience, cfg.group_editor_penalty};
    out.set = build_groups(std::move(global), partition, out.history_examples, group_cfg,
                           &group_editor_cfg);
    return out;
}

/// The same global prototype served as the only group: single-prototype
/// editing, no partition.
inline PrototypeSet single_prototype_set(const PrototypeSet& full) {
    PrototypeSet s;
    s.global = full.global;
    s.groups.push_back(full.global);
    s.partition.group_count = 1;
    s.partition.assignments.assign(full.partition.assignments.size(), 0);
    return s;
}

enum class Condition { baseline, persona_s, persona_m, finetune, group_finetune };

inline std::string to_string(Condition c) {
    switch (c) {
        case Condition::baseline: return "baseline";
        case Condition::persona_s: return "persona_s";
        case Condition::persona_m: return "persona_m";
        case Condition::finetune: return "finetune";
        case Condition::group_finetune: return "group_finetune";
    }
    throw invalid_input_error("to_string: bad condition");
}

inline Condition condition_from_string(const std::string& s) {
    for (Condition c : {Condition::baseline, Condition::persona_s, Condition::persona_m,
                        Condition::finetune, Condition::group_finetune})
        if (to_string(c) == s) return c;
    throw invalid_input_error("condition_from_string: unknown condition '" + s + "'");
}

inline SimPolicy make_policy(const RunConfig& cfg, std::uint64_t seed) {
    SimPolicy p;
    p.sync_every = cfg.sync_every;
    p.window_size = cfg.window;
    p.eval_negatives = cfg.eval_negatives;
    p.seed = seed;
    p.threads = cfg.threads;
    return p;
}

namespace detail {

/// Local-gradient conditions: no cloud sync; every K events the adaptive
/// layers are fine-tuned on the labeled contents of the current window.
/// Candidate sets come from the same (seed, device, event) function as the
/// sync conditions, so all conditions rank identical candidates.
inline void run_finetune_device(DeviceSession& session, const Backbone& backbone,
                                const SimPolicy& policy, std::uint32_t vocab,
                                const TrainConfig& ft_cfg, DeviceLog& log) {
    log.device_id = session.device_id;
    std::size_t events_since = 0;
    std::mt19937_64 neg_rng(policy.seed ^ (0xda942042e4dd58b5ULL * (session.device_id + 1)));
    std::uniform_int_distribution<std::uint32_t> pick(0, vocab - 1);
    for (std::size_t t = 0; t < session.stream.size(); ++t) {
        const std::uint32_t next = session.stream[t].item;
        if (!session.window.empty()) {
            RankedPrediction pred;
            pred.positive_id = next;
            pred.negative_ids = eval_negatives(policy.seed, session.device_id, t, vocab,
                                               session.seen, policy.eval_negatives);
            std::vector<std::uint32_t> cands{next};
            cands.insert(cands.end(), pred.negative_ids.begin(), pred.negative_ids.end());
            const auto scores = session.model->score_candidates(session.window, cands);
            pred.positive_score = scores[0];
            pred.negative_scores.assign(scores.begin() + 1, scores.end());
            log.predictions.push_back(std::move(pred));
        }
        session.window.push_back(next);
        if (session.window.size() > policy.window_size)
            session.window.erase(session.window.begin());
        if (++events_since >= policy.sync_every && session.window.size() >= 2) {
            events_since = 0;
            std::vector<TrainingExample> exs;
            for (std::size_t i = 1; i < session.window.size(); ++i) {
                TrainingExample ex;
                ex.device_id = session.device_id;
                ex.window.assign(session.window.begin(), session.window.begin() + i);
                ex.positive = session.window[i];
                while (ex.negatives.size() < ft_cfg.negatives_per_positive) {
                    const std::uint32_t c = pick(neg_rng);
                    if (c != ex.positive) ex.negatives.push_back(c);
                }
                exs.push_back(std::move(ex));
            }
            auto ft = finetune_on_device_baseline(backbone, *session.model->adaptive(), exs, ft_cfg);
            session.model->install_adaptive(std::move(ft.adaptive));
        }
    }
}

}  // namespace detail

/// Scores one condition over the real-time streams of a finished pipeline.
inline std::vector<RankedPrediction> evaluate_condition(PipelineResult& pipe, const RunConfig& cfg,
                                                        std::uint64_t seed, Condition condition) {
    const SimPolicy policy = make_policy(cfg, seed);
    std::vector<RankedPrediction> preds;
    auto collect = [&](const SimulationResult& sim) {
        for (const auto& dl : sim.device_logs)
            preds.insert(preds.end(), dl.predictions.begin(), dl.predictions.end());
    };

    switch (condition) {
        case Condition::baseline: {
            SimPolicy p = policy;
            p.enable_sync = false;
            auto sessions = make_sessions(pipe.split.history, pipe.split.realtime, pipe.set, p);
            collect(run_simulation(pipe.set, sessions, p));
            break;
        }
        case Condition::persona_s: {
            PrototypeSet single = single_prototype_set(pipe.set);
            auto sessions = make_sessions(pipe.split.history, pipe.split.realtime, single, policy);
            collect(run_simulation(single, sessions, policy));
            break;
        }
        case Condition::persona_m: {
            auto sessions = make_sessions(pipe.split.history, pipe.split.realtime, pipe.set, policy);
            collect(run_simulation(pipe.set, sessions, policy));
            break;
        }
        case Condition::finetune:
        case Condition::group_finetune: {
            auto sessions = make_sessions(pipe.split.history, pipe.split.realtime, pipe.set, policy);
            TrainConfig ft_cfg{cfg.group_epochs, cfg.batch_size, cfg.group_lr, cfg.negatives, seed,
                               cfg.patience};
            for (auto& s : sessions) {
                if (condition == Condition::group_finetune && !s.window.empty()) {
                    // start from the group prototype chosen for the warm-start window
                    AssignmentResult a = dynamic_assign(pipe.set, s.window);
                    s.model = std::make_shared<DeviceModel>(pipe.set.global.backbone,
                                                            pipe.set.groups[a.chosen_group].base);
                    s.assigned_group = a.chosen_group;
                }
                DeviceLog log;
                detail::run_finetune_device(s, *pipe.set.global.backbone, policy, pipe.vocab,
                                            ft_cfg, log);
                preds.insert(preds.end(), log.predictions.begin(), log.predictions.end());
            }
            break;
        }
    }
    if (preds.empty()) throw data_error("evaluate_condition: no predictions produced");
    return preds;
}

/// Train once per seed, score every requested condition on the same streams
/// and candidate sets.
inline std::vector<MetricReport> run_conditions_experiment(const RunConfig& cfg,
                                                           const std::vector<Condition>& conditions,
                                                           double sweep_value = 0.0) {
    std::vector<MetricReport> reports;
    for (std::uint64_t seed : cfg.seeds) {
        PipelineResult pipe = run_training_pipeline(cfg, seed);
        for (Condition c : conditions) {
            MetricReport r =
                compute_metrics(evaluate_condition(pipe, cfg, seed, c), to_string(c), seed);
            r.sweep_value = sweep_value;
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

struct SweepAxis {
    std::string name;                 // threshold | groups | clkt | prototype
    std::vector<double> values;
};

inline SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "threshold") return {name, {0.1, 0.5, 1.0, 5.0}};
    if (name == "groups") return {name, {2, 3, 5, 10}};
    if (name == "clkt") return {name, {0, 1}};
    if (name == "prototype") return {name, {0, 1}};  // 0 = global, 1 = group
    throw invalid_input_error("sweep_axis_from_string: unknown axis '" + name + "'");
}

/// One full pipeline + evaluation per (seed, axis value). The prototype axis
/// trains once per seed and scores both serving modes on the same models.
inline std::vector<MetricReport> run_sweep(const RunConfig& base_cfg, const SweepAxis& axis) {
    std::vector<MetricReport> reports;
    if (axis.name == "prototype") {
        for (std::uint64_t seed : base_cfg.seeds) {
            PipelineResult pipe = run_training_pipeline(base_cfg, seed);
            for (double v : axis.values) {
                const Condition c = v == 0 ? Condition::persona_s : Condition::persona_m;
                MetricReport r =
                    compute_metrics(evaluate_condition(pipe, base_cfg, seed, c), to_string(c), seed);
                r.sweep_value = v;
                reports.push_back(std::move(r));
            }
        }
        return reports;
    }
    for (double v : axis.values) {
        RunConfig cfg = base_cfg;
        if (axis.name == "threshold") cfg.threshold = v;
        else if (axis.name == "groups") cfg.groups = static_cast<std::size_t>(v);
        else if (axis.name == "clkt") cfg.clkt = v != 0;
        else throw invalid_input_error("run_sweep: unknown axis '" + axis.name + "'");
        auto rs = run_conditions_experiment(cfg, {Condition::persona_m}, v);
        reports.insert(reports.end(), rs.begin(), rs.end());
    }
    return reports;
}

}  // namespace persona
