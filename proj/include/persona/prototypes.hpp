#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "persona/editor.hpp"
#include "persona/errors.hpp"
#include "persona/kmeans.hpp"
#include "persona/model.hpp"
#include "persona/training.hpp"

namespace persona {

/// One (device-model, editor) pair sharing the frozen global backbone.
struct PrototypeModel {
    std::shared_ptr<const Backbone> backbone;
    AdaptiveLayerSet base;
    EditorNetwork editor;
};

/// Global prototype plus the N_M group prototypes and the partition that
/// produced them.
struct PrototypeSet {
    PrototypeModel global;
    std::vector<PrototypeModel> groups;
    PartitionMap partition;

    std::size_t group_count() const { return groups.size(); }
};

struct AssignmentResult {
    std::size_t chosen_group = 0;
    std::vector<double> norms;
    EditSet edit;
};

/// Flattened editing matrix per historical sample, generated by the global
/// editor against the global prototype.
inline std::vector<std::vector<double>> compute_history_edits(
    PrototypeModel& global, const std::vector<std::vector<std::uint32_t>>& windows) {
    if (!global.editor.trained)
        throw lifecycle_error("compute_history_edits: editor has not been trained");
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (const auto& w : windows)
        out.push_back(flatten_edit(generate_edit(global.editor, w, global.base)));
    return out;
}

/// Fine-tune the global pair per partition group. Group examples with no
/// group (partition shorter than examples) are rejected upstream.
inline PrototypeSet build_groups(PrototypeModel global, const PartitionMap& partition,
                                 const std::vector<TrainingExample>& history_examples,
                                 const TrainConfig& cfg, const TrainConfig* editor_cfg = nullptr) {
    if (partition.assignments.size() != history_examples.size())
        throw invalid_input_error("build_groups: partition does not cover history");
    PrototypeSet set;
    set.partition = partition;
    auto groups = partition.groups();
    for (std::size_t j = 0; j < partition.group_count; ++j) {
        if (groups[j].empty()) throw invalid_input_error("build_groups: empty group " + std::to_string(j));
        std::vector<TrainingExample> group_examples;
        group_examples.reserve(groups[j].size());
        for (auto idx : groups[j]) group_examples.push_back(history_examples[idx]);
        GroupModel gm = finetune_group(*global.backbone, global.base, global.editor, group_examples,
                                       cfg, editor_cfg);
        set.groups.push_back({global.backbone, std::move(gm.base), std::move(gm.editor)});
    }
    set.global = std::move(global);
    return set;
}

/// Serve-time assignment: every group generates its edit for the window; the
/// group with the smallest edit norm wins, lowest index on exact ties.
inline AssignmentResult dynamic_assign(PrototypeSet& set, const std::vector<std::uint32_t>& window) {
    if (set.groups.empty()) throw lifecycle_error("dynamic_assign: no groups built");
    AssignmentResult res;
    std::vector<EditSet> edits;
    edits.reserve(set.groups.size());
    for (std::size_t j = 0; j < set.groups.size(); ++j) {
        auto& g = set.groups[j];
        edits.push_back(generate_edit(g.editor, window, g.base));
        edits.back().source_group = j;
        res.norms.push_back(edit_norm(edits.back()));
    }
    res.chosen_group = 0;
    for (std::size_t j = 1; j < res.norms.size(); ++j)
        if (res.norms[j] < res.norms[res.chosen_group]) res.chosen_group = j;
    res.edit = std::move(edits[res.chosen_group]);
    return res;
}

namespace detail {
/// Pairwise Rand agreement between two labelings: fraction of sample pairs
/// whose together/apart relation matches.
inline double rand_agreement(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::size_t agree = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool ta = a[i] == a[j];
            const bool tb = b[i] == b[j];
            agree += (ta == tb);
            ++total;
        }
    return static_cast<double>(agree) / static_cast<double>(total);
}
}  // namespace detail

/// Cluster each layer's deltas separately and score cross-layer agreement of
/// the resulting partitions (mean pairwise Rand agreement over layer pairs).
inline double partition_consistency(EditorNetwork& editor, const AdaptiveLayerSet& base,
                                    const std::vector<std::vector<std::uint32_t>>& windows,
                                    std::size_t k, std::uint64_t seed) {
    const std::size_t nl = editor.layer_count();
    if (nl < 2) throw invalid_input_error("partition_consistency: need N_l >= 2");
    std::vector<std::vector<std::vector<double>>> per_layer(nl);
    for (const auto& w : windows) {
        EditSet es = generate_edit(editor, w, base);
        for (std::size_t n = 0; n < nl; ++n)
            per_layer[n].push_back(es.deltas[n].data());
    }
    std::vector<std::vector<std::size_t>> labelings;
    for (std::size_t n = 0; n < nl; ++n) {
        // best of several restarts so the score reflects the layer's cluster
        // structure, not one k-means local optimum
        PartitionMap best = kmeans(per_layer[n], k, seed);
        for (std::uint64_t r = 1; r < 10; ++r) {
            PartitionMap alt = kmeans(per_layer[n], k, seed + 0x9e3779b9 * r);
            if (alt.inertia < best.inertia) best = alt;
        }
        labelings.push_back(std::move(best.assignments));
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < nl; ++i)
        for (std::size_t j = i + 1; j < nl; ++j) {
            total += detail::rand_agreement(labelings[i], labelings[j]);
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

}  // namespace persona
