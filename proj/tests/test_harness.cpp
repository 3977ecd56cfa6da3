#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "persona/data.hpp"
#include "persona/harness.hpp"
#include "persona/prototypes.hpp"

using namespace persona;

namespace {

constexpr std::uint32_t kVocab = 120;

// A servable prototype set with random weights; no training needed for
// protocol-level tests.
PrototypeSet make_set(std::size_t groups, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    BackboneSpec bs;
    bs.vocab_size = kVocab;
    bs.embed_dim = 6;
    bs.hidden_dim = 6;
    bs.pooling = Pooling::mean;
    auto backbone = std::make_shared<const Backbone>(bs, seed);

    PrototypeSet set;
    set.global.backbone = backbone;
    set.global.base = AdaptiveLayerSet::random(6, {5, 6}, rng);
    set.global.editor = EditorNetwork(EditorSpec{6, 1.0, true}, kVocab, set.global.base, rng());
    set.global.editor.trained = true;
    for (std::size_t j = 0; j < groups; ++j) {
        PrototypeModel g;
        g.backbone = backbone;
        g.base = AdaptiveLayerSet::random(6, {5, 6}, rng);
        g.editor = EditorNetwork(EditorSpec{6, 1.0, true}, kVocab, g.base, rng());
        g.editor.trained = true;
        set.groups.push_back(std::move(g));
    }
    set.partition.group_count = groups;
    return set;
}

SplitResult make_streams(std::uint64_t seed = 3) {
    MixtureSpec spec = MixtureSpec::make_default(3, 6, 20, 4, 30, 0.9, 0.5, seed);
    SyntheticDataset ds = gen_synthetic(spec);
    return split_history_realtime(ds.log, {0.5, 8});
}

SimPolicy policy(std::size_t threads = 1) {
    SimPolicy p;
    p.sync_every = 4;
    p.window_size = 8;
    p.eval_negatives = 20;
    p.seed = 5;
    p.threads = threads;
    return p;
}

}  // namespace

TEST(EvalNegatives, DeterministicAndExcludesSeen) {
    std::unordered_set<std::uint32_t> seen{1, 2, 3};
    auto a = detail::eval_negatives(9, 4, 7, kVocab, seen, 20);
    auto b = detail::eval_negatives(9, 4, 7, kVocab, seen, 20);
    EXPECT_EQ(a, b);
    for (auto id : a) {
        EXPECT_EQ(seen.count(id), 0u);
        EXPECT_LT(id, kVocab);
    }
    std::unordered_set<std::uint32_t> uniq(a.begin(), a.end());
    EXPECT_EQ(uniq.size(), a.size());
    auto c = detail::eval_negatives(9, 4, 8, kVocab, seen, 20);
    EXPECT_NE(a, c);  // varies with event index
    std::unordered_set<std::uint32_t> all;
    for (std::uint32_t i = 0; i < kVocab; ++i) all.insert(i);
    EXPECT_THROW(detail::eval_negatives(9, 4, 7, kVocab, all, 1), data_error);
}

TEST(CloudServe, RecordMatchesResponse) {
    PrototypeSet set = make_set(3);
    std::vector<std::uint32_t> window{5, 6, 7, 8};
    auto request = wire::encode_upload({11, window});
    CloudResponse resp = cloud_serve(set, request);
    wire::DownloadMessage down = wire::decode_download(resp.message);
    EXPECT_EQ(resp.record.device_id, 11u);
    EXPECT_EQ(resp.record.chosen_group, static_cast<std::size_t>(down.group));
    EXPECT_EQ(resp.record.upload_bytes, 8 * window.size() + 16);
    std::size_t floats = 0;
    for (const auto& l : down.weights.layers) floats += l.size();
    EXPECT_EQ(resp.record.download_bytes, 4 * floats + 16);
    EXPECT_GT(resp.record.edit_norm, 0.0);
    EXPECT_GE(resp.record.cloud_latency_seconds, 0.0);

    // response weights equal base + edit of the chosen group
    AssignmentResult a = dynamic_assign(set, window);
    AdaptiveLayerSet expect = apply_edit(set.groups[a.chosen_group].base, a.edit);
    for (std::size_t n = 0; n < expect.layers.size(); ++n)
        for (std::size_t i = 0; i < expect.layers[n].size(); ++i)
            EXPECT_NEAR(down.weights.layers[n].at(i), expect.layers[n].at(i), 1e-6);  // f32
}

TEST(CloudServe, ServingMutatesNoWeights) {
    PrototypeSet set = make_set(3);
    std::vector<const ParamTensor*> all = set.global.editor.tensors();
    auto bb = set.global.backbone->tensors();
    all.insert(all.end(), bb.begin(), bb.end());
    for (const auto& g : set.groups) {
        auto ts = g.editor.tensors();
        all.insert(all.end(), ts.begin(), ts.end());
    }
    const std::uint64_t before = fnv_checksum(all);
    const AdaptiveLayerSet base_before = set.groups[0].base;
    for (std::uint32_t i = 0; i < 20; ++i)
        cloud_serve(set, wire::encode_upload({i, {i % kVocab, (i + 3) % kVocab}}));
    EXPECT_EQ(fnv_checksum(all), before);
    for (std::size_t n = 0; n < base_before.layers.size(); ++n)
        EXPECT_EQ(set.groups[0].base.layers[n], base_before.layers[n]);
}

TEST(DynamicAssign, BruteForceOracleAndTies) {
    PrototypeSet set = make_set(4);
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::uint32_t> item(0, kVocab - 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::uint32_t> w;
        for (int i = 0; i < 5; ++i) w.push_back(item(rng));
        AssignmentResult res = dynamic_assign(set, w);
        std::size_t best = 0;
        std::vector<double> norms;
        for (std::size_t j = 0; j < set.groups.size(); ++j) {
            norms.push_back(edit_norm(generate_edit(set.groups[j].editor, w, set.groups[j].base)));
            if (norms[j] < norms[best]) best = j;
        }
        EXPECT_EQ(res.chosen_group, best);
        ASSERT_EQ(res.norms.size(), norms.size());
        for (std::size_t j = 0; j < norms.size(); ++j) EXPECT_DOUBLE_EQ(res.norms[j], norms[j]);
    }
    // engineered exact tie: identical groups -> lowest index wins
    PrototypeSet tied = make_set(1);
    tied.groups.push_back(tied.groups[0]);
    tied.groups.push_back(tied.groups[0]);
    AssignmentResult res = dynamic_assign(tied, {1, 2, 3});
    EXPECT_EQ(res.chosen_group, 0u);
}

TEST(Simulation, SyncCadenceAndGroupLogging) {
    PrototypeSet set = make_set(3);
    SplitResult streams = make_streams();
    SimPolicy p = policy();
    auto sessions = make_sessions(streams.history, streams.realtime, set, p);
    SimulationResult sim = run_simulation(set, sessions, p);
    for (const auto& dl : sim.device_logs) {
        const std::size_t stream_len = streams.realtime.devices.at(dl.device_id).size();
        EXPECT_EQ(dl.assigned_groups.size(), stream_len / p.sync_every);
        // warm-started windows: every event is predicted
        EXPECT_EQ(dl.predictions.size(), stream_len);
        for (const auto& pred : dl.predictions)
            EXPECT_EQ(pred.negative_ids.size(), p.eval_negatives);
    }
    std::size_t expected_syncs = 0;
    for (const auto& dl : sim.device_logs) expected_syncs += dl.assigned_groups.size();
    EXPECT_EQ(sim.sync_records.size(), expected_syncs);
}

TEST(Simulation, DisabledSyncProducesNoRecords) {
    PrototypeSet set = make_set(3);
    SplitResult streams = make_streams();
    SimPolicy p = policy();
    p.enable_sync = false;
    auto sessions = make_sessions(streams.history, streams.realtime, set, p);
    SimulationResult sim = run_simulation(set, sessions, p);
    EXPECT_TRUE(sim.sync_records.empty());
}

TEST(Simulation, DeterministicAcrossRunsAndThreadCounts) {
    PrototypeSet set = make_set(3);
    SplitResult streams = make_streams();
    auto run = [&](std::size_t threads) {
        PrototypeSet s = set;  // fresh copy, serving is stateless anyway
        SimPolicy p = policy(threads);
        auto sessions = make_sessions(streams.history, streams.realtime, s, p);
        return run_simulation(s, sessions, p);
    };
    SimulationResult a = run(1);
    SimulationResult b = run(1);
    SimulationResult c = run(4);
    for (const SimulationResult* other : {&b, &c}) {
        ASSERT_EQ(a.device_logs.size(), other->device_logs.size());
        for (std::size_t d = 0; d < a.device_logs.size(); ++d) {
            const auto& x = a.device_logs[d];
            const auto& y = other->device_logs[d];
            EXPECT_EQ(x.assigned_groups, y.assigned_groups);
            ASSERT_EQ(x.predictions.size(), y.predictions.size());
            for (std::size_t i = 0; i < x.predictions.size(); ++i) {
                EXPECT_EQ(x.predictions[i].negative_ids, y.predictions[i].negative_ids);
                EXPECT_EQ(x.predictions[i].positive_score, y.predictions[i].positive_score);
                EXPECT_EQ(x.predictions[i].negative_scores, y.predictions[i].negative_scores);
            }
        }
    }
}

TEST(LatencyRatio, ServeFasterThanFinetune) {
    PrototypeSet set = make_set(2);
    std::vector<std::vector<std::uint32_t>> windows;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::uint32_t> item(0, kVocab - 1);
    for (int i = 0; i < 10; ++i) {
        std::vector<std::uint32_t> w;
        for (int j = 0; j < 8; ++j) w.push_back(item(rng));
        windows.push_back(w);
    }
    TrainConfig ft{10, 8, 0.01, 4, 1, 3};
    LatencyRatioResult r = latency_ratio_experiment(set, windows, ft);
    EXPECT_GT(r.median_serve_seconds, 0.0);
    EXPECT_GT(r.median_finetune_seconds, r.median_serve_seconds);
    EXPECT_GT(r.ratio, 1.0);
}

TEST(Harness, EmptyInputsThrow) {
    PrototypeSet set = make_set(1);
    std::vector<DeviceSession> none;
    SimPolicy p = policy();
    EXPECT_THROW(run_simulation(set, none, p), invalid_input_error);
    DeviceSession s;
    EXPECT_THROW(device_sync_request(s), invalid_input_error);
    PrototypeSet no_groups = make_set(1);
    no_groups.groups.clear();
    EXPECT_THROW(dynamic_assign(no_groups, {1}), lifecycle_error);
}
