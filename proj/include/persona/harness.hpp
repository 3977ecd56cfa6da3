#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <thread>
#include <unordered_set>
#include <vector>

#include "persona/data.hpp"
#include "persona/editor.hpp"
#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/model.hpp"
#include "persona/prototypes.hpp"
#include "persona/training.hpp"
#include "persona/wire.hpp"

namespace persona {

struct SyncRecord {
    std::uint32_t device_id = 0;
    std::size_t event_index = 0;
    std::size_t chosen_group = 0;
    double edit_norm = 0.0;
    std::size_t upload_bytes = 0;
    std::size_t download_bytes = 0;
    double cloud_latency_seconds = 0.0;
};

struct SimPolicy {
    std::size_t sync_every = 5;                         // K device events per sync
    std::size_t window_size = 20;                       // W
    std::size_t eval_negatives = 49;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    bool enable_sync = true;

    static constexpr std::size_t kNeverSync = std::numeric_limits<std::size_t>::max();
};

/// One simulated device: its real-time stream, sliding window, and model.
struct DeviceSession {
    std::uint32_t device_id = 0;
    std::vector<Event> stream;
    std::vector<std::uint32_t> window;          // warm-start window from history
    std::unordered_set<std::uint32_t> seen;     // full-stream items, negative exclusion
    std::shared_ptr<DeviceModel> model;
    std::optional<std::size_t> assigned_group;
};

struct DeviceLog {
    std::uint32_t device_id = 0;
    std::vector<RankedPrediction> predictions;
    std::vector<std::size_t> assigned_groups;   // per sync
};

struct SimulationResult {
    std::vector<SyncRecord> sync_records;
    std::vector<DeviceLog> device_logs;
};

/// Step 1 of the protocol: device uploads its current window.
inline wire::UploadMessage device_sync_request(const DeviceSession& session) {
    if (session.window.empty()) throw invalid_input_error("device_sync_request: empty window");
    return {session.device_id, session.window};
}

struct CloudResponse {
    std::vector<std::uint8_t> message;  // encoded download
    SyncRecord record;
};

/// Steps 2-4: assign, edit, serialize. Latency is measured around exactly
/// that work.
inline CloudResponse cloud_serve(PrototypeSet& set, const std::vector<std::uint8_t>& request) {
    const wire::UploadMessage upload = wire::decode_upload(request);
    if (upload.window.empty()) throw protocol_error("cloud_serve: empty window in request");
    const auto t0 = std::chrono::steady_clock::now();
    AssignmentResult assign = dynamic_assign(set, upload.window);
    AdaptiveLayerSet edited = apply_edit(set.groups[assign.chosen_group].base, assign.edit);
    wire::DownloadMessage down{static_cast<std::uint16_t>(assign.chosen_group), std::move(edited)};
    CloudResponse resp;
    resp.message = wire::encode_download(down);
    resp.record.cloud_latency_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    resp.record.device_id = upload.device_id;
    resp.record.chosen_group = assign.chosen_group;
    resp.record.edit_norm = assign.norms[assign.chosen_group];
    resp.record.upload_bytes = wire::upload_accounting(upload.window.size());
    resp.record.download_bytes = wire::download_accounting(down.weights);
    return resp;
}

namespace detail {

/// Candidate negatives for an eval event, a pure function of
/// (seed, device, event index) so conditions compare on identical sets.
inline std::vector<std::uint32_t> eval_negatives(std::uint64_t seed, std::uint32_t device,
                                                 std::size_t event_index, std::uint32_t vocab,
                                                 const std::unordered_set<std::uint32_t>& exclude,
                                                 std::size_t count) {
    std::size_t excluded_in_vocab = 0;
    for (auto id : exclude)
        if (id < vocab) ++excluded_in_vocab;
    if (vocab - excluded_in_vocab < count)
        throw data_error("eval_negatives: vocabulary too small for requested negative count");
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (device + 1)) ^
                        (0xc2b2ae3d27d4eb4fULL * (event_index + 1)));
    std::uniform_int_distribution<std::uint32_t> pick(0, vocab - 1);
    std::vector<std::uint32_t> out;
    std::unordered_set<std::uint32_t> used;
    while (out.size() < count) {
        const std::uint32_t c = pick(rng);
        if (exclude.count(c) || used.count(c)) continue;
        used.insert(c);
        out.push_back(c);
    }
    return out;
}

inline void run_device(DeviceSession& session, PrototypeSet& set, const SimPolicy& policy,
                       std::uint32_t vocab, DeviceLog& log, std::vector<SyncRecord>& records) {
    log.device_id = session.device_id;
    std::size_t events_since_sync = 0;
    for (std::size_t t = 0; t < session.stream.size(); ++t) {
        const std::uint32_t next = session.stream[t].item;
        if (!session.window.empty()) {
            // predict before reveal
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
        ++events_since_sync;
        if (policy.enable_sync && policy.sync_every != SimPolicy::kNeverSync &&
            events_since_sync >= policy.sync_every && !session.window.empty()) {
            events_since_sync = 0;
            auto request = wire::encode_upload(device_sync_request(session));
            CloudResponse resp = cloud_serve(set, request);
            resp.record.event_index = t;
            wire::DownloadMessage down = wire::decode_download(resp.message);
            session.model->install_adaptive(std::move(down.weights));
            session.assigned_group = down.group;
            log.assigned_groups.push_back(down.group);
            records.push_back(resp.record);
        }
    }
}

}  // namespace detail

/// Event loop over all devices: predict before reveal, slide the window,
/// sync every K events. Deterministic per seed; the multi-threaded mode
/// shards by device and produces identical per-device logs.
inline SimulationResult run_simulation(PrototypeSet& set, std::vector<DeviceSession>& sessions,
                                       const SimPolicy& policy) {
    if (sessions.empty()) throw invalid_input_error("run_simulation: no sessions");
    const std::uint32_t vocab = set.global.backbone->spec.vocab_size;
    SimulationResult result;
    result.device_logs.resize(sessions.size());
    std::vector<std::vector<SyncRecord>> per_device_records(sessions.size());

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            detail::run_device(sessions[i], set, policy, vocab, result.device_logs[i],
                               per_device_records[i]);
    };
    if (policy.threads <= 1) {
        work(0, sessions.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (sessions.size() + policy.threads - 1) / policy.threads;
        for (std::size_t t = 0; t < policy.threads; ++t) {
            const std::size_t b = t * chunk;
            if (b >= sessions.size()) break;
            pool.emplace_back(work, b, std::min(sessions.size(), b + chunk));
        }
        for (auto& th : pool) th.join();
    }
    for (auto& recs : per_device_records)
        result.sync_records.insert(result.sync_records.end(), recs.begin(), recs.end());
    return result;
}

/// Builds device sessions over real-time streams, warm-starting each window
/// from the tail of the device's history.
inline std::vector<DeviceSession> make_sessions(const InteractionLog& history,
                                                const InteractionLog& realtime,
                                                const PrototypeSet& set, const SimPolicy& policy) {
    std::vector<DeviceSession> sessions;
    for (const auto& [dev, stream] : realtime.devices) {
        DeviceSession s;
        s.device_id = dev;
        s.stream = stream;
        auto hit = history.devices.find(dev);
        if (hit != history.devices.end()) {
            const auto& h = hit->second;
            const std::size_t lo = h.size() > policy.window_size ? h.size() - policy.window_size : 0;
            for (std::size_t i = lo; i < h.size(); ++i) s.window.push_back(h[i].item);
            for (const auto& e : h) s.seen.insert(e.item);
        }
        for (const auto& e : stream) s.seen.insert(e.item);
        s.model = std::make_shared<DeviceModel>(set.global.backbone, set.global.base);
        sessions.push_back(std::move(s));
    }
    return sessions;
}

struct LatencyRatioResult {
    double median_serve_seconds = 0.0;
    double median_finetune_seconds = 0.0;
    double ratio = 0.0;  // finetune / serve
};

namespace detail {
inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}
}  // namespace detail

/// Median cloud_serve latency vs median on-device fine-tune wall-clock over
/// the same windows.
inline LatencyRatioResult latency_ratio_experiment(PrototypeSet& set,
                                                   const std::vector<std::vector<std::uint32_t>>& windows,
                                                   const TrainConfig& finetune_cfg,
                                                   std::size_t negatives_seed = 7) {
    if (windows.empty()) throw invalid_input_error("latency_ratio_experiment: no windows");
    std::vector<double> serve_times, finetune_times;
    std::mt19937_64 rng(negatives_seed);
    const std::uint32_t vocab = set.global.backbone->spec.vocab_size;
    std::uniform_int_distribution<std::uint32_t> pick(0, vocab - 1);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        auto request = wire::encode_upload({static_cast<std::uint32_t>(i), w});
        serve_times.push_back(cloud_serve(set, request).record.cloud_latency_seconds);

        // labeled next-item examples from within the window
        std::vector<TrainingExample> exs;
        for (std::size_t t = 1; t < w.size(); ++t) {
            TrainingExample ex;
            ex.window.assign(w.begin(), w.begin() + t);
            ex.positive = w[t];
            while (ex.negatives.size() < finetune_cfg.negatives_per_positive) {
                const std::uint32_t c = pick(rng);
                if (c != ex.positive) ex.negatives.push_back(c);
            }
            exs.push_back(std::move(ex));
        }
        finetune_times.push_back(
            finetune_on_device_baseline(*set.global.backbone, set.global.base, exs, finetune_cfg)
                .wall_clock_seconds);
    }
    LatencyRatioResult out;
    out.median_serve_seconds = detail::median(serve_times);
    out.median_finetune_seconds = detail::median(finetune_times);
    out.ratio = out.median_finetune_seconds / out.median_serve_seconds;
    return out;
}

}  // namespace persona
