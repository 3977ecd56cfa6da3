#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "persona/errors.hpp"

namespace persona {

struct Event {
    std::uint32_t item = 0;
    std::uint64_t timestamp = 0;
};

/// Per-device interaction streams, sorted by timestamp within each device.
/// Item ids are dense in [0, vocab_size).
struct InteractionLog {
    std::map<std::uint32_t, std::vector<Event>> devices;
    std::uint32_t vocab_size = 0;
    std::vector<std::string> item_names;  // dense id -> original id (loaders only)

    std::size_t total_events() const {
        std::size_t n = 0;
        for (const auto& [id, ev] : devices) n += ev.size();
        return n;
    }
};

/// Ground-truth archetype per (device, event index).
struct ArchetypeLabels {
    std::map<std::uint32_t, std::vector<std::size_t>> labels;
};

/// Synthetic shifting-preference mixture. Items are grouped into clusters;
/// each archetype is a categorical over clusters; a device draws items with
/// Markov cluster persistence and may switch archetype mid-stream.
struct MixtureSpec {
    std::size_t archetype_count = 5;
    std::size_t cluster_count = 10;
    std::size_t items_per_cluster = 50;
    std::vector<std::vector<double>> archetype_cluster_probs;  // K_a x cluster_count
    std::size_t devices_per_archetype = 40;
    std::size_t sequence_length = 100;
    double persistence = 0.5;
    std::vector<std::vector<std::size_t>> shift_points;  // per device; empty entry = no shift
    std::uint64_t seed = 1;

    std::uint32_t vocab_size() const {
        return static_cast<std::uint32_t>(cluster_count * items_per_cluster);
    }
    std::size_t device_count() const { return archetype_count * devices_per_archetype; }

    void validate() const {
        if (archetype_count < 1) throw config_error("MixtureSpec: archetype_count >= 1 required");
        if (archetype_cluster_probs.size() != archetype_count)
            throw config_error("MixtureSpec: need one cluster distribution per archetype");
        for (const auto& row : archetype_cluster_probs) {
            if (row.size() != cluster_count) throw config_error("MixtureSpec: distribution width mismatch");
            double s = 0.0;
            for (double p : row) {
                if (p < 0.0) throw config_error("MixtureSpec: negative probability");
                s += p;
            }
            if (s <= 0.0) throw config_error("MixtureSpec: zero-sum distribution row");
            if (std::abs(s - 1.0) > 1e-9) throw config_error("MixtureSpec: distribution must sum to 1");
        }
        if (!shift_points.empty() && shift_points.size() != device_count())
            throw config_error("MixtureSpec: shift_points size != device count");
        for (const auto& pts : shift_points)
            for (auto p : pts)
                if (p >= sequence_length) throw config_error("MixtureSpec: shift point past sequence end");
    }

    /// Peaked default: archetype k puts mass `peakedness` spread over its own
    /// block of clusters and the rest uniform; `shift_fraction` of devices
    /// switch to the next archetype halfway through.
    static MixtureSpec make_default(std::size_t archetypes, std::size_t clusters,
                                    std::size_t items_per_cluster, std::size_t devices_per_archetype,
                                    std::size_t sequence_length, double peakedness,
                                    double shift_fraction, std::uint64_t seed) {
        MixtureSpec spec;
        spec.archetype_count = archetypes;
        spec.cluster_count = clusters;
        spec.items_per_cluster = items_per_cluster;
        spec.devices_per_archetype = devices_per_archetype;
        spec.sequence_length = sequence_length;
        spec.seed = seed;
        const std::size_t block = std::max<std::size_t>(1, clusters / archetypes);
        for (std::size_t a = 0; a < archetypes; ++a) {
            std::vector<double> row(clusters, (1.0 - peakedness) / static_cast<double>(clusters));
            const std::size_t lo = (a * block) % clusters;
            for (std::size_t b = 0; b < block; ++b) row[(lo + b) % clusters] += peakedness / block;
            double s = 0.0;
            for (double p : row) s += p;
            for (double& p : row) p /= s;
            spec.archetype_cluster_probs.push_back(std::move(row));
        }
        spec.shift_points.assign(spec.device_count(), {});
        std::mt19937_64 rng(seed ^ 0x5f5f5f5fULL);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t d = 0; d < spec.device_count(); ++d)
            if (u(rng) < shift_fraction) spec.shift_points[d] = {sequence_length / 2};
        return spec;
    }
};

struct SyntheticDataset {
    InteractionLog log;
    ArchetypeLabels labels;
};

inline SyntheticDataset gen_synthetic(const MixtureSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SyntheticDataset out;
    out.log.vocab_size = spec.vocab_size();

    auto sample_cluster = [&](std::size_t archetype) {
        const auto& probs = spec.archetype_cluster_probs[archetype];
        double r = u(rng), acc = 0.0;
        for (std::size_t c = 0; c < probs.size(); ++c) {
            acc += probs[c];
            if (r <= acc) return c;
        }
        return probs.size() - 1;
    };

    for (std::uint32_t dev = 0; dev < spec.device_count(); ++dev) {
        std::size_t archetype = dev / spec.devices_per_archetype;
        const auto* shifts = spec.shift_points.empty() ? nullptr : &spec.shift_points[dev];
        std::vector<Event> events;
        std::vector<std::size_t> labels;
        std::size_t cluster = sample_cluster(archetype);
        for (std::size_t t = 0; t < spec.sequence_length; ++t) {
            if (shifts && std::find(shifts->begin(), shifts->end(), t) != shifts->end()) {
                archetype = (archetype + 1) % spec.archetype_count;
                cluster = sample_cluster(archetype);
            }
            if (u(rng) >= spec.persistence) cluster = sample_cluster(archetype);
            std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(spec.items_per_cluster - 1));
            const std::uint32_t item = static_cast<std::uint32_t>(cluster * spec.items_per_cluster) + pick(rng);
            events.push_back({item, t});
            labels.push_back(archetype);
        }
        out.log.devices[dev] = std::move(events);
        out.labels.labels[dev] = std::move(labels);
    }
    return out;
}

/// CSV with header `device_id,item_id,timestamp`; item ids remapped to a
/// dense vocabulary, rows stably sorted per device by timestamp.
inline InteractionLog load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("load_csv: empty file " + path);
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "device_id,item_id,timestamp")
        throw data_error("load_csv: line 1: expected header device_id,item_id,timestamp");

    InteractionLog log;
    std::unordered_map<std::string, std::uint32_t> item_ids;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string dev_s, item_s, ts_s;
        if (!std::getline(ss, dev_s, ',') || !std::getline(ss, item_s, ',') || !std::getline(ss, ts_s))
            throw data_error("load_csv: line " + std::to_string(lineno) + ": missing column");
        std::uint32_t dev;
        std::uint64_t ts;
        try {
            dev = static_cast<std::uint32_t>(std::stoul(dev_s));
            ts = std::stoull(ts_s);
        } catch (const std::exception&) {
            throw data_error("load_csv: line " + std::to_string(lineno) + ": non-integer field");
        }
        auto [it, fresh] = item_ids.emplace(item_s, static_cast<std::uint32_t>(item_ids.size()));
        if (fresh) log.item_names.push_back(item_s);
        log.devices[dev].push_back({it->second, ts});
    }
    log.vocab_size = static_cast<std::uint32_t>(item_ids.size());
    for (auto& [dev, events] : log.devices)
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    return log;
}

inline void save_csv(const InteractionLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("save_csv: cannot open " + path);
    out << "device_id,item_id,timestamp\n";
    for (const auto& [dev, events] : log.devices)
        for (const auto& e : events) out << dev << ',' << e.item << ',' << e.timestamp << '\n';
}

inline void save_labels_csv(const ArchetypeLabels& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("save_labels_csv: cannot open " + path);
    out << "device_id,event_index,archetype\n";
    for (const auto& [dev, ls] : labels.labels)
        for (std::size_t i = 0; i < ls.size(); ++i) out << dev << ',' << i << ',' << ls[i] << '\n';
}

struct SplitSpec {
    double history_fraction = 0.7;
    std::size_t window_size = 20;
};

struct SplitResult {
    InteractionLog history;
    InteractionLog realtime;
    std::size_t dropped_devices = 0;  // devices with < 2 events
};

/// Temporal split: per device, the first `history_fraction` of events become
/// history, the remainder the real-time stream.
inline SplitResult split_history_realtime(const InteractionLog& log, const SplitSpec& split) {
    if (!(split.history_fraction >= 0.0 && split.history_fraction <= 1.0))
        throw invalid_input_error("split: history_fraction out of [0,1]");
    SplitResult out;
    out.history.vocab_size = out.realtime.vocab_size = log.vocab_size;
    for (const auto& [dev, events] : log.devices) {
        if (events.size() < 2) {
            ++out.dropped_devices;
            continue;
        }
        const auto cut = static_cast<std::size_t>(split.history_fraction * static_cast<double>(events.size()));
        if (cut > 0)
            out.history.devices[dev] = {events.begin(), events.begin() + cut};
        if (cut < events.size())
            out.realtime.devices[dev] = {events.begin() + cut, events.end()};
    }
    return out;
}

struct TrainingExample {
    std::uint32_t device_id = 0;
    std::vector<std::uint32_t> window;
    std::uint32_t positive = 0;
    std::vector<std::uint32_t> negatives;
};

/// Sliding next-item windows with uniformly sampled negatives that exclude
/// the device's full history.
inline std::vector<TrainingExample> make_training_windows(const InteractionLog& history,
                                                          std::size_t window_size,
                                                          std::size_t negatives_per_positive,
                                                          std::uint64_t seed) {
    if (window_size < 1) throw invalid_input_error("make_training_windows: W >= 1 required");
    std::mt19937_64 rng(seed);
    std::vector<TrainingExample> out;
    for (const auto& [dev, events] : history.devices) {
        std::unordered_set<std::uint32_t> seen;
        for (const auto& e : events) seen.insert(e.item);
        std::uniform_int_distribution<std::uint32_t> pick(0, history.vocab_size - 1);
        for (std::size_t t = 1; t < events.size(); ++t) {
            TrainingExample ex;
            ex.device_id = dev;
            const std::size_t lo = t > window_size ? t - window_size : 0;
            for (std::size_t i = lo; i < t; ++i) ex.window.push_back(events[i].item);
            ex.positive = events[t].item;
            while (ex.negatives.size() < negatives_per_positive) {
                if (seen.size() >= history.vocab_size) throw data_error("make_training_windows: no eligible negatives");
                const std::uint32_t cand = pick(rng);
                if (seen.count(cand)) continue;
                ex.negatives.push_back(cand);
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

}  // namespace persona
