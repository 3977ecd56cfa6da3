#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "persona/errors.hpp"

namespace persona {

/// One scored event: the held-out positive against its sampled negatives.
struct RankedPrediction {
    std::uint32_t positive_id = 0;
    double positive_score = 0.0;
    std::vector<std::uint32_t> negative_ids;
    std::vector<double> negative_scores;

    std::size_t candidate_count() const { return 1 + negative_ids.size(); }

    /// 1-based rank of the positive, ties broken by ascending item id.
    std::size_t positive_rank() const {
        std::size_t rank = 1;
        for (std::size_t i = 0; i < negative_ids.size(); ++i) {
            if (negative_scores[i] > positive_score) ++rank;
            else if (negative_scores[i] == positive_score && negative_ids[i] < positive_id) ++rank;
        }
        return rank;
    }
};

inline double auc(const std::vector<RankedPrediction>& predictions) {
    if (predictions.empty()) throw invalid_input_error("auc: empty input");
    double total = 0.0;
    for (const auto& p : predictions) {
        if (p.negative_ids.empty()) throw invalid_input_error("auc: prediction without negatives");
        double wins = 0.0;
        for (double ns : p.negative_scores) {
            if (p.positive_score > ns) wins += 1.0;
            else if (p.positive_score == ns) wins += 0.5;
        }
        total += wins / static_cast<double>(p.negative_scores.size());
    }
    return total / static_cast<double>(predictions.size());
}

inline double hr_at_k(const std::vector<RankedPrediction>& predictions, std::size_t k) {
    if (k < 1) throw invalid_input_error("hr_at_k: k >= 1 required");
    if (predictions.empty()) throw invalid_input_error("hr_at_k: empty input");
    double hits = 0.0;
    for (const auto& p : predictions) {
        if (k > p.candidate_count()) throw invalid_input_error("hr_at_k: k > candidate count");
        if (p.positive_rank() <= k) hits += 1.0;
    }
    return hits / static_cast<double>(predictions.size());
}

inline double ndcg_at_k(const std::vector<RankedPrediction>& predictions, std::size_t k) {
    if (k < 1) throw invalid_input_error("ndcg_at_k: k >= 1 required");
    if (predictions.empty()) throw invalid_input_error("ndcg_at_k: empty input");
    double total = 0.0;
    for (const auto& p : predictions) {
        if (k > p.candidate_count()) throw invalid_input_error("ndcg_at_k: k > candidate count");
        const std::size_t rank = p.positive_rank();
        if (rank <= k) total += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    return total / static_cast<double>(predictions.size());
}

struct MetricReport {
    std::string condition;  // baseline | persona_s | persona_m | finetune | group_finetune
    std::uint64_t seed = 0;
    double sweep_value = 0.0;  // position on the active sweep axis, if any
    double auc = 0.0;
    double hr5 = 0.0, hr10 = 0.0;
    double ndcg5 = 0.0, ndcg10 = 0.0;
    std::size_t sample_count = 0;
};

inline MetricReport compute_metrics(const std::vector<RankedPrediction>& preds,
                                    const std::string& condition, std::uint64_t seed) {
    MetricReport r;
    r.condition = condition;
    r.seed = seed;
    r.sample_count = preds.size();
    r.auc = auc(preds);
    r.hr5 = hr_at_k(preds, 5);
    r.hr10 = hr_at_k(preds, 10);
    r.ndcg5 = ndcg_at_k(preds, 5);
    r.ndcg10 = ndcg_at_k(preds, 10);
    return r;
}

namespace detail {
inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    sd = 0.0;
    if (xs.size() > 1) {
        for (double x : xs) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
    }
}
}  // namespace detail

/// Writes one CSV row per (condition, seed) plus a mean +- sample-std summary
/// grouped by (condition, sweep_value). Long format, plot-ready.
inline void emit_report(const std::vector<MetricReport>& reports, const std::string& rows_path,
                        const std::string& summary_path, const std::string& sweep_axis = "") {
    if (reports.empty()) throw invalid_input_error("emit_report: no reports");
    {
        std::ofstream out(rows_path);
        if (!out) throw io_error("emit_report: cannot open " + rows_path);
        out << "condition,seed," << (sweep_axis.empty() ? "sweep_value" : sweep_axis)
            << ",auc,hr5,hr10,ndcg5,ndcg10,samples\n";
        out.precision(10);
        for (const auto& r : reports)
            out << r.condition << ',' << r.seed << ',' << r.sweep_value << ',' << r.auc << ','
                << r.hr5 << ',' << r.hr10 << ',' << r.ndcg5 << ',' << r.ndcg10 << ','
                << r.sample_count << '\n';
    }
    std::map<std::pair<std::string, double>, std::vector<const MetricReport*>> grouped;
    for (const auto& r : reports) grouped[{r.condition, r.sweep_value}].push_back(&r);
    std::ofstream out(summary_path);
    if (!out) throw io_error("emit_report: cannot open " + summary_path);
    out << "condition," << (sweep_axis.empty() ? "sweep_value" : sweep_axis)
        << ",metric,mean,std,seeds\n";
    out.precision(10);
    for (const auto& [key, rs] : grouped) {
        const auto emit = [&](const char* name, auto getter) {
            std::vector<double> xs;
            for (const auto* r : rs) xs.push_back(getter(*r));
            double mean, sd;
            detail::mean_std(xs, mean, sd);
            out << key.first << ',' << key.second << ',' << name << ',' << mean << ',' << sd << ','
                << rs.size() << '\n';
        };
        emit("auc", [](const MetricReport& r) { return r.auc; });
        emit("hr5", [](const MetricReport& r) { return r.hr5; });
        emit("hr10", [](const MetricReport& r) { return r.hr10; });
        emit("ndcg5", [](const MetricReport& r) { return r.ndcg5; });
        emit("ndcg10", [](const MetricReport& r) { return r.ndcg10; });
    }
}

}  // namespace persona
