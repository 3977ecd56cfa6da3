#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "persona/eval.hpp"

using namespace persona;

namespace {

RankedPrediction make_pred(double pos, std::vector<double> negs, std::uint32_t pos_id = 100) {
    RankedPrediction p;
    p.positive_id = pos_id;
    p.positive_score = pos;
    for (std::size_t i = 0; i < negs.size(); ++i) {
        p.negative_ids.push_back(static_cast<std::uint32_t>(i));
        p.negative_scores.push_back(negs[i]);
    }
    return p;
}

// Independent brute-force metrics by full enumeration of candidate ranks.
std::size_t oracle_rank(const RankedPrediction& p) {
    std::vector<std::pair<double, std::uint32_t>> all{{p.positive_score, p.positive_id}};
    for (std::size_t i = 0; i < p.negative_ids.size(); ++i)
        all.emplace_back(p.negative_scores[i], p.negative_ids[i]);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i].second == p.positive_id && all[i].first == p.positive_score) return i + 1;
    return all.size();
}

double oracle_auc(const std::vector<RankedPrediction>& ps) {
    double total = 0.0;
    for (const auto& p : ps) {
        double wins = 0.0;
        for (double n : p.negative_scores)
            wins += p.positive_score > n ? 1.0 : (p.positive_score == n ? 0.5 : 0.0);
        total += wins / p.negative_scores.size();
    }
    return total / ps.size();
}

std::vector<RankedPrediction> random_preds(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> score(-2.0, 2.0);
    std::uniform_int_distribution<std::size_t> count(1, 9);
    std::vector<RankedPrediction> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> negs(count(rng));
        for (double& v : negs) v = score(rng);
        out.push_back(make_pred(score(rng), negs));
    }
    return out;
}

}  // namespace

TEST(Rank, TieBrokenByAscendingItemId) {
    RankedPrediction p = make_pred(1.0, {1.0, 1.0}, 5);
    p.negative_ids = {3, 9};  // id 3 < 5 outranks the positive, id 9 does not
    EXPECT_EQ(p.positive_rank(), 2u);
}

TEST(Metrics, TrivialValues) {
    auto top = make_pred(5.0, {1.0, 2.0, 3.0, 4.0, 0.0});
    EXPECT_EQ(top.positive_rank(), 1u);
    EXPECT_DOUBLE_EQ(ndcg_at_k({top}, 5), 1.0);
    EXPECT_DOUBLE_EQ(hr_at_k({top}, 5), 1.0);
    auto second = make_pred(3.5, {1.0, 2.0, 3.0, 4.0, 0.0});
    EXPECT_EQ(second.positive_rank(), 2u);
    EXPECT_NEAR(ndcg_at_k({second}, 5), 1.0 / std::log2(3.0), 1e-12);
    auto sixth = make_pred(-1.0, {1.0, 2.0, 3.0, 4.0, 0.0});
    EXPECT_EQ(sixth.positive_rank(), 6u);
    EXPECT_DOUBLE_EQ(hr_at_k({sixth}, 5), 0.0);
    EXPECT_DOUBLE_EQ(ndcg_at_k({sixth}, 5), 0.0);
    EXPECT_DOUBLE_EQ(hr_at_k({sixth}, 6), 1.0);  // k == candidate count saturates
}

TEST(Metrics, MatchBruteForceOnSmallInstances) {
    auto preds = random_preds(7, 300);
    EXPECT_NEAR(auc(preds), oracle_auc(preds), 1e-12);
    for (std::size_t k = 1; k <= 2; ++k) {
        double hr = 0.0, ndcg = 0.0;
        for (const auto& p : preds) {
            const std::size_t r = oracle_rank(p);
            if (r <= k) {
                hr += 1.0;
                ndcg += 1.0 / std::log2(r + 1.0);
            }
        }
        EXPECT_NEAR(hr_at_k(preds, k), hr / preds.size(), 1e-12);
        EXPECT_NEAR(ndcg_at_k(preds, k), ndcg / preds.size(), 1e-12);
    }
}

TEST(Metrics, MonotoneNonDecreasingInK) {
    auto preds = random_preds(11, 100);
    // restrict to instances with >= 5 candidates for a shared k range
    std::vector<RankedPrediction> big;
    for (auto& p : preds)
        if (p.candidate_count() >= 5) big.push_back(p);
    ASSERT_GT(big.size(), 10u);
    double prev_hr = 0.0, prev_ndcg = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        const double h = hr_at_k(big, k), n = ndcg_at_k(big, k);
        EXPECT_GE(h, prev_hr);
        EXPECT_GE(n, prev_ndcg);
        prev_hr = h;
        prev_ndcg = n;
    }
}

TEST(Metrics, AucInvariantUnderMonotoneTransform) {
    auto preds = random_preds(13, 200);
    const double before = auc(preds);
    for (auto& p : preds) {
        auto f = [](double x) { return std::exp(0.5 * x) + 3.0; };  // strictly increasing
        p.positive_score = f(p.positive_score);
        for (double& s : p.negative_scores) s = f(s);
    }
    EXPECT_NEAR(auc(preds), before, 1e-12);
}

TEST(Metrics, AucTieContributesHalf) {
    EXPECT_DOUBLE_EQ(auc({make_pred(1.0, {1.0})}), 0.5);
}

TEST(Metrics, InputValidation) {
    EXPECT_THROW(auc({}), invalid_input_error);
    RankedPrediction no_negs;
    no_negs.positive_score = 1.0;
    EXPECT_THROW(auc({no_negs}), invalid_input_error);
    auto p = make_pred(1.0, {0.0});
    EXPECT_THROW(hr_at_k({p}, 0), invalid_input_error);
    EXPECT_THROW(hr_at_k({p}, 3), invalid_input_error);  // k > candidate count
    EXPECT_THROW(ndcg_at_k({p}, 3), invalid_input_error);
}

TEST(Report, RowsAndSummarySchema) {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "persona_eval_test";
    fs::create_directories(dir);
    std::vector<MetricReport> reports;
    // two conditions x 2 seeds with hand-picked hr5 values
    for (std::uint64_t seed : {1, 2}) {
        MetricReport r;
        r.condition = "baseline";
        r.seed = seed;
        r.hr5 = seed == 1 ? 0.2 : 0.4;
        r.sample_count = 10;
        reports.push_back(r);
        r.condition = "persona_m";
        r.hr5 = seed == 1 ? 0.5 : 0.7;
        reports.push_back(r);
    }
    const std::string rows = (dir / "rows.csv").string();
    const std::string summary = (dir / "summary.csv").string();
    emit_report(reports, rows, summary);

    std::ifstream rin(rows);
    std::string line;
    std::size_t data_rows = 0;
    std::getline(rin, line);
    EXPECT_EQ(line, "condition,seed,sweep_value,auc,hr5,hr10,ndcg5,ndcg10,samples");
    while (std::getline(rin, line))
        if (!line.empty()) ++data_rows;
    EXPECT_EQ(data_rows, 4u);

    // summary: mean 0.3 and sample std sqrt(0.02) for baseline hr5
    std::ifstream sin(summary);
    bool found = false;
    while (std::getline(sin, line)) {
        if (line.rfind("baseline,0,hr5,", 0) == 0) {
            std::stringstream ss(line.substr(15));
            double mean, sd;
            char comma;
            ss >> mean >> comma >> sd;
            EXPECT_NEAR(mean, 0.3, 1e-9);
            EXPECT_NEAR(sd, std::sqrt(0.02), 1e-9);
            found = true;
        }
    }
    EXPECT_TRUE(found);
    fs::remove_all(dir);
    EXPECT_THROW(emit_report({}, rows, summary), invalid_input_error);
}
