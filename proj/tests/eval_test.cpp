#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "lpnet/eval.hpp"
#include "pca_reference.hpp"

using namespace lpnet;

namespace {

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> v(n, std::vector<double>(d));
    for (auto& row : v)
        for (auto& x : row) x = rng.uniform(-1, 1);
    return v;
}

Dataset small_set(std::vector<int> tasks, const std::string& tier, std::size_t count, std::uint64_t seed) {
    Dataset ds = generate_dataset(tier_configs(tasks, tier_by_name(tier), seed), count);
    ds.manifest.tier = tier;
    return ds;
}

// Records the T it was called with.
class SpyModel : public Predictor {
public:
    mutable std::vector<int> calls;
    std::vector<double> predict(const Sample& s, int iterations) const override {
        calls.push_back(iterations);
        return OracleModel().predict(s, iterations);
    }
    std::string name() const override { return "spy"; }
};

}  // namespace

TEST(Scoring, ThresholdTieBreak) {
    EXPECT_EQ(predicted_label(0.5), 1);
    EXPECT_EQ(predicted_label(std::nextafter(0.5, 0.0)), 0);
    EXPECT_EQ(predicted_label(1.0), 1);
    EXPECT_EQ(predicted_label(0.0), 0);
}

TEST(Scoring, OracleScoresOneOnEveryTierAndTask) {
    std::vector<int> all(12);
    std::iota(all.begin(), all.end(), 1);
    std::vector<Dataset> sets;
    for (const auto& t : difficulty_tiers()) sets.push_back(small_set(all, t.name, 8, 21));
    const auto r = evaluate(OracleModel(), sets, 4, 2);
    ASSERT_EQ(r.accuracy.size(), 4u);
    for (const auto& [tier, row] : r.accuracy) {
        ASSERT_EQ(row.size(), 12u);
        for (const auto& [task, acc] : row) EXPECT_EQ(acc, 1.0) << tier << " task " << task;
        EXPECT_EQ(r.means.at(tier), 1.0);
    }
    EXPECT_EQ(r.meta.at("model"), "oracle");
}

TEST(Scoring, ConstantModelOnBalancedLabels) {
    const auto ds = small_set({1, 2, 3, 7}, "easy", 10, 4);
    std::size_t pos = 0, total = 0;
    for (const auto& s : ds.samples)
        for (const auto& q : s.queries) {
            pos += q.target;
            ++total;
        }
    ASSERT_EQ(2 * pos, total);
    for (double p : {0.6, 0.5, 0.4}) {
        const auto r = evaluate(ConstantModel(p), ds, 1);
        for (const auto& [task, acc] : r.accuracy.at("easy")) EXPECT_EQ(acc, 0.5);
    }
}

TEST(Scoring, MeansAreArithmeticMeansAndCsv) {
    std::vector<Sample> samples = small_set({1, 2}, "validation", 3, 1).samples;
    samples[0].queries[0].target ^= 1;  // oracle now misses one query of task 1
    const auto scores = score_samples(OracleModel(), samples, 1);
    const double t1 = 5.0 / 6.0;
    EXPECT_DOUBLE_EQ(scores.at(1).accuracy(), t1);
    EXPECT_EQ(scores.at(2).accuracy(), 1.0);
    EXPECT_DOUBLE_EQ(mean_accuracy(scores), (t1 + 1.0) / 2);
    EvalReport r;
    r.add_tier("easy", scores);
    std::ostringstream os;
    write_eval_csv(os, r);
    EXPECT_EQ(os.str(), "tier,task,accuracy\neasy,1,0.83333333333333337\neasy,2,1\neasy,mean,0.91666666666666674\n");
}

TEST(Scoring, ThreadCountDoesNotChangeScores) {
    const auto ds = small_set({3, 4, 5}, "medium", 12, 8);
    ImaConfig c;
    c.d = 8;
    const ImaModel m(c, 2);
    const auto a = score_samples(m, ds.samples, 2, 1);
    const auto b = score_samples(m, ds.samples, 2, 3);
    for (const auto& [task, sc] : a) {
        EXPECT_EQ(sc.correct, b.at(task).correct);
        EXPECT_EQ(sc.total, b.at(task).total);
    }
}

TEST(Sweeps, MultihopUsesNPlusOneIterations) {
    SpyModel spy;
    const auto c = multihop_sweep(spy, 32, 2, 5);
    ASSERT_EQ(c.x.size(), 32u);
    EXPECT_EQ(c.accuracy.size(), 32u);
    for (std::size_t i = 0; i < 32; ++i) {
        EXPECT_EQ(c.x[i], static_cast<int>(i) + 1);
        EXPECT_EQ(c.iterations[i], c.x[i] + 1);
        EXPECT_EQ(c.accuracy[i], 1.0);
    }
    ASSERT_EQ(spy.calls.size(), 64u);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(spy.calls[i], static_cast<int>(i / 2) + 2);
    std::ostringstream os;
    write_sweep_csv(os, c);
    EXPECT_EQ(os.str().substr(0, 36), "steps,iterations,accuracy\n1,2,1\n2,3,");
}

TEST(Sweeps, LengthSweepFixedIterations) {
    SpyModel spy;
    const auto c = length_sweep(spy, 64, 1, 5, 3);
    ASSERT_EQ(c.x.size(), 64u);
    for (std::size_t i = 0; i < 64; ++i) {
        EXPECT_EQ(c.x[i], static_cast<int>(i) + 1);
        EXPECT_EQ(c.iterations[i], 3);
        EXPECT_EQ(c.accuracy[i], 1.0);
    }
    for (int t : spy.calls) EXPECT_EQ(t, 3);
    EXPECT_THROW(length_sweep(spy, 4, 1, 5, -1), std::invalid_argument);
}

TEST(Pca, MatchesJacobiReference) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto x = random_rows(10, 8, seed);
        const auto r = pca_project(x, 8);
        std::vector<std::vector<double>> ref;
        std::vector<double> var;
        lpnet::testing::reference_pca(x, 8, ref, &var);
        EXPECT_FALSE(r.degenerate);
        for (std::size_t c = 0; c < 8; ++c) {
            EXPECT_NEAR(r.variance[c], var[c], 1e-10);
            for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(r.coords(i, c), ref[i][c], 1e-8) << seed << " " << c;
        }
        // Rank n-1 = 9 > 8 dims, so all variance is captured.
        EXPECT_NEAR(std::accumulate(r.explained_ratio.begin(), r.explained_ratio.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Pca, ComponentsAreOrthonormalWithSignConvention) {
    const auto r = pca_project(random_rows(30, 6, 9), 3);
    const Eigen::MatrixXd g = r.components.transpose() * r.components;
    EXPECT_LT((g - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index j = 0; j < 3; ++j) {
        Eigen::Index i = 0;
        while (std::abs(r.components(i, j)) <= 1e-12) ++i;
        EXPECT_GT(r.components(i, j), 0);
    }
    EXPECT_GE(r.variance[0], r.variance[1]);
    EXPECT_GE(r.variance[1], r.variance[2]);
}

TEST(Pca, RowPermutationPermutesCoordinates) {
    auto x = random_rows(12, 5, 4);
    const auto a = pca_project(x, 2);
    std::reverse(x.begin(), x.end());
    const auto b = pca_project(x, 2);
    for (Eigen::Index i = 0; i < 12; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) EXPECT_NEAR(a.coords(i, j), b.coords(11 - i, j), 1e-10);
}

TEST(Pca, DegenerateAndCollinear) {
    const auto same = pca_project({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, 2);
    EXPECT_TRUE(same.degenerate);
    EXPECT_EQ(same.coords.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(same.variance, (std::vector<double>{0, 0}));

    const auto line = pca_project({{0, 0}, {1, 2}, {2, 4}, {-1, -2}}, 2);
    EXPECT_FALSE(line.degenerate);
    EXPECT_NEAR(line.explained_ratio[0], 1.0, 1e-12);
    EXPECT_NEAR(line.explained_ratio[1], 0.0, 1e-12);
    EXPECT_NEAR(line.components(0, 0), 1 / std::sqrt(5.0), 1e-12);

    EXPECT_THROW(pca_project({}, 1), std::invalid_argument);
    EXPECT_THROW(pca_project({{1, 2}, {3}}, 1), std::invalid_argument);
    EXPECT_THROW(pca_project({{1, 2}, {3, 4}}, 3), std::invalid_argument);
    EXPECT_THROW(pca_project({{1, 2}, {3, 4}}, 0), std::invalid_argument);
}

TEST(Pca, Csv) {
    const auto r = pca_project({{0, 0}, {2, 0}}, 1);
    std::ostringstream os;
    write_pca_csv(os, r, {"a", "b"});
    EXPECT_EQ(os.str(), "label,pc1\na,-1\nb,1\n");
    EXPECT_THROW(write_pca_csv(os, r, {"a"}), std::invalid_argument);
}

TEST(Probes, SaturationSeriesAndEmbeddings) {
    const auto series = saturation_series();
    ASSERT_EQ(series.size(), 64u);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(series[i], std::string(i + 1, 'p'));
    ImaConfig c;
    c.d = 12;
    const ImaModel m(c, 1);
    const auto rows = embedding_probe(m, series);
    ASSERT_EQ(rows.size(), 64u);
    for (const auto& r : rows) EXPECT_EQ(r.size(), 12u);
    Tape t(&m.params(), false);
    EXPECT_EQ(rows[4], t.value(m.embed_literal(t, CharVocab::encode("ppppp"))).data);
    std::ostringstream os;
    write_embeddings_csv(os, {"a"}, {{0.5, 1}});
    EXPECT_EQ(os.str(), "label,e0,e1\na,0.5,1\n");
}

TEST(Attention, MapsHaveSlotColumnsAndUnitRows) {
    const auto ds = small_set({7}, "validation", 1, 3);
    const Sample& s = ds.samples[0];
    ImaConfig c;
    c.d = 8;
    const ImaModel m(c, 6);
    const auto maps = attention_maps(m, s, 3);
    ASSERT_EQ(maps.size(), s.queries.size());
    for (std::size_t q = 0; q < maps.size(); ++q) {
        EXPECT_EQ(maps[q].query, render(s.queries[q].query));
        EXPECT_EQ(maps[q].target, s.queries[q].target);
        EXPECT_EQ(maps[q].probability, m.predict(s, 3)[q]);
        ASSERT_EQ(maps[q].trace.attention.size(), 3u);
        for (const auto& row : maps[q].trace.attention) {
            EXPECT_EQ(row.size(), s.context.rules.size() + 2);
            EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
        }
    }
    std::ostringstream os;
    write_attention_csv(os, maps[0]);
    std::string header;
    std::getline(std::istringstream(os.str()) >> std::ws, header);
    std::string want = "iteration";
    for (std::size_t j = 1; j <= s.context.rules.size(); ++j) want += ",rule_" + std::to_string(j);
    EXPECT_EQ(header, want + ",null,blank");
}

TEST(DimensionSweep, TwoDimSmoke) {
    TrainConfig base;
    base.tasks = {1};
    base.epochs = 1;
    base.batch_size = 8;
    base.per_task_count = 16;
    base.val_per_task = 8;
    base.ima.iterations = 1;
    const auto test = small_set({1}, "easy", 8, 77);
    const auto res = dimension_sweep(base, {4, 6}, {test}, 2);
    ASSERT_EQ(res.size(), 2u);
    for (const auto& r : res) {
        EXPECT_EQ(r.reports.size(), 2u);
        EXPECT_EQ(r.runs.size(), 2u);
        EXPECT_NE(r.runs[0].manifest.at("d"), "");
        EXPECT_EQ(r.runs[0].manifest.at("d"), std::to_string(r.d));
        EXPECT_DOUBLE_EQ(r.mean_accuracy.at("easy"), (r.reports[0].means.at("easy") + r.reports[1].means.at("easy")) / 2);
    }
    std::ostringstream os;
    write_dimension_csv(os, res);
    EXPECT_EQ(os.str().substr(0, 27), "d,run,tier,mean_accuracy\n4,");
}
