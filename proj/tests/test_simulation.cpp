#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "gplm/simulation.hpp"

using namespace gplm;

namespace {

double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

TEST(Rng, DeterministicAndIndependentSubstreams) {
    rng::Stream a(42, 7);
    rng::Stream b(42, 7);
    rng::Stream c(42, 8);
    for (int k = 0; k < 100; ++k) {
        const auto va = a.next_u64();
        EXPECT_EQ(va, b.next_u64());
        EXPECT_NE(va, c.next_u64());
    }
    EXPECT_NE(rng::Stream(1).substream(0).key(), rng::Stream(1).substream(1).key());
    EXPECT_EQ(rng::Stream(1).substream(5).key(), rng::Stream(1).substream(5).key());
}

TEST(Rng, DistributionMoments) {
    rng::Stream rs(123, 0);
    const int N = 200000;
    double su = 0, sn = 0, sn2 = 0, sl = 0, sl2 = 0, sb = 0;
    double umin = 1, umax = 0;
    for (int k = 0; k < N; ++k) {
        const double u = rs.uniform();
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        su += u;
        const double z = rs.normal();
        sn += z;
        sn2 += z * z;
        const double l = rs.logistic();
        sl += l;
        sl2 += l * l;
        sb += rs.binomial(10, 0.3);
    }
    EXPECT_GT(umin, 0.0);
    EXPECT_LT(umax, 1.0);
    EXPECT_NEAR(su / N, 0.5, 0.003);
    EXPECT_NEAR(sn / N, 0.0, 0.01);
    EXPECT_NEAR(sn2 / N, 1.0, 0.015);
    EXPECT_NEAR(sl / N, 0.0, 0.02);
    EXPECT_NEAR(sl2 / N, M_PI * M_PI / 3.0, 0.06);
    EXPECT_NEAR(sb / N, 3.0, 0.015);
    std::vector<int> counts(7, 0);
    for (int k = 0; k < 70000; ++k) ++counts[static_cast<std::size_t>(rs.below(7))];
    for (int cnt : counts) EXPECT_NEAR(cnt, 10000, 400);
}

TEST(Study1, DesignAndTruth) {
    const Dataset d = gen_study1(2000, 11);
    ASSERT_TRUE(d.truth.has_value());
    EXPECT_EQ(d.truth->beta(0), 3.0);
    std::set<long> ts;
    double resid = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        ts.insert(std::lround(d.t(i) * 10));
        EXPECT_GT(d.x(i, 0), -1.0);
        EXPECT_LT(d.x(i, 0), 1.0);
        EXPECT_TRUE(Family::binomial(10).in_support(d.y(i)));
        EXPECT_NEAR(d.truth->eta(i), std::exp(2 * d.t(i)) - 4, 1e-12);
        resid += d.y(i) - 10 * expit(3 * d.x(i, 0) + d.truth->eta(i));
    }
    EXPECT_EQ(ts.size(), 10U);
    EXPECT_EQ(*ts.begin(), 1);
    EXPECT_EQ(*ts.rbegin(), 10);
    // Residual SD per row is at most sqrt(2.5).
    EXPECT_LT(std::fabs(resid / d.n()), 5 * std::sqrt(2.5 / d.n()));
}

TEST(Study1, SameSeedSameData) {
    const Dataset a = gen_study1(50, 3);
    const Dataset b = gen_study1(50, 3);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.t, b.t);
    EXPECT_NE(gen_study1(50, 4).x, a.x);
}

TEST(Study2, OutliersReplaceFirstRowsKeepingT) {
    const Dataset clean = gen_study2(100, 5, 0);
    const Dataset dirty = gen_study2(100, 5, 3);
    EXPECT_EQ(clean.t, dirty.t);
    EXPECT_EQ(dirty.x(0, 0), 10.0);
    EXPECT_EQ(dirty.y(0), 0.0);
    EXPECT_EQ(dirty.x(1, 0), -10.0);
    EXPECT_EQ(dirty.y(1), 10.0);
    EXPECT_EQ(dirty.x(2, 0), -10.0);
    EXPECT_EQ(dirty.y(2), 10.0);
    for (Eigen::Index i = 3; i < 100; ++i) {
        EXPECT_EQ(clean.x(i, 0), dirty.x(i, 0));
        EXPECT_EQ(clean.y(i), dirty.y(i));
    }
    EXPECT_THROW(gen_study2(100, 5, 4), DomainError);
}

TEST(Study2, MomentsOfDesign) {
    const Dataset d = gen_study2(20000, 6, 0, 1.0 / 6.0);
    EXPECT_NEAR(d.t.mean(), 0.5, 0.01);
    EXPECT_NEAR((d.t.array() - d.t.mean()).square().mean(), 1.0 / 6.0, 0.006);
    EXPECT_NEAR(d.x.col(0).mean(), 0.0, 0.02);
    double resid = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) resid += d.y(i) - 10 * expit(2 * d.x(i, 0) + 0.2);
    EXPECT_LT(std::fabs(resid / d.n()), 0.06);
    EXPECT_EQ(d.truth->eta(7), 0.2);
}

TEST(Study3, TruncationCorrelationAndResponse) {
    const Dataset d = gen_study3(20000, 7);
    double resid = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        EXPECT_GE(d.t(i), 0.25);
        EXPECT_LE(d.t(i), 0.75);
        EXPECT_NEAR(d.truth->eta(i), 2 * std::sin(4 * M_PI * d.t(i)), 1e-12);
        resid += d.y(i) - expit(2 * d.x(i, 0) + d.truth->eta(i));
    }
    EXPECT_LT(std::fabs(resid / d.n()), 0.015);
    // Truncation keeps a strong positive association between x and t.
    const Eigen::ArrayXd xc = d.x.col(0).array() - d.x.col(0).mean();
    const Eigen::ArrayXd tc = d.t.array() - d.t.mean();
    const double corr = (xc * tc).sum() / std::sqrt(xc.square().sum() * tc.square().sum());
    EXPECT_GT(corr, 0.3);
    EXPECT_LT(corr, 1.0 / std::sqrt(3.0));
}

TEST(Study3, ContaminationsShareBaseDraw) {
    const int n = 400;
    const Dataset clean = gen_study3(n, 8);
    const Dataset c1 = gen_study3(n, 8, Contamination::C1);
    const Dataset c3 = gen_study3(n, 8, Contamination::C3);
    EXPECT_EQ(clean.t, c1.t);
    EXPECT_EQ(clean.x, c1.x);
    EXPECT_EQ(clean.t, c3.t);
    int changed_x = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (c3.x(i, 0) != clean.x(i, 0)) {
            ++changed_x;
            EXPECT_GT(c3.x(i, 0), 5.0);
        } else {
            EXPECT_EQ(c3.y(i), clean.y(i));
        }
    }
    EXPECT_NEAR(changed_x, n / 10, 20);
}

TEST(Study3, C2FlipsTenHighMeanRows) {
    int regen = 0;
    const Dataset c2 = gen_study3(200, 9, Contamination::C2, &regen);
    int regen_again = 0;
    const Dataset again = gen_study3(200, 9, Contamination::C2, &regen_again);
    EXPECT_EQ(regen, regen_again);
    EXPECT_EQ(c2.y, again.y);
    int eligible = 0;
    for (Eigen::Index i = 0; i < c2.n(); ++i)
        if (expit(2 * c2.x(i, 0) + c2.truth->eta(i)) > 0.99) ++eligible;
    EXPECT_GE(eligible, 10);
    if (regen == 0) {
        const Dataset base = gen_study3(200, 9);
        int diff = 0;
        for (Eigen::Index i = 0; i < c2.n(); ++i) {
            if (c2.y(i) != base.y(i)) {
                ++diff;
                EXPECT_GT(expit(2 * c2.x(i, 0) + c2.truth->eta(i)), 0.99);
            }
        }
        EXPECT_LE(diff, 10);
    }
}

TEST(Study, SpecValidation) {
    StudySpec s;
    s.study = Study::S1;
    s.contamination = Contamination::C1;
    EXPECT_THROW(s.validate(), DomainError);
    s.study = Study::S3;
    EXPECT_NO_THROW(s.validate());
    s.n = 0;
    EXPECT_THROW(s.validate(), DomainError);
}

TEST(Metrics, KnownValues) {
    const SummaryRow r = metrics({1.0, 2.0, 3.0}, {0.1, 0.3}, 2.5);
    EXPECT_DOUBLE_EQ(r.bias, -0.5);
    EXPECT_DOUBLE_EQ(r.sd, 1.0);
    EXPECT_DOUBLE_EQ(r.mse_beta, (2.25 + 0.25 + 0.25) / 3.0);
    EXPECT_DOUBLE_EQ(r.mse_eta, 0.2);
    EXPECT_DOUBLE_EQ(r.mse_beta, r.bias * r.bias + r.sd * r.sd * 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(mse_eta(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.0, 0.0)), 2.5);
}

TEST(Metrics, ReplicationSeedsDistinct) {
    std::set<std::uint64_t> seeds;
    for (int r = 0; r < 1000; ++r) seeds.insert(replication_seed(77, r));
    EXPECT_EQ(seeds.size(), 1000U);
    EXPECT_EQ(replication_seed(77, 3), replication_seed(77, 3));
}

TEST(MonteCarlo, ResultsIndependentOfJobs) {
    StudySpec s;
    s.study = Study::S1;
    s.n = 40;
    s.seed = 2024;
    McOptions opt;
    opt.replications = 4;
    opt.bandwidths = {0.2, 0.3};
    opt.beta_search = BetaSearchSpec::grid(0.25, 3.0, 2.0);
    const auto est = standard_estimators(study_family(Study::S1));
    const McSummary a = run_monte_carlo(s, est, opt);
    opt.jobs = 3;
    const McSummary b = run_monte_carlo(s, est, opt);
    ASSERT_EQ(a.records.size(), 4U * 3U * 2U);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        EXPECT_EQ(a.records[k].estimator, b.records[k].estimator);
        EXPECT_EQ(a.records[k].rep, b.records[k].rep);
        EXPECT_EQ(a.records[k].ok, b.records[k].ok);
        if (a.records[k].ok) {
            EXPECT_EQ(a.records[k].beta_hat, b.records[k].beta_hat);
            EXPECT_EQ(a.records[k].mse_eta, b.records[k].mse_eta);
        }
    }
    ASSERT_EQ(a.rows.size(), 6U);
    EXPECT_EQ(a.rows[0].estimator, "QAL");
    EXPECT_EQ(a.rows[5].estimator, "MOD");
    EXPECT_EQ(a.rows[5].h, 0.3);
    EXPECT_FALSE(a.run_failed);
}

TEST(MonteCarlo, SummaryMatchesRecords) {
    StudySpec s;
    s.study = Study::S2;
    s.n = 40;
    s.seed = 8;
    McOptions opt;
    opt.replications = 3;
    opt.bandwidths = {0.3};
    opt.beta_search = BetaSearchSpec::grid(0.25, 2.0, 2.0);
    opt.with_se = true;
    const McSummary mc = run_monte_carlo(s, standard_estimators(study_family(Study::S2)), opt);
    for (const SummaryRow& row : mc.rows) {
        std::vector<double> b, m;
        for (const RepRecord& r : mc.records) {
            if (r.estimator != row.estimator || !r.ok) continue;
            b.push_back(r.beta_hat);
            m.push_back(r.mse_eta);
            EXPECT_GT(r.se, 0.0);
        }
        const SummaryRow ref = metrics(b, m, 2.0);
        EXPECT_EQ(row.bias, ref.bias);
        EXPECT_EQ(row.mse_beta, ref.mse_beta);
        EXPECT_EQ(row.mse_eta, ref.mse_eta);
    }
}

TEST(MonteCarlo, FailuresRecordedAndFlagged) {
    StudySpec s;
    s.study = Study::S1;
    s.n = 30;
    McOptions opt;
    opt.replications = 2;
    opt.bandwidths = {0.2};
    opt.beta_search = BetaSearchSpec::grid(0.5, 3.0, 1.0);
    // A loss for the wrong family makes every fit fail validation.
    std::vector<EstimatorSpec> est{{"BAD", [](const Dataset&) {
                                        return LossSpec::classical_quasi(Family::binomial(1), Link::logit());
                                    }}};
    const McSummary mc = run_monte_carlo(s, est, opt);
    EXPECT_TRUE(mc.run_failed);
    EXPECT_EQ(mc.rows[0].failures, 2);
    EXPECT_FALSE(mc.records[0].ok);
    EXPECT_FALSE(mc.records[0].error.empty());
}

TEST(MonteCarlo, OptionValidation) {
    StudySpec s;
    McOptions opt;
    opt.replications = 0;
    EXPECT_THROW(run_monte_carlo(s, standard_estimators(Family::binomial(10)), opt), DomainError);
    opt.replications = 1;
    opt.jobs = 0;
    EXPECT_THROW(run_monte_carlo(s, standard_estimators(Family::binomial(10)), opt), DomainError);
}
