#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gplm/inference.hpp"

using namespace gplm;

namespace {

Dataset bernoulli_data(int n, unsigned seed, const Eigen::VectorXd& beta) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    const auto p = beta.size();
    Eigen::VectorXd y(n), t(n);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
        t(i) = ud(gen);
        for (Eigen::Index j = 0; j < p; ++j) x(i, j) = nd(gen);
        const double u = x.row(i).dot(beta) + std::sin(2 * M_PI * t(i));
        y(i) = ud(gen) < 1.0 / (1.0 + std::exp(-u)) ? 1.0 : 0.0;
    }
    return {y, x, t};
}

LossSpec qal() { return LossSpec::classical_quasi(Family::binomial(1), Link::logit()); }

LossSpec mod_bern() {
    return LossSpec::modified_likelihood(Family::binomial(1), Link::logit(), ScorePhi::croux_haesbroeck(0.5),
                                         WeightFn::median_cauchy(0.0), WeightFn::median_cauchy(0.0));
}

Eigen::VectorXd vec1(double b) { return Eigen::VectorXd::Constant(1, b); }

double chisq1_tail(double x) { return std::erfc(std::sqrt(x / 2.0)); }

}  // namespace

TEST(Sandwich, MatchesDirectAssembly) {
    Eigen::VectorXd b(2);
    b << 1.0, -0.5;
    const Dataset d = bernoulli_data(150, 1, b);
    const ProfileProblem prob(d, mod_bern().with_weights(WeightFn::median_cauchy_from(d.x),
                                                         WeightFn::median_cauchy_from(d.x)),
                              KernelSpec::epanechnikov(0.25));
    const auto pw = prob.pointwise(b);
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        const Eigen::Vector2d z = pw.zhat.row(i).transpose();
        A += pw.chi(i) * pw.w2(i) * z * z.transpose();
        S += std::pow(pw.psi(i) * pw.w2(i), 2) * z * z.transpose();
    }
    A /= d.n();
    S /= d.n();
    const SandwichEstimate s = sandwich(pw);
    EXPECT_LT((s.A - A).norm(), 1e-12);
    EXPECT_LT((s.Sigma - S).norm(), 1e-12);
    const Eigen::Matrix2d Ainv = A.inverse();
    const Eigen::Matrix2d V = Ainv * S * Ainv.transpose() / d.n();
    EXPECT_LT((s.cov_beta - V).norm(), 1e-12 * V.norm());
    EXPECT_EQ(s.cov_beta, s.cov_beta.transpose());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s.cov_beta).eigenvalues().minCoeff(), 0.0);
    const double cond = A.cwiseAbs().colwise().sum().maxCoeff() * Ainv.cwiseAbs().colwise().sum().maxCoeff();
    EXPECT_NEAR(s.condition_number, cond, 1e-9 * cond);
    EXPECT_TRUE(s.warnings.empty());
    EXPECT_EQ(s.se().size(), 2);
    EXPECT_NEAR(s.se()(1), std::sqrt(V(1, 1)), 1e-12);
}

TEST(Sandwich, InformationEqualityForClassicalFitAtTruth) {
    const Dataset d = bernoulli_data(800, 2, vec1(1.0));
    const ProfileProblem prob(d, qal(), KernelSpec::epanechnikov(0.15));
    const SandwichEstimate s = sandwich(prob, vec1(1.0));
    EXPECT_NEAR(s.Sigma(0, 0) / s.A(0, 0), 1.0, 0.2);
}

TEST(Sandwich, FromFitMatchesProblem) {
    const Dataset d = bernoulli_data(80, 3, vec1(1.0));
    const KernelSpec k = KernelSpec::triangular(0.3);
    const ProfileProblem prob(d, mod_bern(), k);
    FitResult fit = fit_beta(prob, BetaSearchSpec::grid(0.1, 1.0, 1.0));
    EXPECT_EQ(estimate_A(fit, d, mod_bern(), k), sandwich(prob, fit.beta).A);
    EXPECT_EQ(estimate_Sigma(fit, d, mod_bern(), k), sandwich(prob, fit.beta).Sigma);
    attach_covariance(fit, sandwich(prob, fit.beta));
    ASSERT_TRUE(fit.cov.has_value());
    EXPECT_NEAR(fit.se(0), std::sqrt((*fit.cov)(0, 0)), 1e-15);
}

TEST(Sandwich, SingularAWarns) {
    ProfileProblem::Pointwise pw;
    const int n = 5;
    pw.u = Eigen::VectorXd::Zero(n);
    pw.psi = Eigen::VectorXd::Ones(n);
    pw.chi = Eigen::VectorXd::Ones(n);
    pw.w2 = Eigen::VectorXd::Ones(n);
    pw.zhat = Eigen::MatrixXd::Ones(n, 2);
    const SandwichEstimate s = sandwich(pw);
    EXPECT_FALSE(s.warnings.empty());
}

TEST(Wald, SingleCoefficientAgainstClosedForm) {
    FitResult fit;
    fit.beta = vec1(2.3);
    SandwichEstimate s;
    s.cov_beta = Eigen::MatrixXd::Constant(1, 1, 0.04);
    const TestResult r = wald_test(fit, s, {0}, vec1(2.0));
    EXPECT_NEAR(r.statistic, 0.09 / 0.04, 1e-12);
    EXPECT_EQ(r.df, 1);
    EXPECT_NEAR(r.p_value, chisq1_tail(2.25), 1e-12);
    const TestResult z = wald_test(fit, s, {0});
    EXPECT_NEAR(z.statistic, 2.3 * 2.3 / 0.04, 1e-9);
}

TEST(Wald, TwoCoefficientsAgainstClosedForm) {
    FitResult fit;
    fit.beta = Eigen::Vector3d(0.5, -0.2, 1.0);
    SandwichEstimate s;
    s.cov_beta = Eigen::Matrix3d::Identity() * 0.1;
    s.cov_beta(0, 1) = s.cov_beta(1, 0) = 0.02;
    const TestResult r = wald_test(fit, s, {0, 1});
    Eigen::Matrix2d C;
    C << 0.1, 0.02, 0.02, 0.1;
    const Eigen::Vector2d v(0.5, -0.2);
    const double w = v.dot(C.inverse() * v);
    EXPECT_NEAR(r.statistic, w, 1e-12);
    EXPECT_EQ(r.df, 2);
    EXPECT_NEAR(r.p_value, std::exp(-w / 2.0), 1e-12);
}

TEST(Wald, Errors) {
    FitResult fit;
    fit.beta = Eigen::Vector2d(1.0, 1.0);
    SandwichEstimate s;
    s.cov_beta = Eigen::Matrix2d::Identity();
    EXPECT_THROW(wald_test(fit, s, {}), DesignError);
    EXPECT_THROW(wald_test(fit, s, {2}), DesignError);
    s.cov_beta(1, 1) = 0.0;
    EXPECT_THROW(wald_test(fit, s, {1}), IllConditionedError);
}

TEST(WeightedChiSquare, MatchesKnownTails) {
    // Monte Carlo standard error is at most 0.0016 for 1e5 draws.
    for (double x : {0.5, 2.0, 3.84}) {
        EXPECT_NEAR(weighted_chisq_tail(vec1(1.0), x, 7, 100000), chisq1_tail(x), 0.008);
        EXPECT_NEAR(weighted_chisq_tail(Eigen::Vector2d(1.0, 1.0), x, 7, 100000), std::exp(-x / 2), 0.008);
        EXPECT_NEAR(weighted_chisq_tail(vec1(2.5), x, 7, 100000), chisq1_tail(x / 2.5), 0.008);
    }
    EXPECT_EQ(weighted_chisq_tail(vec1(1.0), 1.0, 11, 5000), weighted_chisq_tail(vec1(1.0), 1.0, 11, 5000));
    EXPECT_THROW(weighted_chisq_tail(vec1(1.0), 1.0, 11, 0), DomainError);
}

TEST(Lambda, SingleCoefficientSpectrumAndSign) {
    const Dataset d = bernoulli_data(120, 4, vec1(1.0));
    const ProfileProblem prob(d, mod_bern(), KernelSpec::triangular(0.25));
    LambdaSpec spec;
    spec.search = BetaSearchSpec::grid(0.05, 1.0, 1.5);
    spec.draws = 20000;
    const TestResult r = lambda_test(prob, {0}, spec, vec1(1.5));
    ASSERT_TRUE(r.null_fit && r.full_fit);
    EXPECT_EQ(r.null_fit->beta(0), 1.5);
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_NEAR(r.statistic, 2.0 * d.n() * (r.null_fit->objective - r.full_fit->objective), 1e-9);
    // With one coefficient the mixture weight is Sigma / A.
    const SandwichEstimate s = sandwich(prob, r.full_fit->beta);
    ASSERT_EQ(r.spectrum.size(), 1);
    EXPECT_NEAR(r.spectrum(0), s.Sigma(0, 0) / s.A(0, 0), 1e-10 * r.spectrum(0));
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
}

TEST(Lambda, SuppliedFullFitIsUsed) {
    const Dataset d = bernoulli_data(100, 5, vec1(1.0));
    const ProfileProblem prob(d, mod_bern(), KernelSpec::triangular(0.25));
    LambdaSpec spec;
    spec.search = BetaSearchSpec::grid(0.1, 1.0, 2.0);
    spec.draws = 5000;
    const FitResult full = fit_beta(prob, spec.search);
    const TestResult r = lambda_test(prob, {0}, spec, vec1(full.beta(0)), full);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
}

TEST(Lambda, NestedTwoCoefficientModel) {
    Eigen::VectorXd b(2);
    b << 1.0, 0.0;
    const Dataset d = bernoulli_data(100, 6, b);
    const ProfileProblem prob(d, qal(), KernelSpec::epanechnikov(0.3));
    LambdaSpec spec;
    spec.search = BetaSearchSpec::grid(0.25, 0.0, 2.0);
    spec.draws = 5000;
    const TestResult r = lambda_test(prob, {1}, spec);
    EXPECT_EQ(r.null_fit->beta(1), 0.0);
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_LE(r.full_fit->objective, r.null_fit->objective);
    EXPECT_EQ(r.spectrum.size(), 1);
    EXPECT_GT(r.spectrum(0), 0.0);
}
