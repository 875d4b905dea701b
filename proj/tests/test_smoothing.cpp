#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gplm/smoothing.hpp"
#include "oracles.hpp"

using namespace gplm;

namespace {

Dataset bernoulli_data(int n, unsigned seed, double beta = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    Eigen::VectorXd y(n), t(n);
    Eigen::MatrixXd x(n, 1);
    for (int i = 0; i < n; ++i) {
        t(i) = ud(gen);
        x(i, 0) = nd(gen);
        const double u = beta * x(i, 0) + std::sin(2 * M_PI * t(i));
        y(i) = ud(gen) < 1.0 / (1.0 + std::exp(-u)) ? 1.0 : 0.0;
    }
    return {y, x, t};
}

Dataset poisson_data(int n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    Eigen::VectorXd y(n), t(n);
    Eigen::MatrixXd x(n, 1);
    for (int i = 0; i < n; ++i) {
        t(i) = ud(gen);
        x(i, 0) = 0.5 * nd(gen);
        std::poisson_distribution<int> pd(std::exp(0.8 * x(i, 0) + 1.0 + 0.5 * std::cos(2 * M_PI * t(i))));
        y(i) = pd(gen);
    }
    return {y, x, t};
}

LossSpec mod_bern() {
    return LossSpec::modified_likelihood(Family::binomial(1), Link::logit(), ScorePhi::croux_haesbroeck(0.5),
                                         WeightFn::median_cauchy(0.0), WeightFn::median_cauchy(0.0));
}

Eigen::VectorXd vec1(double b) { return Eigen::VectorXd::Constant(1, b); }

}  // namespace

TEST(Kernel, WeightsSumToOne) {
    const Dataset d = bernoulli_data(50, 1);
    for (const KernelSpec& k : {KernelSpec::triangular(0.2), KernelSpec::epanechnikov(0.2), KernelSpec::gaussian(0.05)}) {
        const Eigen::VectorXd w = kernel_weights(0.4, d.t, k);
        EXPECT_NEAR(w.sum(), 1.0, 1e-14) << k.name();
        EXPECT_GE(w.minCoeff(), 0.0);
    }
}

TEST(Kernel, TriangularExample) {
    Eigen::VectorXd t(3);
    t << 0.0, 0.05, 0.5;
    const Eigen::VectorXd w = kernel_weights(0.0, t, KernelSpec::triangular(0.1));
    EXPECT_NEAR(w(0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(w(1), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(w(2), 0.0);
}

TEST(Kernel, EmptyWindow) {
    Eigen::VectorXd t(2);
    t << 0.0, 0.1;
    EXPECT_THROW(kernel_weights(0.9, t, KernelSpec::triangular(0.1)), EmptyWindowError);
    EXPECT_NO_THROW(kernel_weights(0.9, t, KernelSpec::gaussian(0.1)));
}

TEST(Kernel, IntegratesToOneAndDerivative) {
    for (const KernelSpec& k : {KernelSpec::triangular(1.0), KernelSpec::epanechnikov(1.0), KernelSpec::gaussian(1.0)}) {
        const double lim = std::isinf(k.support()) ? 12.0 : 1.0;
        const double area = oracle::simpson_pieces([&](double z) { return k(z); }, -lim, lim, {0.0}, 1e-12);
        EXPECT_NEAR(area, 1.0, 1e-9) << k.name();
    }
    const KernelSpec g = KernelSpec::gaussian(1.0);
    EXPECT_NEAR(g.deriv(0.7), oracle::central_diff([&](double z) { return g(z); }, 0.7, 1e-6), 1e-9);
    EXPECT_THROW(KernelSpec::triangular(0.0), DomainError);
}

TEST(LocalObjective, ScoreIsDerivative) {
    const Dataset d = bernoulli_data(80, 2);
    const LossSpec loss = mod_bern();
    const KernelSpec k = KernelSpec::epanechnikov(0.2);
    for (double a : {-1.0, 0.2, 1.5}) {
        const double fd = oracle::central_diff5(
            [&](double v) { return local_objective(v, vec1(0.7), 0.5, d, loss, k); }, a, 1e-4);
        EXPECT_NEAR(local_score(a, vec1(0.7), 0.5, d, loss, k), fd, 1e-8);
    }
}

TEST(EtaHat, ClassicalBernoulliWithoutCovariateIsWeightedLogit) {
    Dataset d = bernoulli_data(120, 3);
    const LossSpec q = LossSpec::classical_quasi(Family::binomial(1), Link::logit());
    const KernelSpec k = KernelSpec::triangular(0.25);
    for (double t : {0.1, 0.5, 0.8}) {
        const Eigen::VectorXd W = kernel_weights(t, d.t, k);
        const double ybar = W.dot(d.y);
        const LocalFit f = eta_hat(vec1(0.0), t, d, q, k);
        EXPECT_TRUE(f.converged);
        EXPECT_NEAR(f.a_hat, std::log(ybar / (1 - ybar)), 1e-7) << "t=" << t;
    }
}

TEST(EtaHat, RootOfLocalScoreAgainstBisection) {
    const Dataset d = bernoulli_data(150, 4);
    const LossSpec loss = mod_bern();
    const KernelSpec k = KernelSpec::triangular(0.2);
    for (double t : {0.05, 0.3, 0.62, 0.97}) {
        const LocalFit f = eta_hat(vec1(0.9), t, d, loss, k);
        // Locate the global minimum on a dense scan, then the nearby root.
        double best = INFINITY;
        double at = 0.0;
        for (int j = 0; j <= 4000; ++j) {
            const double a = -7.0 + 14.0 * j / 4000.0;
            const double v = local_objective(a, vec1(0.9), t, d, loss, k);
            if (v < best) {
                best = v;
                at = a;
            }
        }
        const double root = oracle::bisection(
            [&](double a) { return local_score(a, vec1(0.9), t, d, loss, k); }, at - 0.01, at + 0.01, 1e-12);
        EXPECT_NEAR(f.a_hat, root, 1e-6) << "t=" << t;
        EXPECT_LE(f.objective_value, best + 1e-12);
    }
}

TEST(EtaHat, PoissonRobustQuasi) {
    const Dataset d = poisson_data(120, 5);
    const LossSpec loss = LossSpec::robust_quasi(Family::poisson(), Link::log(), PsiHuber(1.2));
    const KernelSpec k = KernelSpec::epanechnikov(0.2);
    const LocalFit f = eta_hat(vec1(0.8), 0.4, d, loss, k);
    EXPECT_TRUE(f.converged);
    EXPECT_FALSE(f.boundary_warning);
    EXPECT_NEAR(local_score(f.a_hat, vec1(0.8), 0.4, d, loss, k), 0.0, 1e-7);
}

TEST(EtaHat, PermutationInvariantBitForBit) {
    const Dataset d = bernoulli_data(90, 6);
    std::vector<Eigen::Index> idx(90);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), std::mt19937(7));
    const Dataset e = d.subset(idx);
    const LossSpec loss = mod_bern();
    const KernelSpec k = KernelSpec::triangular(0.2);
    for (double t : {0.2, 0.7}) {
        EXPECT_EQ(eta_hat(vec1(1.1), t, d, loss, k).a_hat, eta_hat(vec1(1.1), t, e, loss, k).a_hat);
        EXPECT_EQ(local_objective(0.3, vec1(1.1), t, d, loss, k), local_objective(0.3, vec1(1.1), t, e, loss, k));
    }
}

TEST(EtaHat, AllSuccessesHitsBoundary) {
    Dataset d = bernoulli_data(40, 8);
    d.y.setOnes();
    const LossSpec q = LossSpec::classical_quasi(Family::binomial(1), Link::logit());
    const LocalFit f = eta_hat(vec1(0.0), 0.5, d, q, KernelSpec::triangular(0.3));
    EXPECT_TRUE(f.boundary_warning);
    EXPECT_GT(f.a_hat, 6.9);
}

TEST(EtaHat, Errors) {
    const Dataset d = bernoulli_data(30, 9);
    const LossSpec loss = mod_bern();
    EXPECT_THROW(eta_hat(Eigen::VectorXd::Zero(2), 0.5, d, loss, KernelSpec::triangular(0.2)), DesignError);
    EXPECT_THROW(eta_hat(vec1(0.0), 5.0, d, loss, KernelSpec::triangular(0.2)), EmptyWindowError);
    Dataset bad = d;
    bad.y(3) = 2.0;
    EXPECT_THROW(eta_hat(vec1(0.0), 0.5, bad, loss, KernelSpec::triangular(0.2)), ValidationError);
    ScalarSearchSpec s;
    s.lo = 1.0;
    s.hi = -1.0;
    EXPECT_THROW(eta_hat(vec1(0.0), 0.5, d, loss, KernelSpec::triangular(0.2), s), DomainError);
}

TEST(EtaHatDerivatives, BetaGradientMatchesFiniteDifference) {
    const Dataset d = bernoulli_data(150, 10);
    const LossSpec loss = mod_bern();
    const KernelSpec k = KernelSpec::epanechnikov(0.25);
    ScalarSearchSpec tight;
    tight.tol = 1e-12;
    for (double t : {0.25, 0.6}) {
        const Eigen::VectorXd g = eta_hat_dbeta(vec1(0.8), t, d, loss, k, tight);
        const double fd = oracle::central_diff(
            [&](double b) { return eta_hat(vec1(b), t, d, loss, k, tight).a_hat; }, 0.8, 1e-4);
        EXPECT_NEAR(g(0), fd, 1e-5) << "t=" << t;
    }
}

TEST(EtaHatDerivatives, TimeDerivativeGaussianMatchesFiniteDifference) {
    const Dataset d = poisson_data(150, 11);
    const LossSpec loss = LossSpec::robust_quasi(Family::poisson(), Link::log(), PsiHuber(1.5));
    const KernelSpec k = KernelSpec::gaussian(0.08);
    ScalarSearchSpec tight;
    tight.tol = 1e-12;
    for (double t : {0.3, 0.55}) {
        const double fd = oracle::central_diff(
            [&](double s) { return eta_hat(vec1(0.8), s, d, loss, k, tight).a_hat; }, t, 1e-4);
        EXPECT_NEAR(eta_hat_dt(vec1(0.8), t, d, loss, k, tight), fd, 1e-4 * std::max(1.0, std::fabs(fd)));
    }
}

TEST(EtaHatDerivatives, TimeDerivativeCompactKernelIsCentralDifference) {
    const Dataset d = bernoulli_data(200, 12);
    const LossSpec loss = mod_bern();
    const KernelSpec k = KernelSpec::epanechnikov(0.3);
    const double step = 0.3 / 100.0;
    const double expect = (eta_hat(vec1(1.0), 0.5 + step, d, loss, k).a_hat -
                           eta_hat(vec1(1.0), 0.5 - step, d, loss, k).a_hat) /
                          (2 * step);
    EXPECT_DOUBLE_EQ(eta_hat_dt(vec1(1.0), 0.5, d, loss, k), expect);
}
