#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <Eigen/Dense>

#include "gplm/errors.hpp"
#include "gplm/profile.hpp"
#include "gplm/rng.hpp"

namespace gplm {

/// Plug-in sandwich A^{-1} Sigma A^{-T} / n at a fitted beta.
struct SandwichEstimate {
    Eigen::MatrixXd A;
    Eigen::MatrixXd Sigma;
    Eigen::MatrixXd cov_beta;
    double condition_number = 0.0;
    Eigen::Index n = 0;
    std::vector<std::string> warnings;

    Eigen::VectorXd se() const { return cov_beta.diagonal().cwiseSqrt(); }
};

enum class TestMethod { Wald, Lambda };

struct TestResult {
    TestMethod method = TestMethod::Wald;
    double statistic = 0.0;
    int df = 0;
    Eigen::VectorXd spectrum;  ///< weights of the chi-square(1) mixture (Lambda)
    double p_value = 1.0;
    std::optional<FitResult> null_fit;
    std::optional<FitResult> full_fit;
};

/// A_hat = n^{-1} sum chi(y_i, u_i) z_i z_i^T w2(x_i), symmetrized, with
/// z_i = x_i + d eta_hat(t_i) / d beta.
inline Eigen::MatrixXd estimate_A(const ProfileProblem::Pointwise& pw) {
    const Eigen::Index n = pw.u.size();
    const Eigen::Index p = pw.zhat.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) A += (pw.chi(i) * pw.w2(i)) * pw.zhat.row(i).transpose() * pw.zhat.row(i);
    A /= static_cast<double>(n);
    return 0.5 * (A + A.transpose());
}

/// Sigma_hat = n^{-1} sum Psi(y_i, u_i)^2 w2(x_i)^2 z_i z_i^T.
inline Eigen::MatrixXd estimate_Sigma(const ProfileProblem::Pointwise& pw) {
    const Eigen::Index n = pw.u.size();
    const Eigen::Index p = pw.zhat.cols();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = pw.psi(i) * pw.w2(i);
        S += (g * g) * pw.zhat.row(i).transpose() * pw.zhat.row(i);
    }
    return S / static_cast<double>(n);
}

inline Eigen::MatrixXd estimate_A(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                  const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    return estimate_A(ProfileProblem(data, loss, kernel, search).pointwise(fit.beta));
}

inline Eigen::MatrixXd estimate_Sigma(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                      const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    return estimate_Sigma(ProfileProblem(data, loss, kernel, search).pointwise(fit.beta));
}

namespace detail {
inline double norm1(const Eigen::MatrixXd& M) { return M.cwiseAbs().colwise().sum().maxCoeff(); }
}  // namespace detail

inline SandwichEstimate sandwich(const ProfileProblem::Pointwise& pw) {
    SandwichEstimate s;
    s.n = pw.u.size();
    s.A = estimate_A(pw);
    s.Sigma = estimate_Sigma(pw);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(s.A);
    const Eigen::MatrixXd Ainv = lu.inverse();
    s.condition_number = detail::norm1(s.A) * detail::norm1(Ainv);
    if (!std::isfinite(s.condition_number) || s.condition_number > 1e10)
        s.warnings.push_back("A_hat is nearly singular (condition number " + std::to_string(s.condition_number) + ")");
    Eigen::MatrixXd V = Ainv * s.Sigma * Ainv.transpose() / static_cast<double>(s.n);
    s.cov_beta = 0.5 * (V + V.transpose());
    return s;
}

inline SandwichEstimate sandwich(const ProfileProblem& prob, const Eigen::VectorXd& beta) {
    return sandwich(prob.pointwise(beta));
}

/// Fills cov and se of a FitResult from its sandwich estimate.
inline void attach_covariance(FitResult& fit, const SandwichEstimate& s) {
    fit.cov = s.cov_beta;
    fit.se = s.se();
    for (const auto& w : s.warnings) fit.warnings.push_back(w);
}

namespace detail {
inline Eigen::VectorXd restricted(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
}

inline Eigen::MatrixXd block(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& r,
                             const std::vector<Eigen::Index>& c) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = M(r[i], c[j]);
    return out;
}

inline void check_restriction(const std::vector<Eigen::Index>& r, Eigen::Index p) {
    if (r.empty()) throw DesignError("restriction must name at least one coefficient");
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] < 0 || r[k] >= p) throw DesignError("restricted coefficient index out of range");
        for (std::size_t l = 0; l < k; ++l)
            if (r[l] == r[k]) throw DesignError("restricted coefficient listed twice");
    }
}

inline std::vector<Eigen::Index> complement(const std::vector<Eigen::Index>& r, Eigen::Index p) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index j = 0; j < p; ++j)
        if (std::find(r.begin(), r.end(), j) == r.end()) out.push_back(j);
    return out;
}
}  // namespace detail

/// Wald statistic (b_2 - b_0)^T [cov_22]^{-1} (b_2 - b_0) for the coordinates
/// in `restriction`, against chi-square with |restriction| degrees of freedom.
/// The null values default to zero.
inline TestResult wald_test(const FitResult& fit, const SandwichEstimate& s,
                            const std::vector<Eigen::Index>& restriction,
                            const std::optional<Eigen::VectorXd>& null_values = std::nullopt) {
    const Eigen::Index p = fit.beta.size();
    detail::check_restriction(restriction, p);
    Eigen::VectorXd diff = detail::restricted(fit.beta, restriction);
    if (null_values) diff -= detail::restricted(*null_values, restriction);
    const Eigen::MatrixXd C = detail::block(s.cov_beta, restriction, restriction);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
    if (!lu.isInvertible() || !(C.diagonal().minCoeff() > 0.0))
        throw IllConditionedError("restricted covariance block is singular");
    TestResult r;
    r.method = TestMethod::Wald;
    r.df = static_cast<int>(restriction.size());
    r.statistic = diff.dot(lu.solve(diff));
    const boost::math::chi_squared dist(r.df);
    r.p_value = r.statistic <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

/// Settings for the Lambda test.
struct LambdaSpec {
    BetaSearchSpec search;
    std::uint64_t seed = 20240601;
    int draws = 100000;
};

/// P(sum lambda_j Z_j^2 >= stat) by seeded Monte Carlo.
inline double weighted_chisq_tail(const Eigen::VectorXd& lambda, double stat, std::uint64_t seed, int draws) {
    if (draws < 1) throw DomainError("number of Monte Carlo draws must be positive");
    rng::Stream rs(seed, 0x4C414D42ULL);
    long hits = 0;
    for (int d = 0; d < draws; ++d) {
        double q = 0.0;
        for (Eigen::Index j = 0; j < lambda.size(); ++j) {
            const double z = rs.normal();
            q += lambda(j) * z * z;
        }
        if (q >= stat) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(draws);
}

/// Lambda = 2 [sum rho w2 (null) - sum rho w2 (full)], where the null model
/// holds the coordinates in `restriction` at `null_values` (zero by default)
/// and the full model is warm-started from the null solution. When
/// `full_fit` is supplied it stands for the unrestricted search, and the
/// warm start is added as one more candidate. The p-value uses the weighted
/// chi-square(1) mixture with weights the eigenvalues of
/// L^T A_{22.1} L, L L^T = (A^{-1} Sigma A^{-T})_{22}, evaluated at the full fit.
inline TestResult lambda_test(const ProfileProblem& prob, const std::vector<Eigen::Index>& restriction,
                              const LambdaSpec& spec = {},
                              const std::optional<Eigen::VectorXd>& null_values = std::nullopt,
                              const std::optional<FitResult>& full_fit = std::nullopt) {
    const Eigen::Index p = prob.p();
    detail::check_restriction(restriction, p);
    BetaConstraint con{restriction, null_values ? *null_values : Eigen::VectorXd::Zero(p)};
    if (con.values.size() != p) throw DesignError("null vector has the wrong length");
    const FitResult null_fit = fit_beta(prob, spec.search, con);
    FitResult full;
    if (full_fit) {
        full = null_fit.objective <= full_fit->objective ? null_fit : *full_fit;
    } else {
        full = fit_beta(prob, spec.search, std::nullopt, null_fit.beta);
    }
    const double n = static_cast<double>(prob.n());
    TestResult r;
    r.method = TestMethod::Lambda;
    r.df = static_cast<int>(restriction.size());
    r.statistic = 2.0 * n * (null_fit.objective - full.objective);
    if (r.statistic < -1e-6)
        throw OptimizationError("null fit beat the nested full fit (Lambda = " + std::to_string(r.statistic) + ")");

    const SandwichEstimate s = sandwich(prob, full.beta);
    const std::vector<Eigen::Index> keep = detail::complement(restriction, p);
    Eigen::MatrixXd A221 = detail::block(s.A, restriction, restriction);
    if (!keep.empty()) {
        const Eigen::MatrixXd A21 = detail::block(s.A, restriction, keep);
        const Eigen::MatrixXd A11 = detail::block(s.A, keep, keep);
        A221 -= A21 * A11.partialPivLu().solve(A21.transpose());
    }
    // Asymptotic covariance of sqrt(n)(beta_hat - beta), restricted block.
    const Eigen::MatrixXd V22 = detail::block(s.cov_beta * n, restriction, restriction);
    const Eigen::LLT<Eigen::MatrixXd> llt(V22);
    if (llt.info() != Eigen::Success) throw IllConditionedError("restricted sandwich block is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd M = L.transpose() * A221 * L;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    r.spectrum = es.eigenvalues();
    r.p_value = r.statistic <= 0.0 ? 1.0 : weighted_chisq_tail(r.spectrum, r.statistic, spec.seed, spec.draws);
    r.null_fit = null_fit;
    r.full_fit = full;
    return r;
}

inline TestResult lambda_test(const Dataset& data, const LossSpec& loss, const KernelSpec& kernel,
                              const std::vector<Eigen::Index>& restriction, const LambdaSpec& spec = {},
                              const ScalarSearchSpec& search = {}) {
    return lambda_test(ProfileProblem(data, loss, kernel, search), restriction, spec);
}

}  // namespace gplm
