#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>
#include <Eigen/Dense>

#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/kernel.hpp"
#include "gplm/loss.hpp"

namespace gplm {

/// Settings for the scalar minimization over a.
struct ScalarSearchSpec {
    int grid_points = 401;
    double tol = 1e-9;
    std::optional<double> lo;  ///< overrides the family default bracket
    std::optional<double> hi;
    int max_expansions = 4;
};

/// Result of one local fit at a point t.
struct LocalFit {
    double a_hat = 0.0;
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
    bool boundary_warning = false;
};

namespace detail {

/// x_i^T beta, summed in coordinate order.
template <class Row>
double linear_offset(const Row& x, const Eigen::VectorXd& beta) {
    double v = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) v += x(j) * beta(j);
    return v;
}

/// Observations with positive kernel weight at one t.
struct Window {
    std::vector<Eigen::Index> rows;  ///< rows of the (canonically ordered) data
    std::vector<double> W;
    std::vector<double> y;
    std::vector<double> v;  ///< x_i^T beta
    std::vector<double> w1;
};

inline double window_objective(const LossSpec& loss, const Window& win, double a) {
    double s = 0.0;
    for (std::size_t k = 0; k < win.W.size(); ++k) s += win.W[k] * (loss.rho(win.y[k], win.v[k] + a) * win.w1[k]);
    return s;
}

inline double window_score(const LossSpec& loss, const Window& win, double a) {
    double s = 0.0;
    for (std::size_t k = 0; k < win.W.size(); ++k) s += win.W[k] * (loss.psi(win.y[k], win.v[k] + a) * win.w1[k]);
    return s;
}

struct Bracket {
    double lo;
    double hi;
};

inline Bracket default_bracket(const Family& fam, double max_y, const ScalarSearchSpec& spec) {
    Bracket b;
    if (fam.is_binomial()) {
        b = {std::log(0.001) - std::log1p(-0.001), std::log(0.999) - std::log1p(-0.999)};
    } else {
        b = {std::log(0.01), std::log(3.0 * max_y + 1.0)};
    }
    if (spec.lo) b.lo = *spec.lo;
    if (spec.hi) b.hi = *spec.hi;
    if (!(b.lo < b.hi)) throw DomainError("search bracket must satisfy lo < hi");
    return b;
}

inline double grid_point(const Bracket& b, int n, int k) noexcept {
    if (k == n - 1) return b.hi;
    return b.lo + (b.hi - b.lo) * static_cast<double>(k) / static_cast<double>(n - 1);
}

inline Bracket expand(const Bracket& b) noexcept {
    const double c = 0.5 * (b.lo + b.hi);
    const double half = b.hi - b.lo;
    return {c - half, c + half};
}

/// Index of the smallest value; ties go to the smallest index.
inline int argmin_first(const std::vector<double>& v) noexcept {
    int best = 0;
    for (int k = 1; k < static_cast<int>(v.size()); ++k)
        if (v[static_cast<std::size_t>(k)] < v[static_cast<std::size_t>(best)]) best = k;
    return best;
}

/// Golden-section minimization of f on [a, b].
template <class F>
std::pair<double, int> golden_section(F&& f, double a, double b, double tol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = f(c);
    double fd = f(d);
    int evals = 2;
    while (b - a > tol && evals < 400) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        ++evals;
    }
    return {fc <= fd ? c : d, evals};
}

/// Polishes grid minimum k: a root of the local score when it changes sign
/// across the neighbouring grid points, otherwise golden section on the
/// objective. The grid point is kept if the polished point is not better.
inline LocalFit refine(const LossSpec& loss, const Window& win, const Bracket& b, int n, int k, double fk,
                       const ScalarSearchSpec& spec) {
    LocalFit fit;
    fit.a_hat = grid_point(b, n, k);
    fit.objective_value = fk;
    fit.boundary_warning = (k == 0 || k == n - 1);
    const double al = grid_point(b, n, std::max(k - 1, 0));
    const double ar = grid_point(b, n, std::min(k + 1, n - 1));
    auto score = [&](double a) { return window_score(loss, win, a); };
    auto objective = [&](double a) { return window_objective(loss, win, a); };
    const double gl = score(al);
    const double gr = score(ar);
    fit.iterations = 2;
    double cand;
    if (gl < 0.0 && gr > 0.0) {
        std::uintmax_t iters = 200;
        const double root_tol = spec.tol * 1e-3;
        auto stop = [root_tol](double x, double y) { return std::fabs(y - x) <= root_tol * std::max(1.0, std::fabs(x)); };
        const auto r = boost::math::tools::toms748_solve(score, al, ar, gl, gr, stop, iters);
        cand = 0.5 * (r.first + r.second);
        fit.iterations += static_cast<int>(iters);
        fit.converged = iters < 200;
    } else {
        const auto g = golden_section(objective, al, ar, spec.tol);
        cand = g.first;
        fit.iterations += g.second;
        fit.converged = true;
    }
    const double fc = objective(cand);
    ++fit.iterations;
    if (fc < fit.objective_value) {
        fit.a_hat = cand;
        fit.objective_value = fc;
    }
    if (fit.boundary_warning) fit.converged = false;
    return fit;
}

/// Grid scan plus polish, expanding the bracket about its centre while the
/// minimum sits on its edge. `fill(level, bracket, vals)` writes the
/// objective on the grid of the given expansion level.
template <class Fill>
LocalFit minimize_window_with(const LossSpec& loss, const Window& win, Bracket b, const ScalarSearchSpec& spec,
                              Fill&& fill) {
    const int n = spec.grid_points;
    if (n < 3) throw DomainError("grid_points must be at least 3");
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (int e = 0;; ++e) {
        fill(e, b, vals);
        const int k = argmin_first(vals);
        if ((k == 0 || k == n - 1) && e < spec.max_expansions) {
            b = expand(b);
            continue;
        }
        LocalFit fit = refine(loss, win, b, n, k, vals[static_cast<std::size_t>(k)], spec);
        fit.iterations += n * (e + 1);
        return fit;
    }
}

inline LocalFit minimize_window(const LossSpec& loss, const Window& win, Bracket b, const ScalarSearchSpec& spec) {
    return minimize_window_with(loss, win, b, spec, [&](int, const Bracket& br, std::vector<double>& vals) {
        const int n = static_cast<int>(vals.size());
        for (int k = 0; k < n; ++k) vals[static_cast<std::size_t>(k)] = window_objective(loss, win, grid_point(br, n, k));
    });
}

/// d a_hat / d beta = -sum W chi w1 x / sum W chi w1 at the fitted a.
template <class XRows>
Eigen::VectorXd dbeta_ratio(const LossSpec& loss, const Window& win, const XRows& x, double a) {
    const Eigen::Index p = x.cols();
    Eigen::VectorXd num = Eigen::VectorXd::Zero(p);
    double den = 0.0;
    double gross = 0.0;
    for (std::size_t k = 0; k < win.W.size(); ++k) {
        const double c = win.W[k] * (loss.chi(win.y[k], win.v[k] + a) * win.w1[k]);
        den += c;
        gross += std::fabs(c);
        num += c * x.row(win.rows[k]).transpose();
    }
    if (!(std::fabs(den) > 1e-10 * gross) || gross == 0.0)
        throw IllConditionedError("local curvature sum vanishes; d eta / d beta undefined");
    return -num / den;
}

/// Local problem at t for a dataset already in canonical order.
class LocalProblem {
public:
    LocalProblem(const Dataset& sorted, const LossSpec& loss, const KernelSpec& kernel)
        : d_(sorted), loss_(loss), kernel_(kernel) {
        w1_.resize(static_cast<std::size_t>(d_.n()));
        for (Eigen::Index i = 0; i < d_.n(); ++i) w1_[static_cast<std::size_t>(i)] = loss_.w1().at(d_.x.row(i));
        max_y_ = d_.y.maxCoeff();
    }

    Window window(const Eigen::VectorXd& beta, double t) const {
        const Eigen::VectorXd W = kernel_weights(t, d_.t, kernel_);
        Window win;
        for (Eigen::Index i = 0; i < d_.n(); ++i) {
            if (!(W(i) > 0.0)) continue;
            win.rows.push_back(i);
            win.W.push_back(W(i));
            win.y.push_back(d_.y(i));
            win.v.push_back(linear_offset(d_.x.row(i), beta));
            win.w1.push_back(w1_[static_cast<std::size_t>(i)]);
        }
        return win;
    }

    Bracket bracket(const ScalarSearchSpec& spec) const { return default_bracket(loss_.family(), max_y_, spec); }

    const Dataset& data() const noexcept { return d_; }

private:
    const Dataset& d_;
    const LossSpec& loss_;
    KernelSpec kernel_;
    std::vector<double> w1_;
    double max_y_;
};

inline void check_beta(const Dataset& d, const Eigen::VectorXd& beta) {
    if (beta.size() != d.p()) throw DesignError("beta has " + std::to_string(beta.size()) + " entries, x has " +
                                                std::to_string(d.p()) + " columns");
}

inline Dataset sorted_copy(const Dataset& d) { return d.subset(canonical_order(d)); }

}  // namespace detail

/// S_n(a, beta, t) = sum_i W_i(t) rho(y_i, x_i^T beta + a) w1(x_i).
inline double local_objective(double a, const Eigen::VectorXd& beta, double t, const Dataset& data,
                              const LossSpec& loss, const KernelSpec& kernel) {
    detail::check_beta(data, beta);
    const Dataset s = detail::sorted_copy(data);
    const detail::LocalProblem lp(s, loss, kernel);
    return detail::window_objective(loss, lp.window(beta, t), a);
}

/// S^1_n(a, beta, t) = sum_i W_i(t) Psi(y_i, x_i^T beta + a) w1(x_i).
inline double local_score(double a, const Eigen::VectorXd& beta, double t, const Dataset& data, const LossSpec& loss,
                          const KernelSpec& kernel) {
    detail::check_beta(data, beta);
    const Dataset s = detail::sorted_copy(data);
    const detail::LocalProblem lp(s, loss, kernel);
    return detail::window_score(loss, lp.window(beta, t), a);
}

/// eta_hat_beta(t) = argmin_a S_n(a, beta, t).
inline LocalFit eta_hat(const Eigen::VectorXd& beta, double t, const Dataset& data, const LossSpec& loss,
                        const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    detail::check_beta(data, beta);
    data.check_family(loss.family());
    const Dataset s = detail::sorted_copy(data);
    const detail::LocalProblem lp(s, loss, kernel);
    return detail::minimize_window(loss, lp.window(beta, t), lp.bracket(search), search);
}

/// Gradient of eta_hat_beta(t) in beta.
inline Eigen::VectorXd eta_hat_dbeta(const Eigen::VectorXd& beta, double t, const Dataset& data,
                                     const LossSpec& loss, const KernelSpec& kernel,
                                     const ScalarSearchSpec& search = {}) {
    detail::check_beta(data, beta);
    data.check_family(loss.family());
    const Dataset s = detail::sorted_copy(data);
    const detail::LocalProblem lp(s, loss, kernel);
    const detail::Window win = lp.window(beta, t);
    const LocalFit fit = detail::minimize_window(loss, win, lp.bracket(search), search);
    return detail::dbeta_ratio(loss, win, s.x, fit.a_hat);
}

/// d eta_hat_beta(t) / dt: ratio formula for the Gaussian kernel, central
/// difference with step h/100 otherwise.
inline double eta_hat_dt(const Eigen::VectorXd& beta, double t, const Dataset& data, const LossSpec& loss,
                         const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    detail::check_beta(data, beta);
    data.check_family(loss.family());
    const Dataset s = detail::sorted_copy(data);
    const detail::LocalProblem lp(s, loss, kernel);
    if (!kernel.differentiable()) {
        const double step = kernel.h / 100.0;
        const double up = detail::minimize_window(loss, lp.window(beta, t + step), lp.bracket(search), search).a_hat;
        const double dn = detail::minimize_window(loss, lp.window(beta, t - step), lp.bracket(search), search).a_hat;
        return (up - dn) / (2.0 * step);
    }
    const detail::Window win = lp.window(beta, t);
    const double a = detail::minimize_window(loss, win, lp.bracket(search), search).a_hat;
    double num = 0.0;
    double den = 0.0;
    double gross = 0.0;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        const double z = (t - s.t(i)) / kernel.h;
        const double w1 = loss.w1().at(s.x.row(i));
        const double u = detail::linear_offset(s.x.row(i), beta) + a;
        num += kernel.deriv(z) * loss.psi(s.y(i), u) * w1;
        const double c = kernel(z) * loss.chi(s.y(i), u) * w1;
        den += c;
        gross += std::fabs(c);
    }
    if (!(std::fabs(den) > 1e-10 * gross) || gross == 0.0)
        throw IllConditionedError("local curvature sum vanishes; d eta / d t undefined");
    return -num / (kernel.h * den);
}

}  // namespace gplm
