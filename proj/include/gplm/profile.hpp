#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/kernel.hpp"
#include "gplm/loss.hpp"
#include "gplm/smoothing.hpp"

namespace gplm {

/// Search over beta. For p = 1 a grid center +- halfwidth with the given step,
/// optionally polished by golden section; for p > 1 coordinate descent.
struct BetaSearchSpec {
    enum class Mode { Grid, GridThenRefine };

    Mode mode = Mode::Grid;
    double center = 0.0;
    double halfwidth = 5.0;
    double step = 0.05;
    double refine_tol = 1e-4;
    int max_sweeps = 50;
    double sweep_tol = 1e-5;

    static BetaSearchSpec grid(double step = 0.05, double center = 0.0, double halfwidth = 5.0) {
        BetaSearchSpec s;
        s.step = step;
        s.center = center;
        s.halfwidth = halfwidth;
        s.validate();
        return s;
    }

    static BetaSearchSpec grid_then_refine(double step = 0.05, double refine_tol = 1e-4) {
        BetaSearchSpec s;
        s.mode = Mode::GridThenRefine;
        s.step = step;
        s.refine_tol = refine_tol;
        s.validate();
        return s;
    }

    void validate() const {
        if (!(step > 0.0) || !std::isfinite(step)) throw DomainError("grid step must be positive");
        if (!(halfwidth >= step)) throw DomainError("grid halfwidth must be at least one step");
        if (!(refine_tol > 0.0 && refine_tol < step)) throw DomainError("refine tolerance must lie in (0, step)");
        if (max_sweeps < 1) throw DomainError("max_sweeps must be positive");
    }
};

/// Output of a profile fit. Vectors indexed by observation follow the input
/// row order.
struct FitResult {
    Eigen::VectorXd beta;
    Eigen::VectorXd eta_at;  ///< eta_hat_{beta_hat}(t_i)
    Eigen::VectorXd t;
    double objective = 0.0;  ///< F_n(beta_hat)
    std::optional<Eigen::MatrixXd> cov;
    Eigen::VectorXd se;
    double h = 0.0;
    std::string loss;
    std::string kernel;
    int objective_evaluations = 0;
    int boundary_local_fits = 0;
    bool beta_on_boundary = false;
    std::vector<std::string> warnings;
};

/// Coordinates of beta held at fixed values during a fit.
struct BetaConstraint {
    std::vector<Eigen::Index> fixed;
    Eigen::VectorXd values;  ///< full-length; only the fixed entries are read
};

/// Profile problem on one dataset: evaluates eta_hat_beta at every sample t
/// and F_n(beta). Observations are processed in canonical order and the
/// local fit is computed once per distinct t.
class ProfileProblem {
public:
    struct Profile {
        double objective = 0.0;
        Eigen::VectorXd eta;  ///< canonical order
        std::vector<LocalFit> fits;  ///< per distinct t
        int boundary = 0;
    };

    /// Per-observation quantities at one beta, in input order.
    struct Pointwise {
        Eigen::VectorXd u;
        Eigen::VectorXd eta;
        Eigen::MatrixXd deta;  ///< n x p, d eta_hat(t_i) / d beta
        Eigen::MatrixXd zhat;  ///< x_i + d eta_hat(t_i) / d beta
        Eigen::VectorXd rho;
        Eigen::VectorXd psi;
        Eigen::VectorXd chi;
        Eigen::VectorXd w2;
    };

    ProfileProblem(const Dataset& data, LossSpec loss, KernelSpec kernel, ScalarSearchSpec search = {})
        : loss_(std::move(loss)), kernel_(kernel), search_(search) {
        data.check_shape();
        data.check_family(loss_.family());
        order_ = detail::canonical_order(data);
        s_ = data.subset(order_);
        const auto n = static_cast<std::size_t>(s_.n());
        w1_.resize(n);
        w2_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            w1_[i] = loss_.w1().at(s_.x.row(static_cast<Eigen::Index>(i)));
            w2_[i] = loss_.w2().at(s_.x.row(static_cast<Eigen::Index>(i)));
        }
        obs_t_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = s_.t(static_cast<Eigen::Index>(i));
            if (ut_.empty() || ut_.back() != ti) ut_.push_back(ti);
            obs_t_[i] = ut_.size() - 1;
        }
        const detail::LocalProblem lp(s_, loss_, kernel_);
        bracket_ = lp.bracket(search_);
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s_.p());
        windows_.reserve(ut_.size());
        for (double t : ut_) windows_.push_back(lp.window(zero, t));
    }

    const LossSpec& loss() const noexcept { return loss_; }
    const KernelSpec& kernel() const noexcept { return kernel_; }
    const ScalarSearchSpec& search() const noexcept { return search_; }
    Eigen::Index n() const noexcept { return s_.n(); }
    Eigen::Index p() const noexcept { return s_.p(); }
    /// Data in canonical order.
    const Dataset& sorted() const noexcept { return s_; }
    /// order()[k] is the input row of canonical row k.
    const std::vector<Eigen::Index>& order() const noexcept { return order_; }

    Profile evaluate(const Eigen::VectorXd& beta) const {
        detail::check_beta(s_, beta);
        const auto n = static_cast<std::size_t>(s_.n());
        const int N = search_.grid_points;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = detail::linear_offset(s_.x.row(static_cast<Eigen::Index>(i)), beta);

        // rho on each expansion level of the shared grid, once per
        // observation, computed on first use.
        std::vector<std::vector<double>> R(static_cast<std::size_t>(search_.max_expansions) + 1);
        auto level = [&](int e, const detail::Bracket& b) -> const std::vector<double>& {
            auto& r = R[static_cast<std::size_t>(e)];
            if (r.empty()) {
                r.resize(n * static_cast<std::size_t>(N));
                for (std::size_t i = 0; i < n; ++i) {
                    const double yi = s_.y(static_cast<Eigen::Index>(i));
                    double* row = &r[i * static_cast<std::size_t>(N)];
                    for (int k = 0; k < N; ++k) row[k] = loss_.rho(yi, v[i] + detail::grid_point(b, N, k)) * w1_[i];
                }
            }
            return r;
        };

        Profile out;
        out.fits.resize(ut_.size());
        for (std::size_t j = 0; j < ut_.size(); ++j) {
            detail::Window win = windows_[j];
            for (std::size_t m = 0; m < win.rows.size(); ++m) win.v[m] = v[static_cast<std::size_t>(win.rows[m])];
            auto fill = [&](int e, const detail::Bracket& b, std::vector<double>& grid) {
                const std::vector<double>& r = level(e, b);
                std::fill(grid.begin(), grid.end(), 0.0);
                for (std::size_t m = 0; m < win.rows.size(); ++m) {
                    const double* row = &r[static_cast<std::size_t>(win.rows[m]) * static_cast<std::size_t>(N)];
                    const double W = win.W[m];
                    for (int k = 0; k < N; ++k) grid[static_cast<std::size_t>(k)] += W * row[k];
                }
            };
            out.fits[j] = detail::minimize_window_with(loss_, win, bracket_, search_, fill);
            if (out.fits[j].boundary_warning) ++out.boundary;
        }

        out.eta.resize(s_.n());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = out.fits[obs_t_[i]].a_hat;
            out.eta(static_cast<Eigen::Index>(i)) = a;
            total += loss_.rho(s_.y(static_cast<Eigen::Index>(i)), v[i] + a) * w2_[i];
        }
        out.objective = total / static_cast<double>(n);
        return out;
    }

    /// F_n(beta).
    double objective(const Eigen::VectorXd& beta) const { return evaluate(beta).objective; }

    Pointwise pointwise(const Eigen::VectorXd& beta) const {
        const Profile prof = evaluate(beta);
        const Eigen::Index n = s_.n();
        const Eigen::Index p = s_.p();
        std::vector<Eigen::VectorXd> d(ut_.size());
        for (std::size_t j = 0; j < ut_.size(); ++j) {
            detail::Window win = windows_[j];
            for (std::size_t m = 0; m < win.rows.size(); ++m)
                win.v[m] = detail::linear_offset(s_.x.row(win.rows[m]), beta);
            d[j] = detail::dbeta_ratio(loss_, win, s_.x, prof.fits[j].a_hat);
        }
        Pointwise pw;
        pw.u.resize(n);
        pw.eta.resize(n);
        pw.deta.resize(n, p);
        pw.zhat.resize(n, p);
        pw.rho.resize(n);
        pw.psi.resize(n);
        pw.chi.resize(n);
        pw.w2.resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Eigen::Index i = order_[static_cast<std::size_t>(k)];
            const auto ks = static_cast<std::size_t>(k);
            const double a = prof.eta(k);
            const double u = detail::linear_offset(s_.x.row(k), beta) + a;
            const MeanPoint mp = mean_point(loss_.family(), u);
            const double y = s_.y(k);
            pw.u(i) = u;
            pw.eta(i) = a;
            pw.deta.row(i) = d[obs_t_[ks]].transpose();
            pw.zhat.row(i) = s_.x.row(k) + d[obs_t_[ks]].transpose();
            pw.rho(i) = loss_.rho_at(y, mp);
            pw.psi(i) = loss_.psi_at(y, mp);
            pw.chi(i) = loss_.chi_at(y, mp);
            pw.w2(i) = w2_[ks];
        }
        return pw;
    }

    /// F^1_n(beta) = n^{-1} sum Psi w2 (x_i + d eta_hat / d beta).
    Eigen::VectorXd score(const Eigen::VectorXd& beta) const {
        const Pointwise pw = pointwise(beta);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(p());
        for (Eigen::Index i = 0; i < n(); ++i) g += pw.psi(i) * pw.w2(i) * pw.zhat.row(i).transpose();
        return g / static_cast<double>(n());
    }

    /// eta_hat in input order.
    Eigen::VectorXd eta_input_order(const Profile& prof) const {
        Eigen::VectorXd eta(s_.n());
        for (Eigen::Index k = 0; k < s_.n(); ++k) eta(order_[static_cast<std::size_t>(k)]) = prof.eta(k);
        return eta;
    }

    /// Sample t in input order.
    Eigen::VectorXd t_input_order() const {
        Eigen::VectorXd t(s_.n());
        for (Eigen::Index k = 0; k < s_.n(); ++k) t(order_[static_cast<std::size_t>(k)]) = s_.t(k);
        return t;
    }

private:
    LossSpec loss_;
    KernelSpec kernel_;
    ScalarSearchSpec search_;
    Dataset s_;
    std::vector<Eigen::Index> order_;
    std::vector<double> w1_;
    std::vector<double> w2_;
    std::vector<double> ut_;
    std::vector<std::size_t> obs_t_;
    std::vector<detail::Window> windows_;
    detail::Bracket bracket_{};
};

namespace detail {

inline void check_design(const Dataset& d) {
    for (Eigen::Index j = 0; j < d.p(); ++j)
        if (d.x.col(j).minCoeff() == d.x.col(j).maxCoeff())
            throw DesignError("covariate " + std::to_string(j + 1) + " is constant");
}

/// Minimizes F_n along one coordinate, starting from `beta` (whose value is
/// always a candidate). With `scan`, the grid center +- halfwidth is scanned
/// first; the best point is then polished by golden section over +- step
/// when `polish` is set.
struct LineResult {
    double value;
    double objective;
    int evaluations;
    bool on_boundary;
};

inline LineResult line_search(const ProfileProblem& prob, Eigen::VectorXd beta, Eigen::Index j, double start_obj,
                              const BetaSearchSpec& spec, bool scan, bool polish) {
    auto f = [&](double b) {
        beta(j) = b;
        return prob.objective(beta);
    };
    LineResult best{beta(j), start_obj, 0, false};
    if (scan) {
        const auto J = static_cast<long>(std::llround(spec.halfwidth / spec.step));
        std::optional<double> gbest_val;
        double gbest_obj = INFINITY;
        long gbest_k = 0;
        for (long k = -J; k <= J; ++k) {
            const double b = spec.center + static_cast<double>(k) * spec.step;
            const double fb = f(b);
            ++best.evaluations;
            if (fb < gbest_obj) {
                gbest_obj = fb;
                gbest_val = b;
                gbest_k = k;
            }
        }
        // The start point wins ties (it is the warm start).
        if (gbest_val && gbest_obj < best.objective) {
            best.value = *gbest_val;
            best.objective = gbest_obj;
            best.on_boundary = (gbest_k == -J || gbest_k == J);
        }
    }
    if (polish) {
        const auto g = golden_section(f, best.value - spec.step, best.value + spec.step, spec.refine_tol);
        const double fg = f(g.first);
        best.evaluations += g.second + 1;
        if (fg < best.objective) {
            best.value = g.first;
            best.objective = fg;
            best.on_boundary = false;
        }
    }
    return best;
}

}  // namespace detail

/// Assembles a FitResult at beta.
inline FitResult make_fit_result(const ProfileProblem& prob, const Eigen::VectorXd& beta) {
    const ProfileProblem::Profile prof = prob.evaluate(beta);
    FitResult r;
    r.beta = beta;
    r.eta_at = prob.eta_input_order(prof);
    r.t = prob.t_input_order();
    r.objective = prof.objective;
    r.h = prob.kernel().h;
    r.loss = prob.loss().label();
    r.kernel = prob.kernel().name();
    r.boundary_local_fits = prof.boundary;
    if (prof.boundary > 0)
        r.warnings.push_back(std::to_string(prof.boundary) +
                             " local fit(s) at the edge of the search bracket (eta_hat may diverge there)");
    return r;
}

/// beta_hat = argmin F_n(beta), optionally with some coordinates held fixed
/// and a warm start that is kept unless strictly improved upon.
inline FitResult fit_beta(const ProfileProblem& prob, const BetaSearchSpec& spec,
                          const std::optional<BetaConstraint>& constraint = std::nullopt,
                          const std::optional<Eigen::VectorXd>& start = std::nullopt) {
    spec.validate();
    detail::check_design(prob.sorted());
    const Eigen::Index p = prob.p();
    std::vector<bool> free(static_cast<std::size_t>(p), true);
    Eigen::VectorXd beta = start ? *start : Eigen::VectorXd::Constant(p, spec.center);
    if (beta.size() != p) throw DesignError("start vector has the wrong length");
    if (constraint) {
        for (Eigen::Index j : constraint->fixed) {
            if (j < 0 || j >= p) throw DesignError("constrained coordinate out of range");
            free[static_cast<std::size_t>(j)] = false;
            beta(j) = constraint->values(j);
        }
    }
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j)
        if (free[static_cast<std::size_t>(j)]) active.push_back(j);

    const bool polish = spec.mode == BetaSearchSpec::Mode::GridThenRefine;
    int evals = 0;
    bool boundary = false;
    double obj;
    if (active.empty()) {
        obj = prob.objective(beta);
        ++evals;
    } else if (active.size() == 1) {
        // A single free coordinate: plain grid, with the warm start as an
        // extra candidate when one was supplied.
        const Eigen::Index j = active.front();
        const double start_obj = start ? prob.objective(beta) : INFINITY;
        if (start) ++evals;
        const auto res = detail::line_search(prob, beta, j, start_obj, spec, true, polish);
        beta(j) = res.value;
        obj = res.objective;
        evals += res.evaluations;
        boundary = res.on_boundary;
    } else {
        obj = prob.objective(beta);
        ++evals;
        for (int sweep = 0; sweep < spec.max_sweeps; ++sweep) {
            double moved = 0.0;
            for (Eigen::Index j : active) {
                const double before = beta(j);
                const auto res = detail::line_search(prob, beta, j, obj, spec, sweep == 0, true);
                evals += res.evaluations;
                beta(j) = res.value;
                obj = res.objective;
                if (sweep == 0 && res.on_boundary) boundary = true;
                moved = std::max(moved, std::fabs(beta(j) - before));
            }
            if (sweep > 0 && moved < spec.sweep_tol) break;
        }
    }
    FitResult r = make_fit_result(prob, beta);
    r.objective_evaluations = evals;
    r.beta_on_boundary = boundary;
    if (boundary) r.warnings.push_back("beta_hat on the edge of the search grid; widen the grid");
    return r;
}

/// F_n(beta) = n^{-1} sum rho(y_i, x_i^T beta + eta_hat_beta(t_i)) w2(x_i).
inline double profile_objective(const Eigen::VectorXd& beta, const Dataset& data, const LossSpec& loss,
                                const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    return ProfileProblem(data, loss, kernel, search).objective(beta);
}

/// F^1_n(beta).
inline Eigen::VectorXd profile_score(const Eigen::VectorXd& beta, const Dataset& data, const LossSpec& loss,
                                     const KernelSpec& kernel, const ScalarSearchSpec& search = {}) {
    return ProfileProblem(data, loss, kernel, search).score(beta);
}

inline FitResult fit_beta(const Dataset& data, const LossSpec& loss, const KernelSpec& kernel,
                          const BetaSearchSpec& spec = {}, const ScalarSearchSpec& search = {}) {
    return fit_beta(ProfileProblem(data, loss, kernel, search), spec);
}

}  // namespace gplm
