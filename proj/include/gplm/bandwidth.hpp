#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/kernel.hpp"
#include "gplm/loss.hpp"
#include "gplm/profile.hpp"
#include "gplm/rng.hpp"
#include "gplm/smoothing.hpp"

namespace gplm {

/// Hold-out cross-validation settings.
struct CvSpec {
    double alpha = 0.2;
    std::vector<double> candidate_h{0.1, 0.15, 0.2, 0.25, 0.3};
    std::uint64_t seed = 1;
    int splits = 1;
    bool refit = true;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
        if (candidate_h.empty()) throw DomainError("at least one candidate bandwidth is required");
        for (std::size_t k = 0; k < candidate_h.size(); ++k) {
            if (!(candidate_h[k] > 0.0) || !std::isfinite(candidate_h[k]))
                throw DomainError("candidate bandwidths must be positive");
            if (k > 0 && !(candidate_h[k] > candidate_h[k - 1]))
                throw DomainError("candidate bandwidths must be strictly ascending");
        }
        if (splits < 1) throw DomainError("splits must be positive");
    }
};

struct CvResult {
    double selected_h = 0.0;
    std::vector<double> losses;  ///< per candidate, averaged over splits
    std::vector<std::vector<Eigen::Index>> validation_sets;
    std::vector<std::string> notes;
    std::optional<FitResult> refit;
};

namespace detail {

/// floor(alpha n + 1/2) distinct rows, drawn uniformly without replacement
/// and returned in ascending order.
inline std::vector<Eigen::Index> holdout_rows(Eigen::Index n, double alpha, rng::Stream& rs) {
    auto m = static_cast<Eigen::Index>(std::floor(alpha * static_cast<double>(n) + 0.5));
    m = std::clamp<Eigen::Index>(m, 1, n - 1);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto j = k + static_cast<Eigen::Index>(rs.below(static_cast<std::uint64_t>(n - k)));
        std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// sum over the validation rows of rho(y_i, x_i^T beta + eta_hat(t_i)) w2(x_i),
/// with eta_hat fitted on the training rows; infinite if some validation t
/// has an empty training window.
inline double validation_loss(const Dataset& train, const Dataset& valid, const LossSpec& loss,
                              const KernelSpec& kernel, const Eigen::VectorXd& beta, const ScalarSearchSpec& search) {
    const Dataset sorted = sorted_copy(train);
    const LocalProblem lp(sorted, loss, kernel);
    const Bracket b = lp.bracket(search);
    double total = 0.0;
    for (Eigen::Index i = 0; i < valid.n(); ++i) {
        Window win;
        try {
            win = lp.window(beta, valid.t(i));
        } catch (const EmptyWindowError&) {
            return std::numeric_limits<double>::infinity();
        }
        const double a = minimize_window(loss, win, b, search).a_hat;
        const double u = linear_offset(valid.x.row(i), beta) + a;
        total += loss.rho(valid.y(i), u) * loss.w2().at(valid.x.row(i));
    }
    return total;
}

}  // namespace detail

/// Selects h from the candidates by hold-out validation of the robust loss.
/// Ties go to the larger bandwidth. With `refit`, the model is refitted on
/// the full sample at the selected h.
inline CvResult robust_cv(const Dataset& data, const LossSpec& loss, KernelShape shape, const CvSpec& cv,
                          const BetaSearchSpec& beta_search = {}, const ScalarSearchSpec& search = {}) {
    cv.validate();
    data.check_shape();
    data.check_family(loss.family());
    if (data.n() < 2) throw ValidationError("cross-validation needs at least two observations");
    CvResult res;
    res.losses.assign(cv.candidate_h.size(), 0.0);
    rng::Stream master(cv.seed, 0x4356ULL);
    for (int s = 0; s < cv.splits; ++s) {
        rng::Stream rs = master.substream(static_cast<std::uint64_t>(s));
        std::vector<Eigen::Index> vidx = detail::holdout_rows(data.n(), cv.alpha, rs);
        std::vector<Eigen::Index> tidx;
        for (Eigen::Index i = 0, k = 0; i < data.n(); ++i) {
            if (k < static_cast<Eigen::Index>(vidx.size()) && vidx[static_cast<std::size_t>(k)] == i) {
                ++k;
                continue;
            }
            tidx.push_back(i);
        }
        const Dataset train = data.subset(tidx);
        const Dataset valid = data.subset(vidx);
        for (std::size_t c = 0; c < cv.candidate_h.size(); ++c) {
            const KernelSpec kernel(shape, cv.candidate_h[c]);
            double l;
            try {
                const FitResult fit = fit_beta(ProfileProblem(train, loss, kernel, search), beta_search);
                l = detail::validation_loss(train, valid, loss, kernel, fit.beta, search);
            } catch (const EmptyWindowError&) {
                l = std::numeric_limits<double>::infinity();
            }
            if (!std::isfinite(l))
                res.notes.push_back("h=" + std::to_string(cv.candidate_h[c]) + " split " + std::to_string(s) +
                                    ": empty kernel window, loss set to +inf");
            res.losses[c] += l / static_cast<double>(cv.splits);
        }
        res.validation_sets.push_back(std::move(vidx));
    }
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < res.losses.size(); ++c) {
        if (!std::isfinite(res.losses[c])) continue;
        if (!best || res.losses[c] <= res.losses[*best]) best = c;
    }
    if (!best) throw EmptyWindowError(data.t(0), cv.candidate_h.back());
    res.selected_h = cv.candidate_h[*best];
    if (cv.refit)
        res.refit = fit_beta(ProfileProblem(data, loss, KernelSpec(shape, res.selected_h), search), beta_search);
    return res;
}

}  // namespace gplm
