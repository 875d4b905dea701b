#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/errors.hpp"
#include "gplm/family.hpp"

namespace gplm {

/// True parameters stored alongside simulated data.
struct Truth {
    Eigen::VectorXd beta;
    Eigen::VectorXd eta;  ///< eta_0(t_i), one per observation
};

/// n observations (y_i, x_i, t_i).
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;  ///< n x p
    Eigen::VectorXd t;
    std::optional<Truth> truth;

    Dataset() = default;
    Dataset(Eigen::VectorXd y_, Eigen::MatrixXd x_, Eigen::VectorXd t_)
        : y(std::move(y_)), x(std::move(x_)), t(std::move(t_)) {
        check_shape();
    }

    Eigen::Index n() const noexcept { return y.size(); }
    Eigen::Index p() const noexcept { return x.cols(); }

    void check_shape() const {
        if (x.rows() != y.size() || t.size() != y.size())
            throw DesignError("y, x and t must have the same number of rows");
        if (y.size() == 0) throw ValidationError("no observations");
        if (x.cols() == 0) throw DesignError("at least one covariate is required");
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (!std::isfinite(y(i)) || !std::isfinite(t(i)) || !x.row(i).allFinite())
                throw ValidationError("non-finite value in row " + std::to_string(i + 1));
        }
    }

    /// Throws ValidationError naming the first response outside the support.
    void check_family(const Family& fam) const {
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (!fam.in_support(y(i)))
                throw ValidationError("row " + std::to_string(i + 1) + ": response " + std::to_string(y(i)) +
                                      " outside the support of " + fam.name());
    }

    /// Rows selected by `idx`, in that order; truth is carried along.
    Dataset subset(const std::vector<Eigen::Index>& idx) const {
        Dataset d;
        const auto m = static_cast<Eigen::Index>(idx.size());
        d.y.resize(m);
        d.x.resize(m, p());
        d.t.resize(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            d.y(k) = y(idx[static_cast<std::size_t>(k)]);
            d.x.row(k) = x.row(idx[static_cast<std::size_t>(k)]);
            d.t(k) = t(idx[static_cast<std::size_t>(k)]);
        }
        if (truth) {
            Truth tr{truth->beta, Eigen::VectorXd(m)};
            for (Eigen::Index k = 0; k < m; ++k) tr.eta(k) = truth->eta(idx[static_cast<std::size_t>(k)]);
            d.truth = std::move(tr);
        }
        return d;
    }
};

namespace detail {

/// Row order sorted by (t, x_1, ..., x_p, y). Computations run in this order
/// so that results do not depend on how the input rows were arranged.
inline std::vector<Eigen::Index> canonical_order(const Dataset& d) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d.n()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (d.t(a) != d.t(b)) return d.t(a) < d.t(b);
        for (Eigen::Index j = 0; j < d.p(); ++j)
            if (d.x(a, j) != d.x(b, j)) return d.x(a, j) < d.x(b, j);
        return d.y(a) < d.y(b);
    });
    return idx;
}

}  // namespace detail

}  // namespace gplm
