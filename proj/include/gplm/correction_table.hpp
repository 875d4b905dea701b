#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace gplm::detail {

/// Cumulative integral of a derivative on the link scale, tabulated on a
/// grid that contains every point where the derivative has a kink, and
/// evaluated by cubic Hermite interpolation with the exact derivative at the
/// nodes. Each cell is integrated with 10-point Gauss-Legendre, which is
/// accurate to rounding because the integrand is smooth inside a cell.
class CorrectionTable {
public:
    using Deriv = std::function<double(double)>;

    /// Outside [lo, hi] the table is extended either by a constant (the
    /// derivative is negligible there) or, above hi, by further blocks
    /// tabulated on first use.
    struct Range {
        double lo;
        double hi;
        double step;
        double base;          ///< value is zero here
        bool flat_below;
        bool flat_above;
    };

    /// Kinks of the derivative inside [lo, hi]; enables extension above hi.
    using KinksIn = std::function<std::vector<double>(double, double)>;

    CorrectionTable(Deriv deriv, std::vector<double> kinks, Range range, KinksIn kinks_in = {})
        : deriv_(std::move(deriv)), range_(range), kinks_in_(std::move(kinks_in)) {
        build_nodes(std::move(kinks));
        integrate_nodes();
        build_index();
    }

    double operator()(double u) const {
        if (u < range_.lo) return range_.flat_below ? vals_.front() : vals_.front() - tail(u, range_.lo);
        if (u > range_.hi) return range_.flat_above ? vals_.back() : extended(u);
        const std::size_t k = cell(u);
        return hermite(u, nodes_[k], nodes_[k + 1] - nodes_[k], vals_[k], ders_[k], vals_[k + 1], ders_[k + 1]);
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    static double hermite(double u, double u0, double h, double v0, double d0, double v1, double d1) {
        const double t = (u - u0) / h;
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        return h00 * v0 + h10 * h * d0 + h01 * v1 + h11 * h * d1;
    }

    /// Above hi: blocks of width block_width, each a table with its own
    /// kink nodes, built in order on first use.
    double extended(double u) const {
        const double x = (u - range_.hi) / block_width;
        if (!kinks_in_ || !(x < max_blocks)) return tail_value_far(u);
        const auto j = static_cast<std::size_t>(x);
        std::lock_guard<std::mutex> lock(ext_mu_);
        while (blocks_.size() <= j) {
            const double a = range_.hi + static_cast<double>(blocks_.size()) * block_width;
            const double offset = blocks_.empty() ? vals_.back() : offsets_.back() + blocks_.back()->vals_.back();
            Range r{a, a + block_width, range_.step, a, true, true};
            blocks_.push_back(std::make_unique<const CorrectionTable>(deriv_, kinks_in_(r.lo, r.hi), r));
            offsets_.push_back(offset);
        }
        return offsets_[j] + (*blocks_[j])(u);
    }

    double tail_value_far(double u) const { return vals_.back() + tail(range_.hi, u); }

    void build_nodes(std::vector<double> kinks) {
        std::sort(kinks.begin(), kinks.end());
        const auto cells = static_cast<std::size_t>(std::ceil((range_.hi - range_.lo) / range_.step));
        nodes_.reserve(cells + kinks.size() + 2);
        for (std::size_t j = 0; j <= cells; ++j)
            nodes_.push_back(std::min(range_.hi, range_.lo + static_cast<double>(j) * range_.step));
        nodes_.push_back(range_.base);
        for (double k : kinks)
            if (k > range_.lo && k < range_.hi) nodes_.push_back(k);
        std::sort(nodes_.begin(), nodes_.end());
        // Merge near-duplicates; kinks win over grid points.
        std::vector<double> merged;
        merged.reserve(nodes_.size());
        for (double v : nodes_) {
            if (!merged.empty() && v - merged.back() < 1e-10) {
                if (std::binary_search(kinks.begin(), kinks.end(), v)) merged.back() = v;
                continue;
            }
            merged.push_back(v);
        }
        nodes_ = std::move(merged);
    }

    void integrate_nodes() {
        const std::size_t n = nodes_.size();
        vals_.assign(n, 0.0);
        ders_.resize(n);
        for (std::size_t k = 0; k < n; ++k) ders_[k] = deriv_(nodes_[k]);
        const auto base_it = std::lower_bound(nodes_.begin(), nodes_.end(), range_.base);
        const auto b = static_cast<std::size_t>(base_it - nodes_.begin());
        using GL = boost::math::quadrature::gauss<double, 10>;
        for (std::size_t k = b + 1; k < n; ++k)
            vals_[k] = vals_[k - 1] + GL::integrate(deriv_, nodes_[k - 1], nodes_[k]);
        for (std::size_t k = b; k-- > 0;) vals_[k] = vals_[k + 1] - GL::integrate(deriv_, nodes_[k], nodes_[k + 1]);
    }

    void build_index() {
        const auto cells = static_cast<std::size_t>(std::ceil((range_.hi - range_.lo) / range_.step));
        first_.resize(cells + 1);
        std::size_t k = 0;
        for (std::size_t j = 0; j <= cells; ++j) {
            const double left = range_.lo + static_cast<double>(j) * range_.step;
            while (k + 1 < nodes_.size() && nodes_[k + 1] <= left) ++k;
            first_[j] = k;
        }
    }

    std::size_t cell(double u) const {
        auto j = static_cast<std::size_t>((u - range_.lo) / range_.step);
        if (j >= first_.size()) j = first_.size() - 1;
        std::size_t k = first_[j];
        while (k + 2 < nodes_.size() && nodes_[k + 1] <= u) ++k;
        while (k > 0 && nodes_[k] > u) --k;
        return k;
    }

    double tail(double a, double b) const {
        using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
        return GK::integrate(deriv_, a, b, 15, 1e-13);
    }

    Deriv deriv_;
    Range range_;
    std::vector<double> nodes_;
    std::vector<double> vals_;
    std::vector<double> ders_;
    std::vector<std::size_t> first_;
    KinksIn kinks_in_;
    static constexpr double block_width = 0.25;
    static constexpr double max_blocks = 32.0;
    mutable std::mutex ext_mu_;
    mutable std::vector<std::unique_ptr<const CorrectionTable>> blocks_;
    mutable std::vector<double> offsets_;
};

}  // namespace gplm::detail
