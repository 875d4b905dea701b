#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/errors.hpp"

namespace gplm {

enum class PhiKind { BiancoYohai, CrouxHaesbroeck, Identity };

/// Bounded score applied to the deviance in the modified-likelihood loss.
class ScorePhi {
public:
    static ScorePhi bianco_yohai(double c = 0.5) { return ScorePhi(PhiKind::BiancoYohai, c); }
    static ScorePhi croux_haesbroeck(double c = 0.5) { return ScorePhi(PhiKind::CrouxHaesbroeck, c); }
    static ScorePhi identity() { return ScorePhi(PhiKind::Identity, 1.0); }

    PhiKind kind() const noexcept { return kind_; }
    double c() const noexcept { return c_; }
    bool bounded() const noexcept { return kind_ != PhiKind::Identity; }

    std::string name() const {
        switch (kind_) {
            case PhiKind::BiancoYohai: return "BY(" + std::to_string(c_) + ")";
            case PhiKind::CrouxHaesbroeck: return "CH(" + std::to_string(c_) + ")";
            case PhiKind::Identity: return "identity";
        }
        return "";
    }

    double operator()(double d) const {
        check(d);
        return value(d);
    }

    /// phi(d), unchecked.
    double value(double d) const noexcept {
        switch (kind_) {
            case PhiKind::BiancoYohai: return d <= c_ ? d - d * d / (2.0 * c_) : c_ / 2.0;
            case PhiKind::CrouxHaesbroeck: {
                if (d <= c_) return d * std::exp(-std::sqrt(c_));
                const double r = std::sqrt(d);
                return -2.0 * (1.0 + r) * std::exp(-r) + (2.0 * (1.0 + sqrt_c_) + c_) * std::exp(-sqrt_c_);
            }
            case PhiKind::Identity: return d;
        }
        return 0.0;
    }

    /// phi'(d), unchecked.
    double deriv(double d) const noexcept {
        switch (kind_) {
            case PhiKind::BiancoYohai: return d <= c_ ? 1.0 - d / c_ : 0.0;
            case PhiKind::CrouxHaesbroeck: return d <= c_ ? std::exp(-sqrt_c_) : std::exp(-std::sqrt(d));
            case PhiKind::Identity: return 1.0;
        }
        return 0.0;
    }

    /// phi''(d), left derivative at d = c.
    double deriv2(double d) const noexcept {
        switch (kind_) {
            case PhiKind::BiancoYohai: return d <= c_ ? -1.0 / c_ : 0.0;
            case PhiKind::CrouxHaesbroeck: {
                if (d <= c_) return 0.0;
                const double r = std::sqrt(d);
                return -std::exp(-r) / (2.0 * r);
            }
            case PhiKind::Identity: return 0.0;
        }
        return 0.0;
    }

    /// sup |phi|; infinite for the identity.
    double sup() const noexcept {
        switch (kind_) {
            case PhiKind::BiancoYohai: return c_ / 2.0;
            case PhiKind::CrouxHaesbroeck: return (2.0 * (1.0 + sqrt_c_) + c_) * std::exp(-sqrt_c_);
            case PhiKind::Identity: return INFINITY;
        }
        return 0.0;
    }

    double deriv_checked(double d) const {
        check(d);
        return deriv(d);
    }

private:
    ScorePhi(PhiKind k, double c) : kind_(k), c_(c), sqrt_c_(std::sqrt(c)) {
        if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("score tuning constant must be positive");
    }

    static void check(double d) {
        if (!(d >= 0.0)) throw DomainError("score argument must be a nonnegative deviance, got " + std::to_string(d));
    }

    PhiKind kind_;
    double c_;
    double sqrt_c_;
};

inline double phi_eval(const ScorePhi& phi, double d) { return phi(d); }
inline double phi_deriv(const ScorePhi& phi, double d) { return phi.deriv_checked(d); }

/// Huber score psi_c(x) = max(-c, min(c, x)).
class PsiHuber {
public:
    explicit PsiHuber(double c = 1.2) : c_(c) {
        if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("Huber tuning constant must be positive");
    }

    double c() const noexcept { return c_; }
    double operator()(double x) const noexcept { return x > c_ ? c_ : (x < -c_ ? -c_ : x); }
    /// Left derivative at the kinks.
    double deriv(double x) const noexcept { return (x > -c_ && x <= c_) ? 1.0 : 0.0; }

private:
    double c_;
};

enum class WeightKind { Unit, MedianCauchy };

/// Covariate weight w(x) = (1 + |x - center|^2)^{-1/2}, or 1.
class WeightFn {
public:
    static WeightFn unit() { return WeightFn(WeightKind::Unit, Eigen::VectorXd()); }
    static WeightFn median_cauchy(double center) { return WeightFn(WeightKind::MedianCauchy, Eigen::VectorXd::Constant(1, center)); }
    static WeightFn median_cauchy(Eigen::VectorXd center) { return WeightFn(WeightKind::MedianCauchy, std::move(center)); }

    /// Coordinatewise sample median of the rows of x.
    static WeightFn median_cauchy_from(const Eigen::MatrixXd& x);

    WeightKind kind() const noexcept { return kind_; }
    const Eigen::VectorXd& center() const noexcept { return center_; }

    double operator()(double x) const noexcept {
        if (kind_ == WeightKind::Unit) return 1.0;
        const double dx = x - center_(0);
        return 1.0 / std::sqrt(1.0 + dx * dx);
    }

    template <class Row>
    double at(const Row& x) const {
        if (kind_ == WeightKind::Unit) return 1.0;
        if (x.size() != center_.size()) throw DesignError("weight center dimension does not match covariate dimension");
        double ss = 0.0;
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            const double dx = x(j) - center_(j);
            ss += dx * dx;
        }
        return 1.0 / std::sqrt(1.0 + ss);
    }

    std::string name() const { return kind_ == WeightKind::Unit ? "unit" : "median-cauchy"; }

private:
    WeightFn(WeightKind k, Eigen::VectorXd c) : kind_(k), center_(std::move(c)) {}

    WeightKind kind_;
    Eigen::VectorXd center_;
};

inline double weight_eval(const WeightFn& w, double x) { return w(x); }

namespace detail {
inline double median(std::vector<double> v) {
    if (v.empty()) throw DesignError("median of an empty sample");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}
}  // namespace detail

inline WeightFn WeightFn::median_cauchy_from(const Eigen::MatrixXd& x) {
    Eigen::VectorXd c(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
        c(j) = detail::median(std::move(col));
    }
    return median_cauchy(std::move(c));
}

}  // namespace gplm
