#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gplm/errors.hpp"

namespace gplm {

enum class FamilyKind { Binomial, Poisson };
enum class LinkKind { Logit, Log };

/// Response distribution F(., s). For the binomial family s is the success
/// probability and y the integer count out of `trials`; the mean on the
/// response scale is m*s and V = m s (1 - s). For the Poisson family s is
/// the mean and V = s.
class Family {
public:
    static Family binomial(int trials) {
        if (trials < 1) throw DomainError("binomial trials must be a positive integer");
        return Family(FamilyKind::Binomial, trials);
    }
    static Family poisson() { return Family(FamilyKind::Poisson, 0); }

    FamilyKind kind() const noexcept { return kind_; }
    bool is_binomial() const noexcept { return kind_ == FamilyKind::Binomial; }
    int trials() const noexcept { return trials_; }

    std::string name() const {
        return is_binomial() ? "binomial(" + std::to_string(trials_) + ")" : std::string("poisson");
    }

    /// Integer y inside the response support.
    bool in_support(double y) const noexcept {
        if (!std::isfinite(y) || y < 0.0 || y != std::floor(y)) return false;
        return is_binomial() ? y <= trials_ : true;
    }

    bool mean_parameter_interior(double s) const noexcept {
        return is_binomial() ? (s > 0.0 && s < 1.0) : (s > 0.0 && std::isfinite(s));
    }

    /// log C(m, y); binomial only.
    double log_choose(int y) const noexcept { return log_choose_[static_cast<std::size_t>(y)]; }

    /// y log(y/m) + (m - y) log((m - y)/m) with 0 log 0 = 0; binomial only.
    double saturated_term(int y) const noexcept { return saturated_[static_cast<std::size_t>(y)]; }

    /// Canonical link for this family.
    LinkKind canonical_link() const noexcept {
        return is_binomial() ? LinkKind::Logit : LinkKind::Log;
    }

    bool operator==(const Family& o) const noexcept { return kind_ == o.kind_ && trials_ == o.trials_; }

private:
    Family(FamilyKind k, int m) : kind_(k), trials_(m) {
        if (k == FamilyKind::Binomial) {
            log_choose_.resize(static_cast<std::size_t>(m) + 1);
            saturated_.resize(static_cast<std::size_t>(m) + 1);
            for (int y = 0; y <= m; ++y) {
                log_choose_[static_cast<std::size_t>(y)] =
                    std::lgamma(m + 1.0) - std::lgamma(y + 1.0) - std::lgamma(m - y + 1.0);
                double a = 0.0;
                if (y > 0) a += y * std::log(static_cast<double>(y) / m);
                if (y < m) a += (m - y) * std::log(static_cast<double>(m - y) / m);
                saturated_[static_cast<std::size_t>(y)] = a;
            }
        }
    }

    FamilyKind kind_;
    int trials_;
    std::vector<double> log_choose_;
    std::vector<double> saturated_;
};

/// Link H = g^{-1}: logit^{-1} or exp.
class Link {
public:
    static Link logit() { return Link(LinkKind::Logit); }
    static Link log() { return Link(LinkKind::Log); }
    explicit Link(LinkKind k) : kind_(k) {}

    LinkKind kind() const noexcept { return kind_; }
    std::string name() const { return kind_ == LinkKind::Logit ? "logit" : "log"; }

    double H(double u) const noexcept {
        return kind_ == LinkKind::Logit ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u);
    }
    double dH(double u) const noexcept {
        if (kind_ == LinkKind::Log) return std::exp(u);
        const double e = std::exp(-std::fabs(u));
        return e / ((1.0 + e) * (1.0 + e));
    }
    /// g(s) = H^{-1}(s).
    double inverse(double s) const {
        if (kind_ == LinkKind::Logit) {
            if (!(s > 0.0 && s < 1.0)) throw DomainError("logit inverse needs s in (0,1), got " + std::to_string(s));
            return std::log(s) - std::log1p(-s);
        }
        if (!(s > 0.0)) throw DomainError("log inverse needs s > 0, got " + std::to_string(s));
        return std::log(s);
    }

    bool operator==(const Link& o) const noexcept { return kind_ == o.kind_; }

private:
    LinkKind kind_;
};

namespace detail {

/// x * log(x / m) with 0 log 0 = 0.
inline double xlogx_over(double x, double m) noexcept { return x > 0.0 ? x * std::log(x / m) : 0.0; }

}  // namespace detail

/// Mean-parameter quantities at linear predictor u for a canonical link,
/// computed so that s and 1 - s both keep full relative precision.
struct MeanPoint {
    double u = 0.0;
    double s = 0.0;      ///< H(u)
    double q = 0.0;      ///< 1 - H(u) (binomial only)
    double log_s = 0.0;
    double log_q = 0.0;  ///< binomial only
    double mu = 0.0;     ///< response-scale mean m s or s
    double var = 0.0;    ///< V(mu); equals d mu / du for canonical links
    double dvar = 0.0;   ///< dV/du
    double dH = 0.0;     ///< H'(u)
};

inline MeanPoint mean_point(const Family& fam, double u) noexcept {
    MeanPoint p;
    p.u = u;
    if (fam.is_binomial()) {
        const double m = fam.trials();
        // With e = exp(-|u|): the smaller of s, q is e/(1+e), the larger 1/(1+e).
        const double e = std::exp(-std::fabs(u));
        const double l1p = std::log1p(e);
        const double small = e / (1.0 + e);
        const double large = 1.0 / (1.0 + e);
        if (u >= 0.0) {
            p.s = large;
            p.q = small;
            p.log_s = -l1p;
            p.log_q = -std::fabs(u) - l1p;
        } else {
            p.s = small;
            p.q = large;
            p.log_s = -std::fabs(u) - l1p;
            p.log_q = -l1p;
        }
        p.dH = p.s * p.q;
        p.mu = m * p.s;
        p.var = m * p.dH;
        p.dvar = p.var * (p.q - p.s);
    } else {
        p.s = std::exp(u);
        p.q = std::numeric_limits<double>::quiet_NaN();
        p.log_s = u;
        p.log_q = std::numeric_limits<double>::quiet_NaN();
        p.dH = p.s;
        p.mu = p.s;
        p.var = p.s;
        p.dvar = p.s;
    }
    return p;
}

/// y - mu evaluated without cancellation near the ends of the mean space.
inline double response_gap(const Family& fam, double y, const MeanPoint& p) noexcept {
    if (fam.is_binomial()) return y * p.q - (fam.trials() - y) * p.s;
    return y - p.s;
}

/// d log f / du for the canonical link, i.e. y - mu.
inline double log_density_du(const Family& fam, double y, const MeanPoint& p) noexcept {
    return response_gap(fam, y, p);
}

inline double log_density(const Family& fam, double y, const MeanPoint& p) noexcept {
    if (fam.is_binomial()) {
        const int yi = static_cast<int>(y);
        const double m = fam.trials();
        double v = fam.log_choose(yi);
        if (y > 0.0) v += y * p.log_s;
        if (y < m) v += (m - y) * p.log_q;
        return v;
    }
    return (y > 0.0 ? y * p.log_s : 0.0) - p.s - std::lgamma(y + 1.0);
}

/// A(y) - log f(y, H(u)) with A(y) = log f(y, saturated mean): half the unit
/// deviance, always >= 0.
inline double half_deviance(const Family& fam, double y, const MeanPoint& p) noexcept {
    double d;
    if (fam.is_binomial()) {
        const double m = fam.trials();
        d = fam.saturated_term(static_cast<int>(y));
        if (y > 0.0) d -= y * p.log_s;
        if (y < m) d -= (m - y) * p.log_q;
    } else {
        d = detail::xlogx_over(y, 1.0) - y * p.log_s - (y - p.s);
    }
    return d > 0.0 ? d : 0.0;
}

/// Density and its derivative with respect to the mean parameter s.
struct DensityValue {
    double value;
    double ds;
};

inline DensityValue density(const Family& fam, double y, double s) {
    if (!fam.mean_parameter_interior(s))
        throw DomainError("mean parameter " + std::to_string(s) + " outside the interior of the mean space of " +
                          fam.name());
    if (!fam.in_support(y)) throw DomainError("response " + std::to_string(y) + " outside the support of " + fam.name());
    if (fam.is_binomial()) {
        const double m = fam.trials();
        const int yi = static_cast<int>(y);
        const double lf = fam.log_choose(yi) + y * std::log(s) + (m - y) * std::log1p(-s);
        const double f = std::exp(lf);
        return {f, f * (y / s - (m - y) / (1.0 - s))};
    }
    const double f = std::exp(y * std::log(s) - s - std::lgamma(y + 1.0));
    return {f, f * (y / s - 1.0)};
}

/// V(mu) on the response scale.
inline double variance_of_mean(const Family& fam, double mu) noexcept {
    if (fam.is_binomial()) return mu * (1.0 - mu / fam.trials());
    return mu;
}

inline double pearson_residual(const Family& fam, double y, double mu) {
    const double v = variance_of_mean(fam, mu);
    if (!(v > 0.0))
        throw DegenerateVarianceError("V(mu) = " + std::to_string(v) + " at mu = " + std::to_string(mu) + " for " +
                                      fam.name());
    return (y - mu) / std::sqrt(v);
}

/// Largest y kept when summing over the Poisson support at mean lambda: the
/// Chernoff bound exp(-lambda) (e lambda / k)^k on P(Y >= k) is below 1e-13
/// for k = cutoff + 1.
inline int poisson_cutoff(double lambda) {
    constexpr double log_tail = -29.933606208922594;  // log(1e-13)
    constexpr int max_terms = 2'000'000;
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("poisson mean must be positive and finite");
    const double ll = std::log(lambda);
    int k = static_cast<int>(std::floor(lambda)) + 1;
    k = std::max(k, static_cast<int>(lambda + 4.0 * std::sqrt(lambda)));
    while (-lambda + k * (1.0 + ll - std::log(static_cast<double>(k))) >= log_tail) {
        ++k;
        if (k > max_terms) throw PrecisionError("poisson truncation exceeded " + std::to_string(max_terms) + " terms");
    }
    return k - 1;
}

/// Largest k with P(Y < k) below 1e-13 for Y ~ Poisson(lambda); 0 for small lambda.
inline int poisson_floor(double lambda) {
    constexpr double log_tail = -29.933606208922594;  // log(1e-13)
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("poisson mean must be positive and finite");
    if (lambda < 40.0) return 0;
    const double ll = std::log(lambda);
    int k = static_cast<int>(std::max(0.0, lambda - 4.0 * std::sqrt(lambda)));
    while (k > 0 && -lambda + k * (1.0 + ll - std::log(static_cast<double>(k))) < log_tail) ++k;
    while (k > 0 && -lambda + k * (1.0 + ll - std::log(static_cast<double>(k))) >= log_tail) --k;
    return k;
}

/// Calls fn(y, f(y)) over the (possibly truncated) response support.
template <class Fn>
void for_each_support(const Family& fam, const MeanPoint& p, Fn&& fn) {
    if (fam.is_binomial()) {
        const int m = fam.trials();
        for (int y = 0; y <= m; ++y) fn(static_cast<double>(y), std::exp(log_density(fam, y, p)));
    } else {
        const int top = poisson_cutoff(p.s);
        const int bottom = poisson_floor(p.s);
        double lg = bottom > 1 ? std::lgamma(static_cast<double>(bottom)) : 0.0;  // lgamma(y + 1), accumulated
        for (int y = bottom; y <= top; ++y) {
            if (y > 1) lg += std::log(static_cast<double>(y));
            const double lf = (y > 0 ? y * p.log_s : 0.0) - p.s - lg;
            fn(static_cast<double>(y), std::exp(lf));
        }
    }
}

}  // namespace gplm
