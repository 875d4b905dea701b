#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gplm/correction_table.hpp"
#include "gplm/errors.hpp"
#include "gplm/family.hpp"
#include "gplm/scores.hpp"

namespace gplm {

enum class LossKind { ModifiedLikelihood, RobustQuasi, ClassicalQuasi };

namespace detail {

/// Points where r(y, u) = +c (upper) and r(y, u) = -c (lower) on the mean
/// scale, with the half deviance at each. Only meaningful for the Huber loss.
struct HuberBreaks {
    double s_upper = 0.0;  // r = +c; s below this clips at +c
    double s_lower = 1.0;  // r = -c; s above this clips at -c
    double d_upper = 0.0;
    double d_lower = 0.0;
    double theta_upper = 0.0;
    double theta_lower = 0.0;
    bool has_upper = false;
    bool has_lower = false;
};

/// arcsin(sqrt(s)) for the binomial family, sqrt(s) for Poisson; its
/// derivative in s is proportional to V^{-1/2}.
inline double huber_theta(const Family& fam, double s, double q) noexcept {
    return fam.is_binomial() ? std::atan2(std::sqrt(s), std::sqrt(q)) : std::sqrt(s);
}

inline HuberBreaks huber_breaks(const Family& fam, double y, double c) {
    HuberBreaks b;
    const double c2 = c * c;
    if (fam.is_binomial()) {
        const double m = fam.trials();
        const double disc = std::sqrt(c2 * m * (4.0 * y * (m - y) + c2 * m));
        // r = +c at the smaller root, r = -c at the larger; each root is taken
        // from the cancellation-free side.
        const double s_up = 2.0 * y * y / ((2.0 * m * y + c2 * m) + disc);
        const double q_lo = 2.0 * (m - y) * (m - y) / ((2.0 * m * (m - y) + c2 * m) + disc);
        b.has_upper = y > 0.0;
        b.has_lower = y < m;
        b.s_upper = s_up;
        b.s_lower = 1.0 - q_lo;
        if (b.has_upper) {
            MeanPoint p;
            p.s = s_up;
            p.q = 1.0 - s_up;
            p.log_s = std::log(s_up);
            p.log_q = std::log1p(-s_up);
            b.d_upper = half_deviance(fam, y, p);
            b.theta_upper = huber_theta(fam, s_up, 1.0 - s_up);
        }
        if (b.has_lower) {
            MeanPoint p;
            p.s = 1.0 - q_lo;
            p.q = q_lo;
            p.log_s = std::log1p(-q_lo);
            p.log_q = std::log(q_lo);
            b.d_lower = half_deviance(fam, y, p);
            b.theta_lower = huber_theta(fam, 1.0 - q_lo, q_lo);
        }
    } else {
        const double disc = std::sqrt(4.0 * y * c2 + c2 * c2);
        const double s_up = 2.0 * y * y / ((2.0 * y + c2) + disc);
        const double s_lo = 0.5 * ((2.0 * y + c2) + disc);
        b.has_upper = y > 0.0;
        b.has_lower = true;
        b.s_upper = s_up;
        b.s_lower = s_lo;
        if (b.has_upper) {
            MeanPoint p;
            p.s = s_up;
            p.log_s = std::log(s_up);
            b.d_upper = half_deviance(fam, y, p);
            b.theta_upper = std::sqrt(s_up);
        }
        MeanPoint p;
        p.s = s_lo;
        p.log_s = std::log(s_lo);
        b.d_lower = half_deviance(fam, y, p);
        b.theta_lower = std::sqrt(s_lo);
    }
    return b;
}

/// Bisection for a root of a continuous function with f(lo), f(hi) of
/// opposite sign.
template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-13) {
    double flo = f(lo);
    for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::fabs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Immutable state shared by copies of a LossSpec.
struct LossCore {
    LossKind kind;
    Family family;
    Link link;
    std::optional<ScorePhi> phi;
    std::optional<PsiHuber> huber;
    std::vector<HuberBreaks> breaks;  // binomial Huber loss, indexed by y
    std::shared_ptr<const CorrectionTable> table;
    bool closed_form_g = false;  // Croux-Haesbroeck with Bernoulli responses
    bool zero_g = false;         // classical quasi-likelihood or identity phi
    double closed_form_base = 0.0;  // 2 I(1/2) for the closed form

    std::string cache_key() const {
        std::ostringstream os;
        os.precision(17);
        os << static_cast<int>(kind) << '|' << family.name() << '|' << link.name();
        if (phi) os << "|phi" << static_cast<int>(phi->kind()) << ':' << phi->c();
        if (huber) os << "|huber:" << huber->c();
        return os.str();
    }
};

/// Link-scale range over which the correction is tabulated.
inline CorrectionTable::Range table_range(const Family& fam) {
    if (fam.is_binomial()) return {-80.0, 80.0, 1.0 / 256.0, 0.0, true, true};
    return {-30.0, 7.0, 1.0 / 256.0, 0.0, true, false};
}

/// u where the smooth pieces of the correction derivative meet.
inline std::vector<double> correction_kinks(const LossCore& core, const CorrectionTable::Range& r) {
    std::vector<double> kinks;
    const Family& fam = core.family;
    int bottom = 0;
    int top;
    if (fam.is_binomial()) {
        top = fam.trials();
    } else {
        // Kinks sit within a few sqrt(s) of y; responses further out have none in range.
        const double s_lo = std::exp(r.lo);
        const double s_hi = std::exp(r.hi);
        top = poisson_cutoff(s_hi);
        bottom = static_cast<int>(std::max(0.0, std::floor(s_lo - 10.0 * std::sqrt(s_lo) - 10.0)));
    }
    for (int yi = bottom; yi <= top; ++yi) {
        const double y = yi;
        if (core.kind == LossKind::RobustQuasi) {
            const HuberBreaks b = huber_breaks(fam, y, core.huber->c());
            if (b.has_upper) kinks.push_back(core.link.inverse(b.s_upper));
            if (b.has_lower && (!fam.is_binomial() || b.s_lower < 1.0)) kinks.push_back(core.link.inverse(b.s_lower));
        } else {
            const double c = core.phi->c();
            auto excess = [&](double u) { return half_deviance(fam, y, mean_point(fam, u)) - c; };
            // The deviance is monotone on each side of the saturated mean.
            double u0;
            if (y == 0.0) {
                u0 = r.lo;
            } else if (fam.is_binomial() && y == fam.trials()) {
                u0 = r.hi;
            } else {
                u0 = core.link.inverse(fam.is_binomial() ? y / fam.trials() : y);
            }
            if (u0 > r.lo && excess(r.lo) > 0.0) kinks.push_back(bisect(excess, r.lo, u0));
            if (u0 < r.hi && excess(r.hi) > 0.0) kinks.push_back(bisect([&](double u) { return -excess(u); }, u0, r.hi));
        }
    }
    return kinks;
}

/// Closed-form correction for the Croux-Haesbroeck score with Bernoulli
/// responses: G(s) = I(s) + I(1 - s) - 2 I(1/2) with I' (s) = phi'(-log s).
inline double ch_bernoulli_I(double c, double s, double log_s) {
    const double sqrt_c = std::sqrt(c);
    auto J = [](double s_, double log_s_) {
        const double w = std::sqrt(-log_s_);
        return s_ * std::exp(-w) + 0.5 * std::sqrt(M_PI) * std::exp(0.25) * std::erf(w + 0.5);
    };
    if (-log_s > c) return J(s, log_s);
    const double s_c = std::exp(-c);
    return J(s_c, -c) + std::exp(-sqrt_c) * (s - s_c);
}

inline double ch_bernoulli_G(double c, double base, const MeanPoint& p) {
    return ch_bernoulli_I(c, p.s, p.log_s) + ch_bernoulli_I(c, p.q, p.log_q) - base;
}

/// Huber part of the robust quasi-likelihood: nu~(y,u) = psi(r) sqrt(V) and
/// its u-derivative.
struct NuValue {
    double nu;
    double dnu;
};

inline NuValue huber_nu(const Family& fam, const PsiHuber& psi, double y, const MeanPoint& p) noexcept {
    const double sv = std::sqrt(p.var);
    const double r = response_gap(fam, y, p) / sv;
    const double pr = psi(r);
    const double dpr = psi.deriv(r);
    const double dnu = dpr * (-p.var - 0.5 * r * p.dvar / sv) + pr * p.dvar / (2.0 * sv);
    return {pr * sv, dnu};
}

/// dG(H(u))/du.
inline double correction_du(const LossCore& core, const MeanPoint& p) {
    if (core.zero_g) return 0.0;
    double acc = 0.0;
    const Family& fam = core.family;
    if (core.kind == LossKind::ModifiedLikelihood) {
        const ScorePhi& phi = *core.phi;
        for_each_support(fam, p, [&](double y, double f) {
            if (f == 0.0) return;
            acc += f * phi.deriv(half_deviance(fam, y, p)) * log_density_du(fam, y, p);
        });
        return acc;
    }
    const PsiHuber& psi = *core.huber;
    for_each_support(fam, p, [&](double y, double f) {
        if (f == 0.0) return;
        acc += f * huber_nu(fam, psi, y, p).nu;
    });
    return -acc;
}

/// d^2 G(H(u))/du^2.
inline double correction_du2(const LossCore& core, const MeanPoint& p) {
    if (core.zero_g) return 0.0;
    double acc = 0.0;
    const Family& fam = core.family;
    if (core.kind == LossKind::ModifiedLikelihood) {
        const ScorePhi& phi = *core.phi;
        for_each_support(fam, p, [&](double y, double f) {
            if (f == 0.0) return;
            const double d = half_deviance(fam, y, p);
            const double l = log_density_du(fam, y, p);
            acc += f * ((phi.deriv(d) - phi.deriv2(d)) * l * l - phi.deriv(d) * p.var);
        });
        return acc;
    }
    const PsiHuber& psi = *core.huber;
    for_each_support(fam, p, [&](double y, double f) {
        if (f == 0.0) return;
        const NuValue v = huber_nu(fam, psi, y, p);
        acc += f * (log_density_du(fam, y, p) * v.nu + v.dnu);
    });
    return -acc;
}

inline std::shared_ptr<const CorrectionTable> correction_table_for(const LossCore& core) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const CorrectionTable>> cache;
    const std::string key = core.cache_key();
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    const auto range = table_range(core.family);
    // The derivative closure must not reference `core` (a temporary).
    auto shared = std::make_shared<LossCore>(core);
    shared->table.reset();
    auto deriv = [shared](double u) { return correction_du(*shared, mean_point(shared->family, u)); };
    auto kinks_in = [shared, range](double lo, double hi) {
        CorrectionTable::Range block = range;
        block.lo = lo;
        block.hi = hi;
        return correction_kinks(*shared, block);
    };
    auto table = std::make_shared<const CorrectionTable>(deriv, correction_kinks(core, range), range, kinks_in);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace detail

/// A loss rho(y, u) together with its family, link and covariate weights.
///
/// Three variants:
///  - modified likelihood: rho = phi(A(y) - log f(y, H(u))) + G(H(u));
///  - robust quasi-likelihood: rho = -[int_{s0}^{H(u)} nu(y, s) ds + G(H(u))]
///    with nu = psi_c(r) V^{-1/2} dmu/ds;
///  - classical quasi-likelihood: the robust form with psi(x) = x and unit
///    weights, which reduces to the half deviance.
/// G makes E_s Psi(y, g(s)) = 0 for every s. Only canonical links are
/// supported (logit for binomial, log for Poisson).
class LossSpec {
public:
    static LossSpec modified_likelihood(const Family& fam, const Link& link, const ScorePhi& phi,
                                        WeightFn w1 = WeightFn::unit(), WeightFn w2 = WeightFn::unit()) {
        detail::LossCore core{LossKind::ModifiedLikelihood, fam, link, phi, std::nullopt, {}, nullptr};
        return LossSpec(std::move(core), std::move(w1), std::move(w2));
    }

    static LossSpec robust_quasi(const Family& fam, const Link& link, const PsiHuber& psi,
                                 WeightFn w1 = WeightFn::unit(), WeightFn w2 = WeightFn::unit()) {
        detail::LossCore core{LossKind::RobustQuasi, fam, link, std::nullopt, psi, {}, nullptr};
        return LossSpec(std::move(core), std::move(w1), std::move(w2));
    }

    static LossSpec classical_quasi(const Family& fam, const Link& link) {
        detail::LossCore core{LossKind::ClassicalQuasi, fam, link, std::nullopt, std::nullopt, {}, nullptr};
        return LossSpec(std::move(core), WeightFn::unit(), WeightFn::unit());
    }

    /// Same loss with different covariate weights (shares the correction table).
    LossSpec with_weights(WeightFn w1, WeightFn w2) const {
        LossSpec out = *this;
        out.w1_ = std::move(w1);
        out.w2_ = std::move(w2);
        return out;
    }

    LossKind kind() const noexcept { return core_->kind; }
    const Family& family() const noexcept { return core_->family; }
    const Link& link() const noexcept { return core_->link; }
    const std::optional<ScorePhi>& phi() const noexcept { return core_->phi; }
    const std::optional<PsiHuber>& huber() const noexcept { return core_->huber; }
    const WeightFn& w1() const noexcept { return w1_; }
    const WeightFn& w2() const noexcept { return w2_; }

    /// rho bounded over the response support (modified likelihood with a
    /// bounded phi, or binomial robust quasi-likelihood).
    bool bounded() const noexcept {
        switch (kind()) {
            case LossKind::ModifiedLikelihood: return core_->phi->bounded();
            case LossKind::RobustQuasi: return family().is_binomial();
            case LossKind::ClassicalQuasi: return false;
        }
        return false;
    }

    /// Short label: mod, rql or qal.
    std::string label() const {
        switch (kind()) {
            case LossKind::ModifiedLikelihood: return "MOD";
            case LossKind::RobustQuasi: return "RQL";
            case LossKind::ClassicalQuasi: return "QAL";
        }
        return "";
    }

    std::string describe() const {
        std::string s = label() + " " + family().name() + "/" + link().name();
        if (core_->phi) s += " phi=" + core_->phi->name();
        if (core_->huber) s += " huber c=" + std::to_string(core_->huber->c());
        s += " w1=" + w1_.name() + " w2=" + w2_.name();
        return s;
    }

    // Unchecked evaluation on the link scale; callers validate y once.

    double rho(double y, double u) const { return rho_at(y, mean_point(family(), u)); }
    double psi(double y, double u) const { return psi_at(y, mean_point(family(), u)); }
    double chi(double y, double u) const { return chi_at(y, mean_point(family(), u)); }

    double rho_at(double y, const MeanPoint& p) const {
        const Family& fam = family();
        switch (kind()) {
            case LossKind::ClassicalQuasi: return half_deviance(fam, y, p);
            case LossKind::ModifiedLikelihood: return core_->phi->value(half_deviance(fam, y, p)) + g_u(p);
            case LossKind::RobustQuasi: return -(quasi_integral(y, p) + g_u(p));
        }
        return 0.0;
    }

    double psi_at(double y, const MeanPoint& p) const {
        const Family& fam = family();
        switch (kind()) {
            case LossKind::ClassicalQuasi: return -response_gap(fam, y, p);
            case LossKind::ModifiedLikelihood:
                return -core_->phi->deriv(half_deviance(fam, y, p)) * log_density_du(fam, y, p) +
                       detail::correction_du(*core_, p);
            case LossKind::RobustQuasi:
                return -(detail::huber_nu(fam, *core_->huber, y, p).nu + detail::correction_du(*core_, p));
        }
        return 0.0;
    }

    double chi_at(double y, const MeanPoint& p) const {
        const Family& fam = family();
        switch (kind()) {
            case LossKind::ClassicalQuasi: return p.var;
            case LossKind::ModifiedLikelihood: {
                const ScorePhi& phi = *core_->phi;
                const double d = half_deviance(fam, y, p);
                const double l = log_density_du(fam, y, p);
                return phi.deriv2(d) * l * l + phi.deriv(d) * p.var + detail::correction_du2(*core_, p);
            }
            case LossKind::RobustQuasi:
                return -(detail::huber_nu(fam, *core_->huber, y, p).dnu + detail::correction_du2(*core_, p));
        }
        return 0.0;
    }

    /// G(H(u)), normalized to 0 at s = 1/2 (binomial) or s = 1 (Poisson).
    double g_u(const MeanPoint& p) const {
        if (core_->zero_g) return 0.0;
        if (core_->closed_form_g) return detail::ch_bernoulli_G(core_->phi->c(), core_->closed_form_base, p);
        return (*core_->table)(p.u);
    }
    double g_du(const MeanPoint& p) const { return detail::correction_du(*core_, p); }
    double g_du2(const MeanPoint& p) const { return detail::correction_du2(*core_, p); }

    bool correction_closed_form() const noexcept { return core_->closed_form_g; }
    bool correction_zero() const noexcept { return core_->zero_g; }

    /// Throws DomainError unless y lies in the family support.
    void check_response(double y) const {
        if (!family().in_support(y))
            throw DomainError("response " + std::to_string(y) + " outside the support of " + family().name());
    }

private:
    LossSpec(detail::LossCore core, WeightFn w1, WeightFn w2) : w1_(std::move(w1)), w2_(std::move(w2)) {
        if (core.link.kind() != core.family.canonical_link())
            throw DomainError("only canonical links are supported: " + core.family.name() + " requires " +
                              (core.family.is_binomial() ? "logit" : "log"));
        core.zero_g = core.kind == LossKind::ClassicalQuasi ||
                      (core.kind == LossKind::ModifiedLikelihood && core.phi->kind() == PhiKind::Identity);
        core.closed_form_g = core.kind == LossKind::ModifiedLikelihood &&
                             core.phi->kind() == PhiKind::CrouxHaesbroeck && core.family.is_binomial() &&
                             core.family.trials() == 1;
        if (core.closed_form_g) core.closed_form_base = 2.0 * detail::ch_bernoulli_I(core.phi->c(), 0.5, std::log(0.5));
        if (core.kind == LossKind::RobustQuasi && core.family.is_binomial()) {
            for (int y = 0; y <= core.family.trials(); ++y)
                core.breaks.push_back(detail::huber_breaks(core.family, y, core.huber->c()));
        }
        if (!core.zero_g && !core.closed_form_g) core.table = detail::correction_table_for(core);
        core_ = std::make_shared<const detail::LossCore>(std::move(core));
    }

    /// int_{s0}^{H(u)} nu(y, s) ds in closed form (s0 = saturated mean).
    double quasi_integral(double y, const MeanPoint& p) const {
        const Family& fam = family();
        const double c = core_->huber->c();
        const double r = response_gap(fam, y, p) / std::sqrt(p.var);
        if (r >= -c && r <= c) return -half_deviance(fam, y, p);
        const detail::HuberBreaks b = fam.is_binomial() ? core_->breaks[static_cast<std::size_t>(y)]
                                                        : detail::huber_breaks(fam, y, c);
        const double scale = 2.0 * c * (fam.is_binomial() ? std::sqrt(static_cast<double>(fam.trials())) : 1.0);
        const double theta = detail::huber_theta(fam, p.s, p.q);
        if (r > c) return -b.d_upper + scale * (theta - b.theta_upper);
        return -b.d_lower - scale * (theta - b.theta_lower);
    }

    std::shared_ptr<const detail::LossCore> core_;
    WeightFn w1_;
    WeightFn w2_;
};

// Checked free-function surface.

namespace detail {
inline MeanPoint checked_point(const LossSpec& loss, double y, double u) {
    loss.check_response(y);
    if (!std::isfinite(u)) throw DomainError("linear predictor must be finite");
    return mean_point(loss.family(), u);
}
inline MeanPoint checked_mean(const LossSpec& loss, double s) {
    if (!loss.family().mean_parameter_interior(s))
        throw DomainError("mean parameter " + std::to_string(s) + " outside the interior of the mean space");
    return mean_point(loss.family(), loss.link().inverse(s));
}
}  // namespace detail

inline double rho(const LossSpec& loss, double y, double u) { return loss.rho_at(y, detail::checked_point(loss, y, u)); }
inline double Psi(const LossSpec& loss, double y, double u) { return loss.psi_at(y, detail::checked_point(loss, y, u)); }
inline double chi(const LossSpec& loss, double y, double u) { return loss.chi_at(y, detail::checked_point(loss, y, u)); }

/// G(s) on the mean scale.
inline double correction_G(const LossSpec& loss, double s) { return loss.g_u(detail::checked_mean(loss, s)); }

/// G'(s) on the mean scale.
inline double correction_G_deriv(const LossSpec& loss, double s) {
    const MeanPoint p = detail::checked_mean(loss, s);
    return loss.g_du(p) / p.dH;
}

}  // namespace gplm
