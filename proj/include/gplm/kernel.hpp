#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/errors.hpp"

namespace gplm {

enum class KernelShape { Triangular, Epanechnikov, Gaussian };

/// Kernel shape and bandwidth. Every shape integrates to one.
struct KernelSpec {
    KernelShape shape = KernelShape::Triangular;
    double h = 0.1;

    KernelSpec() = default;
    KernelSpec(KernelShape s, double bandwidth) : shape(s), h(bandwidth) {
        if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw DomainError("bandwidth must be positive");
    }

    static KernelSpec triangular(double h) { return {KernelShape::Triangular, h}; }
    static KernelSpec epanechnikov(double h) { return {KernelShape::Epanechnikov, h}; }
    static KernelSpec gaussian(double h) { return {KernelShape::Gaussian, h}; }

    KernelSpec with_bandwidth(double bandwidth) const { return {shape, bandwidth}; }

    bool differentiable() const noexcept { return shape == KernelShape::Gaussian; }

    /// K(z).
    double operator()(double z) const noexcept {
        const double a = std::fabs(z);
        switch (shape) {
            case KernelShape::Triangular: return a < 1.0 ? 1.0 - a : 0.0;
            case KernelShape::Epanechnikov: return a < 1.0 ? 0.75 * (1.0 - z * z) : 0.0;
            case KernelShape::Gaussian: return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        }
        return 0.0;
    }

    /// K'(z); Gaussian only.
    double deriv(double z) const noexcept {
        if (shape != KernelShape::Gaussian) return NAN;
        return -z * (*this)(z);
    }

    /// Half-width of the support in units of h; infinite for the Gaussian.
    double support() const noexcept { return shape == KernelShape::Gaussian ? INFINITY : 1.0; }

    std::string name() const {
        switch (shape) {
            case KernelShape::Triangular: return "triangular";
            case KernelShape::Epanechnikov: return "epanechnikov";
            case KernelShape::Gaussian: return "gaussian";
        }
        return "";
    }
};

/// Normalized kernel weights W_i(t) = K((t - t_i)/h) / sum_j K((t - t_j)/h).
inline Eigen::VectorXd kernel_weights(double t, const Eigen::VectorXd& t_data, const KernelSpec& kernel) {
    const Eigen::Index n = t_data.size();
    Eigen::VectorXd w(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        w(i) = kernel((t - t_data(i)) / kernel.h);
        total += w(i);
    }
    if (!(total > 0.0)) throw EmptyWindowError(t, kernel.h);
    w /= total;
    return w;
}

}  // namespace gplm
