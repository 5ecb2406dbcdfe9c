#pragma once

/**
 * @file hydraulics.hpp
 * @brief Closed-form hydraulic quantities for a rectangular prismatic channel.
 *
 * Every function here is a pure function of its value arguments. Depth
 * arguments are validated (positive and finite); scenario validation is left
 * to callers that need it (the solver and the dataset generator), so that
 * limiting cases such as Q = 0 stay expressible.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hydronet {

/// Gravitational acceleration (m/s^2).
inline constexpr double kGravity = 9.81;

/// Admissible depth range for every root search (m).
inline constexpr double kMinSearchDepth = 1e-6;
inline constexpr double kMaxSearchDepth = 1e4;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by depth_from_energy when the requested energy is below the
/// minimum specific energy of the section.
class NoRealRootError : public SolverError {
public:
    using SolverError::SolverError;
};

/// The five physical parameters of one profile problem.
struct ChannelScenario {
    double s{};   ///< bed slope
    double b{};   ///< channel width (m)
    double n{};   ///< Manning coefficient (s m^-1/3)
    double zd{};  ///< weir height (m)
    double Q{};   ///< discharge (m^3/s)

    [[nodiscard]] bool valid() const noexcept {
        auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
        return ok(s) && ok(b) && ok(n) && ok(zd) && ok(Q);
    }

    void validate() const {
        if (!valid()) {
            throw DomainError("channel scenario fields must be positive and finite (s=" +
                              std::to_string(s) + ", b=" + std::to_string(b) +
                              ", n=" + std::to_string(n) + ", zd=" + std::to_string(zd) +
                              ", Q=" + std::to_string(Q) + ")");
        }
    }

    friend bool operator==(const ChannelScenario&, const ChannelScenario&) = default;
};

enum class FlowBranch { subcritical, supercritical };

namespace detail {

inline void require_depth(double h, const char* what) {
    if (!(std::isfinite(h) && h > 0.0)) {
        throw DomainError(std::string(what) + ": depth must be positive and finite, got " +
                          std::to_string(h));
    }
}

}  // namespace detail

/// E = h + Q^2 / (2 g b^2 h^2)
inline double specific_energy(double h, const ChannelScenario& sc) {
    detail::require_depth(h, "specific_energy");
    const double q = sc.Q / sc.b;
    return h + q * q / (2.0 * kGravity * h * h);
}

/// dE/dh = 1 - Q^2 / (g b^2 h^3) = 1 - Fr^2
inline double specific_energy_derivative(double h, const ChannelScenario& sc) {
    detail::require_depth(h, "specific_energy_derivative");
    const double q = sc.Q / sc.b;
    return 1.0 - q * q / (kGravity * h * h * h);
}

/// Energy grade slope from the Manning/Chezy relation, J = n^2 Q^2 / (A^2 R^(4/3)).
inline double friction_slope(double h, const ChannelScenario& sc) {
    detail::require_depth(h, "friction_slope");
    const double area = sc.b * h;
    const double radius = area / (sc.b + 2.0 * h);
    return sc.n * sc.n * sc.Q * sc.Q / (area * area * std::pow(radius, 4.0 / 3.0));
}

/// dJ/dh = J * (-10/(3h) + 8/(3(b+2h)))
inline double friction_slope_derivative(double h, const ChannelScenario& sc) {
    const double j = friction_slope(h, sc);
    return j * (-10.0 / (3.0 * h) + 8.0 / (3.0 * (sc.b + 2.0 * h)));
}

inline double froude(double h, const ChannelScenario& sc) {
    detail::require_depth(h, "froude");
    return sc.Q / (sc.b * h * std::sqrt(kGravity * h));
}

/// dFr/dh = -(3/2) Fr / h
inline double froude_derivative(double h, const ChannelScenario& sc) {
    return -1.5 * froude(h, sc) / h;
}

inline double critical_depth(double Q, double b) {
    if (!(std::isfinite(Q) && Q > 0.0 && std::isfinite(b) && b > 0.0)) {
        throw DomainError("critical_depth: discharge and width must be positive");
    }
    const double q = Q / b;
    return std::cbrt(q * q / kGravity);
}

/// Broad-crested weir stage, h = zd + (3 sqrt(3) Q / (2 sqrt(2g) b))^(2/3).
inline double weir_depth(const ChannelScenario& sc) {
    const double head = 3.0 * std::sqrt(3.0) * sc.Q / (2.0 * std::sqrt(2.0 * kGravity) * sc.b);
    return sc.zd + std::pow(head, 2.0 / 3.0);
}

/// Specific force per unit width, M = h^2/2 + Q^2/(g b^2 h).
inline double momentum_function(double h, const ChannelScenario& sc) {
    detail::require_depth(h, "momentum_function");
    const double q = sc.Q / sc.b;
    return 0.5 * h * h + q * q / (kGravity * h);
}

/// Depth on the other side of a hydraulic jump with the same specific force.
inline double conjugate_depth(double y2, const ChannelScenario& sc) {
    detail::require_depth(y2, "conjugate_depth");
    const double fr = froude(y2, sc);
    return 0.5 * y2 * (-1.0 + std::sqrt(1.0 + 8.0 * fr * fr));
}

namespace detail {

/// Bisection on a monotone function over [lo, hi] (geometric midpoints), then
/// Newton iterations kept inside the final bracket. `f` must change sign.
template <class F, class DF>
double bracketed_root(F&& f, DF&& df, double lo, double hi, double rel_tol) {
    double flo = f(lo);
    for (int it = 0; it < 200 && (hi - lo) > 1e-3 * rel_tol * hi; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 50; ++it) {
        const double fx = f(x);
        const double d = df(x);
        if (fx == 0.0 || d == 0.0 || !std::isfinite(d)) break;
        double next = x - fx / d;
        if (!(next >= lo && next <= hi)) break;
        if (next == x) break;
        // stop once the update no longer shrinks the residual
        if (std::abs(f(next)) >= std::abs(fx)) {
            if (std::abs(f(next)) == std::abs(fx)) x = next;
            break;
        }
        x = next;
    }
    return x;
}

}  // namespace detail

/// Depth of uniform flow, the root of J(h) = s.
inline double normal_depth(const ChannelScenario& sc) {
    sc.validate();
    auto residual = [&](double h) { return friction_slope(h, sc) - sc.s; };
    auto slope = [&](double h) { return friction_slope_derivative(h, sc); };
    if (residual(kMinSearchDepth) < 0.0 || residual(kMaxSearchDepth) > 0.0) {
        throw SolverError("normal_depth: no root of J(h) = s in [1e-6, 1e4] m");
    }
    const double h = detail::bracketed_root(residual, slope, kMinSearchDepth, kMaxSearchDepth, 1e-10);
    if (std::abs(residual(h)) > 1e-10 * sc.s) {
        throw SolverError("normal_depth: root search did not reach tolerance");
    }
    return h;
}

/// Inverts the specific energy on the requested branch.
inline double depth_from_energy(double energy, const ChannelScenario& sc, FlowBranch branch) {
    if (!std::isfinite(energy) || energy <= 0.0) {
        throw NoRealRootError("depth_from_energy: energy must be positive, got " +
                              std::to_string(energy));
    }
    if (sc.Q == 0.0) {
        if (branch == FlowBranch::supercritical) {
            throw DomainError("depth_from_energy: no supercritical branch at zero discharge");
        }
        return energy;
    }
    const double hc = critical_depth(sc.Q, sc.b);
    const double emin = 1.5 * hc;
    if (energy < emin) {
        if (energy >= emin * (1.0 - 1e-14)) return hc;
        throw NoRealRootError("depth_from_energy: energy " + std::to_string(energy) +
                              " below section minimum " + std::to_string(emin));
    }
    if (energy == emin) return hc;

    auto residual = [&](double h) { return specific_energy(h, sc) - energy; };
    auto slope = [&](double h) { return specific_energy_derivative(h, sc); };
    double lo;
    double hi;
    if (branch == FlowBranch::subcritical) {
        lo = hc;
        hi = energy;  // E(h) > h
    } else {
        const double q = sc.Q / sc.b;
        lo = q / std::sqrt(2.0 * kGravity * energy);  // E(h) > velocity head
        hi = hc;
    }
    lo = std::max(lo, kMinSearchDepth);
    hi = std::min(hi, kMaxSearchDepth);
    if (!(lo < hi)) {
        throw SolverError("depth_from_energy: depth bracket outside [1e-6, 1e4] m");
    }
    const double h = detail::bracketed_root(residual, slope, lo, hi, 1e-10);
    if (std::abs(residual(h)) > 1e-10 * energy) {
        throw SolverError("depth_from_energy: root search did not reach tolerance");
    }
    return h;
}

}  // namespace hydronet
