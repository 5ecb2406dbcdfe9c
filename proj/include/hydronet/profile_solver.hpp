#pragma once

/**
 * @file profile_solver.hpp
 * @brief First-order finite-difference water-profile solver with hydraulic
 *        jump placement.
 *
 * Stations are numbered from the dam (index 0) and x increases upstream. On
 * that axis the energy equation reads dE/dx = J - s, which the solver marches
 * explicitly: E_{i+1} = E_i + dx (J(h_i) - s).
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hydronet/hydraulics.hpp"

namespace hydronet {

struct GridSpec {
    double dx{10.0};
    double length{5000.0};
    std::size_t n_points{501};

    static GridSpec make(double dx, double length) {
        if (!(dx > 0.0 && std::isfinite(dx)) || !(length > 0.0 && std::isfinite(length))) {
            throw DomainError("grid spacing and length must be positive");
        }
        return GridSpec{dx, length, static_cast<std::size_t>(std::llround(length / dx)) + 1};
    }

    [[nodiscard]] double station(std::size_t i) const { return static_cast<double>(i) * dx; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class Regime { subcritical, mixed };

inline const char* to_string(Regime r) { return r == Regime::mixed ? "mixed" : "subcritical"; }

struct WaterProfile {
    ChannelScenario scenario;
    GridSpec grid;
    std::vector<double> depths;             ///< index 0 at the dam
    std::optional<std::size_t> jump_index;  ///< first station on the supercritical side
    Regime regime{Regime::subcritical};

    friend bool operator==(const WaterProfile&, const WaterProfile&) = default;
};

/// Raised by step_upstream when the marched energy falls below the section minimum.
class StepError : public SolverError {
public:
    using SolverError::SolverError;
};

/// Steep channel (normal depth below critical) admits a supercritical reach and a jump.
inline Regime classify_regime(const ChannelScenario& sc) {
    return normal_depth(sc) < critical_depth(sc.Q, sc.b) ? Regime::mixed : Regime::subcritical;
}

inline double step_upstream(double h, const ChannelScenario& sc, double dx, FlowBranch branch) {
    const double next_energy = specific_energy(h, sc) + dx * (friction_slope(h, sc) - sc.s);
    try {
        return depth_from_energy(next_energy, sc, branch);
    } catch (const NoRealRootError& e) {
        throw StepError(std::string("step_upstream: ") + e.what());
    }
}

/// Marches the subcritical branch upstream from the weir. On steep channels
/// the jump sits at the first station whose conjugate depth reaches the
/// normal depth; everything upstream of it is uniform flow.
inline WaterProfile solve_profile(const ChannelScenario& sc, const GridSpec& grid) {
    sc.validate();
    if (grid.n_points < 1) throw DomainError("solve_profile: empty grid");

    WaterProfile out{sc, grid, std::vector<double>(grid.n_points), std::nullopt, Regime::subcritical};
    const bool steep = classify_regime(sc) == Regime::mixed;
    const double hn = normal_depth(sc);
    out.depths[0] = weir_depth(sc);

    if (steep && conjugate_depth(out.depths[0], sc) >= hn) {
        throw SolverError("solve_profile: supercritical inflow reaches the weir (jump swept to the dam)");
    }

    for (std::size_t i = 1; i < grid.n_points; ++i) {
        std::optional<double> sub;
        try {
            sub = step_upstream(out.depths[i - 1], sc, grid.dx, FlowBranch::subcritical);
        } catch (const StepError& e) {
            if (!steep) {
                throw SolverError(std::string("solve_profile: subcritical march failed at station ") +
                                  std::to_string(i) + ": " + e.what());
            }
        }
        if (steep && (!sub || conjugate_depth(*sub, sc) >= hn)) {
            out.jump_index = i;
            out.regime = Regime::mixed;
            for (std::size_t k = i; k < grid.n_points; ++k) out.depths[k] = hn;
            break;
        }
        out.depths[i] = *sub;
    }
    return out;
}

/// Momentum mismatch across a profile's jump and the one-station bound it
/// must respect.
struct JumpBalance {
    double gap{};        ///< |M(h_n) - M(h_sub[j-1])|
    double tolerance{};  ///< |M(h_sub[j-1]) - M(h_sub[j])|, h_sub[j] the would-be subcritical depth
};

inline std::optional<JumpBalance> jump_balance(const WaterProfile& p) {
    if (!p.jump_index) return std::nullopt;
    const auto j = *p.jump_index;
    const auto& sc = p.scenario;
    const double down = p.depths[j - 1];
    double next;
    try {
        next = step_upstream(down, sc, p.grid.dx, FlowBranch::subcritical);
    } catch (const StepError&) {
        next = critical_depth(sc.Q, sc.b);
    }
    const double m_down = momentum_function(down, sc);
    return JumpBalance{std::abs(momentum_function(p.depths[j], sc) - m_down),
                       std::abs(m_down - momentum_function(next, sc))};
}

/// Largest |(E_{i+1} - E_i)/dx - (J(h_i) - s)| over consecutive subcritical stations.
inline double max_energy_balance_residual(const WaterProfile& p) {
    const std::size_t end = p.jump_index.value_or(p.depths.size());
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < end; ++i) {
        const double lhs = (specific_energy(p.depths[i + 1], p.scenario) -
                            specific_energy(p.depths[i], p.scenario)) / p.grid.dx;
        const double rhs = friction_slope(p.depths[i], p.scenario) - p.scenario.s;
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace hydronet
