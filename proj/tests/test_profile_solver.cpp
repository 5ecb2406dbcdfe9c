#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hydronet/dataset.hpp"
#include "hydronet/profile_solver.hpp"

using namespace hydronet;

namespace {

// Fine-grid scan values from tests/oracle/hydraulics_reference.py.
constexpr double kSteepNormal = 1.1234569146402430925;
constexpr double kSteepCritical = 1.3659149772715913792;

/// Independent marcher: many small explicit energy steps, each inverted with
/// plain bisection on the subcritical branch.
double fine_march(double h, const ChannelScenario& sc, double dx, int substeps) {
    const double g = 9.81;
    auto energy = [&](double y) { return y + sc.Q * sc.Q / (2.0 * g * sc.b * sc.b * y * y); };
    auto friction = [&](double y) {
        const double a = sc.b * y;
        const double r = a / (sc.b + 2.0 * y);
        return sc.n * sc.n * sc.Q * sc.Q / (a * a * std::pow(r, 4.0 / 3.0));
    };
    const double hc = std::cbrt(sc.Q * sc.Q / (g * sc.b * sc.b));
    const double d = dx / substeps;
    for (int k = 0; k < substeps; ++k) {
        const double target = energy(h) + d * (friction(h) - sc.s);
        double lo = hc;
        double hi = target;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (energy(mid) > target ? hi : lo) = mid;
        }
        h = 0.5 * (lo + hi);
    }
    return h;
}

ChannelScenario mild() { return {1e-3, 20.0, 0.03, 3.0, 80.0}; }

}  // namespace

TEST(GridSpec, PointCountAndStations) {
    const auto g = GridSpec::make(10.0, 5000.0);
    EXPECT_EQ(g.n_points, 501u);
    EXPECT_EQ(GridSpec::make(10.0, 1000.0).n_points, 101u);
    EXPECT_DOUBLE_EQ(g.station(0), 0.0);
    EXPECT_DOUBLE_EQ(g.station(500), 5000.0);
    const GridSpec d;
    EXPECT_EQ(d.n_points, 501u);
    EXPECT_DOUBLE_EQ(d.dx, 10.0);
}

TEST(ClassifyRegime, MildAndSteep) {
    EXPECT_EQ(classify_regime({1e-6, 10.0, 0.03, 2.0, 50.0}), Regime::subcritical);
    EXPECT_EQ(classify_regime({0.2, 10.0, 0.01, 2.0, 50.0}), Regime::mixed);
}

TEST(ClassifyRegime, AgreesWithScanOracle) {
    const ChannelScenario sc{0.005, 10.0, 0.015, 2.0, 50.0};
    EXPECT_NEAR(normal_depth(sc), kSteepNormal, 1e-9);
    EXPECT_NEAR(critical_depth(sc.Q, sc.b), kSteepCritical, 1e-12);
    EXPECT_EQ(classify_regime(sc), kSteepNormal < kSteepCritical ? Regime::mixed : Regime::subcritical);
}

TEST(StepUpstream, UniformFlowIsFixedPoint) {
    for (const ChannelScenario& sc : {mild(), ChannelScenario{5e-3, 8.0, 0.04, 1.0, 30.0}}) {
        const double hn = normal_depth(sc);
        EXPECT_NEAR(step_upstream(hn, sc, 10.0, FlowBranch::subcritical), hn, 1e-9);
    }
}

TEST(StepUpstream, BackwaterDecaysUpstream) {
    const auto sc = mild();
    const double h = weir_depth(sc);
    ASSERT_GT(h, normal_depth(sc));
    const double next = step_upstream(h, sc, 10.0, FlowBranch::subcritical);
    EXPECT_LT(next, h);
    EXPECT_GT(next, normal_depth(sc));
}

TEST(StepUpstream, FirstOrderAgainstFineMarch) {
    const auto sc = ChannelScenario{2e-3, 12.0, 0.035, 2.0, 120.0};
    const double h0 = weir_depth(sc);
    std::vector<double> err;
    for (double dx : {40.0, 20.0, 10.0}) {
        const double coarse = step_upstream(h0, sc, dx, FlowBranch::subcritical);
        const double fine = fine_march(h0, sc, dx, 1000);
        err.push_back(std::abs(coarse - fine));
        EXPECT_LT(err.back(), 0.05 * std::abs(coarse - h0) + 1e-12);
    }
    // local error of a first-order step shrinks with dx^2
    EXPECT_NEAR(err[0] / err[1], 4.0, 0.5);
    EXPECT_NEAR(err[1] / err[2], 4.0, 0.5);
}

TEST(StepUpstream, CrossingCriticalIsStepError) {
    // steep: just above critical, friction is below the bed slope and the
    // marched energy drops under the section minimum
    const ChannelScenario sc{0.02, 10.0, 0.01, 1.0, 50.0};
    const double hc = critical_depth(sc.Q, sc.b);
    ASSERT_LT(normal_depth(sc), hc);
    EXPECT_THROW(step_upstream(1.01 * hc, sc, 10.0, FlowBranch::subcritical), StepError);
}

TEST(SolveProfile, MildChannelIsMonotoneBackwater) {
    const auto sc = mild();
    const auto p = solve_profile(sc, GridSpec::make(10.0, 5000.0));
    EXPECT_EQ(p.depths.size(), 501u);
    EXPECT_EQ(p.regime, Regime::subcritical);
    EXPECT_FALSE(p.jump_index.has_value());
    EXPECT_EQ(p.depths[0], weir_depth(sc));
    for (std::size_t i = 1; i < p.depths.size(); ++i) EXPECT_LE(p.depths[i], p.depths[i - 1]);
    const double hn = normal_depth(sc);
    EXPECT_GT(p.depths.back(), hn);
    EXPECT_LT(p.depths.back() - hn, 0.05 * (p.depths.front() - hn));
}

TEST(SolveProfile, SteepChannelHasJumpWithMomentumBalance) {
    const ChannelScenario sc{0.01, 20.0, 0.015, 2.0, 100.0};
    ASSERT_EQ(classify_regime(sc), Regime::mixed);
    const auto p = solve_profile(sc, GridSpec::make(10.0, 5000.0));
    ASSERT_TRUE(p.jump_index.has_value());
    EXPECT_EQ(p.regime, Regime::mixed);
    const auto j = *p.jump_index;
    const double hn = normal_depth(sc);
    for (std::size_t k = j; k < p.depths.size(); ++k) EXPECT_EQ(p.depths[k], hn);
    // the conjugate crosses h_n between j-1 and j
    EXPECT_LT(conjugate_depth(p.depths[j - 1], sc), hn);
    const auto bal = jump_balance(p);
    ASSERT_TRUE(bal.has_value());
    EXPECT_LE(bal->gap, bal->tolerance);
    EXPECT_LE(max_energy_balance_residual(p), 1e-12);
}

TEST(SolveProfile, JumpSweptToDamIsRejected) {
    // very steep and smooth: supercritical inflow overpowers a low weir
    const ChannelScenario sc{0.05, 10.0, 0.01, 0.2, 50.0};
    EXPECT_THROW(solve_profile(sc, GridSpec::make(10.0, 1000.0)), SolverError);
}

TEST(SolveProfile, WeirBoundaryExact) {
    for (const ChannelScenario& sc : {mild(), ChannelScenario{0.01, 20.0, 0.015, 2.0, 100.0}}) {
        EXPECT_EQ(solve_profile(sc, GridSpec::make(10.0, 1000.0)).depths[0], weir_depth(sc));
    }
}

TEST(SolveProfile, Deterministic) {
    const ChannelScenario sc{4e-3, 33.0, 0.021, 4.0, 210.0};
    EXPECT_EQ(solve_profile(sc, GridSpec::make(10.0, 2000.0)), solve_profile(sc, GridSpec::make(10.0, 2000.0)));
}

TEST(SolveProfile, RefinementConvergesAtFirstOrder) {
    const std::vector<ChannelScenario> cases{
        {1e-3, 20.0, 0.03, 3.0, 80.0}, {5e-4, 8.0, 0.02, 1.0, 40.0}, {2e-3, 40.0, 0.045, 5.0, 250.0}};
    for (const auto& sc : cases) {
        const auto ref = solve_profile(sc, GridSpec::make(0.1, 1000.0));
        const auto mid = solve_profile(sc, GridSpec::make(1.0, 1000.0));
        const auto coarse = solve_profile(sc, GridSpec::make(10.0, 1000.0));
        ASSERT_FALSE(ref.jump_index || mid.jump_index || coarse.jump_index);
        double e_coarse = 0.0;
        double e_mid = 0.0;
        for (std::size_t i = 0; i < coarse.depths.size(); ++i) {
            e_coarse = std::max(e_coarse, std::abs(coarse.depths[i] - ref.depths[i * 100]));
            e_mid = std::max(e_mid, std::abs(mid.depths[i * 10] - ref.depths[i * 100]));
        }
        ASSERT_GT(e_mid, 0.0);
        const double ratio = e_coarse / e_mid;
        EXPECT_GT(ratio, 6.0) << "scenario Q=" << sc.Q;
        EXPECT_LT(ratio, 16.0) << "scenario Q=" << sc.Q;
    }
}

TEST(SolveProfile, DeskCorpusInvariants) {
    const auto ds = generate(ParameterRanges::desk(), GridSpec::make(10.0, 1000.0), 42);
    std::size_t jumps = 0;
    for (const auto& p : ds.profiles) {
        EXPECT_EQ(p.depths[0], weir_depth(p.scenario));
        EXPECT_LE(max_energy_balance_residual(p), 1e-12);
        for (double h : p.depths) EXPECT_GT(h, 0.0);
        if (const auto bal = jump_balance(p)) {
            ++jumps;
            EXPECT_LE(bal->gap, bal->tolerance);
        }
    }
    EXPECT_GT(jumps, 0u);
}
