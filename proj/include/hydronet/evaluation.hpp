#pragma once

/**
 * @file evaluation.hpp
 * @brief Per-profile error metrics (NMAE, NNSE) and distribution summaries.
 */

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydronet/profile_solver.hpp"

namespace hydronet {

class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// sum |h - h_hat| / (N zd)
inline double nmae(std::span<const double> pred, std::span<const double> truth, double zd) {
    if (pred.size() != truth.size()) throw std::invalid_argument("nmae: length mismatch");
    if (truth.empty()) throw std::invalid_argument("nmae: empty profile");
    if (!(zd > 0.0)) throw std::invalid_argument("nmae: weir height must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(truth[i] - pred[i]);
    return sum / (static_cast<double>(truth.size()) * zd);
}

/// Nash-Sutcliffe efficiency against the mean of the true profile.
inline double nse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("nse: length mismatch");
    if (truth.empty()) throw std::invalid_argument("nse: empty profile");
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        num += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        den += (truth[i] - mean) * (truth[i] - mean);
    }
    if (!(den > 0.0)) throw UndefinedMetricError("nse: true profile is constant");
    return 1.0 - num / den;
}

/// NNSE = 1 / (2 - NSE), in (0, 1].
inline double nnse(std::span<const double> pred, std::span<const double> truth) {
    return 1.0 / (2.0 - nse(pred, truth));
}

struct DistributionSummary {
    std::size_t count{};
    double mean{};
    double p10{}, p25{}, p50{}, p75{}, p90{};
    double skewness{};
    /// Empirical CDF: sorted values with the fraction of samples <= value.
    std::vector<std::pair<double, double>> cdf;
};

/// Percentile by linear interpolation between closest ranks (q in [0, 1]).
inline double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty data");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline DistributionSummary summarize(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("summarize: empty input");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    DistributionSummary s;
    s.count = v.size();
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    s.p10 = percentile_sorted(v, 0.10);
    s.p25 = percentile_sorted(v, 0.25);
    s.p50 = percentile_sorted(v, 0.50);
    s.p75 = percentile_sorted(v, 0.75);
    s.p90 = percentile_sorted(v, 0.90);
    double m2 = 0.0;
    double m3 = 0.0;
    for (double x : v) {
        const double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    s.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    // right-continuous: one point per distinct value, at its last occurrence
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
        s.cdf.emplace_back(v[i], static_cast<double>(i + 1) / n);
    }
    return s;
}

inline nlohmann::json to_json(const DistributionSummary& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"p10", s.p10}, {"p25", s.p25}, {"p50", s.p50},
            {"p75", s.p75},     {"p90", s.p90},   {"skewness", s.skewness}};
}

struct ProfileMetrics {
    std::size_t profile_id{};
    std::string split;
    Regime regime{Regime::subcritical};
    double nmae{};
    double nnse{};
};

struct SetEvaluation {
    std::vector<ProfileMetrics> rows;
    std::size_t excluded{0};
    std::vector<std::string> exclusion_log;
    DistributionSummary nmae;
    DistributionSummary nnse;
};

/// Anything that can reconstruct profiles for a list of scenarios on a grid.
template <class P>
concept ProfilePredictor = requires(const P& p, const std::vector<ChannelScenario>& scs, const GridSpec& g) {
    { p.predict_many(scs, g) } -> std::convertible_to<std::vector<std::vector<double>>>;
};

/// Reconstructs every profile, scores it, and summarizes both metrics.
/// Profiles whose prediction is unusable or whose NNSE is undefined are
/// excluded from the summaries and counted.
template <ProfilePredictor Predictor>
SetEvaluation evaluate_set(const Predictor& model, std::span<const WaterProfile> profiles, const std::string& split,
                           std::span<const std::size_t> ids = {}) {
    if (!ids.empty() && ids.size() != profiles.size()) throw std::invalid_argument("evaluate_set: id count mismatch");
    SetEvaluation out;
    if (profiles.empty()) return out;
    const GridSpec grid = profiles.front().grid;
    std::vector<ChannelScenario> scenarios;
    scenarios.reserve(profiles.size());
    for (const auto& p : profiles) {
        if (!(p.grid == grid)) throw std::invalid_argument("evaluate_set: profiles do not share one grid");
        scenarios.push_back(p.scenario);
    }
    const auto predictions = model.predict_many(scenarios, grid);
    std::vector<double> nmaes;
    std::vector<double> nnses;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const std::size_t id = ids.empty() ? i : ids[i];
        const auto& truth = profiles[i].depths;
        const auto& pred = predictions[i];
        try {
            if (pred.size() != truth.size()) throw std::runtime_error("prediction length mismatch");
            if (!std::all_of(pred.begin(), pred.end(), [](double v) { return std::isfinite(v); })) {
                throw std::runtime_error("non-finite prediction");
            }
            ProfileMetrics row{id, split, profiles[i].regime, nmae(pred, truth, profiles[i].scenario.zd),
                               nnse(pred, truth)};
            nmaes.push_back(row.nmae);
            nnses.push_back(row.nnse);
            out.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            ++out.excluded;
            out.exclusion_log.push_back("profile " + std::to_string(id) + ": " + e.what());
        }
    }
    if (!nmaes.empty()) {
        out.nmae = summarize(nmaes);
        out.nnse = summarize(nnses);
    }
    return out;
}

/// Mean absolute depth error at every station over a set of profiles on one
/// grid. Profiles with non-finite predictions are skipped.
template <ProfilePredictor Predictor>
std::vector<double> station_error_curve(const Predictor& model, std::span<const WaterProfile> profiles) {
    if (profiles.empty()) return {};
    const GridSpec grid = profiles.front().grid;
    std::vector<ChannelScenario> scenarios;
    for (const auto& p : profiles) scenarios.push_back(p.scenario);
    const auto predictions = model.predict_many(scenarios, grid);
    std::vector<double> sum(grid.n_points, 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& pred = predictions[i];
        if (pred.size() != grid.n_points ||
            !std::all_of(pred.begin(), pred.end(), [](double v) { return std::isfinite(v); })) {
            continue;
        }
        for (std::size_t k = 0; k < grid.n_points; ++k) sum[k] += std::abs(pred[k] - profiles[i].depths[k]);
        ++used;
    }
    if (used > 0) {
        for (double& v : sum) v /= static_cast<double>(used);
    }
    return sum;
}

inline std::string station_error_csv(const std::vector<double>& curve, const GridSpec& grid) {
    std::ostringstream os;
    os.precision(17);
    os << "station,x,mean_abs_error\n";
    for (std::size_t k = 0; k < curve.size(); ++k) os << k << ',' << grid.station(k) << ',' << curve[k] << '\n';
    return os.str();
}

inline std::string metrics_csv(const std::vector<ProfileMetrics>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "profile_id,split,regime,nmae,nnse\n";
    for (const auto& r : rows) {
        os << r.profile_id << ',' << r.split << ',' << to_string(r.regime) << ',' << r.nmae << ',' << r.nnse << '\n';
    }
    return os.str();
}

inline std::vector<ProfileMetrics> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "profile_id,split,regime,nmae,nnse") throw std::runtime_error("metrics csv: unexpected header");
    std::vector<ProfileMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, split, regime, a, b;
        std::getline(ls, id, ',');
        std::getline(ls, split, ',');
        std::getline(ls, regime, ',');
        std::getline(ls, a, ',');
        std::getline(ls, b, ',');
        rows.push_back({std::stoul(id), split, regime == "mixed" ? Regime::mixed : Regime::subcritical,
                        std::strtod(a.c_str(), nullptr), std::strtod(b.c_str(), nullptr)});
    }
    return rows;
}

inline nlohmann::json summary_json(const SetEvaluation& ev) {
    return {{"profiles", ev.rows.size()},
            {"excluded", ev.excluded},
            {"exclusions", ev.exclusion_log},
            {"nmae", to_json(ev.nmae)},
            {"nnse", to_json(ev.nnse)}};
}

}  // namespace hydronet
