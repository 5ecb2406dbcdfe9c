#pragma once

/**
 * @file dataset.hpp
 * @brief Profile corpus generation, train/val/test split, standard scaling,
 *        architecture-specific sample views, and CSV + JSON persistence.
 */

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydronet/hydraulics.hpp"
#include "hydronet/profile_solver.hpp"

namespace hydronet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DatasetIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParameterRange {
    double min{};
    double max{};
    std::size_t count{1};

    /// Uniform grid; a count of 1 pins the parameter at `min`.
    [[nodiscard]] std::vector<double> values() const {
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) {
            v[i] = count == 1 ? min
                              : min + (max - min) * static_cast<double>(i) /
                                          static_cast<double>(count - 1);
        }
        return v;
    }

    friend bool operator==(const ParameterRange&, const ParameterRange&) = default;
};

struct ParameterRanges {
    ParameterRange s{5e-4, 2e-2, 7};
    ParameterRange b{5.0, 50.0, 7};
    ParameterRange n{0.01, 0.05, 7};
    ParameterRange zd{1.0, 5.0, 6};
    ParameterRange Q{10.0, 300.0, 5};

    [[nodiscard]] std::array<const ParameterRange*, 5> all() const { return {&s, &b, &n, &zd, &Q}; }

    [[nodiscard]] std::size_t combinations() const {
        std::size_t total = 1;
        for (const auto* r : all()) total *= r->count;
        return total;
    }

    void validate() const {
        static constexpr std::array names{"s", "b", "n", "zd", "Q"};
        auto ranges = all();
        for (std::size_t i = 0; i < ranges.size(); ++i) {
            const auto& r = *ranges[i];
            const bool ok = r.count >= 1 && std::isfinite(r.min) && std::isfinite(r.max) && r.min > 0.0 &&
                            (r.count == 1 ? r.min <= r.max : r.min < r.max);
            if (!ok) throw ConfigError(std::string("invalid parameter range for ") + names[i]);
        }
    }

    /// Full-scale corpus: 10290 scenarios on 501 stations.
    static ParameterRanges full() { return {}; }

    /// 500-scenario corpus used with the 101-station desk grid.
    static ParameterRanges desk() {
        ParameterRanges r;
        r.s.count = 5;
        r.b.count = 2;
        r.n.count = 5;
        r.zd.count = 2;
        r.Q.count = 5;
        return r;
    }

    friend bool operator==(const ParameterRanges&, const ParameterRanges&) = default;
};

enum class Split : std::uint8_t { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DatasetIoError("unknown split tag '" + s + "'");
}

/// 70/15/15 with the rounding remainder going to training.
struct SplitCounts {
    std::size_t train, val, test;
    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

inline SplitCounts split_counts(std::size_t total) {
    const std::size_t val = total * 15 / 100;
    const std::size_t test = total * 15 / 100;
    return {total - val - test, val, test};
}

/// Deterministic Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

/// Raw input quantities a view can draw from.
enum class Feature : std::uint8_t { x, h, s, b, n, zd, Q };
inline constexpr std::size_t kFeatureCount = 7;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames{"x", "h", "s", "b", "n", "zd", "Q"};

/// Per-feature standardization statistics (population std).
struct FeatureScaler {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> stddev{};

    [[nodiscard]] double scale(Feature f, double v) const {
        const auto i = static_cast<std::size_t>(f);
        if (!(stddev[i] > 0.0)) {
            throw ConfigError(std::string("cannot scale constant feature '") + kFeatureNames[i] + "'");
        }
        return (v - mean[i]) / stddev[i];
    }

    [[nodiscard]] double unscale(Feature f, double v) const {
        const auto i = static_cast<std::size_t>(f);
        return v * stddev[i] + mean[i];
    }

    friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

inline double scenario_value(const ChannelScenario& sc, Feature f) {
    switch (f) {
        case Feature::s: return sc.s;
        case Feature::b: return sc.b;
        case Feature::n: return sc.n;
        case Feature::zd: return sc.zd;
        case Feature::Q: return sc.Q;
        default: throw std::logic_error("not a scenario feature");
    }
}

/// Fits on the given profiles: x and h over every station, the scenario
/// parameters over every profile (equivalent to per-station weighting since
/// all profiles share one grid).
inline FeatureScaler fit_scaler(const std::vector<const WaterProfile*>& profiles) {
    std::array<double, kFeatureCount> sum{};
    std::array<double, kFeatureCount> cnt{};
    auto add = [&](Feature f, double v) {
        const auto i = static_cast<std::size_t>(f);
        sum[i] += v;
        cnt[i] += 1.0;
    };
    // two-pass for accuracy: means first
    for (const auto* p : profiles) {
        for (std::size_t k = 0; k < p->depths.size(); ++k) {
            add(Feature::x, p->grid.station(k));
            add(Feature::h, p->depths[k]);
        }
        for (auto f : {Feature::s, Feature::b, Feature::n, Feature::zd, Feature::Q}) add(f, scenario_value(p->scenario, f));
    }
    FeatureScaler sc;
    for (std::size_t i = 0; i < kFeatureCount; ++i) sc.mean[i] = cnt[i] > 0 ? sum[i] / cnt[i] : 0.0;
    std::array<double, kFeatureCount> var{};
    auto acc = [&](Feature f, double v) {
        const auto i = static_cast<std::size_t>(f);
        const double d = v - sc.mean[i];
        var[i] += d * d;
    };
    for (const auto* p : profiles) {
        for (std::size_t k = 0; k < p->depths.size(); ++k) {
            acc(Feature::x, p->grid.station(k));
            acc(Feature::h, p->depths[k]);
        }
        for (auto f : {Feature::s, Feature::b, Feature::n, Feature::zd, Feature::Q}) acc(f, scenario_value(p->scenario, f));
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) sc.stddev[i] = cnt[i] > 0 ? std::sqrt(var[i] / cnt[i]) : 0.0;
    return sc;
}

struct RejectedScenario {
    ChannelScenario scenario;
    std::string reason;
};

struct DatasetManifest {
    std::uint64_t seed{};
    std::uint64_t split_seed{};
    ParameterRanges ranges;
    GridSpec grid;
    std::vector<RejectedScenario> rejected;
};

struct ProfileDataset {
    std::vector<WaterProfile> profiles;
    std::vector<Split> split;
    FeatureScaler scaler;
    DatasetManifest manifest;

    [[nodiscard]] std::vector<std::size_t> indices(Split which) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i) {
            if (split[i] == which) out.push_back(i);
        }
        return out;
    }

    [[nodiscard]] std::vector<const WaterProfile*> members(Split which) const {
        std::vector<const WaterProfile*> out;
        for (auto i : indices(which)) out.push_back(&profiles[i]);
        return out;
    }

    void refit_scaler() { scaler = fit_scaler(members(Split::train)); }
};

/// Assigns the 70/15/15 split by a seeded shuffle of profile positions.
inline std::vector<Split> assign_splits(std::size_t total, std::uint64_t seed) {
    const auto counts = split_counts(total);
    const auto order = shuffled_order(total, seed);
    std::vector<Split> split(total, Split::train);
    for (std::size_t k = 0; k < counts.val; ++k) split[order[k]] = Split::val;
    for (std::size_t k = counts.val; k < counts.val + counts.test; ++k) split[order[k]] = Split::test;
    return split;
}

/// Solves every grid combination (lexicographic in s, b, n, zd, Q) and splits
/// the retained profiles.
inline ProfileDataset generate(const ParameterRanges& ranges, const GridSpec& grid, std::uint64_t seed,
                               double max_rejection_rate = 0.10) {
    ranges.validate();
    ProfileDataset ds;
    ds.manifest = DatasetManifest{seed, seed, ranges, grid, {}};
    for (double s : ranges.s.values())
        for (double b : ranges.b.values())
            for (double n : ranges.n.values())
                for (double zd : ranges.zd.values())
                    for (double Q : ranges.Q.values()) {
                        const ChannelScenario sc{s, b, n, zd, Q};
                        try {
                            ds.profiles.push_back(solve_profile(sc, grid));
                        } catch (const std::exception& e) {
                            ds.manifest.rejected.push_back({sc, e.what()});
                        }
                    }
    const double total = static_cast<double>(ranges.combinations());
    const double rate = static_cast<double>(ds.manifest.rejected.size()) / total;
    if (rate > max_rejection_rate) {
        std::ostringstream msg;
        msg << "rejected " << ds.manifest.rejected.size() << " of " << total
            << " scenarios; parameter ranges are poorly chosen";
        throw ConfigError(msg.str());
    }
    ds.split = assign_splits(ds.profiles.size(), seed);
    ds.refit_scaler();
    return ds;
}

/// Physical context each sample carries for the physics loss terms.
struct SampleAux {
    ChannelScenario scenario;
    double dx{};
};

struct SampleBatch {
    Eigen::MatrixXd inputs;   ///< rows = samples, scaled features
    Eigen::MatrixXd targets;  ///< rows = samples, depths in metres
    std::vector<SampleAux> aux;
    std::vector<std::size_t> profile_id;

    [[nodiscard]] Eigen::Index size() const { return inputs.rows(); }

    /// Gathers the given rows, in order.
    [[nodiscard]] SampleBatch rows(const std::vector<std::size_t>& idx) const {
        SampleBatch out;
        out.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
        out.targets.resize(static_cast<Eigen::Index>(idx.size()), targets.cols());
        out.aux.reserve(idx.size());
        out.profile_id.reserve(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(idx[k]);
            out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(r);
            out.targets.row(static_cast<Eigen::Index>(k)) = targets.row(r);
            out.aux.push_back(aux[idx[k]]);
            out.profile_id.push_back(profile_id[idx[k]]);
        }
        return out;
    }
};

namespace detail {

inline void write_scenario_features(Eigen::Ref<Eigen::RowVectorXd> row, Eigen::Index offset,
                                    const ChannelScenario& sc, const FeatureScaler& scaler) {
    row(offset + 0) = scaler.scale(Feature::s, sc.s);
    row(offset + 1) = scaler.scale(Feature::b, sc.b);
    row(offset + 2) = scaler.scale(Feature::n, sc.n);
    row(offset + 3) = scaler.scale(Feature::zd, sc.zd);
    row(offset + 4) = scaler.scale(Feature::Q, sc.Q);
}

}  // namespace detail

/// Single-point rows: [x, s, b, n, zd, Q] -> h, one per station.
inline Eigen::RowVectorXd sp_features(double x, const ChannelScenario& sc, const FeatureScaler& scaler) {
    Eigen::RowVectorXd row(6);
    row(0) = scaler.scale(Feature::x, x);
    detail::write_scenario_features(row, 1, sc, scaler);
    return row;
}

/// Integrator rows: [h_i, s, b, n, zd, Q] -> h_{i+1}.
inline Eigen::RowVectorXd int_features(double h, const ChannelScenario& sc, const FeatureScaler& scaler) {
    Eigen::RowVectorXd row(6);
    row(0) = scaler.scale(Feature::h, h);
    detail::write_scenario_features(row, 1, sc, scaler);
    return row;
}

/// Vector-to-sequence rows: [s, b, n, zd, Q] -> whole profile.
inline Eigen::RowVectorXd vts_features(const ChannelScenario& sc, const FeatureScaler& scaler) {
    Eigen::RowVectorXd row(5);
    detail::write_scenario_features(row, 0, sc, scaler);
    return row;
}

inline SampleBatch view_sp(const ProfileDataset& ds, const std::vector<std::size_t>& ids) {
    std::size_t rows = 0;
    for (auto id : ids) rows += ds.profiles[id].depths.size();
    SampleBatch out;
    out.inputs.resize(static_cast<Eigen::Index>(rows), 6);
    out.targets.resize(static_cast<Eigen::Index>(rows), 1);
    Eigen::Index r = 0;
    for (auto id : ids) {
        const auto& p = ds.profiles[id];
        for (std::size_t k = 0; k < p.depths.size(); ++k, ++r) {
            out.inputs.row(r) = sp_features(p.grid.station(k), p.scenario, ds.scaler);
            out.targets(r, 0) = p.depths[k];
            out.aux.push_back({p.scenario, p.grid.dx});
            out.profile_id.push_back(id);
        }
    }
    return out;
}

inline SampleBatch view_int(const ProfileDataset& ds, const std::vector<std::size_t>& ids) {
    std::size_t rows = 0;
    for (auto id : ids) rows += ds.profiles[id].depths.size() - 1;
    SampleBatch out;
    out.inputs.resize(static_cast<Eigen::Index>(rows), 6);
    out.targets.resize(static_cast<Eigen::Index>(rows), 1);
    Eigen::Index r = 0;
    for (auto id : ids) {
        const auto& p = ds.profiles[id];
        for (std::size_t k = 0; k + 1 < p.depths.size(); ++k, ++r) {
            out.inputs.row(r) = int_features(p.depths[k], p.scenario, ds.scaler);
            out.targets(r, 0) = p.depths[k + 1];
            out.aux.push_back({p.scenario, p.grid.dx});
            out.profile_id.push_back(id);
        }
    }
    return out;
}

inline SampleBatch view_vts(const ProfileDataset& ds, const std::vector<std::size_t>& ids) {
    SampleBatch out;
    if (ids.empty()) return out;
    const std::size_t width = ds.profiles[ids.front()].depths.size();
    out.inputs.resize(static_cast<Eigen::Index>(ids.size()), 5);
    out.targets.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(width));
    Eigen::Index r = 0;
    for (auto id : ids) {
        const auto& p = ds.profiles[id];
        if (p.depths.size() != width) {
            throw ConfigError("view_vts: profiles with different grid sizes in one dataset");
        }
        out.inputs.row(r) = vts_features(p.scenario, ds.scaler);
        for (std::size_t k = 0; k < width; ++k) out.targets(r, static_cast<Eigen::Index>(k)) = p.depths[k];
        out.aux.push_back({p.scenario, p.grid.dx});
        out.profile_id.push_back(id);
        ++r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/profiles.csv + <dir>/manifest.json

inline constexpr int kDatasetFormatVersion = 1;

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DatasetIoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetIoError("cannot write " + p.string());
    out << content;
    if (!out) throw DatasetIoError("write failed for " + p.string());
}

inline std::string profiles_csv(const std::vector<WaterProfile>& profiles, std::size_t n_points) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "s,b,n,zd,Q";
    for (std::size_t k = 0; k < n_points; ++k) os << ",h" << k;
    os << '\n';
    for (const auto& p : profiles) {
        const auto& sc = p.scenario;
        os << sc.s << ',' << sc.b << ',' << sc.n << ',' << sc.zd << ',' << sc.Q;
        for (double h : p.depths) os << ',' << h;
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const ChannelScenario& sc) {
    return {{"s", sc.s}, {"b", sc.b}, {"n", sc.n}, {"zd", sc.zd}, {"Q", sc.Q}};
}

inline ChannelScenario scenario_from_json(const nlohmann::json& j) {
    return {j.at("s").get<double>(), j.at("b").get<double>(), j.at("n").get<double>(),
            j.at("zd").get<double>(), j.at("Q").get<double>()};
}

inline nlohmann::json to_json(const ParameterRanges& r) {
    nlohmann::json out;
    static constexpr std::array names{"s", "b", "n", "zd", "Q"};
    auto all = r.all();
    for (std::size_t i = 0; i < names.size(); ++i) {
        out[names[i]] = {{"min", all[i]->min}, {"max", all[i]->max}, {"count", all[i]->count}};
    }
    return out;
}

inline ParameterRanges ranges_from_json(const nlohmann::json& j) {
    auto one = [&](const char* k) {
        const auto& e = j.at(k);
        return ParameterRange{e.at("min").get<double>(), e.at("max").get<double>(), e.at("count").get<std::size_t>()};
    };
    return {one("s"), one("b"), one("n"), one("zd"), one("Q")};
}

inline nlohmann::json to_json(const FeatureScaler& sc) {
    nlohmann::json out;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        out[kFeatureNames[i]] = {{"mean", sc.mean[i]}, {"std", sc.stddev[i]}};
    }
    return out;
}

inline FeatureScaler scaler_from_json(const nlohmann::json& j) {
    FeatureScaler sc;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        sc.mean[i] = j.at(kFeatureNames[i]).at("mean").get<double>();
        sc.stddev[i] = j.at(kFeatureNames[i]).at("std").get<double>();
    }
    return sc;
}

inline void save(const ProfileDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string csv = profiles_csv(ds.profiles, ds.manifest.grid.n_points);

    nlohmann::json m;
    m["format_version"] = kDatasetFormatVersion;
    m["seed"] = ds.manifest.seed;
    m["split_seed"] = ds.manifest.split_seed;
    m["ranges"] = to_json(ds.manifest.ranges);
    m["dx"] = ds.manifest.grid.dx;
    m["length"] = ds.manifest.grid.length;
    m["n_points"] = ds.manifest.grid.n_points;
    m["rejected"] = nlohmann::json::array();
    for (const auto& r : ds.manifest.rejected) {
        auto e = to_json(r.scenario);
        e["reason"] = r.reason;
        m["rejected"].push_back(e);
    }
    m["split"] = nlohmann::json::array();
    m["jump_index"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.profiles.size(); ++i) {
        m["split"].push_back(to_string(ds.split[i]));
        const auto& j = ds.profiles[i].jump_index;
        m["jump_index"].push_back(j ? nlohmann::json(*j) : nlohmann::json(nullptr));
    }
    m["scaler"] = to_json(ds.scaler);
    m["profile_count"] = ds.profiles.size();
    m["csv_checksum"] = hex64(fnv1a64(csv));

    write_file(dir / "profiles.csv", csv);
    write_file(dir / "manifest.json", m.dump(2) + "\n");
}

/// Checksum of the stored CSV, used to identify a dataset in run records.
inline std::string dataset_checksum(const std::filesystem::path& dir) {
    return hex64(fnv1a64(read_file(dir / "profiles.csv")));
}

inline ProfileDataset load(const std::filesystem::path& dir) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DatasetIoError(std::string("malformed manifest: ") + e.what());
    }
    if (m.value("format_version", -1) != kDatasetFormatVersion) {
        throw DatasetIoError("unsupported dataset format version");
    }
    const std::string csv = read_file(dir / "profiles.csv");
    if (hex64(fnv1a64(csv)) != m.at("csv_checksum").get<std::string>()) {
        throw DatasetIoError("profiles.csv checksum mismatch (file truncated or modified)");
    }

    ProfileDataset ds;
    ds.manifest.seed = m.at("seed").get<std::uint64_t>();
    ds.manifest.split_seed = m.at("split_seed").get<std::uint64_t>();
    ds.manifest.ranges = ranges_from_json(m.at("ranges"));
    ds.manifest.grid = GridSpec{m.at("dx").get<double>(), m.at("length").get<double>(),
                                m.at("n_points").get<std::size_t>()};
    for (const auto& r : m.at("rejected")) {
        ds.manifest.rejected.push_back({scenario_from_json(r), r.at("reason").get<std::string>()});
    }
    ds.scaler = scaler_from_json(m.at("scaler"));

    const auto& splits = m.at("split");
    const auto& jumps = m.at("jump_index");
    const std::size_t n_points = ds.manifest.grid.n_points;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        vals.reserve(n_points + 5);
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const auto next = line.find(',', pos);
            const auto cell = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            vals.push_back(std::strtod(cell.c_str(), nullptr));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (vals.size() != n_points + 5) throw DatasetIoError("profiles.csv row " + std::to_string(row) + " has wrong width");
        if (row >= splits.size()) throw DatasetIoError("manifest has fewer split tags than profiles");
        WaterProfile p;
        p.scenario = {vals[0], vals[1], vals[2], vals[3], vals[4]};
        p.grid = ds.manifest.grid;
        p.depths.assign(vals.begin() + 5, vals.end());
        if (!jumps[row].is_null()) {
            p.jump_index = jumps[row].get<std::size_t>();
            p.regime = Regime::mixed;
        }
        ds.profiles.push_back(std::move(p));
        ds.split.push_back(split_from_string(splits[row].get<std::string>()));
        ++row;
    }
    if (row != m.at("profile_count").get<std::size_t>() || row != splits.size()) {
        throw DatasetIoError("profile count does not match manifest");
    }
    return ds;
}

}  // namespace hydronet
