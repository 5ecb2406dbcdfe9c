#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <set>

#include "hydronet/dataset.hpp"

using namespace hydronet;
namespace fs = std::filesystem;

namespace {

const ProfileDataset& desk() {
    static const ProfileDataset ds = generate(ParameterRanges::desk(), GridSpec::make(10.0, 1000.0), 42);
    return ds;
}

ParameterRanges tiny_ranges() {
    ParameterRanges r;
    r.s = {1e-3, 2e-3, 2};
    r.b = {10.0, 20.0, 2};
    r.n = {0.02, 0.03, 2};
    r.zd = {2.0, 3.0, 2};
    r.Q = {20.0, 60.0, 2};
    return r;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("hydronet_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

double column_mean(const Eigen::MatrixXd& m, Eigen::Index c) { return m.col(c).mean(); }

double column_std(const Eigen::MatrixXd& m, Eigen::Index c) {
    const double mu = m.col(c).mean();
    return std::sqrt((m.col(c).array() - mu).square().mean());
}

}  // namespace

TEST(ParameterRange, UniformGrid) {
    const ParameterRange r{1.0, 2.0, 5};
    const auto v = r.values();
    ASSERT_EQ(v.size(), 5u);
    EXPECT_DOUBLE_EQ(v.front(), 1.0);
    EXPECT_DOUBLE_EQ(v.back(), 2.0);
    EXPECT_DOUBLE_EQ(v[2], 1.5);
    EXPECT_EQ((ParameterRange{3.0, 3.0, 1}).values(), std::vector<double>{3.0});
}

TEST(ParameterRanges, PresetsAndValidation) {
    EXPECT_EQ(ParameterRanges::full().combinations(), 7u * 7u * 7u * 6u * 5u);
    EXPECT_EQ(ParameterRanges::desk().combinations(), 500u);
    auto bad = tiny_ranges();
    bad.b = {20.0, 10.0, 3};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = tiny_ranges();
    bad.n.min = -1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(SplitCounts, SeventyFifteenFifteen) {
    EXPECT_EQ(split_counts(10390), (SplitCounts{7274, 1558, 1558}));
    EXPECT_EQ(split_counts(500), (SplitCounts{350, 75, 75}));
    EXPECT_EQ(split_counts(1), (SplitCounts{1, 0, 0}));
    for (std::size_t n : {7u, 99u, 460u, 10290u}) {
        const auto c = split_counts(n);
        EXPECT_EQ(c.train + c.val + c.test, n);
        EXPECT_GE(c.train, n * 70 / 100);
    }
}

TEST(Generate, SingleCombinationGoesToTraining) {
    ParameterRanges r;
    r.s = {1e-3, 1e-3, 1};
    r.b = {10.0, 10.0, 1};
    r.n = {0.03, 0.03, 1};
    r.zd = {2.0, 2.0, 1};
    r.Q = {50.0, 50.0, 1};
    const auto ds = generate(r, GridSpec::make(10.0, 500.0), 1);
    ASSERT_EQ(ds.profiles.size(), 1u);
    EXPECT_EQ(ds.split[0], Split::train);
}

TEST(Generate, DeskCorpusShape) {
    const auto& ds = desk();
    const std::size_t total = ds.profiles.size() + ds.manifest.rejected.size();
    EXPECT_EQ(total, 500u);
    EXPECT_LE(ds.manifest.rejected.size(), 50u);
    const auto c = split_counts(ds.profiles.size());
    EXPECT_EQ(ds.indices(Split::train).size(), c.train);
    EXPECT_EQ(ds.indices(Split::val).size(), c.val);
    EXPECT_EQ(ds.indices(Split::test).size(), c.test);
    EXPECT_EQ(ds.manifest.seed, 42u);
    for (const auto& p : ds.profiles) EXPECT_EQ(p.depths.size(), 101u);
    for (const auto& r : ds.manifest.rejected) EXPECT_FALSE(r.reason.empty());
}

TEST(Generate, ExcessiveRejectionIsConfigError) {
    ParameterRanges r = tiny_ranges();
    // steep, smooth and a very low weir: the jump reaches the dam
    r.s = {0.05, 0.06, 2};
    r.n = {0.01, 0.011, 2};
    r.zd = {0.1, 0.2, 2};
    EXPECT_THROW(generate(r, GridSpec::make(10.0, 500.0), 1), ConfigError);
}

TEST(Generate, SplitsAreDisjointAndSeeded) {
    const auto a = generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 7);
    const auto b = generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 7);
    const auto c = generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 8);
    EXPECT_EQ(a.split, b.split);
    EXPECT_NE(a.split, c.split);
    std::set<std::size_t> seen;
    for (auto which : {Split::train, Split::val, Split::test}) {
        for (auto i : a.indices(which)) EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_EQ(seen.size(), a.profiles.size());
}

TEST(Scaler, TrainingColumnsAreStandardized) {
    const auto& ds = desk();
    const auto train = view_sp(ds, ds.indices(Split::train));
    for (Eigen::Index c = 0; c < 6; ++c) {
        EXPECT_NEAR(column_mean(train.inputs, c), 0.0, 1e-12);
        EXPECT_NEAR(column_std(train.inputs, c), 1.0, 1e-12);
    }
    const auto pairs = view_vts(ds, ds.indices(Split::train));
    for (Eigen::Index c = 0; c < 5; ++c) EXPECT_NEAR(column_mean(pairs.inputs, c), 0.0, 1e-12);
}

TEST(Scaler, FittedOnTrainingOnly) {
    const auto& ds = desk();
    EXPECT_EQ(ds.scaler, fit_scaler(ds.members(Split::train)));
    EXPECT_NE(ds.scaler, fit_scaler(ds.members(Split::val)));
    const auto val = view_sp(ds, ds.indices(Split::val));
    double worst = 0.0;
    for (Eigen::Index c = 1; c < 6; ++c) worst = std::max(worst, std::abs(column_mean(val.inputs, c)));
    EXPECT_GT(worst, 1e-3);
}

TEST(Scaler, RoundTripAndConstantFeature) {
    const auto& sc = desk().scaler;
    for (double v : {-3.0, 0.0, 0.25, 17.0, 1e3}) {
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const auto feat = static_cast<Feature>(f);
            EXPECT_NEAR(sc.unscale(feat, sc.scale(feat, v)), v, 1e-12 * std::max(1.0, std::abs(v)));
        }
    }
    FeatureScaler flat;
    flat.stddev.fill(1.0);
    flat.stddev[static_cast<std::size_t>(Feature::zd)] = 0.0;
    try {
        (void)flat.scale(Feature::zd, 1.0);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("zd"), std::string::npos);
    }
}

TEST(Views, SampleCounts) {
    const auto& ds = desk();
    const auto all = ds.indices(Split::train);
    EXPECT_EQ(view_sp(ds, {all[0]}).size(), 101);
    EXPECT_EQ(view_int(ds, {all[0]}).size(), 100);
    const auto vts = view_vts(ds, all);
    EXPECT_EQ(vts.size(), static_cast<Eigen::Index>(all.size()));
    EXPECT_EQ(vts.targets.cols(), 101);
    // full-scale arithmetic: every station of every profile is one SP row
    EXPECT_EQ(static_cast<std::size_t>(10390) * GridSpec::make(10.0, 5000.0).n_points, 5205390u);
}

TEST(Views, ContentEqualReshapings) {
    const auto& ds = desk();
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < ds.profiles.size(); ++i) {
        if (ds.profiles[i].jump_index) {
            ids.push_back(i);
            break;
        }
    }
    ids.push_back(0);
    ASSERT_EQ(ids.size(), 2u);
    const auto sp = view_sp(ds, ids);
    const auto in = view_int(ds, ids);
    const auto vts = view_vts(ds, ids);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto& p = ds.profiles[ids[r]];
        for (std::size_t k = 0; k < 101; ++k) {
            EXPECT_EQ(vts.targets(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)), p.depths[k]);
            EXPECT_EQ(sp.targets(static_cast<Eigen::Index>(r * 101 + k), 0), p.depths[k]);
        }
        // reassemble the profile from the integrator pairs (jump pair included)
        std::vector<double> rebuilt{ds.scaler.unscale(Feature::h, in.inputs(static_cast<Eigen::Index>(r * 100), 0))};
        for (std::size_t k = 0; k < 100; ++k) rebuilt.push_back(in.targets(static_cast<Eigen::Index>(r * 100 + k), 0));
        for (std::size_t k = 0; k < 101; ++k) EXPECT_NEAR(rebuilt[k], p.depths[k], 1e-12);
    }
    EXPECT_EQ(vts.aux[0].dx, 10.0);
    EXPECT_EQ(sp.aux[0].scenario, ds.profiles[ids[0]].scenario);
}

TEST(Views, UniformFlowPairsRepeatInput) {
    ProfileDataset ds;
    const ChannelScenario sc{1e-3, 10.0, 0.03, 2.0, 40.0};
    const double hn = normal_depth(sc);
    WaterProfile p{sc, GridSpec::make(10.0, 100.0), std::vector<double>(11, hn), std::nullopt, Regime::subcritical};
    ds.profiles = {p, p};
    ds.profiles[1].scenario.Q = 60.0;
    ds.split = {Split::train, Split::train};
    ds.manifest.grid = p.grid;
    ds.refit_scaler();
    for (auto& sd : ds.scaler.stddev) {
        if (sd == 0.0) sd = 1.0;  // only Q varies here
    }
    const auto pairs = view_int(ds, {0});
    for (Eigen::Index r = 0; r < pairs.size(); ++r) {
        EXPECT_NEAR(ds.scaler.unscale(Feature::h, pairs.inputs(r, 0)), pairs.targets(r, 0), 1e-12);
    }
}

TEST(Views, MixedGridSizesRejected) {
    ProfileDataset ds = generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 3);
    ds.profiles[1].depths.pop_back();
    EXPECT_THROW(view_vts(ds, {0, 1}), ConfigError);
}

TEST(Views, ShuffleIsSeeded) {
    EXPECT_EQ(shuffled_order(1000, 5), shuffled_order(1000, 5));
    EXPECT_NE(shuffled_order(1000, 5), shuffled_order(1000, 6));
    auto o = shuffled_order(1000, 5);
    std::sort(o.begin(), o.end());
    for (std::size_t i = 0; i < o.size(); ++i) EXPECT_EQ(o[i], i);
}

TEST(Persistence, SaveLoadRoundTrip) {
    const auto ds = generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 11);
    const auto dir = scratch("roundtrip");
    save(ds, dir);
    const auto back = load(dir);
    EXPECT_EQ(back.profiles, ds.profiles);
    EXPECT_EQ(back.split, ds.split);
    EXPECT_EQ(back.scaler, ds.scaler);
    EXPECT_EQ(back.manifest.seed, 11u);
    EXPECT_EQ(back.manifest.split_seed, ds.manifest.split_seed);
    EXPECT_EQ(back.manifest.ranges, ds.manifest.ranges);
    EXPECT_EQ(back.manifest.grid, ds.manifest.grid);
    EXPECT_EQ(back.manifest.rejected.size(), ds.manifest.rejected.size());
    const std::string header = read_file(dir / "profiles.csv").substr(0, 20);
    EXPECT_EQ(header.rfind("s,b,n,zd,Q,h0,h1", 0), 0u);
    fs::remove_all(dir);
}

TEST(Persistence, SameSeedSameChecksum) {
    const auto a = scratch("ck_a");
    const auto b = scratch("ck_b");
    save(generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 4), a);
    save(generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 4), b);
    EXPECT_EQ(dataset_checksum(a), dataset_checksum(b));
    EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Persistence, TruncatedFileIsChecksumError) {
    const auto dir = scratch("trunc");
    save(generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 2), dir);
    const std::string csv = read_file(dir / "profiles.csv");
    write_file(dir / "profiles.csv", csv.substr(0, csv.size() / 2));
    try {
        (void)load(dir);
        FAIL() << "expected DatasetIoError";
    } catch (const DatasetIoError& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
    fs::remove_all(dir);
}

TEST(Persistence, VersionMismatchAndMissingFiles) {
    const auto dir = scratch("version");
    save(generate(tiny_ranges(), GridSpec::make(10.0, 300.0), 2), dir);
    auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    m["format_version"] = 99;
    write_file(dir / "manifest.json", m.dump());
    EXPECT_THROW(load(dir), DatasetIoError);
    fs::remove_all(dir);
    EXPECT_THROW(load(dir), DatasetIoError);
}
