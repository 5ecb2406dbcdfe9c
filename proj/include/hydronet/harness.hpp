#pragma once

/**
 * @file harness.hpp
 * @brief Experiment plans, run records and the stress-test protocol:
 *        training-set reduction, width sweep, extrapolation set, lambda search
 *        and report aggregation.
 */

#include <algorithm>
#include <array>
#include <chrono>
#include <numeric>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "hydronet/architectures.hpp"
#include "hydronet/dataset.hpp"
#include "hydronet/evaluation.hpp"
#include "hydronet/nn.hpp"
#include "hydronet/physics_losses.hpp"

namespace hydronet {

/// One (architecture, strategy, lambda) combination. A width of 0 selects the
/// architecture default.
struct Cell {
    Architecture arch{Architecture::sp};
    Strategy strategy{Strategy::dd};
    double lambda{1.0};
    int width{0};

    [[nodiscard]] ModelSpec spec() const {
        ModelSpec s;
        s.arch = arch;
        s.width = width > 0 ? width : ModelSpec::default_width(arch);
        s.strategy = strategy;
        s.lambda = strategy == Strategy::dd ? 1.0 : lambda;
        return s;
    }

    [[nodiscard]] std::string label() const {
        std::ostringstream os;
        os << to_string(arch) << '-' << to_string(strategy);
        if (strategy != Strategy::dd) os << "-l" << lambda;
        if (width > 0) os << "-w" << width;
        return os.str();
    }
};

inline nlohmann::json to_json(const Cell& c) {
    return {{"arch", to_string(c.arch)}, {"strategy", to_string(c.strategy)}, {"lambda", c.lambda}, {"width", c.width}};
}

inline Cell cell_from_json(const nlohmann::json& j) {
    Cell c;
    c.arch = architecture_from_string(j.at("arch").get<std::string>());
    c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    c.lambda = j.value("lambda", 1.0);
    c.width = j.value("width", 0);
    c.spec().validate();
    return c;
}

enum class SweepAxis { none, train_fraction, width };

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::none: return "none";
        case SweepAxis::train_fraction: return "train_fraction";
        case SweepAxis::width: return "width";
    }
    return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "none") return SweepAxis::none;
    if (s == "train_fraction") return SweepAxis::train_fraction;
    if (s == "width") return SweepAxis::width;
    throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

struct ExperimentPlan {
    std::string dataset;
    std::vector<Cell> cells;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    SweepAxis axis{SweepAxis::none};
    std::vector<double> axis_values;
    bool extrapolation{false};
    std::size_t extrapolation_count{0};  ///< 0 uses the test-set size
    nn::TrainConfig config;

    void validate() const {
        if (cells.empty()) throw std::invalid_argument("plan has no cells");
        for (const auto& c : cells) c.spec().validate();
        if (seeds.empty()) throw std::invalid_argument("plan has no seeds");
        for (double v : axis_values) {
            if (axis == SweepAxis::train_fraction && !(v > 0.0 && v <= 1.0)) {
                throw std::invalid_argument("training fractions must lie in (0, 1]");
            }
            if (axis == SweepAxis::width && !(v >= 2.0 && v == std::floor(v))) {
                throw std::invalid_argument("widths must be integers >= 2");
            }
        }
        if (axis != SweepAxis::none && axis_values.empty()) throw std::invalid_argument("sweep axis without values");
    }
};

inline const std::vector<double>& default_fractions() {
    static const std::vector<double> v{1.0, 0.5, 0.25, 0.1, 0.05};
    return v;
}

inline const std::vector<double>& default_widths() {
    static const std::vector<double> v{4, 8, 16, 30, 64};
    return v;
}

inline std::vector<double> default_lambda_grid() {
    std::vector<double> v;
    for (int i = 1; i <= 9; ++i) v.push_back(i / 10.0);
    return v;
}

// ---------------------------------------------------------------------------
// Dataset manipulations

/// Keeps ceil(fraction * train_count) whole training profiles chosen by a
/// seeded shuffle; the other splits are untouched and the scaler is refitted.
inline ProfileDataset subsample_training(const ProfileDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in (0, 1]");
    const auto train = ds.indices(Split::train);
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(train.size()) - 1e-9));
    if (keep < 2) throw std::invalid_argument("training fraction leaves fewer than two profiles");
    ProfileDataset out;
    out.manifest = ds.manifest;
    if (keep == train.size()) {
        out = ds;
        return out;
    }
    const auto order = shuffled_order(train.size(), seed);
    std::vector<bool> retained(ds.profiles.size(), true);
    for (std::size_t k = keep; k < order.size(); ++k) retained[train[order[k]]] = false;
    for (std::size_t i = 0; i < ds.profiles.size(); ++i) {
        if (!retained[i]) continue;
        out.profiles.push_back(ds.profiles[i]);
        out.split.push_back(ds.split[i]);
    }
    out.refit_scaler();
    return out;
}

struct ExtrapolationSet {
    std::vector<WaterProfile> profiles;
    std::size_t attempts{0};
    std::vector<RejectedScenario> rejected;
};

/// Scenarios with at least one parameter within 10 % beyond the training
/// range (per-parameter coin flips decide which ones, and on which side).
inline ExtrapolationSet make_extrapolation_set(const ParameterRanges& ranges, const GridSpec& grid, std::size_t count,
                                               std::uint64_t seed, double max_rejection_rate = 0.25) {
    ranges.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](const ParameterRange& r, bool outside) {
        const double u = unit(rng);
        if (!outside) return r.min + u * (r.max - r.min);
        if (unit(rng) < 0.5) return r.max + u * (1.1 * r.max - r.max);
        return 0.9 * r.min + u * (r.min - 0.9 * r.min);
    };
    ExtrapolationSet out;
    const std::size_t max_attempts = std::max<std::size_t>(count * 4, 16);
    while (out.profiles.size() < count && out.attempts < max_attempts) {
        ++out.attempts;
        std::array<bool, 5> outside{};
        bool any = false;
        for (auto& o : outside) {
            o = unit(rng) < 0.5;
            any = any || o;
        }
        if (!any) outside[static_cast<std::size_t>(rng() % 5)] = true;
        const auto all = ranges.all();
        const ChannelScenario sc{draw(*all[0], outside[0]), draw(*all[1], outside[1]), draw(*all[2], outside[2]),
                                 draw(*all[3], outside[3]), draw(*all[4], outside[4])};
        try {
            out.profiles.push_back(solve_profile(sc, grid));
        } catch (const std::exception& e) {
            out.rejected.push_back({sc, e.what()});
        }
    }
    const double rate = static_cast<double>(out.rejected.size()) / static_cast<double>(out.attempts);
    if (out.profiles.size() < count || rate > max_rejection_rate) {
        throw ConfigError("extrapolation set: rejected " + std::to_string(out.rejected.size()) + " of " +
                          std::to_string(out.attempts) + " scenarios");
    }
    return out;
}

/// True when at least one scenario parameter lies outside its range.
inline bool outside_ranges(const ChannelScenario& sc, const ParameterRanges& r) {
    auto out = [](double v, const ParameterRange& pr) { return v < pr.min || v > pr.max; };
    return out(sc.s, r.s) || out(sc.b, r.b) || out(sc.n, r.n) || out(sc.zd, r.zd) || out(sc.Q, r.Q);
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
    Cell cell;
    std::uint64_t seed{};
    SweepAxis axis{SweepAxis::none};
    double axis_value{0.0};
    ModelSpec spec;
    nn::TrainConfig config;
    std::string dataset_checksum;
    std::vector<EpochRecord> history;
    int best_epoch{-1};
    bool diverged{false};
    std::string diagnostics;
    SetEvaluation validation;
    SetEvaluation test;
    std::optional<SetEvaluation> extrapolation;
    double wall_seconds{};
};

inline std::vector<WaterProfile> split_profiles(const ProfileDataset& ds, Split which, std::vector<std::size_t>* ids = nullptr) {
    std::vector<WaterProfile> out;
    for (auto i : ds.indices(which)) {
        out.push_back(ds.profiles[i]);
        if (ids) ids->push_back(i);
    }
    return out;
}

/// Trains one cell on `ds` (already reduced if sweeping data size) and scores
/// it on the validation, test and optional extrapolation profiles. The
/// trained model is copied to `model_out` when given.
inline RunRecord run_cell(const Cell& cell, const ProfileDataset& ds, nn::TrainConfig config, std::uint64_t seed,
                          const std::vector<WaterProfile>* extrapolation = nullptr,
                          SweepAxis axis = SweepAxis::none, double axis_value = 0.0,
                          const std::string& checksum = {}, TrainedModel* model_out = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    config.seed = seed;
    RunRecord rec;
    rec.cell = cell;
    rec.seed = seed;
    rec.axis = axis;
    rec.axis_value = axis_value;
    rec.spec = cell.spec();
    rec.config = config;
    rec.dataset_checksum = checksum;

    const TrainedModel model = train(rec.spec, ds, config);
    rec.history = model.history;
    rec.best_epoch = model.best_epoch;
    rec.diverged = model.diverged;
    rec.diagnostics = model.diagnostics;

    std::vector<std::size_t> val_ids;
    std::vector<std::size_t> test_ids;
    const auto val = split_profiles(ds, Split::val, &val_ids);
    const auto test = split_profiles(ds, Split::test, &test_ids);
    rec.validation = evaluate_set(model, std::span<const WaterProfile>(val), "val", val_ids);
    rec.test = evaluate_set(model, std::span<const WaterProfile>(test), "test", test_ids);
    if (extrapolation) rec.extrapolation = evaluate_set(model, std::span<const WaterProfile>(*extrapolation), "ext");
    if (model_out) *model_out = model;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

inline nlohmann::json record_manifest(const RunRecord& r) {
    return {{"cell", to_json(r.cell)},
            {"label", r.cell.label()},
            {"seed", r.seed},
            {"axis", to_string(r.axis)},
            {"axis_value", r.axis_value},
            {"spec", to_json(r.spec)},
            {"config", nn::to_json(r.config)},
            {"dataset_checksum", r.dataset_checksum},
            {"best_epoch", r.best_epoch},
            {"epochs_run", r.history.size()},
            {"diverged", r.diverged},
            {"diagnostics", r.diagnostics},
            {"wall_seconds", r.wall_seconds}};
}

inline nlohmann::json record_summary(const RunRecord& r) {
    nlohmann::json j{{"label", r.cell.label()},
                     {"cell", to_json(r.cell)},
                     {"seed", r.seed},
                     {"axis", to_string(r.axis)},
                     {"axis_value", r.axis_value},
                     {"validation", summary_json(r.validation)},
                     {"test", summary_json(r.test)}};
    if (r.extrapolation) j["extrapolation"] = summary_json(*r.extrapolation);
    return j;
}

/// Writes manifest.json, history.csv, metrics.csv and summary.json. Files go
/// to a temporary directory first and are renamed into place.
inline void write_run(const RunRecord& r, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path tmp = dir.string() + ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    write_file(tmp / "manifest.json", record_manifest(r).dump(2) + "\n");
    write_file(tmp / "history.csv", history_csv(r.history));
    std::vector<ProfileMetrics> rows = r.test.rows;
    if (r.extrapolation) rows.insert(rows.end(), r.extrapolation->rows.begin(), r.extrapolation->rows.end());
    write_file(tmp / "metrics.csv", metrics_csv(rows));
    write_file(tmp / "summary.json", record_summary(r).dump(2) + "\n");
    fs::remove_all(dir);
    fs::create_directories(dir.parent_path());
    fs::rename(tmp, dir);
}

inline std::string run_directory_name(const RunRecord& r) {
    std::ostringstream os;
    os << r.cell.label();
    if (r.axis != SweepAxis::none) os << '_' << to_string(r.axis) << '-' << r.axis_value;
    os << "_seed" << r.seed;
    return os.str();
}

// ---------------------------------------------------------------------------
// Plans

/// One unit of work in a plan: a cell at one axis point and one seed.
struct PlannedRun {
    Cell cell;
    std::uint64_t seed{};
    SweepAxis axis{SweepAxis::none};
    double axis_value{0.0};
};

inline std::vector<PlannedRun> expand_plan(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<PlannedRun> runs;
    const std::vector<double> points = plan.axis == SweepAxis::none ? std::vector<double>{0.0} : plan.axis_values;
    for (const auto& cell : plan.cells) {
        for (double v : points) {
            for (auto seed : plan.seeds) {
                Cell c = cell;
                if (plan.axis == SweepAxis::width) c.width = static_cast<int>(v);
                runs.push_back({c, seed, plan.axis, v});
            }
        }
    }
    return runs;
}

inline std::size_t default_extrapolation_count(const ProfileDataset& ds) { return ds.indices(Split::test).size(); }

/// Runs every planned (cell, axis point, seed) on up to `jobs` worker threads.
/// Each run is single-threaded and deterministic, so the result does not
/// depend on scheduling; records come back in plan order. When `out_dir` is
/// set, each record is written to its own directory as soon as it finishes.
inline std::vector<RunRecord> run_plan(const ExperimentPlan& plan, const ProfileDataset& ds,
                                       const std::string& checksum, unsigned jobs = 1,
                                       const std::vector<WaterProfile>* extrapolation = nullptr,
                                       const std::filesystem::path& out_dir = {}) {
    const auto runs = expand_plan(plan);
    std::vector<RunRecord> records(runs.size());
    std::mutex io;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard lock(io);
                if (next >= runs.size() || failure) return;
                k = next++;
            }
            try {
                const auto& r = runs[k];
                const ProfileDataset reduced = r.axis == SweepAxis::train_fraction
                                                   ? subsample_training(ds, r.axis_value, r.seed)
                                                   : ProfileDataset{};
                const ProfileDataset& used = r.axis == SweepAxis::train_fraction ? reduced : ds;
                records[k] = run_cell(r.cell, used, plan.config, r.seed, extrapolation, r.axis, r.axis_value, checksum);
                if (!out_dir.empty()) write_run(records[k], out_dir / run_directory_name(records[k]));
            } catch (...) {
                std::lock_guard lock(io);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(runs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return records;
}

// ---------------------------------------------------------------------------
// Lambda search

struct LambdaRow {
    double lambda{};
    double mean_val_nmae{};
    std::vector<double> per_seed;
};

struct LambdaSearchResult {
    double best_lambda{};
    std::vector<LambdaRow> rows;
};

/// Trains the cell at every lambda and seed; picks the lambda with the lowest
/// seed-mean validation NMAE (first one wins ties). With a fraction below 1
/// each seed trains on its own reduced training set, as in the size sweep.
inline LambdaSearchResult lambda_search(const Cell& cell, const std::vector<double>& lambdas, const ProfileDataset& ds,
                                        const std::vector<std::uint64_t>& seeds, const nn::TrainConfig& config,
                                        double fraction = 1.0) {
    if (lambdas.empty()) throw std::invalid_argument("lambda_search: empty grid");
    if (seeds.empty()) throw std::invalid_argument("lambda_search: no seeds");
    for (double l : lambdas) require_lambda(l);
    std::vector<ProfileDataset> reduced;
    for (auto seed : seeds) reduced.push_back(subsample_training(ds, fraction, seed));
    LambdaSearchResult out;
    double best = std::numeric_limits<double>::infinity();
    for (double l : lambdas) {
        Cell c = cell;
        c.lambda = l;
        LambdaRow row{l, 0.0, {}};
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const auto rec = run_cell(c, reduced[k], config, seeds[k]);
            row.per_seed.push_back(rec.validation.rows.empty() ? std::numeric_limits<double>::infinity()
                                                               : rec.validation.nmae.mean);
        }
        row.mean_val_nmae = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) /
                            static_cast<double>(row.per_seed.size());
        if (row.mean_val_nmae < best) {
            best = row.mean_val_nmae;
            out.best_lambda = l;
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

struct ReportRow {
    std::string arch;
    std::string strategy;
    double lambda{};
    std::string axis;
    double axis_value{};
    double seed_mean_nmae{};
    double seed_mean_nnse{};
    std::size_t seeds{};
    std::optional<double> seed_mean_ext_nmae;
    std::optional<double> seed_mean_ext_nnse;
};

/// Groups run summaries (summary.json contents) by cell and axis point and
/// averages the headline test means over seeds. Output order is sorted by key.
inline std::vector<ReportRow> build_report(const std::vector<nlohmann::json>& summaries) {
    using Key = std::tuple<std::string, std::string, double, std::string, double>;
    struct Acc {
        double nmae = 0, nnse = 0, ext_nmae = 0, ext_nnse = 0;
        std::size_t n = 0, n_ext = 0;
    };
    std::map<Key, Acc> groups;
    for (const auto& s : summaries) {
        const auto& cell = s.at("cell");
        const std::string strategy = cell.at("strategy").get<std::string>();
        const double lambda = strategy == "dd" ? 1.0 : cell.at("lambda").get<double>();
        Key key{cell.at("arch").get<std::string>(), strategy, lambda, s.at("axis").get<std::string>(),
                s.at("axis_value").get<double>()};
        auto& a = groups[key];
        a.nmae += s.at("test").at("nmae").at("mean").get<double>();
        a.nnse += s.at("test").at("nnse").at("mean").get<double>();
        ++a.n;
        if (s.contains("extrapolation")) {
            a.ext_nmae += s.at("extrapolation").at("nmae").at("mean").get<double>();
            a.ext_nnse += s.at("extrapolation").at("nnse").at("mean").get<double>();
            ++a.n_ext;
        }
    }
    std::vector<ReportRow> rows;
    for (const auto& [k, a] : groups) {
        ReportRow r{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k),
                    a.nmae / static_cast<double>(a.n), a.nnse / static_cast<double>(a.n), a.n, std::nullopt, std::nullopt};
        if (a.n_ext > 0) {
            r.seed_mean_ext_nmae = a.ext_nmae / static_cast<double>(a.n_ext);
            r.seed_mean_ext_nnse = a.ext_nnse / static_cast<double>(a.n_ext);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "arch,strategy,lambda,axis,axis_value,seed_mean_nmae,seed_mean_nnse\n";
    for (const auto& r : rows) {
        os << r.arch << ',' << r.strategy << ',' << r.lambda << ',' << r.axis << ',' << r.axis_value << ','
           << r.seed_mean_nmae << ',' << r.seed_mean_nnse << '\n';
    }
    return os.str();
}

/// Extrapolation counterpart of report_csv, for runs that carried an EXT set.
inline std::string extrapolation_report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "arch,strategy,lambda,axis,axis_value,seed_mean_nmae,seed_mean_nnse,seed_mean_ext_nmae,seed_mean_ext_nnse\n";
    for (const auto& r : rows) {
        if (!r.seed_mean_ext_nmae) continue;
        os << r.arch << ',' << r.strategy << ',' << r.lambda << ',' << r.axis << ',' << r.axis_value << ','
           << r.seed_mean_nmae << ',' << r.seed_mean_nnse << ',' << *r.seed_mean_ext_nmae << ','
           << *r.seed_mean_ext_nnse << '\n';
    }
    return os.str();
}

inline std::vector<nlohmann::json> load_summaries(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().filename() == "summary.json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<nlohmann::json> out;
    for (const auto& f : files) out.push_back(nlohmann::json::parse(read_file(f)));
    return out;
}

}  // namespace hydronet
