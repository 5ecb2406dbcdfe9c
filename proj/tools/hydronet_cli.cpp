// Command-line driver: dataset generation, training, evaluation, sweeps,
// extrapolation, lambda search and report aggregation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hydronet/architectures.hpp"
#include "hydronet/dataset.hpp"
#include "hydronet/evaluation.hpp"
#include "hydronet/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hydronet;

namespace {

constexpr int kUsageExit = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::string data;
    std::string out;
    std::vector<std::string> cells;
    std::string arch;
    std::string strategy;
    std::optional<double> lambda;
    int width{0};
    std::vector<std::uint64_t> seeds;
    std::optional<int> max_epochs;
    std::optional<int> batch_size;
    unsigned jobs{1};
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::string text;
    try {
        text = read_file(path);
    } catch (const DatasetIoError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    try {
        auto j = json::parse(text);
        if (!j.is_object()) throw UsageError("config " + path + ": top level must be an object");
        return j;
    } catch (const json::exception& e) {
        throw UsageError("malformed config " + path + ": " + e.what());
    }
}

/// Reads `key` from the config, turning type errors into usage errors.
template <class T>
std::optional<T> config_value(const json& cfg, const char* key) {
    if (!cfg.contains(key)) return std::nullopt;
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("config key '") + key + "': " + e.what());
    }
}

// "arch:strategy[:lambda[:width]]"
Cell parse_cell(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 4) {
        throw UsageError("cell '" + text + "' must look like arch:strategy[:lambda[:width]]");
    }
    Cell c;
    c.arch = architecture_from_string(parts[0]);
    c.strategy = strategy_from_string(parts[1]);
    c.lambda = c.strategy == Strategy::dd ? 1.0 : 0.5;
    if (parts.size() >= 3 && !parts[2].empty()) c.lambda = std::stod(parts[2]);
    if (parts.size() == 4) c.width = std::stoi(parts[3]);
    c.spec().validate();
    return c;
}

std::vector<Cell> resolve_cells(const Options& o, const json& cfg) {
    std::vector<Cell> cells;
    for (const auto& s : o.cells) cells.push_back(parse_cell(s));
    if (!o.arch.empty() || !o.strategy.empty()) {
        Cell c;
        c.arch = architecture_from_string(o.arch.empty() ? "sp" : o.arch);
        c.strategy = strategy_from_string(o.strategy.empty() ? "dd" : o.strategy);
        c.lambda = o.lambda.value_or(c.strategy == Strategy::dd ? 1.0 : 0.5);
        c.width = o.width;
        c.spec().validate();
        cells.push_back(c);
    }
    if (cells.empty() && cfg.contains("cells")) {
        try {
            for (const auto& j : cfg.at("cells")) cells.push_back(cell_from_json(j));
        } catch (const json::exception& e) {
            throw UsageError(std::string("config cells: ") + e.what());
        }
    }
    if (cells.empty()) throw UsageError("no cells given (use --cell, --arch/--strategy, or a config 'cells' list)");
    return cells;
}

std::vector<std::uint64_t> resolve_seeds(const Options& o, const json& cfg, std::vector<std::uint64_t> fallback) {
    if (!o.seeds.empty()) return o.seeds;
    if (auto s = config_value<std::vector<std::uint64_t>>(cfg, "seeds")) return *s;
    return fallback;
}

nn::TrainConfig resolve_train_config(const Options& o, const json& cfg) {
    nn::TrainConfig c;
    if (cfg.contains("train")) {
        try {
            c = nn::train_config_from_json(cfg.at("train"), c);
        } catch (const json::exception& e) {
            throw UsageError(std::string("config train: ") + e.what());
        }
    }
    if (o.max_epochs) c.max_epochs = *o.max_epochs;
    if (o.batch_size) c.batch_size = *o.batch_size;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("training config: ") + e.what());
    }
    return c;
}

struct LoadedData {
    ProfileDataset ds;
    std::string checksum;
};

LoadedData load_dataset(const Options& o, const json& cfg) {
    std::string path = o.data;
    if (path.empty()) path = config_value<std::string>(cfg, "dataset").value_or("");
    if (path.empty()) throw UsageError("no dataset given (use --data or a config 'dataset' entry)");
    if (!fs::exists(fs::path(path) / "manifest.json")) throw UsageError("missing dataset: " + path);
    try {
        return {load(path), dataset_checksum(path)};
    } catch (const DatasetIoError& e) {
        throw UsageError("cannot load dataset " + path + ": " + e.what());
    }
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) throw UsageError("--out is required");
    return o.out;
}

void add_common(CLI::App* sub, Options& o, bool cells, bool plan) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--data", o.data, "dataset directory");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--max-epochs", o.max_epochs, "epoch cap");
    sub->add_option("--batch-size", o.batch_size, "minibatch size (0 = architecture default)");
    if (cells) {
        sub->add_option("--cell", o.cells, "arch:strategy[:lambda[:width]], repeatable");
        sub->add_option("--arch", o.arch, "sp | int | vts");
        sub->add_option("--strategy", o.strategy, "dd | en | fr | vol | bc | pde");
        sub->add_option("--lambda", o.lambda, "data-term weight in [0, 1]");
        sub->add_option("--width", o.width, "hidden width (0 = architecture default)");
    }
    if (plan) {
        sub->add_option("--seeds", o.seeds, "comma-separated seeds")->delimiter(',');
        sub->add_option("--jobs", o.jobs, "concurrent runs")->check(CLI::PositiveNumber);
    }
}

void write_plan_report(const fs::path& out) {
    const auto rows = build_report(load_summaries(out));
    write_file(out / "report.csv", report_csv(rows));
    const auto ext = extrapolation_report_csv(rows);
    if (ext.find('\n') + 1 < ext.size()) write_file(out / "extrapolation_report.csv", ext);
}

void print_records(const std::vector<RunRecord>& records) {
    for (const auto& r : records) {
        std::cout << run_directory_name(r) << "  test NMAE " << r.test.nmae.mean << "  NNSE " << r.test.nnse.mean;
        if (r.extrapolation) std::cout << "  ext NMAE " << r.extrapolation->nmae.mean;
        if (r.diverged) std::cout << "  [diverged: " << r.diagnostics << "]";
        std::cout << '\n';
    }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Options& o, bool desk, bool full, std::optional<std::uint64_t> seed_flag) {
    const json cfg = load_config(o.config);
    const fs::path out = require_out(o);
    if (desk && full) throw UsageError("--desk and --full are mutually exclusive");
    std::string preset = desk ? "desk" : full ? "full" : config_value<std::string>(cfg, "preset").value_or("");
    ParameterRanges ranges;
    double dx = 10.0;
    double length = 5000.0;
    if (preset == "desk") {
        ranges = ParameterRanges::desk();
        length = 1000.0;
    } else if (preset == "full" || preset.empty()) {
        ranges = ParameterRanges::full();
    } else {
        throw UsageError("unknown preset '" + preset + "' (expected desk|full)");
    }
    try {
        if (cfg.contains("ranges")) ranges = ranges_from_json(cfg.at("ranges"));
    } catch (const json::exception& e) {
        throw UsageError(std::string("config ranges: ") + e.what());
    }
    dx = config_value<double>(cfg, "dx").value_or(dx);
    length = config_value<double>(cfg, "length").value_or(length);
    const std::uint64_t seed = seed_flag.value_or(config_value<std::uint64_t>(cfg, "seed").value_or(42));

    const auto ds = generate(ranges, GridSpec::make(dx, length), seed);
    save(ds, out);
    std::cout << "wrote " << ds.profiles.size() << " profiles (" << ds.manifest.rejected.size() << " rejected; "
              << ds.indices(Split::train).size() << '/' << ds.indices(Split::val).size() << '/'
              << ds.indices(Split::test).size() << " train/val/test) to " << out.string() << "\nchecksum "
              << dataset_checksum(out) << '\n';
    return 0;
}

int cmd_train(const Options& o, std::uint64_t seed) {
    const json cfg = load_config(o.config);
    const auto cells = resolve_cells(o, cfg);
    if (cells.size() != 1) throw UsageError("train takes exactly one cell");
    const auto data = load_dataset(o, cfg);
    const fs::path out = require_out(o);
    TrainedModel model;
    const auto rec = run_cell(cells[0], data.ds, resolve_train_config(o, cfg), seed, nullptr, SweepAxis::none, 0.0,
                              data.checksum, &model);
    const fs::path dir = out / run_directory_name(rec);
    write_run(rec, dir);
    save_checkpoint(model, dir / "model.json");
    print_records({rec});
    std::cout << "run written to " << dir.string() << '\n';
    return rec.diverged ? 1 : 0;
}

int cmd_evaluate(const Options& o, const std::string& model_path, const std::string& split_name) {
    const json cfg = load_config(o.config);
    if (model_path.empty()) throw UsageError("--model is required");
    TrainedModel model;
    try {
        model = load_checkpoint(model_path);
    } catch (const std::exception& e) {
        throw UsageError("cannot load model " + model_path + ": " + e.what());
    }
    const auto data = load_dataset(o, cfg);
    const fs::path out = require_out(o);
    Split which;
    try {
        which = split_from_string(split_name);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    std::vector<std::size_t> ids;
    const auto profiles = split_profiles(data.ds, which, &ids);
    if (profiles.empty()) throw UsageError("split '" + split_name + "' is empty");
    const auto ev = evaluate_set(model, std::span<const WaterProfile>(profiles), split_name, ids);
    const auto curve = station_error_curve(model, std::span<const WaterProfile>(profiles));

    fs::create_directories(out);
    write_file(out / "metrics.csv", metrics_csv(ev.rows));
    write_file(out / "summary.json", summary_json(ev).dump(2) + "\n");
    write_file(out / "station_error.csv", station_error_csv(curve, profiles.front().grid));
    write_file(out / "manifest.json", json{{"model", model_path},
                                           {"spec", to_json(model.spec)},
                                           {"dataset_checksum", data.checksum},
                                           {"split", split_name}}
                                              .dump(2) +
                                          "\n");
    std::cout << split_name << ": " << ev.rows.size() << " profiles, " << ev.excluded << " excluded, mean NMAE "
              << ev.nmae.mean << ", mean NNSE " << ev.nnse.mean << '\n';
    return 0;
}

int cmd_sweep(const Options& o, SweepAxis axis, std::vector<double> values, const char* config_key) {
    const json cfg = load_config(o.config);
    ExperimentPlan plan;
    plan.cells = resolve_cells(o, cfg);
    plan.seeds = resolve_seeds(o, cfg, {1, 2, 3});
    plan.axis = axis;
    if (values.empty()) values = config_value<std::vector<double>>(cfg, config_key).value_or(std::vector<double>{});
    if (values.empty()) values = axis == SweepAxis::width ? default_widths() : default_fractions();
    plan.axis_values = values;
    plan.config = resolve_train_config(o, cfg);
    try {
        plan.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto data = load_dataset(o, cfg);
    const fs::path out = require_out(o);
    const auto records = run_plan(plan, data.ds, data.checksum, o.jobs, nullptr, out);
    write_plan_report(out);
    print_records(records);
    return 0;
}

int cmd_extrapolate(const Options& o, std::size_t count, std::uint64_t ext_seed, double fraction) {
    const json cfg = load_config(o.config);
    ExperimentPlan plan;
    plan.cells = resolve_cells(o, cfg);
    plan.seeds = resolve_seeds(o, cfg, {1, 2, 3});
    plan.config = resolve_train_config(o, cfg);
    plan.extrapolation = true;
    if (fraction < 1.0) {
        plan.axis = SweepAxis::train_fraction;
        plan.axis_values = {fraction};
    }
    try {
        plan.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto data = load_dataset(o, cfg);
    const fs::path out = require_out(o);
    if (count == 0) count = config_value<std::size_t>(cfg, "extrapolation_count").value_or(0);
    if (count == 0) count = default_extrapolation_count(data.ds);
    const auto ext = make_extrapolation_set(data.ds.manifest.ranges, data.ds.manifest.grid, count, ext_seed);
    fs::create_directories(out);
    write_file(out / "extrapolation_profiles.csv", profiles_csv(ext.profiles, data.ds.manifest.grid.n_points));
    const auto records = run_plan(plan, data.ds, data.checksum, o.jobs, &ext.profiles, out);
    write_plan_report(out);
    print_records(records);
    return 0;
}

int cmd_lambda_search(const Options& o, std::vector<double> lambdas, double fraction) {
    const json cfg = load_config(o.config);
    const auto cells = resolve_cells(o, cfg);
    const auto seeds = resolve_seeds(o, cfg, {1, 2, 3});
    if (lambdas.empty()) lambdas = config_value<std::vector<double>>(cfg, "lambdas").value_or(default_lambda_grid());
    for (double l : lambdas) {
        if (!(l >= 0.0 && l <= 1.0)) throw UsageError("lambda values must lie in [0, 1]");
    }
    const auto config = resolve_train_config(o, cfg);
    const auto data = load_dataset(o, cfg);
    const fs::path out = require_out(o);
    fs::create_directories(out);

    std::vector<LambdaSearchResult> results(cells.size());
    std::vector<std::thread> pool;
    std::mutex guard;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard lock(guard);
                if (next >= cells.size() || failure) return;
                k = next++;
            }
            try {
                results[k] = lambda_search(cells[k], lambdas, data.ds, seeds, config, fraction);
            } catch (...) {
                std::lock_guard lock(guard);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(o.jobs, static_cast<unsigned>(cells.size())));
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::ostringstream csv;
    csv.precision(10);
    csv << "arch,strategy,lambda,mean_val_nmae,selected\n";
    json best = json::array();
    for (std::size_t k = 0; k < cells.size(); ++k) {
        for (const auto& row : results[k].rows) {
            csv << to_string(cells[k].arch) << ',' << to_string(cells[k].strategy) << ',' << row.lambda << ','
                << row.mean_val_nmae << ',' << (row.lambda == results[k].best_lambda ? 1 : 0) << '\n';
        }
        Cell chosen = cells[k];
        chosen.lambda = results[k].best_lambda;
        best.push_back(to_json(chosen));
        std::cout << chosen.label() << '\n';
    }
    write_file(out / "lambda_search.csv", csv.str());
    write_file(out / "selected_cells.json",
               json{{"fraction", fraction}, {"seeds", seeds}, {"dataset_checksum", data.checksum}, {"cells", best}}
                       .dump(2) +
                   "\n");
    return 0;
}

int cmd_report(const std::string& runs, const std::string& out_file) {
    if (runs.empty()) throw UsageError("--runs is required");
    if (!fs::is_directory(runs)) throw UsageError("run directory not found: " + runs);
    const auto summaries = load_summaries(runs);
    if (summaries.empty()) throw UsageError("no summary.json files under " + runs);
    const auto rows = build_report(summaries);
    const fs::path target = out_file.empty() ? fs::path(runs) / "report.csv" : fs::path(out_file);
    write_file(target, report_csv(rows));
    std::cout << report_csv(rows);
    const auto ext = extrapolation_report_csv(rows);
    if (ext.find('\n') + 1 < ext.size()) {
        write_file(target.parent_path() / "extrapolation_report.csv", ext);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hydronet: neural surrogates for steady open-channel water profiles"};
    app.require_subcommand(1);

    Options o;

    auto* gen = app.add_subcommand("gen-data", "solve and store a profile dataset");
    bool desk = false;
    bool full = false;
    std::optional<std::uint64_t> gen_seed;
    add_common(gen, o, false, false);
    gen->add_flag("--desk", desk, "500-scenario desk preset on a 1000 m reach");
    gen->add_flag("--full", full, "full preset on a 5000 m reach");
    gen->add_option("--seed", gen_seed, "split seed (default 42)");

    auto* tr = app.add_subcommand("train", "train one cell and score it");
    std::uint64_t train_seed = 1;
    add_common(tr, o, true, false);
    tr->add_option("--seed", train_seed, "training seed");

    auto* ev = app.add_subcommand("evaluate", "score a saved model on a dataset split");
    std::string model_path;
    std::string split_name = "test";
    add_common(ev, o, false, false);
    ev->add_option("--model", model_path, "model.json checkpoint");
    ev->add_option("--split", split_name, "train | val | test");

    auto* size = app.add_subcommand("sweep-size", "training-set size sweep");
    std::vector<double> fractions;
    add_common(size, o, true, true);
    size->add_option("--fractions", fractions, "comma-separated fractions in (0, 1]")->delimiter(',');

    auto* width = app.add_subcommand("sweep-width", "hidden-width sweep");
    std::vector<double> widths;
    add_common(width, o, true, true);
    width->add_option("--widths", widths, "comma-separated widths")->delimiter(',');

    auto* ext = app.add_subcommand("extrapolate", "score cells on scenarios beyond the training ranges");
    std::size_t ext_count = 0;
    std::uint64_t ext_seed = 7;
    double ext_fraction = 1.0;
    add_common(ext, o, true, true);
    ext->add_option("--count", ext_count, "extrapolation profiles (default: test-set size)");
    ext->add_option("--ext-seed", ext_seed, "seed for the extrapolation scenarios");
    ext->add_option("--fraction", ext_fraction, "training fraction")->check(CLI::Range(0.0, 1.0));

    auto* lam = app.add_subcommand("lambda-search", "pick lambda per cell on validation NMAE");
    std::vector<double> lambdas;
    double lam_fraction = 1.0;
    add_common(lam, o, true, true);
    lam->add_option("--lambdas", lambdas, "comma-separated candidates")->delimiter(',');
    lam->add_option("--fraction", lam_fraction, "training fraction")->check(CLI::Range(0.0, 1.0));

    auto* rep = app.add_subcommand("report", "aggregate run summaries into report.csv");
    std::string runs_dir;
    std::string report_out;
    rep->add_option("--runs", runs_dir, "directory holding run directories");
    rep->add_option("--out", report_out, "report file (default <runs>/report.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageExit;
    }

    try {
        if (*gen) return cmd_gen_data(o, desk, full, gen_seed);
        if (*tr) return cmd_train(o, train_seed);
        if (*ev) return cmd_evaluate(o, model_path, split_name);
        if (*size) return cmd_sweep(o, SweepAxis::train_fraction, fractions, "fractions");
        if (*width) return cmd_sweep(o, SweepAxis::width, widths, "widths");
        if (*ext) return cmd_extrapolate(o, ext_count, ext_seed, ext_fraction);
        if (*lam) return cmd_lambda_search(o, lambdas, lam_fraction);
        if (*rep) return cmd_report(runs_dir, report_out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nrun with --help for usage\n";
        return kUsageExit;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\nrun with --help for usage\n";
        return kUsageExit;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kUsageExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
