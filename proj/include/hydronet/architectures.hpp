#pragma once

/**
 * @file architectures.hpp
 * @brief The three surrogate shapes and their training loop.
 *
 *  - SP  (single point):  [x, s, b, n, zd, Q]   -> h(x)
 *  - INT (integrator):    [h_i, s, b, n, zd, Q] -> h_{i+1}, applied recursively
 *                         upstream from the weir stage
 *  - VTS (vector to seq): [s, b, n, zd, Q]      -> whole profile
 *
 * INT is trained on true adjacent pairs and reconstructed closed-loop.
 */

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydronet/dataset.hpp"
#include "hydronet/hydraulics.hpp"
#include "hydronet/nn.hpp"
#include "hydronet/physics_losses.hpp"
#include "hydronet/profile_solver.hpp"

namespace hydronet {

enum class Architecture { sp, integrator, vts };

inline const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::sp: return "sp";
        case Architecture::integrator: return "int";
        case Architecture::vts: return "vts";
    }
    return "?";
}

inline Architecture architecture_from_string(const std::string& name) {
    if (name == "sp") return Architecture::sp;
    if (name == "int") return Architecture::integrator;
    if (name == "vts") return Architecture::vts;
    throw std::invalid_argument("unknown architecture '" + name + "' (expected sp|int|vts)");
}

struct ModelSpec {
    Architecture arch{Architecture::sp};
    int hidden_layers{3};
    int width{30};
    Strategy strategy{Strategy::dd};
    double lambda{1.0};

    static int default_width(Architecture a) { return a == Architecture::vts ? 40 : 30; }

    void validate() const {
        if (needs_full_profile(strategy) && arch != Architecture::vts) {
            throw std::invalid_argument(std::string("strategy ") + to_string(strategy) +
                                        " needs whole-profile predictions and is only valid with vts");
        }
        if (hidden_layers < 1) throw std::invalid_argument("hidden_layers must be >= 1");
        if (width < 1) throw std::invalid_argument("width must be >= 1");
        require_lambda(lambda);
    }

    [[nodiscard]] std::size_t input_width() const { return arch == Architecture::vts ? 5 : 6; }

    [[nodiscard]] std::size_t output_width(const GridSpec& grid) const {
        return arch == Architecture::vts ? grid.n_points : 1;
    }

    [[nodiscard]] std::vector<std::size_t> layer_sizes(const GridSpec& grid) const {
        std::vector<std::size_t> sizes{input_width()};
        for (int i = 0; i < hidden_layers; ++i) sizes.push_back(static_cast<std::size_t>(width));
        sizes.push_back(output_width(grid));
        return sizes;
    }

    /// Effective lambda: DD always trains on the data term alone.
    [[nodiscard]] double effective_lambda() const { return strategy == Strategy::dd ? 1.0 : lambda; }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct EpochRecord {
    int epoch{};
    double train_loss{};
    double val_loss{};
    double lr{};

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Affine map from raw network output to depth in metres:
///   h = offset + scale * y            (SP, VTS)
///   h = h_in + scale * y              (INT, h_in is the incoming depth)
/// SP and VTS use the training depth mean and spread; INT uses the spread of
/// the true one-station increments, so it learns a normalized increment.
struct OutputMap {
    double offset{0.0};
    double scale{1.0};
    bool residual{false};

    friend bool operator==(const OutputMap&, const OutputMap&) = default;
};

struct TrainedModel {
    ModelSpec spec;
    nn::NetworkParams params;
    FeatureScaler scaler;
    OutputMap output;
    GridSpec grid;
    nn::TrainConfig config;
    std::vector<EpochRecord> history;
    int best_epoch{-1};
    std::size_t clamp_events{0};  ///< clamped depths seen by physics terms during training
    bool diverged{false};
    std::string diagnostics;

    [[nodiscard]] std::vector<std::vector<double>> predict_many(const std::vector<ChannelScenario>& scenarios,
                                                                const GridSpec& grid) const;
};

/// Training and validation rows for an architecture.
inline SampleBatch make_view(Architecture arch, const ProfileDataset& ds, const std::vector<std::size_t>& ids) {
    switch (arch) {
        case Architecture::sp: return view_sp(ds, ids);
        case Architecture::integrator: return view_int(ds, ids);
        case Architecture::vts: return view_vts(ds, ids);
    }
    throw std::logic_error("unhandled architecture");
}

inline int default_batch_size(Architecture arch) { return arch == Architecture::vts ? 32 : 256; }

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

inline OutputMap fit_output_map(Architecture arch, const FeatureScaler& scaler, const SampleBatch& train_rows) {
    const auto h = static_cast<std::size_t>(Feature::h);
    if (arch != Architecture::integrator) return {scaler.mean[h], scaler.stddev[h], false};
    const auto n = train_rows.targets.rows();
    Eigen::ArrayXd inc(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        inc(r) = train_rows.targets(r, 0) - scaler.unscale(Feature::h, train_rows.inputs(r, 0));
    }
    const double spread = n > 0 ? std::sqrt((inc - inc.mean()).square().mean()) : 0.0;
    if (!(spread > 0.0)) throw ConfigError("integrator: training increments have zero spread");
    return {0.0, spread, true};
}

inline Eigen::MatrixXd depths_from_output(const OutputMap& map, const FeatureScaler& scaler,
                                          const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& raw) {
    Eigen::MatrixXd out = raw * map.scale;
    if (map.residual) {
        const auto h = static_cast<std::size_t>(Feature::h);
        out.col(0).array() += inputs.col(0).array() * scaler.stddev[h] + scaler.mean[h];
    } else {
        out.array() += map.offset;
    }
    return out;
}

/// Depth predictions in metres for prepared input rows.
inline Eigen::MatrixXd predict_depths(const OutputMap& map, const nn::NetworkParams& params,
                                      const FeatureScaler& scaler, const Eigen::MatrixXd& inputs,
                                      nn::ForwardCache* cache = nullptr) {
    return depths_from_output(map, scaler, inputs, nn::forward(params, inputs, cache));
}

struct BatchStep {
    LossBreakdown loss;
    nn::Gradients grads;
    std::size_t clamped{0};
};

/// Loss and parameter gradients of one minibatch under the model's strategy.
inline BatchStep batch_loss_and_gradients(const ModelSpec& spec, const nn::NetworkParams& params,
                                          const FeatureScaler& scaler, const OutputMap& map,
                                          const SampleBatch& batch, const PhysicsOptions& physics = {}) {
    nn::ForwardCache cache;
    const Eigen::MatrixXd pred = predict_depths(map, params, scaler, batch.inputs, &cache);
    const double out_scale = map.scale;
    const auto data = nn::mse(pred, batch.targets);
    const double lambda = spec.effective_lambda();
    if (spec.strategy == Strategy::dd) {
        return {combine(data.value, 0.0, 1.0, Strategy::dd), nn::backward(params, cache, data.grad * out_scale), 0};
    }
    const auto phys = physics_term(spec.strategy, pred, batch.targets, batch.aux, physics);
    const Eigen::MatrixXd grad = combine_gradients(data.grad, phys.grad, lambda, spec.strategy) * out_scale;
    return {combine(data.value, phys.value, lambda, spec.strategy), nn::backward(params, cache, grad), phys.clamped};
}

/// Output-layer weights start at this fraction of their initial draw, so the
/// first predictions sit close to the mean training depth.
inline constexpr double kOutputInitScale = 0.1;

/// Minimizes lambda * MSE + (1 - lambda) * physics with Adam over shuffled
/// minibatches. Validation loss is the data MSE on the validation split; the
/// returned parameters are those of the best validation epoch.
inline TrainedModel train(const ModelSpec& spec, const ProfileDataset& ds, const nn::TrainConfig& config,
                          const PhysicsOptions& physics = {}) {
    spec.validate();
    config.validate();
    const GridSpec grid = ds.manifest.grid;
    const auto train_ids = ds.indices(Split::train);
    const auto val_ids = ds.indices(Split::val);
    if (train_ids.empty()) throw ConfigError("train: dataset has no training profiles");

    const SampleBatch train_rows = make_view(spec.arch, ds, train_ids);
    const std::optional<SampleBatch> val_rows =
        val_ids.empty() ? std::nullopt : std::optional<SampleBatch>(make_view(spec.arch, ds, val_ids));

    TrainedModel model;
    model.spec = spec;
    model.scaler = ds.scaler;
    model.grid = grid;
    model.config = config;
    model.output = fit_output_map(spec.arch, ds.scaler, train_rows);
    model.params = nn::init_network(spec.layer_sizes(grid), detail::mix_seed(config.seed, 0));
    model.params.layers.back().weight *= kOutputInitScale;

    const std::size_t n_rows = static_cast<std::size_t>(train_rows.size());
    const std::size_t batch_size = static_cast<std::size_t>(config.batch_size > 0 ? config.batch_size
                                                                                  : default_batch_size(spec.arch));
    auto adam = nn::AdamState::for_network(model.params, config.initial_lr);
    nn::PlateauScheduler plateau(config);
    nn::EarlyStopping stopper(config.early_stop_patience);
    nn::NetworkParams best = model.params;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto order = shuffled_order(n_rows, detail::mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
        double weighted = 0.0;
        bool failed = false;
        for (std::size_t start = 0; start < n_rows; start += batch_size) {
            const std::size_t stop = std::min(n_rows, start + batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(stop));
            const SampleBatch batch = train_rows.rows(idx);
            auto step = batch_loss_and_gradients(spec, model.params, model.scaler, model.output, batch, physics);
            model.clamp_events += step.clamped;
            if (!std::isfinite(step.loss.combined)) {
                std::ostringstream msg;
                msg << "non-finite training loss at epoch " << epoch << ", batch starting at row " << start
                    << " (data " << step.loss.data_term << ", physics " << step.loss.physics_term << ")";
                model.diagnostics = msg.str();
                failed = true;
                break;
            }
            try {
                nn::adam_step(adam, model.params, step.grads);
            } catch (const nn::NonFiniteError& e) {
                model.diagnostics = "epoch " + std::to_string(epoch) + ": " + e.what();
                failed = true;
                break;
            }
            weighted += step.loss.combined * static_cast<double>(stop - start);
        }
        if (failed) {
            model.diverged = true;
            break;
        }
        const double train_loss = weighted / static_cast<double>(n_rows);
        const double val_loss = val_rows ? nn::mse(predict_depths(model.output, model.params, model.scaler, val_rows->inputs), val_rows->targets).value
                                         : train_loss;
        model.history.push_back({epoch, train_loss, val_loss, adam.lr});
        if (!std::isfinite(val_loss)) {
            model.diverged = true;
            model.diagnostics = "non-finite validation loss at epoch " + std::to_string(epoch);
            break;
        }
        const bool stop = stopper.observe(val_loss, epoch);
        if (stopper.improved_at(epoch)) best = model.params;
        adam.lr = plateau.observe(val_loss, adam.lr);
        if (stop) break;
    }
    model.params = std::move(best);
    model.best_epoch = stopper.best_epoch();
    return model;
}

// ---------------------------------------------------------------------------
// Reconstruction

inline std::vector<double> reconstruct_sp(const TrainedModel& model, const ChannelScenario& sc, const GridSpec& grid) {
    if (model.spec.arch != Architecture::sp) throw std::invalid_argument("reconstruct_sp: model is not SP");
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(grid.n_points), 6);
    for (std::size_t k = 0; k < grid.n_points; ++k) {
        rows.row(static_cast<Eigen::Index>(k)) = sp_features(grid.station(k), sc, model.scaler);
    }
    const Eigen::MatrixXd out = predict_depths(model.output, model.params, model.scaler, rows);
    return {out.data(), out.data() + out.size()};
}

/// Recursive upstream application of a one-step map, seeded with the weir
/// stage. `step(h, scenario)` returns the depth one station upstream.
template <class Stepper>
std::vector<double> reconstruct_closed_loop(Stepper&& step, const ChannelScenario& sc, const GridSpec& grid) {
    std::vector<double> h(grid.n_points);
    h[0] = weir_depth(sc);
    for (std::size_t k = 1; k < grid.n_points; ++k) h[k] = step(h[k - 1], sc);
    return h;
}

inline constexpr double kReconstructionDepthFloor = 1e-3;

inline std::vector<double> reconstruct_int(const TrainedModel& model, const ChannelScenario& sc, const GridSpec& grid,
                                           std::size_t* clamped = nullptr) {
    if (model.spec.arch != Architecture::integrator) throw std::invalid_argument("reconstruct_int: model is not INT");
    if (grid.dx != model.grid.dx) throw std::invalid_argument("reconstruct_int: spacing differs from training grid");
    return reconstruct_closed_loop(
        [&](double h, const ChannelScenario& s) {
            Eigen::MatrixXd row = int_features(h, s, model.scaler);
            double next = predict_depths(model.output, model.params, model.scaler, row)(0, 0);
            if (!(next > kReconstructionDepthFloor)) {
                next = kReconstructionDepthFloor;
                if (clamped) ++*clamped;
            }
            return next;
        },
        sc, grid);
}

inline std::vector<double> reconstruct_vts(const TrainedModel& model, const ChannelScenario& sc, const GridSpec& grid) {
    if (model.spec.arch != Architecture::vts) throw std::invalid_argument("reconstruct_vts: model is not VTS");
    if (!(grid == model.grid)) throw std::invalid_argument("reconstruct_vts: requested grid differs from training grid");
    Eigen::MatrixXd row = vts_features(sc, model.scaler);
    const Eigen::MatrixXd out = predict_depths(model.output, model.params, model.scaler, row);
    return {out.data(), out.data() + out.size()};
}

/// Batched reconstruction; rows of the result follow `scenarios`.
inline std::vector<std::vector<double>> TrainedModel::predict_many(const std::vector<ChannelScenario>& scenarios,
                                                                   const GridSpec& g) const {
    std::vector<std::vector<double>> out(scenarios.size());
    const auto count = static_cast<Eigen::Index>(scenarios.size());
    if (count == 0) return out;
    switch (spec.arch) {
        case Architecture::sp: {
            const auto n = static_cast<Eigen::Index>(g.n_points);
            Eigen::MatrixXd rows(count * n, 6);
            for (Eigen::Index r = 0; r < count; ++r)
                for (Eigen::Index k = 0; k < n; ++k)
                    rows.row(r * n + k) = sp_features(g.station(static_cast<std::size_t>(k)),
                                                      scenarios[static_cast<std::size_t>(r)], scaler);
            const Eigen::MatrixXd pred = predict_depths(output, params, scaler, rows);
            for (Eigen::Index r = 0; r < count; ++r) {
                out[static_cast<std::size_t>(r)].assign(pred.data() + r * n, pred.data() + (r + 1) * n);
            }
            break;
        }
        case Architecture::integrator: {
            if (g.dx != grid.dx) throw std::invalid_argument("reconstruct_int: spacing differs from training grid");
            Eigen::MatrixXd rows(count, 6);
            for (Eigen::Index r = 0; r < count; ++r) {
                const auto& sc = scenarios[static_cast<std::size_t>(r)];
                out[static_cast<std::size_t>(r)].resize(g.n_points);
                out[static_cast<std::size_t>(r)][0] = weir_depth(sc);
                rows.row(r) = int_features(out[static_cast<std::size_t>(r)][0], sc, scaler);
            }
            for (std::size_t k = 1; k < g.n_points; ++k) {
                const Eigen::MatrixXd pred = predict_depths(output, params, scaler, rows);
                for (Eigen::Index r = 0; r < count; ++r) {
                    double next = pred(r, 0);
                    if (!(next > kReconstructionDepthFloor)) next = kReconstructionDepthFloor;
                    out[static_cast<std::size_t>(r)][k] = next;
                    rows(r, 0) = scaler.scale(Feature::h, next);
                }
            }
            break;
        }
        case Architecture::vts: {
            if (!(g == grid)) throw std::invalid_argument("reconstruct_vts: requested grid differs from training grid");
            Eigen::MatrixXd rows(count, 5);
            for (Eigen::Index r = 0; r < count; ++r) rows.row(r) = vts_features(scenarios[static_cast<std::size_t>(r)], scaler);
            const Eigen::MatrixXd pred = predict_depths(output, params, scaler, rows);
            for (Eigen::Index r = 0; r < count; ++r) {
                auto& v = out[static_cast<std::size_t>(r)];
                v.resize(static_cast<std::size_t>(pred.cols()));
                for (Eigen::Index k = 0; k < pred.cols(); ++k) v[static_cast<std::size_t>(k)] = pred(r, k);
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints and history

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json to_json(const ModelSpec& s) {
    return {{"arch", to_string(s.arch)},
            {"hidden_layers", s.hidden_layers},
            {"width", s.width},
            {"strategy", to_string(s.strategy)},
            {"lambda", s.lambda}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.arch = architecture_from_string(j.at("arch").get<std::string>());
    s.hidden_layers = j.at("hidden_layers").get<int>();
    s.width = j.at("width").get<int>();
    s.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    s.lambda = j.at("lambda").get<double>();
    return s;
}

inline nlohmann::json checkpoint_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["spec"] = to_json(m.spec);
    j["network"] = nn::to_json(m.params);
    j["layer_sizes"] = m.params.layer_sizes;
    j["scaler"] = to_json(m.scaler);
    j["output_map"] = {{"offset", m.output.offset}, {"scale", m.output.scale}, {"residual", m.output.residual}};
    j["grid"] = {{"dx", m.grid.dx}, {"length", m.grid.length}, {"n_points", m.grid.n_points}};
    j["config"] = nn::to_json(m.config);
    j["best_epoch"] = m.best_epoch;
    j["clamp_events"] = m.clamp_events;
    j["diverged"] = m.diverged;
    j["diagnostics"] = m.diagnostics;
    return j;
}

inline TrainedModel model_from_checkpoint(const nlohmann::json& j) {
    if (j.value("format_version", -1) != kCheckpointFormatVersion) {
        throw std::runtime_error("unsupported checkpoint format version");
    }
    TrainedModel m;
    m.spec = model_spec_from_json(j.at("spec"));
    m.params = nn::network_from_json(j.at("network"));
    m.scaler = scaler_from_json(j.at("scaler"));
    const auto& om = j.at("output_map");
    m.output = {om.at("offset").get<double>(), om.at("scale").get<double>(), om.at("residual").get<bool>()};
    const auto& g = j.at("grid");
    m.grid = GridSpec{g.at("dx").get<double>(), g.at("length").get<double>(), g.at("n_points").get<std::size_t>()};
    m.config = nn::train_config_from_json(j.at("config"));
    m.best_epoch = j.value("best_epoch", -1);
    m.clamp_events = j.value("clamp_events", std::size_t{0});
    m.diverged = j.value("diverged", false);
    m.diagnostics = j.value("diagnostics", std::string{});
    return m;
}

inline void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
    write_file(path, checkpoint_json(m).dump() + "\n");
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
    return model_from_checkpoint(nlohmann::json::parse(read_file(path)));
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os << std::setprecision(17) << "epoch,train_loss,val_loss,lr\n";
    for (const auto& e : history) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
    return os.str();
}

}  // namespace hydronet
