#pragma once

/**
 * @file nn.hpp
 * @brief Dense feed-forward network with exact backpropagation, Adam,
 *        plateau learning-rate reduction and early stopping.
 *
 * Batches are row-major in the sense of one sample per matrix row. Hidden
 * layers use ReLU (subgradient 0 at 0); the output layer is linear.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace hydronet::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  ///< out x in
    Eigen::VectorXd bias;    ///< out

    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.weight == b.weight && a.bias.size() == b.bias.size() && a.bias == b.bias;
    }
};

struct NetworkParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseLayer> layers;

    [[nodiscard]] std::size_t input_width() const { return layer_sizes.front(); }
    [[nodiscard]] std::size_t output_width() const { return layer_sizes.back(); }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Same layout as NetworkParams, holding dLoss/dParam.
using Gradients = NetworkParams;

/// He-normal weights (variance 2/fan_in), zero biases.
inline NetworkParams init_network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ShapeError("a network needs at least an input and an output width");
    for (auto w : layer_sizes) {
        if (w < 1) throw ShapeError("layer widths must be >= 1");
    }
    std::mt19937_64 rng(seed);
    NetworkParams p;
    p.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

inline Gradients zeros_like(const NetworkParams& p) {
    Gradients g;
    g.layer_sizes = p.layer_sizes;
    for (const auto& l : p.layers) {
        g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                            Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> layer_inputs;     ///< activation entering each layer
    std::vector<Eigen::MatrixXd> pre_activations;  ///< affine output of each layer
};

inline Eigen::MatrixXd forward(const NetworkParams& p, const Eigen::MatrixXd& inputs,
                               ForwardCache* cache = nullptr) {
    if (static_cast<std::size_t>(inputs.cols()) != p.input_width()) {
        throw ShapeError("forward: input width " + std::to_string(inputs.cols()) + " != " +
                         std::to_string(p.input_width()));
    }
    if (cache) {
        cache->layer_inputs.clear();
        cache->pre_activations.clear();
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        Eigen::MatrixXd z = a * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (cache) {
            cache->layer_inputs.push_back(a);
            cache->pre_activations.push_back(z);
        }
        if (l + 1 < p.layers.size()) {
            a = z.cwiseMax(0.0);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

/// Parameter gradients of sum_rows(output_grad . outputs).
inline Gradients backward(const NetworkParams& p, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
    if (cache.layer_inputs.size() != p.layers.size()) throw ShapeError("backward: cache does not match network");
    const auto& last = cache.pre_activations.back();
    if (output_grad.rows() != last.rows() || output_grad.cols() != last.cols()) {
        throw ShapeError("backward: output gradient shape mismatch");
    }
    Gradients g;
    g.layer_sizes = p.layer_sizes;
    g.layers.resize(p.layers.size());
    Eigen::MatrixXd dz = output_grad;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        g.layers[l].weight = dz.transpose() * cache.layer_inputs[l];
        g.layers[l].bias = dz.colwise().sum().transpose();
        if (l == 0) break;
        Eigen::MatrixXd da = dz * p.layers[l].weight;
        const auto& pre = cache.pre_activations[l - 1];
        dz = (pre.array() > 0.0).select(da, 0.0);
    }
    return g;
}

struct LossValue {
    double value{};
    Eigen::MatrixXd grad;  ///< d value / d prediction
};

inline LossValue mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("mse: shape mismatch");
    const double count = static_cast<double>(pred.size());
    Eigen::MatrixXd diff = pred - target;
    return {diff.squaredNorm() / count, (2.0 / count) * diff};
}

// ---------------------------------------------------------------------------
// Training configuration and optimizer

struct TrainConfig {
    double initial_lr{1e-3};
    double lr_factor{0.5};
    int lr_patience{10};
    double min_lr{1e-5};
    double plateau_threshold{1e-8};
    int early_stop_patience{20};
    int max_epochs{1000};
    int batch_size{0};  ///< 0 selects the architecture default
    std::uint64_t seed{0};

    void validate() const {
        if (lr_patience < 1 || early_stop_patience < 1) throw std::invalid_argument("patiences must be >= 1");
        if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw std::invalid_argument("lr_factor must lie in (0, 1)");
        if (!(initial_lr > 0.0) || !(min_lr > 0.0) || min_lr > initial_lr) {
            throw std::invalid_argument("learning rates must satisfy 0 < min_lr <= initial_lr");
        }
        if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
        if (batch_size < 0) throw std::invalid_argument("batch_size must be >= 0");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"initial_lr", c.initial_lr},       {"lr_factor", c.lr_factor},
            {"lr_patience", c.lr_patience},     {"min_lr", c.min_lr},
            {"plateau_threshold", c.plateau_threshold},
            {"early_stop_patience", c.early_stop_patience},
            {"max_epochs", c.max_epochs},       {"batch_size", c.batch_size},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.lr_patience = j.value("lr_patience", c.lr_patience);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    return c;
}

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    Gradients m;
    Gradients v;
    std::int64_t step{0};
    double lr{1e-3};

    static AdamState for_network(const NetworkParams& p, double lr) { return {zeros_like(p), zeros_like(p), 0, lr}; }
};

namespace detail {

inline void require_finite(const Gradients& g) {
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const bool ok = g.layers[l].weight.allFinite() && g.layers[l].bias.allFinite();
        if (!ok) {
            std::ostringstream msg;
            msg << "adam_step: non-finite gradient in layer " << l << " (|W| max "
                << g.layers[l].weight.cwiseAbs().maxCoeff() << ", |b| max " << g.layers[l].bias.cwiseAbs().maxCoeff()
                << ")";
            throw NonFiniteError(msg.str());
        }
    }
}

}  // namespace detail

/// One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
inline void adam_step(AdamState& state, NetworkParams& params, const Gradients& grads) {
    if (grads.layers.size() != params.layers.size()) throw ShapeError("adam_step: gradient layout mismatch");
    detail::require_finite(grads);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(AdamState::beta1, t);
    const double c2 = 1.0 - std::pow(AdamState::beta2, t);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        const auto& g = grads.layers[l];
        auto& m = state.m.layers[l];
        auto& v = state.v.layers[l];
        // param -= lr * mhat / (sqrt(vhat) + eps)
        m.weight = AdamState::beta1 * m.weight + (1.0 - AdamState::beta1) * g.weight;
        v.weight = AdamState::beta2 * v.weight + (1.0 - AdamState::beta2) * g.weight.cwiseProduct(g.weight);
        p.weight.array() -= state.lr * (m.weight.array() / c1) / ((v.weight.array() / c2).sqrt() + AdamState::epsilon);
        m.bias = AdamState::beta1 * m.bias + (1.0 - AdamState::beta1) * g.bias;
        v.bias = AdamState::beta2 * v.bias + (1.0 - AdamState::beta2) * g.bias.cwiseProduct(g.bias);
        p.bias.array() -= state.lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + AdamState::epsilon);
    }
}

/// Halves (by `lr_factor`) the learning rate after `lr_patience` epochs
/// without an improvement larger than `plateau_threshold`, floored at `min_lr`.
class PlateauScheduler {
public:
    explicit PlateauScheduler(const TrainConfig& config) : config_(config) {}

    double observe(double val_loss, double lr) {
        if (val_loss < best_ - config_.plateau_threshold) {
            best_ = val_loss;
            wait_ = 0;
            return lr;
        }
        if (++wait_ >= config_.lr_patience) {
            wait_ = 0;
            return std::max(lr * config_.lr_factor, config_.min_lr);
        }
        return lr;
    }

private:
    TrainConfig config_;
    double best_{std::numeric_limits<double>::infinity()};
    int wait_{0};
};

/// Replays a validation history through the scheduler and returns the final rate.
inline double reduce_lr_on_plateau(const std::vector<double>& val_history, const TrainConfig& config) {
    PlateauScheduler sched(config);
    double lr = config.initial_lr;
    for (double v : val_history) lr = sched.observe(v, lr);
    return lr;
}

class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Returns true when training should stop after this epoch.
    bool observe(double val_loss, int epoch) {
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch;
            wait_ = 0;
            return false;
        }
        return ++wait_ >= patience_;
    }

    [[nodiscard]] bool improved_at(int epoch) const { return best_epoch_ == epoch; }
    [[nodiscard]] int best_epoch() const { return best_epoch_; }
    [[nodiscard]] double best() const { return best_; }

private:
    int patience_;
    double best_{std::numeric_limits<double>::infinity()};
    int best_epoch_{-1};
    int wait_{0};
};

struct EarlyStopDecision {
    bool stop{false};
    int stop_epoch{-1};  ///< epoch after which training stopped, -1 if it never did
    int best_epoch{-1};
};

inline EarlyStopDecision early_stop(const std::vector<double>& val_history, int patience) {
    EarlyStopping es(patience);
    for (std::size_t e = 0; e < val_history.size(); ++e) {
        if (es.observe(val_history[e], static_cast<int>(e))) {
            return {true, static_cast<int>(e), es.best_epoch()};
        }
    }
    return {false, -1, es.best_epoch()};
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const NetworkParams& p) {
    nlohmann::json j;
    j["layer_sizes"] = p.layer_sizes;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (const auto& l : p.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        j["weights"].push_back(w);
        j["biases"].push_back(std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size()));
    }
    return j;
}

inline NetworkParams network_from_json(const nlohmann::json& j) {
    NetworkParams p;
    p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() + 1 != p.layer_sizes.size() || bs.size() != ws.size()) {
        throw ShapeError("checkpoint layer count does not match layer_sizes");
    }
    for (std::size_t l = 0; l < ws.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(p.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(p.layer_sizes[l + 1]);
        const auto w = ws[l].get<std::vector<double>>();
        const auto b = bs[l].get<std::vector<double>>();
        if (w.size() != static_cast<std::size_t>(in * out) || b.size() != static_cast<std::size_t>(out)) {
            throw ShapeError("checkpoint layer " + std::to_string(l) + " has wrong size");
        }
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
        for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = b[static_cast<std::size_t>(r)];
        p.layers.push_back(std::move(layer));
    }
    return p;
}

}  // namespace hydronet::nn
