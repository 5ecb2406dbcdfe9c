#pragma once

/**
 * @file physics_losses.hpp
 * @brief Physical loss terms on predicted depths and their analytic
 *        gradients, plus the lambda-weighted composition with the data term.
 *
 * Predictions arrive as a (batch x outputs) matrix in metres: one column for
 * the pointwise architectures, one column per station for whole-profile
 * prediction. Each row carries its own SampleAux (scenario and spacing).
 *
 * Non-positive or tiny predicted depths are evaluated at `depth_floor`, and
 * the derivative at the floor is used in their place. The number of such
 * entries is reported with every term.
 */

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydronet/dataset.hpp"
#include "hydronet/hydraulics.hpp"

namespace hydronet {

enum class Strategy { dd, en, fr, vol, bc, pde };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::dd: return "dd";
        case Strategy::en: return "en";
        case Strategy::fr: return "fr";
        case Strategy::vol: return "vol";
        case Strategy::bc: return "bc";
        case Strategy::pde: return "pde";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& name) {
    if (name == "dd") return Strategy::dd;
    if (name == "en") return Strategy::en;
    if (name == "fr") return Strategy::fr;
    if (name == "vol") return Strategy::vol;
    if (name == "bc") return Strategy::bc;
    if (name == "pde") return Strategy::pde;
    throw std::invalid_argument("unknown training strategy '" + name + "' (expected dd|en|fr|vol|bc|pde)");
}

/// Strategies whose term needs the whole predicted profile.
inline bool needs_full_profile(Strategy s) {
    return s == Strategy::vol || s == Strategy::bc || s == Strategy::pde;
}

struct PhysicsOptions {
    double depth_floor{1e-3};
    /// Use the signed volume difference and the unsquared residual sum
    /// instead of |.| and the mean squared residual.
    bool literal_forms{false};
};

struct PhysicsTerm {
    double value{};
    Eigen::MatrixXd grad;  ///< d value / d prediction
    std::size_t clamped{0};
};

namespace detail {

struct Floored {
    double h;
    bool clamped;
};

inline Floored floor_depth(double h, double floor) {
    if (!(h >= floor)) return {floor, true};  // also catches NaN
    return {h, false};
}

inline void require_aux(const Eigen::MatrixXd& pred, const std::vector<SampleAux>& aux) {
    if (static_cast<std::size_t>(pred.rows()) != aux.size()) {
        throw std::invalid_argument("physics loss: aux count does not match batch size");
    }
}

inline void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(who) + ": prediction/target shape mismatch");
    }
}

/// Mean over every entry of (f(pred) - f(true))^2 for a pointwise quantity f.
template <class F, class DF>
PhysicsTerm pointwise_quantity_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                    const std::vector<SampleAux>& aux, const PhysicsOptions& opt, F&& f,
                                    DF&& df) {
    require_same_shape(pred, target, "physics loss");
    require_aux(pred, aux);
    PhysicsTerm out{0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols()), 0};
    const double count = static_cast<double>(pred.size());
    double sum = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        const auto& sc = aux[static_cast<std::size_t>(r)].scenario;
        for (Eigen::Index c = 0; c < pred.cols(); ++c) {
            const auto h = floor_depth(pred(r, c), opt.depth_floor);
            out.clamped += h.clamped ? 1 : 0;
            const double diff = f(h.h, sc) - f(target(r, c), sc);
            sum += diff * diff;
            out.grad(r, c) = 2.0 * diff * df(h.h, sc) / count;
        }
    }
    out.value = sum / count;
    return out;
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

/// Mean squared specific-energy mismatch.
inline PhysicsTerm loss_en(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                           const std::vector<SampleAux>& aux, const PhysicsOptions& opt = {}) {
    return detail::pointwise_quantity_loss(
        pred, target, aux, opt, [](double h, const ChannelScenario& sc) { return specific_energy(h, sc); },
        [](double h, const ChannelScenario& sc) { return specific_energy_derivative(h, sc); });
}

/// Mean squared Froude-number mismatch.
inline PhysicsTerm loss_fr(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                           const std::vector<SampleAux>& aux, const PhysicsOptions& opt = {}) {
    return detail::pointwise_quantity_loss(
        pred, target, aux, opt, [](double h, const ChannelScenario& sc) { return froude(h, sc); },
        [](double h, const ChannelScenario& sc) { return froude_derivative(h, sc); });
}

/// Per-profile |sum(pred) - sum(true)|, averaged over the batch.
inline PhysicsTerm loss_vol(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                            const PhysicsOptions& opt = {}) {
    detail::require_same_shape(pred, target, "loss_vol");
    PhysicsTerm out{0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols()), 0};
    if (pred.rows() == 0) return out;
    const double batch = static_cast<double>(pred.rows());
    double sum = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        const double d = pred.row(r).sum() - target.row(r).sum();
        if (opt.literal_forms) {
            sum += d;
            out.grad.row(r).setConstant(1.0 / batch);
        } else {
            sum += std::abs(d);
            out.grad.row(r).setConstant(detail::sign(d) / batch);
        }
    }
    out.value = sum / batch;
    return out;
}

/// Absolute error at the dam station, averaged over the batch.
inline PhysicsTerm loss_bc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    detail::require_same_shape(pred, target, "loss_bc");
    PhysicsTerm out{0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols()), 0};
    if (pred.rows() == 0 || pred.cols() == 0) return out;
    const double batch = static_cast<double>(pred.rows());
    double sum = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        const double d = pred(r, 0) - target(r, 0);
        sum += std::abs(d);
        out.grad(r, 0) = detail::sign(d) / batch;
    }
    out.value = sum / batch;
    return out;
}

/// Energy-equation residual at interior stations, x increasing upstream:
///   r_i = (E(h_{i+1}) - E(h_{i-1})) / (2 dx) + s - J(h_i)
/// Default value is mean(r_i^2) per profile; literal form is sum(r_i).
/// Both are averaged over the batch.
inline PhysicsTerm loss_pde(const Eigen::MatrixXd& pred, const std::vector<SampleAux>& aux,
                            const PhysicsOptions& opt = {}) {
    detail::require_aux(pred, aux);
    const Eigen::Index n = pred.cols();
    if (n < 3) throw std::invalid_argument("loss_pde: needs at least three stations");
    PhysicsTerm out{0.0, Eigen::MatrixXd::Zero(pred.rows(), n), 0};
    if (pred.rows() == 0) return out;
    const double batch = static_cast<double>(pred.rows());
    const double interior = static_cast<double>(n - 2);

    std::vector<double> h(static_cast<std::size_t>(n));
    std::vector<double> e(static_cast<std::size_t>(n));
    std::vector<double> de(static_cast<std::size_t>(n));
    double total = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        const auto& a = aux[static_cast<std::size_t>(r)];
        const auto& sc = a.scenario;
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto f = detail::floor_depth(pred(r, k), opt.depth_floor);
            out.clamped += f.clamped ? 1 : 0;
            const auto ku = static_cast<std::size_t>(k);
            h[ku] = f.h;
            e[ku] = specific_energy(f.h, sc);
            de[ku] = specific_energy_derivative(f.h, sc);
        }
        double row = 0.0;
        for (Eigen::Index i = 1; i + 1 < n; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const double res = (e[iu + 1] - e[iu - 1]) / (2.0 * a.dx) + sc.s - friction_slope(h[iu], sc);
            // d value / d res, before the batch average
            const double w = opt.literal_forms ? 1.0 : 2.0 * res / interior;
            row += opt.literal_forms ? res : res * res / interior;
            out.grad(r, i + 1) += w * de[iu + 1] / (2.0 * a.dx) / batch;
            out.grad(r, i - 1) -= w * de[iu - 1] / (2.0 * a.dx) / batch;
            out.grad(r, i) -= w * friction_slope_derivative(h[iu], sc) / batch;
        }
        total += row;
    }
    out.value = total / batch;
    return out;
}

/// Dispatches to the term for `strategy`; DD has no physics term.
inline PhysicsTerm physics_term(Strategy strategy, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                const std::vector<SampleAux>& aux, const PhysicsOptions& opt = {}) {
    switch (strategy) {
        case Strategy::dd: return {0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols()), 0};
        case Strategy::en: return loss_en(pred, target, aux, opt);
        case Strategy::fr: return loss_fr(pred, target, aux, opt);
        case Strategy::vol: return loss_vol(pred, target, opt);
        case Strategy::bc: return loss_bc(pred, target);
        case Strategy::pde: return loss_pde(pred, aux, opt);
    }
    throw std::logic_error("unhandled strategy");
}

struct LossBreakdown {
    double data_term{};
    double physics_term{};
    double combined{};
    double lambda{1.0};
    Strategy strategy{Strategy::dd};
};

inline void require_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
}

/// combined = lambda * data + (1 - lambda) * physics. At lambda = 1 (and for
/// DD) the physics term is dropped entirely, so the result is the data term
/// bit for bit.
inline LossBreakdown combine(double data_term, double physics, double lambda, Strategy strategy = Strategy::en) {
    require_lambda(lambda);
    if (strategy == Strategy::dd) return {data_term, 0.0, data_term, 1.0, Strategy::dd};
    const double combined = lambda == 1.0 ? data_term : lambda * data_term + (1.0 - lambda) * physics;
    return {data_term, physics, combined, lambda, strategy};
}

/// Gradient counterpart of combine().
inline Eigen::MatrixXd combine_gradients(const Eigen::MatrixXd& data_grad, const Eigen::MatrixXd& physics_grad,
                                         double lambda, Strategy strategy) {
    require_lambda(lambda);
    if (strategy == Strategy::dd || lambda == 1.0) return data_grad;
    return lambda * data_grad + (1.0 - lambda) * physics_grad;
}

}  // namespace hydronet
