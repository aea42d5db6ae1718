#include "ddl/optim/optimizers.hpp"

#include <cmath>

#include "ddl/errors.hpp"

namespace ddl::optim {

OuterOpt::OuterOpt(OuterOptConfig cfg, std::size_t dim) : cfg_(cfg), velocity_(dim, 0.0) {
    if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0)
        throw ConfigError("outer momentum must satisfy 0 <= mu < 1");
}

std::vector<double> OuterOpt::step(std::span<const double> theta_prev,
                                   std::span<const double> delta) {
    if (theta_prev.size() != velocity_.size() || delta.size() != velocity_.size())
        throw DimensionError("outer step operand length mismatch");
    std::vector<double> theta(theta_prev.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity_[i] = cfg_.momentum * velocity_[i] + delta[i];
        double update = cfg_.nesterov ? cfg_.momentum * velocity_[i] + delta[i] : velocity_[i];
        theta[i] = theta_prev[i] - cfg_.lr * update;
    }
    return theta;
}

void OuterOpt::restore_momentum(std::span<const double> v) {
    if (v.size() != velocity_.size()) throw DimensionError("momentum restore length mismatch");
    velocity_.assign(v.begin(), v.end());
}

InnerOpt::InnerOpt(InnerOptConfig cfg, std::size_t dim) : cfg_(cfg) {
    if (cfg_.kind == InnerKind::kAdamW) {
        m_.assign(dim, 0.0);
        v_.assign(dim, 0.0);
    }
}

void InnerOpt::step(std::span<double> theta, std::span<const double> grad) {
    if (theta.size() != grad.size()) throw DimensionError("inner step operand length mismatch");
    if (cfg_.kind == InnerKind::kSgd) {
        ++step_count_;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            double g = grad[i] + cfg_.weight_decay * theta[i];
            theta[i] -= cfg_.lr * g;
        }
        return;
    }
    if (m_.size() != theta.size()) throw DimensionError("adamw state length mismatch");
    ++step_count_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double g = grad[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m_[i] / bc1;
        double vhat = v_[i] / bc2;
        theta[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[i]);
    }
}

void InnerOpt::restore(std::span<const double> m, std::span<const double> v,
                       std::uint64_t step_count) {
    if (cfg_.kind == InnerKind::kAdamW) {
        if (m.size() != m_.size() || v.size() != v_.size())
            throw DimensionError("adamw restore length mismatch");
        m_.assign(m.begin(), m.end());
        v_.assign(v.begin(), v.end());
    }
    step_count_ = step_count;
}

std::vector<double> apply_received_fragment(std::span<const double> theta_local,
                                            std::span<const double> theta_global, double alpha) {
    if (theta_local.size() != theta_global.size())
        throw DimensionError("interpolation operand length mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("interpolation alpha must be in [0, 1]");
    if (alpha == 0.0) return std::vector<double>(theta_global.begin(), theta_global.end());
    if (alpha == 1.0) return std::vector<double>(theta_local.begin(), theta_local.end());
    std::vector<double> out(theta_local.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = alpha * theta_local[i] + (1.0 - alpha) * theta_global[i];
    return out;
}

}  // namespace ddl::optim
