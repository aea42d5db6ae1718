#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ddl::optim {

struct OuterOptConfig {
    double lr = 0.7;
    double momentum = 0.9;
    bool nesterov = true;
};

/// SGD with Nesterov momentum over outer gradients, one instance per
/// fragment. Recurrence: v <- mu*v + delta; update = nesterov ? mu*v + delta
/// : v; theta <- theta_prev - lr*update.
class OuterOpt {
  public:
    OuterOpt() = default;
    OuterOpt(OuterOptConfig cfg, std::size_t dim);

    std::vector<double> step(std::span<const double> theta_prev, std::span<const double> delta);

    const OuterOptConfig& config() const { return cfg_; }
    std::span<const double> momentum_state() const { return velocity_; }
    void restore_momentum(std::span<const double> v);

  private:
    OuterOptConfig cfg_;
    std::vector<double> velocity_;
};

enum class InnerKind { kSgd, kAdamW };

struct InnerOptConfig {
    InnerKind kind = InnerKind::kAdamW;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Plain SGD or AdamW with decoupled weight decay and bias correction.
class InnerOpt {
  public:
    InnerOpt() = default;
    InnerOpt(InnerOptConfig cfg, std::size_t dim);

    void step(std::span<double> theta, std::span<const double> grad);

    const InnerOptConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return step_count_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }
    void restore(std::span<const double> m, std::span<const double> v, std::uint64_t step_count);

  private:
    InnerOptConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t step_count_ = 0;
};

/// alpha*local + (1-alpha)*global. alpha = 0 is a pure overwrite and copies
/// the global values bit-exactly.
std::vector<double> apply_received_fragment(std::span<const double> theta_local,
                                            std::span<const double> theta_global, double alpha);

}  // namespace ddl::optim
