#pragma once

#include <functional>
#include <vector>

#include "tram/nn/autograd.hpp"

namespace tram::nn {

struct RAdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Rectified Adam. While the approximated SMA length rho_t is at most 4 the
/// update is plain bias-corrected momentum; afterwards the adaptive step is
/// scaled by the variance rectification term.
class RAdam {
 public:
  RAdam(std::vector<Parameter*> params, RAdamConfig config = {});

  /// Applies one update from the current gradients. Throws std::runtime_error
  /// on non-finite gradients, leaving parameters untouched.
  void step();
  void zero_grad();

  [[nodiscard]] long steps() const { return t_; }
  [[nodiscard]] const RAdamConfig& config() const { return config_; }
  /// rho_t for the given step count.
  [[nodiscard]] double sma_length(long t) const;

 private:
  std::vector<Parameter*> params_;
  RAdamConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Largest per-coordinate relative error between analytic and central
/// difference gradients of f at theta. The denominator is
/// max(|numeric_i|, 1e-3 * max_j |numeric_j|, 1e-12) so that coordinates whose
/// true derivative is ~0 do not dominate.
[[nodiscard]] double grad_check(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& analytic,
                                const std::vector<double>& theta, double h = 1e-5);

/// Convenience wrapper: builds the loss with `loss_fn`, backpropagates, and
/// compares parameter gradients to central differences.
[[nodiscard]] double grad_check_parameters(const std::function<Var()>& loss_fn,
                                           const std::vector<Parameter*>& params, double h = 1e-5);

}  // namespace tram::nn
