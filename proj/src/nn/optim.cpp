#include "tram/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tram::nn {

RAdam::RAdam(std::vector<Parameter*> params, RAdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value().size(), 0.0);
    v_.emplace_back(p->value().size(), 0.0);
  }
}

double RAdam::sma_length(long t) const {
  const double b2 = config_.beta2;
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double b2t = std::pow(b2, static_cast<double>(t));
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

void RAdam::step() {
  for (auto* p : params_) {
    if (!p->grad().all_finite()) throw std::runtime_error("RAdam: non-finite gradient in " + p->name);
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double t = static_cast<double>(t_);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = sma_length(t_);
  const bool rectified = rho_t > 4.0;
  double rect = 0.0;
  if (rectified) {
    rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                     ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i]->value().data();
    const auto g = params_[i]->grad().data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      if (rectified) {
        const double v_hat = std::sqrt(v[j] / bias2);
        w[j] -= config_.lr * rect * m_hat / (v_hat + config_.eps);
      } else {
        w[j] -= config_.lr * m_hat;
      }
    }
  }
}

void RAdam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& analytic, const std::vector<double>& theta, double h) {
  if (analytic.size() != theta.size()) throw std::invalid_argument("grad_check: size mismatch");
  std::vector<double> numeric(theta.size());
  std::vector<double> probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = f(probe);
    probe[i] = theta[i] - h;
    const double down = f(probe);
    probe[i] = theta[i];
    numeric[i] = (up - down) / (2.0 * h);
  }
  double scale = 0.0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double denom = std::max(std::abs(numeric[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double grad_check_parameters(const std::function<Var()>& loss_fn,
                             const std::vector<Parameter*>& params, double h) {
  for (auto* p : params) p->zero_grad();
  backward(loss_fn());

  std::vector<double> theta, analytic;
  for (auto* p : params) {
    theta.insert(theta.end(), p->value().data().begin(), p->value().data().end());
    analytic.insert(analytic.end(), p->grad().data().begin(), p->grad().data().end());
  }
  auto assign = [&params](const std::vector<double>& values) {
    std::size_t offset = 0;
    for (auto* p : params) {
      auto dst = p->value().data();
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
      offset += dst.size();
    }
  };
  const double err = grad_check(
      [&](const std::vector<double>& values) {
        assign(values);
        return loss_fn().value()[0];
      },
      analytic, theta, h);
  assign(theta);
  return err;
}

}  // namespace tram::nn
