#pragma once

#include <cmath>
#include <vector>

#include "agwm/layers.hpp"

namespace agwm::nn {

struct AdamWConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// AdamW with decoupled weight decay and global gradient-norm clipping applied
/// before the moment updates. Throws NumericError on non-finite gradients.
template <typename T>
class AdamW {
 public:
  AdamW(const ParameterSet<T>& params, AdamWConfig config) : config_(config) {
    for (const auto& [name, p] : params.entries()) {
      m_.emplace_back(p.value().numel(), T(0));
      v_.emplace_back(p.value().numel(), T(0));
    }
  }

  const AdamWConfig& config() const { return config_; }
  long step_count() const { return t_; }

  void step(ParameterSet<T>& params) {
    auto& entries = params.entries();
    if (entries.size() != m_.size()) throw DataError("optimizer bound to a different parameter set");

    double sq_norm = 0.0;
    for (auto& [name, p] : entries) {
      if (p.grad().size() != p.value().v.size()) p.zero_grad();
      for (const T g : p.grad()) {
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("non-finite gradient in parameter '" + name + "'");
        sq_norm += static_cast<double>(g) * static_cast<double>(g);
      }
    }
    const double norm = std::sqrt(sq_norm);
    const double clip_scale =
        (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

    ++t_;
    const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& p = entries[k].second;
      auto& value = p.value().v;
      const auto& grad = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * clip_scale;
        m[i] = static_cast<T>(config_.beta1 * static_cast<double>(m[i]) + (1.0 - config_.beta1) * g);
        v[i] =
            static_cast<T>(config_.beta2 * static_cast<double>(v[i]) + (1.0 - config_.beta2) * g * g);
        const double m_hat = static_cast<double>(m[i]) / bias1;
        const double v_hat = static_cast<double>(v[i]) / bias2;
        const double update =
            m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * static_cast<double>(value[i]);
        value[i] = static_cast<T>(static_cast<double>(value[i]) - config_.lr * update);
      }
    }
  }

 private:
  AdamWConfig config_;
  std::vector<std::vector<T>> m_, v_;
  long t_ = 0;
};

}  // namespace agwm::nn
