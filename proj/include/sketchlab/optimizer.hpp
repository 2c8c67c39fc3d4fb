#pragma once

#include <cmath>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/params.hpp"

namespace sketchlab {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
template <typename T>
class Adam {
 public:
  Adam(ParamRefs<T> params, AdamOptions options = {})
      : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate > 0) || options_.beta1 < 0 || options_.beta1 >= 1 ||
        options_.beta2 < 0 || options_.beta2 >= 1) {
      throw ConfigError("Adam: invalid hyperparameters");
    }
    for (auto* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  /// Scales every gradient by `grad_scale` (e.g. 1/batch) before the update.
  void step(double grad_scale = 1.0) {
    ++t_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double step_size = options_.learning_rate / c1;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]) * grad_scale;
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double denom = std::sqrt(v[i] / c2) + options_.eps;
        p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - step_size * m[i] / denom);
      }
    }
  }

  long steps() const { return t_; }

 private:
  ParamRefs<T> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace sketchlab
