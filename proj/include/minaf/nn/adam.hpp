#pragma once

#include <cstdint>
#include <vector>

#include "minaf/nn/tape.hpp"

namespace minaf::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// lr0 * decay^epoch, evaluated directly (not by repeated multiplication).
double scheduled_lr(double lr0, double decay, int epoch);

/// Bias-corrected Adam over every parameter of a ParamSet, in order.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParamSet<T>& ps, AdamConfig cfg = {});

  /// Applies one update from the accumulated gradients. Throws
  /// TrainingDiverged if any gradient is non-finite (parameters untouched).
  void step(ParamSet<T>& ps, double lr);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Mat<T>>& first_moments() { return m_; }
  std::vector<Mat<T>>& second_moments() { return v_; }
  const std::vector<Mat<T>>& first_moments() const { return m_; }
  const std::vector<Mat<T>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
};

}  // namespace minaf::nn
