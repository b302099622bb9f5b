#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "minaf/common/rng.hpp"
#include "minaf/nn/tape.hpp"

namespace minaf::testing {

struct GradCheckResult {
  double worst_rel = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients of `loss` with central differences for up to
/// `per_param` entries of every parameter (all entries when 0). Relative
/// error is |a - n| / max(|a|, |n|, kGradFloor): the floor sits above the
/// ~1e-10 resolution of a 64-bit difference quotient of an O(1) loss.
inline constexpr double kGradFloor = 1e-5;

inline GradCheckResult grad_check(nn::ParamSet<double>& ps,
                                  const std::function<nn::Var(nn::Tape<double>&)>& loss, double step = 1e-5,
                                  std::size_t per_param = 0, std::uint64_t seed = 1) {
  ps.zero_grad();
  {
    nn::Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    nn::Tape<double> tape;
    return tape.value(loss(tape))(0, 0);
  };
  GradCheckResult r;
  CounterRng rng(seed, 77);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    const auto n = static_cast<std::size_t>(p.value.size());
    const std::size_t count = per_param == 0 ? n : std::min(n, per_param);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t k = (per_param == 0 || n <= per_param) ? c : static_cast<std::size_t>(rng.below(n));
      double& w = p.value.data()[k];
      const double saved = w;
      w = saved + step;
      const double up = eval();
      w = saved - step;
      const double down = eval();
      w = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad.data()[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), kGradFloor});
      const double rel = std::abs(numeric - analytic) / scale;
      ++r.checked;
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_param = p.name + "[" + std::to_string(k) + "]";
        r.worst_analytic = analytic;
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace minaf::testing
