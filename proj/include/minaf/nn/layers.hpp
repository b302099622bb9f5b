#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minaf/nn/tape.hpp"

namespace minaf::nn {

enum class Init { HeUniform, GlorotUniform };

/// Stable per-name RNG stream id (FNV-1a).
std::uint64_t name_stream(const std::string& name);

/// Fills (rows x cols) from the stream of `name` under `seed`.
template <typename T>
Mat<T> init_weight(Init kind, std::size_t out, std::size_t in, std::uint64_t seed, const std::string& name);
template <typename T>
Mat<T> init_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed, const std::string& name);

/// weight (out x in), bias (1 x out, zero at init).
template <typename T>
struct Linear {
  Param<T>* weight = nullptr;
  Param<T>* bias = nullptr;

  static Linear create(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Init init,
                       std::uint64_t seed);
  static Linear bind(ParamSet<T>& ps, const std::string& name);
  std::size_t in() const { return static_cast<std::size_t>(weight->value.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight->value.rows()); }
  Var operator()(Tape<T>& t, Var x) const { return t.affine(x, t.param(*weight), t.param(*bias)); }
  PackedAffine<T> pack() const {
    return PackedAffine<T>::pack(weight->value.data(), bias->value.data(), out(), in());
  }
};

/// Linear(in -> h), ReLU, Linear(h -> h).
template <typename T>
struct TwoLayer {
  Linear<T> first;
  Linear<T> second;

  static TwoLayer create(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t h,
                         std::uint64_t seed);
  static TwoLayer bind(ParamSet<T>& ps, const std::string& name);
  Var operator()(Tape<T>& t, Var x) const { return second(t, t.relu(first(t, x))); }
};

/// Sinusoidal encoding, per scalar: sin(2^0 pi x), cos(2^0 pi x), ...,
/// sin(2^(L-1) pi x), cos(2^(L-1) pi x).
struct PosEncConfig {
  int bands = 10;
  void validate() const;
};
std::vector<double> posenc(const std::vector<double>& x, const PosEncConfig& cfg);
inline std::vector<double> posenc(double x, const PosEncConfig& cfg) { return posenc(std::vector<double>{x}, cfg); }

}  // namespace minaf::nn
