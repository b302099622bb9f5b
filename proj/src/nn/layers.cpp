#include "minaf/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "minaf/common/rng.hpp"

namespace minaf::nn {

std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
Mat<T> init_weight(Init kind, std::size_t out, std::size_t in, std::uint64_t seed, const std::string& name) {
  CounterRng rng(seed, name_stream(name));
  const double limit = kind == Init::HeUniform ? std::sqrt(6.0 / static_cast<double>(in))
                                               : std::sqrt(6.0 / static_cast<double>(in + out));
  Mat<T> w(out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

template <typename T>
Mat<T> init_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed, const std::string& name) {
  CounterRng rng(seed, name_stream(name));
  Mat<T> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(stddev * rng.normal());
  return w;
}

template <typename T>
Linear<T> Linear<T>::create(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Init init,
                            std::uint64_t seed) {
  require(in > 0 && out > 0, "Linear: dimensions must be positive");
  Linear l;
  l.weight = &ps.add(name + ".weight", init_weight<T>(init, out, in, seed, name + ".weight"));
  l.bias = &ps.add(name + ".bias", Mat<T>::Zero(1, static_cast<Eigen::Index>(out)));
  return l;
}

template <typename T>
Linear<T> Linear<T>::bind(ParamSet<T>& ps, const std::string& name) {
  Linear l;
  l.weight = ps.find(name + ".weight");
  l.bias = ps.find(name + ".bias");
  require(l.weight != nullptr && l.bias != nullptr, "Linear: missing parameters for " + name);
  return l;
}

template <typename T>
TwoLayer<T> TwoLayer<T>::create(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t h,
                                std::uint64_t seed) {
  return {Linear<T>::create(ps, name + ".0", in, h, Init::HeUniform, seed),
          Linear<T>::create(ps, name + ".1", h, h, Init::GlorotUniform, seed)};
}

template <typename T>
TwoLayer<T> TwoLayer<T>::bind(ParamSet<T>& ps, const std::string& name) {
  return {Linear<T>::bind(ps, name + ".0"), Linear<T>::bind(ps, name + ".1")};
}

void PosEncConfig::validate() const { require(bands >= 1, "PosEncConfig: need at least one band"); }

std::vector<double> posenc(const std::vector<double>& x, const PosEncConfig& cfg) {
  cfg.validate();
  std::vector<double> out;
  out.reserve(x.size() * 2 * static_cast<std::size_t>(cfg.bands));
  for (double v : x) {
    double freq = std::numbers::pi;
    for (int l = 0; l < cfg.bands; ++l) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
      freq *= 2.0;
    }
  }
  return out;
}

template Mat<float> init_weight<float>(Init, std::size_t, std::size_t, std::uint64_t, const std::string&);
template Mat<double> init_weight<double>(Init, std::size_t, std::size_t, std::uint64_t, const std::string&);
template Mat<float> init_normal<float>(std::size_t, std::size_t, double, std::uint64_t, const std::string&);
template Mat<double> init_normal<double>(std::size_t, std::size_t, double, std::uint64_t, const std::string&);
template struct Linear<float>;
template struct Linear<double>;
template struct TwoLayer<float>;
template struct TwoLayer<double>;

}  // namespace minaf::nn
