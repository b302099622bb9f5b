#include "minaf/dsp/spectrogram.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "minaf/common/error.hpp"
#include "minaf/common/rng.hpp"

namespace minaf::dsp {

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and then executed through the new-array interface, which is.
struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<FftPlans>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<FftPlans>();
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    const int size = static_cast<int>(n);
    slot->forward = fftw_plan_dft_r2c_1d(size, real, cplx, FFTW_ESTIMATE | FFTW_UNALIGNED);
    slot->inverse = fftw_plan_dft_c2r_1d(size, cplx, real, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(real);
    fftw_free(cplx);
  }
  return *slot;
}

long frame_start(std::size_t t, const StftConfig& cfg) {
  return static_cast<long>(t * cfg.hop) - static_cast<long>(cfg.n_fft / 2);
}

}  // namespace

void StftConfig::validate() const {
  require(n_fft >= 2 && n_fft % 2 == 0, "StftConfig: n_fft must be even");
  require(hop >= 1 && n_fft % hop == 0, "StftConfig: hop must divide n_fft");
  require(n_fft / hop >= 2, "StftConfig: Hann overlap-add needs at least 50% overlap");
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t m = 0; m < n; ++m) {
    w[m] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
  }
  return w;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  require(w.samples.size() >= cfg.n_fft, "stft: signal shorter than n_fft");
  const std::size_t n = cfg.n_fft;
  const std::size_t n_frames = cfg.n_frames(w.samples.size());
  const auto window = hann_window(n);
  const FftPlans& plans = plans_for(n);
  ComplexSpectrogram out(cfg, n_frames, w.samples.size());

  std::vector<double> frame(n);
  std::vector<std::complex<double>> bins(cfg.n_bins());
  const long len = static_cast<long>(w.samples.size());
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long start = frame_start(t, cfg);
    for (std::size_t m = 0; m < n; ++m) {
      const long idx = start + static_cast<long>(m);
      frame[m] = (idx >= 0 && idx < len) ? window[m] * w.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
    fftw_execute_dft_r2c(plans.forward, frame.data(), reinterpret_cast<fftw_complex*>(bins.data()));
    for (std::size_t f = 0; f < bins.size(); ++f) out.at(f, t) = bins[f];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s, double fs) {
  const StftConfig& cfg = s.config();
  const std::size_t n = cfg.n_fft;
  const auto window = hann_window(n);
  const FftPlans& plans = plans_for(n);
  const long len = static_cast<long>(s.n_samples());
  std::vector<double> acc(s.n_samples(), 0.0);
  std::vector<double> norm(s.n_samples(), 0.0);
  std::vector<std::complex<double>> bins(cfg.n_bins());
  std::vector<double> frame(n);
  for (std::size_t t = 0; t < s.n_frames(); ++t) {
    for (std::size_t f = 0; f < bins.size(); ++f) bins[f] = s.at(f, t);
    // c2r overwrites its input.
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(bins.data()), frame.data());
    const long start = frame_start(t, cfg);
    for (std::size_t m = 0; m < n; ++m) {
      const long idx = start + static_cast<long>(m);
      if (idx < 0 || idx >= len) continue;
      const auto i = static_cast<std::size_t>(idx);
      acc[i] += window[m] * frame[m] / static_cast<double>(n);
      norm[i] += window[m] * window[m];
    }
  }
  Waveform out;
  out.fs = fs;
  out.samples.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.samples[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;
  return out;
}

MagSpec log_magnitude(const ComplexSpectrogram& s) {
  MagSpec m(s.n_bins(), s.n_frames());
  for (std::size_t i = 0; i < s.data().size(); ++i) m.data()[i] = std::log(std::abs(s.data()[i]) + kMagEpsilon);
  return m;
}

RealGrid linear_magnitude(const MagSpec& m) {
  RealGrid out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    out.data()[i] = std::max(0.0, std::exp(m.data()[i]) - kMagEpsilon);
  }
  return out;
}

RealGrid abs_magnitude(const ComplexSpectrogram& s) {
  RealGrid out(s.n_bins(), s.n_frames());
  for (std::size_t i = 0; i < s.data().size(); ++i) out.data()[i] = std::abs(s.data()[i]);
  return out;
}

RealGrid phase(const ComplexSpectrogram& s) {
  RealGrid out(s.n_bins(), s.n_frames());
  for (std::size_t i = 0; i < s.data().size(); ++i) out.data()[i] = std::arg(s.data()[i]);
  return out;
}

double wrap_phase(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(x, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

IfSpec instantaneous_frequency(const ComplexSpectrogram& s) {
  IfSpec out(s.n_bins(), s.n_frames());
  for (std::size_t f = 0; f < s.n_bins(); ++f) {
    double prev = 0.0;
    for (std::size_t t = 0; t < s.n_frames(); ++t) {
      const double phi = std::arg(s.at(f, t));
      out.at(f, t) = std::clamp(wrap_phase(phi - prev) / std::numbers::pi, -1.0, 1.0);
      prev = phi;
    }
  }
  return out;
}

RealGrid integrate_phase(const IfSpec& ifspec) {
  RealGrid out(ifspec.rows(), ifspec.cols());
  for (std::size_t f = 0; f < ifspec.rows(); ++f) {
    double acc = 0.0;
    for (std::size_t t = 0; t < ifspec.cols(); ++t) {
      acc += std::numbers::pi * ifspec.at(f, t);
      out.at(f, t) = acc;
    }
  }
  return out;
}

ComplexSpectrogram polar(const RealGrid& mag, const RealGrid& ph, const StftConfig& cfg,
                         std::size_t n_samples) {
  require(mag.rows() == cfg.n_bins() && ph.rows() == mag.rows() && ph.cols() == mag.cols(),
          "polar: magnitude/phase grid shapes differ");
  ComplexSpectrogram s(cfg, mag.cols(), n_samples);
  for (std::size_t i = 0; i < mag.data().size(); ++i) s.data()[i] = std::polar(mag.data()[i], ph.data()[i]);
  return s;
}

double spectral_convergence(const ComplexSpectrogram& s, const RealGrid& mag) {
  require(s.n_bins() == mag.rows() && s.n_frames() == mag.cols(), "spectral_convergence: shape mismatch");
  double num = 0.0;
  double den = 0.0;
  const std::size_t last = s.n_bins() - 1;
  for (std::size_t f = 0; f < s.n_bins(); ++f) {
    const double weight = (f == 0 || f == last) ? 1.0 : 2.0;
    for (std::size_t t = 0; t < s.n_frames(); ++t) {
      const double diff = std::abs(s.at(f, t)) - mag.at(f, t);
      num += weight * diff * diff;
      den += weight * mag.at(f, t) * mag.at(f, t);
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

GriffinLimResult griffin_lim(const RealGrid& mag, std::size_t iters, std::uint64_t seed,
                             std::size_t n_samples, double fs, const StftConfig& cfg) {
  require(iters >= 1, "griffin_lim: iters must be >= 1");
  require(mag.rows() == cfg.n_bins(), "griffin_lim: magnitude rows must equal n_fft/2+1");
  CounterRng rng(seed, 0x474C494DULL);
  RealGrid ph(mag.rows(), mag.cols());
  for (double& p : ph.data()) p = rng.uniform(-std::numbers::pi, std::numbers::pi);
  ComplexSpectrogram estimate = polar(mag, ph, cfg, n_samples);

  GriffinLimResult result;
  result.objective.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    const ComplexSpectrogram rebuilt = stft(istft(estimate, fs), cfg);
    result.objective.push_back(spectral_convergence(rebuilt, mag));
    for (std::size_t i = 0; i < mag.data().size(); ++i) {
      const std::complex<double> z = rebuilt.data()[i];
      estimate.data()[i] = std::polar(mag.data()[i], std::arg(z));
    }
  }
  result.waveform = istft(estimate, fs);
  return result;
}

std::vector<double> schroeder_edc(const std::vector<double>& energy) {
  std::vector<double> tail(energy.size());
  double acc = 0.0;
  for (std::size_t i = energy.size(); i-- > 0;) {
    acc += energy[i];
    tail[i] = acc;
  }
  require(acc > 0.0, "schroeder_edc: signal has zero energy");
  std::vector<double> edc(energy.size());
  for (std::size_t i = 0; i < energy.size(); ++i) {
    edc[i] = tail[i] > 0.0 ? std::max(kEdcFloorDb, 10.0 * std::log10(tail[i] / acc)) : kEdcFloorDb;
  }
  return edc;
}

std::vector<double> schroeder_edc(const Waveform& w) {
  std::vector<double> energy(w.samples.size());
  for (std::size_t i = 0; i < energy.size(); ++i) energy[i] = w.samples[i] * w.samples[i];
  return schroeder_edc(energy);
}

std::vector<double> frame_energy_edc(const RealGrid& mag) {
  std::vector<double> energy(mag.cols(), 0.0);
  for (std::size_t f = 0; f < mag.rows(); ++f) {
    for (std::size_t t = 0; t < mag.cols(); ++t) energy[t] += mag.at(f, t) * mag.at(f, t);
  }
  return schroeder_edc(energy);
}

}  // namespace minaf::dsp
