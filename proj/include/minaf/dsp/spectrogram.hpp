#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace minaf::dsp {

struct Waveform {
  std::vector<double> samples;
  double fs = 16000.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
};

/// Hann-windowed STFT geometry. Frames are centered: frame t covers samples
/// [t*hop - n_fft/2, t*hop + n_fft/2), zero outside the signal.
struct StftConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 128;

  std::size_t n_bins() const { return n_fft / 2 + 1; }
  std::size_t n_frames(std::size_t n_samples) const { return (n_samples + hop - 1) / hop; }
  void validate() const;
};

/// Periodic Hann: w[m] = 0.5 - 0.5 cos(2 pi m / n).
std::vector<double> hann_window(std::size_t n);

/// Dense real F x T grid, row f holds one frequency bin across frames.
class RealGrid {
 public:
  RealGrid() = default;
  RealGrid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  bool operator==(const RealGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// log(|S| + eps_mag) per bin.
struct MagSpec : RealGrid {
  using RealGrid::RealGrid;
};

/// Wrapped per-bin phase advance divided by pi, in [-1, 1].
struct IfSpec : RealGrid {
  using RealGrid::RealGrid;
};

class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(StftConfig cfg, std::size_t n_frames, std::size_t n_samples)
      : cfg_(cfg), frames_(n_frames), samples_(n_samples), data_(cfg.n_bins() * n_frames) {}

  const StftConfig& config() const { return cfg_; }
  std::size_t n_bins() const { return cfg_.n_bins(); }
  std::size_t n_frames() const { return frames_; }
  /// Length of the waveform the spectrogram describes (for ISTFT trimming).
  std::size_t n_samples() const { return samples_; }

  std::complex<double>& at(std::size_t f, std::size_t t) { return data_[f * frames_ + t]; }
  const std::complex<double>& at(std::size_t f, std::size_t t) const { return data_[f * frames_ + t]; }
  std::vector<std::complex<double>>& data() { return data_; }
  const std::vector<std::complex<double>>& data() const { return data_; }

 private:
  StftConfig cfg_;
  std::size_t frames_ = 0;
  std::size_t samples_ = 0;
  std::vector<std::complex<double>> data_;
};

inline constexpr double kMagEpsilon = 1e-3;

/// Throws InvalidArgument when the signal is shorter than n_fft.
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});
/// Weighted overlap-add with window-square normalization.
Waveform istft(const ComplexSpectrogram& s, double fs = 16000.0);

MagSpec log_magnitude(const ComplexSpectrogram& s);
/// exp(m) - eps_mag, clamped at zero.
RealGrid linear_magnitude(const MagSpec& m);
RealGrid abs_magnitude(const ComplexSpectrogram& s);
RealGrid phase(const ComplexSpectrogram& s);

/// Maps to (-pi, pi].
double wrap_phase(double x);
IfSpec instantaneous_frequency(const ComplexSpectrogram& s);
/// Cumulative pi * IF along time with zero initial phase.
RealGrid integrate_phase(const IfSpec& ifspec);
/// |mag| e^{i phase}.
ComplexSpectrogram polar(const RealGrid& mag, const RealGrid& phase, const StftConfig& cfg,
                         std::size_t n_samples);

struct GriffinLimResult {
  Waveform waveform;
  /// Spectral convergence after each iteration (full two-sided norm).
  std::vector<double> objective;
};

/// Classic alternating projections from seeded uniform random phase.
GriffinLimResult griffin_lim(const RealGrid& mag, std::size_t iters, std::uint64_t seed,
                             std::size_t n_samples, double fs = 16000.0, const StftConfig& cfg = {});

/// || |S| - mag || / ||mag|| with one-sided bins 1..F-2 counted twice.
double spectral_convergence(const ComplexSpectrogram& s, const RealGrid& mag);

inline constexpr double kEdcFloorDb = -120.0;

/// Backward-integrated energy in dB relative to the total, floored at -120.
/// Throws InvalidArgument for an all-zero waveform.
std::vector<double> schroeder_edc(const Waveform& w);
std::vector<double> schroeder_edc(const std::vector<double>& energy);
/// Same curve over STFT frames using E[t] = sum_f mag[f,t]^2.
std::vector<double> frame_energy_edc(const RealGrid& mag);

}  // namespace minaf::dsp
