#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "minaf/dsp/spectrogram.hpp"

namespace minaf::metrics {

using dsp::MagSpec;
using dsp::Waveform;

/// Reverberation time: time between the -5 dB and -65 dB crossings of the
/// Schroeder curve, each located by linear interpolation. Seconds.
/// Throws NotMeasurable if the curve never reaches -65 dB.
double t60(const Waveform& w);

/// Early-to-late energy ratio around a 50 ms split after the onset (sample
/// of peak |w|). Late energy is clamped below at 1e-12 of the total. dB.
double c50(const Waveform& w);

/// Early decay time: first -10 dB crossing of the Schroeder curve. Seconds.
double edt(const Waveform& w);

inline constexpr double kMaxRatioDb = 120.0;

double snr(const Waveform& pred, const Waveform& gt);
double psnr(const Waveform& pred, const Waveform& gt);
double spec_l1(const MagSpec& pred, const MagSpec& gt);

struct SampleErrors {
  double t60_pct = 0.0;
  double c50_db = 0.0;
  double edt_s = 0.0;
  double snr_db = 0.0;
  double psnr_db = 0.0;
  double spec_l1 = 0.0;
};

struct AcousticReport {
  double t60_err_percent = 0.0;
  double c50_err_db = 0.0;
  double edt_err_sec = 0.0;
  double snr_db = 0.0;
  double psnr_db = 0.0;
  double spec_l1 = 0.0;
  std::size_t n_excluded = 0;
  std::vector<SampleErrors> samples;  // measurable pairs only

  nlohmann::json to_json(bool include_samples = false) const;
  static AcousticReport from_json(const nlohmann::json& j);
  /// Fixed-width text table.
  std::string table(const std::string& label = "") const;
};

/// Validates the fixed report field set; returns an error message or "".
std::string validate_report_json(const nlohmann::json& j);

/// Per-pair absolute errors averaged over measurable pairs. Pairs where a
/// decay metric is not measurable on either side are excluded and counted.
/// spec_l1 compares the log-magnitude STFTs of the two waveforms.
AcousticReport error_stats(std::span<const Waveform> pred, std::span<const Waveform> gt);

}  // namespace minaf::metrics
