#include "minaf/metrics/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "minaf/common/error.hpp"

namespace minaf::metrics {

namespace {

/// Fractional index of the first point where `curve` drops to `level`.
double first_crossing(const std::vector<double>& curve, double level) {
  if (curve.empty()) throw NotMeasurable("empty decay curve");
  if (curve[0] <= level) return 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i] <= level) {
      const double a = curve[i - 1];
      const double b = curve[i];
      return static_cast<double>(i - 1) + (a - level) / (a - b);
    }
  }
  throw NotMeasurable("decay curve never reaches " + std::to_string(level) + " dB");
}

bool is_silent(const Waveform& w) {
  return std::all_of(w.samples.begin(), w.samples.end(), [](double x) { return x == 0.0; });
}

double mean_of(const std::vector<SampleErrors>& s, double SampleErrors::*field) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& e : s) {
    if (std::isnan(e.*field)) continue;
    acc += e.*field;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / static_cast<double>(n);
}

double ratio_db(double num, double den) {
  if (den <= 0.0 || num / den > std::pow(10.0, kMaxRatioDb / 10.0)) return kMaxRatioDb;
  if (num <= 0.0) return -kMaxRatioDb;
  return std::max(-kMaxRatioDb, 10.0 * std::log10(num / den));
}

void check_pair(const Waveform& pred, const Waveform& gt) {
  require(pred.samples.size() == gt.samples.size(), "metric: waveform lengths differ");
  require(!gt.samples.empty(), "metric: empty waveform");
}

}  // namespace

double t60(const Waveform& w) {
  const auto edc = dsp::schroeder_edc(w);
  return (first_crossing(edc, -65.0) - first_crossing(edc, -5.0)) / w.fs;
}

double edt(const Waveform& w) {
  const auto edc = dsp::schroeder_edc(w);
  return first_crossing(edc, -10.0) / w.fs;
}

double c50(const Waveform& w) {
  double total = 0.0;
  std::size_t onset = 0;
  double peak = -1.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    total += w.samples[i] * w.samples[i];
    if (std::abs(w.samples[i]) > peak) {
      peak = std::abs(w.samples[i]);
      onset = i;
    }
  }
  require(total > 0.0, "c50: zero waveform");
  const auto split = onset + static_cast<std::size_t>(std::llround(0.050 * w.fs));
  double early = 0.0;
  double late = 0.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    (i < split ? early : late) += w.samples[i] * w.samples[i];
  }
  return 10.0 * std::log10(early / std::max(late, 1e-12 * total));
}

double snr(const Waveform& pred, const Waveform& gt) {
  check_pair(pred, gt);
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < gt.samples.size(); ++i) {
    sig += gt.samples[i] * gt.samples[i];
    const double d = pred.samples[i] - gt.samples[i];
    err += d * d;
  }
  return ratio_db(sig, err);
}

double psnr(const Waveform& pred, const Waveform& gt) {
  check_pair(pred, gt);
  double peak = 0.0, err = 0.0;
  for (std::size_t i = 0; i < gt.samples.size(); ++i) {
    peak = std::max(peak, std::abs(gt.samples[i]));
    const double d = pred.samples[i] - gt.samples[i];
    err += d * d;
  }
  return ratio_db(peak * peak, err / static_cast<double>(gt.samples.size()));
}

double spec_l1(const MagSpec& pred, const MagSpec& gt) {
  require(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "spec_l1: grid shapes differ");
  require(!gt.data().empty(), "spec_l1: empty grid");
  double acc = 0.0;
  for (std::size_t i = 0; i < gt.data().size(); ++i) acc += std::abs(pred.data()[i] - gt.data()[i]);
  return acc / static_cast<double>(gt.data().size());
}

AcousticReport error_stats(std::span<const Waveform> pred, std::span<const Waveform> gt) {
  require(pred.size() == gt.size(), "error_stats: prediction and ground-truth counts differ");
  AcousticReport report;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_pair(pred[i], gt[i]);
    SampleErrors e;
    if (is_silent(pred[i]) || is_silent(gt[i])) {
      ++report.n_excluded;
      continue;
    }
    try {
      const double t_gt = t60(gt[i]);
      const double t_pred = t60(pred[i]);
      e.t60_pct = 100.0 * std::abs(t_pred - t_gt) / t_gt;
      e.edt_s = std::abs(edt(pred[i]) - edt(gt[i]));
      e.c50_db = std::abs(c50(pred[i]) - c50(gt[i]));
    } catch (const NotMeasurable&) {
      // Decay metrics drop this pair; the waveform metrics still count it.
      e.t60_pct = e.edt_s = e.c50_db = std::numeric_limits<double>::quiet_NaN();
      ++report.n_excluded;
    }
    e.snr_db = snr(pred[i], gt[i]);
    e.psnr_db = psnr(pred[i], gt[i]);
    if (gt[i].samples.size() >= dsp::StftConfig{}.n_fft) {
      e.spec_l1 = spec_l1(dsp::log_magnitude(dsp::stft(pred[i])), dsp::log_magnitude(dsp::stft(gt[i])));
    }
    report.samples.push_back(e);
  }
  report.t60_err_percent = mean_of(report.samples, &SampleErrors::t60_pct);
  report.c50_err_db = mean_of(report.samples, &SampleErrors::c50_db);
  report.edt_err_sec = mean_of(report.samples, &SampleErrors::edt_s);
  report.snr_db = mean_of(report.samples, &SampleErrors::snr_db);
  report.psnr_db = mean_of(report.samples, &SampleErrors::psnr_db);
  report.spec_l1 = mean_of(report.samples, &SampleErrors::spec_l1);
  return report;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double read_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::json AcousticReport::to_json(bool include_samples) const {
  nlohmann::json j = {
      {"t60_pct", number_or_null(t60_err_percent)}, {"c50_db", number_or_null(c50_err_db)},
      {"edt_s", number_or_null(edt_err_sec)},       {"snr_db", number_or_null(snr_db)},
      {"psnr_db", number_or_null(psnr_db)},         {"spec_l1", number_or_null(spec_l1)},
      {"n_excluded", n_excluded},
  };
  if (include_samples) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : samples) {
      arr.push_back({{"t60_pct", number_or_null(s.t60_pct)}, {"c50_db", number_or_null(s.c50_db)},
                     {"edt_s", number_or_null(s.edt_s)},
                     {"snr_db", s.snr_db}, {"psnr_db", s.psnr_db}, {"spec_l1", s.spec_l1}});
    }
    j["samples"] = std::move(arr);
  }
  return j;
}

std::string validate_report_json(const nlohmann::json& j) {
  if (!j.is_object()) return "report must be a JSON object";
  for (const char* key : {"t60_pct", "c50_db", "edt_s", "snr_db", "psnr_db", "spec_l1"}) {
    if (!j.contains(key)) return std::string("missing field ") + key;
    if (!j[key].is_number() && !j[key].is_null()) return std::string("field ") + key + " must be a number";
  }
  if (!j.contains("n_excluded") || !j["n_excluded"].is_number_unsigned()) return "n_excluded must be a non-negative integer";
  return "";
}

AcousticReport AcousticReport::from_json(const nlohmann::json& j) {
  if (auto err = validate_report_json(j); !err.empty()) throw DataError("invalid report: " + err);
  AcousticReport r;
  r.t60_err_percent = read_number(j["t60_pct"]);
  r.c50_err_db = read_number(j["c50_db"]);
  r.edt_err_sec = read_number(j["edt_s"]);
  r.snr_db = read_number(j["snr_db"]);
  r.psnr_db = read_number(j["psnr_db"]);
  r.spec_l1 = read_number(j["spec_l1"]);
  r.n_excluded = j["n_excluded"].get<std::size_t>();
  if (j.contains("samples")) {
    for (const auto& s : j["samples"]) {
      r.samples.push_back({s["t60_pct"].get<double>(), s["c50_db"].get<double>(), s["edt_s"].get<double>(),
                           s["snr_db"].get<double>(), s["psnr_db"].get<double>(), s["spec_l1"].get<double>()});
    }
  }
  return r;
}

std::string AcousticReport::table(const std::string& label) const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "mode" << std::right << std::setw(10) << "T60(%)" << std::setw(10)
     << "C50(dB)" << std::setw(10) << "EDT(s)" << std::setw(10) << "SNR(dB)" << std::setw(10) << "PSNR(dB)"
     << std::setw(10) << "spec_l1" << std::setw(8) << "excl" << '\n';
  os << std::left << std::setw(12) << (label.empty() ? "-" : label) << std::right << std::fixed
     << std::setprecision(3) << std::setw(10) << t60_err_percent << std::setw(10) << c50_err_db
     << std::setprecision(4) << std::setw(10) << edt_err_sec << std::setprecision(2) << std::setw(10) << snr_db
     << std::setw(10) << psnr_db << std::setprecision(4) << std::setw(10) << spec_l1 << std::setw(8)
     << n_excluded << '\n';
  return os.str();
}

}  // namespace minaf::metrics
