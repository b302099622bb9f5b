#include <doctest.h>

#include <cmath>
#include <vector>

#include "minaf/common/error.hpp"
#include "minaf/common/rng.hpp"
#include "minaf/metrics/acoustic.hpp"

using namespace minaf;
using namespace minaf::metrics;

namespace {

Waveform exponential(double tau, double fs = 16000, double seconds = 2.0) {
  Waveform w;
  w.fs = fs;
  w.samples.resize(static_cast<std::size_t>(seconds * fs));
  for (std::size_t t = 0; t < w.samples.size(); ++t) w.samples[t] = std::exp(-static_cast<double>(t) / (tau * fs));
  return w;
}

Waveform scaled(Waveform w, double k) {
  for (double& x : w.samples) x *= k;
  return w;
}

}  // namespace

TEST_CASE("t60 and edt closed forms") {
  // EDC slope of exp(-t/tau) is 20 log10(e)/tau dB/s.
  const double db_per_tau = 20.0 * std::log10(std::exp(1.0));
  for (double tau : {0.02, 0.05, 0.1, 0.2}) {
    const Waveform w = exponential(tau, 16000, 20 * tau);
    CHECK(t60(w) == doctest::Approx(60.0 / db_per_tau * tau).epsilon(0.01));
    CHECK(t60(w) == doctest::Approx(6.9078 * tau).epsilon(0.01));
    CHECK(edt(w) == doctest::Approx(1.1513 * tau).epsilon(0.01));
  }
  CHECK(t60(exponential(0.05)) == doctest::Approx(0.3454).epsilon(0.001));
}

TEST_CASE("decay metrics ignore positive scaling") {
  const Waveform w = exponential(0.05);
  CHECK(t60(scaled(w, 4.0)) == t60(w));
  CHECK(edt(scaled(w, 0.25)) == edt(w));
  CHECK(c50(scaled(w, 8.0)) == c50(w));
  CHECK(t60(scaled(w, 3.7)) == doctest::Approx(t60(w)).epsilon(1e-12));
  CHECK(c50(scaled(w, 3.7)) == doctest::Approx(c50(w)).epsilon(1e-12));
}

TEST_CASE("c50") {
  Waveform two;
  two.samples.assign(8000, 0.0);
  two.samples[160] = 1.0;   // 10 ms, becomes the onset
  two.samples[1600] = 1.0;  // 100 ms
  CHECK(std::abs(c50(two)) < 0.01);

  Waveform one;
  one.samples.assign(8000, 0.0);
  one.samples[100] = 0.5;
  CHECK(c50(one) == doctest::Approx(120.0));
  Waveform impulse;
  impulse.samples.assign(8000, 0.0);
  impulse.samples[0] = 1.0;
  CHECK(edt(impulse) <= 1.0 / impulse.fs);

  const double tau = 0.02;
  const double q = std::exp(-2 * 0.05 / tau);
  CHECK(c50(exponential(tau)) == doctest::Approx(10 * std::log10(1 - q) - 10 * std::log10(q)).epsilon(0.2 / 21.7));

  Waveform zero;
  zero.samples.assign(100, 0.0);
  CHECK_THROWS_AS(c50(zero), InvalidArgument);
}

TEST_CASE("not measurable") {
  Waveform flat;
  flat.samples.assign(1000, 1.0);
  // A flat signal only reaches -30 dB at its final sample.
  CHECK_THROWS_AS(t60(flat), NotMeasurable);
  CHECK_NOTHROW(edt(flat));
}

TEST_CASE("snr psnr spec_l1") {
  const Waveform gt = exponential(0.05, 16000, 0.5);
  CHECK(snr(gt, gt) == 120.0);
  CHECK(psnr(gt, gt) == 120.0);
  CHECK(snr(scaled(gt, 0.0), gt) == doctest::Approx(0.0).epsilon(1e-12));

  CounterRng rng(4);
  const double v = 1e-4;
  Waveform noisy = gt;
  for (double& x : noisy.samples) x += std::sqrt(v) * rng.normal();
  double sig = 0;
  for (double x : gt.samples) sig += x * x;
  CHECK(std::abs(snr(noisy, gt) - 10 * std::log10(sig / (static_cast<double>(gt.size()) * v))) < 0.5);
  CHECK(std::abs(psnr(noisy, gt) - 10 * std::log10(1.0 / v)) < 0.5);

  const MagSpec a(257, 4, -2.0);
  MagSpec b(257, 4, -2.0);
  CHECK(spec_l1(a, b) == 0.0);
  for (double& x : b.data()) x += 0.5;
  CHECK(spec_l1(a, b) == doctest::Approx(0.5));
  CHECK_THROWS_AS(spec_l1(a, MagSpec(257, 5)), InvalidArgument);
}

TEST_CASE("error_stats") {
  std::vector<Waveform> gt = {exponential(0.05, 16000, 3.0), exponential(0.08, 16000, 3.0)};
  const AcousticReport same = error_stats(gt, gt);
  CHECK(same.t60_err_percent == 0.0);
  CHECK(same.c50_err_db == 0.0);
  CHECK(same.edt_err_sec == 0.0);
  CHECK(same.spec_l1 == 0.0);
  CHECK(same.snr_db == 120.0);
  CHECK(same.n_excluded == 0);

  // Doubling the decay constant doubles T60.
  std::vector<Waveform> stretched = {exponential(0.10, 16000, 3.0), exponential(0.16, 16000, 3.0)};
  CHECK(error_stats(stretched, gt).t60_err_percent == doctest::Approx(100.0).epsilon(0.01));

  Waveform silent;
  silent.samples.assign(48000, 0.0);
  std::vector<Waveform> pred = {gt[0], silent};
  const AcousticReport r = error_stats(pred, gt);
  CHECK(r.n_excluded == 1);
  CHECK(r.samples.size() == 1);
  CHECK(r.t60_err_percent == 0.0);

  const auto j = r.to_json();
  CHECK(validate_report_json(j).empty());
  const AcousticReport back = AcousticReport::from_json(j);
  CHECK(back.t60_err_percent == r.t60_err_percent);
  CHECK(back.n_excluded == 1);
  auto broken = j;
  broken.erase("edt_s");
  CHECK_FALSE(validate_report_json(broken).empty());
  CHECK_THROWS_AS(AcousticReport::from_json(broken), DataError);

  // A flat prediction never decays: dropped from the decay means, kept in the spectral ones.
  Waveform flat;
  flat.samples.assign(48000, 0.01);
  std::vector<Waveform> flat_pred = {flat, gt[1]};
  const AcousticReport f = error_stats(flat_pred, gt);
  CHECK(f.n_excluded == 1);
  CHECK(f.samples.size() == 2);
  CHECK(f.t60_err_percent == 0.0);
  CHECK(f.spec_l1 > 0.0);
  CHECK(std::isfinite(f.spec_l1));
  CHECK(std::isfinite(f.snr_db));
  CHECK(validate_report_json(f.to_json(true)).empty());

  std::vector<Waveform> one = {gt[0]};
  CHECK_THROWS_AS(error_stats(one, gt), InvalidArgument);
}
