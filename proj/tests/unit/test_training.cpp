#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "minaf/common/error.hpp"
#include "minaf/nn/adam.hpp"
#include "minaf/training/experiment.hpp"
#include "minaf/training/train.hpp"
#include "support/dataset_fixture.hpp"

using namespace minaf;
using namespace minaf::training;
using minaf::testing::TempDir;
using nlohmann::json;

namespace {

std::vector<json> read_ndjson(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig tc;
  tc.preset = "tiny";
  tc.epochs = epochs;
  return tc;
}

// Dyadic values keep every subtraction below exact in float.
BatchTargets dyadic_targets(std::size_t n_rirs, std::size_t T, std::size_t F) {
  BatchTargets b;
  b.n_rirs = n_rirs;
  b.n_frames = T;
  b.mag.resize(static_cast<Eigen::Index>(n_rirs * T), static_cast<Eigen::Index>(F));
  b.ifr.resize(b.mag.rows(), b.mag.cols());
  for (Eigen::Index r = 0; r < b.mag.rows(); ++r) {
    for (Eigen::Index c = 0; c < b.mag.cols(); ++c) {
      b.mag(r, c) = -static_cast<float>((r + 3 * c) % 40) / 8.0f;
      b.ifr(r, c) = static_cast<float>((r * 7 + c) % 9 - 4) / 8.0f;
    }
  }
  b.edc.resize(static_cast<Eigen::Index>(n_rirs), static_cast<Eigen::Index>(T));
  for (std::size_t i = 0; i < n_rirs; ++i) {
    const Mat<float> block = b.mag.middleRows(static_cast<Eigen::Index>(i * T), static_cast<Eigen::Index>(T));
    dsp::RealGrid lin(F, T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        lin.at(f, t) = std::max(0.0, std::exp(static_cast<double>(block(static_cast<Eigen::Index>(t),
                                                                          static_cast<Eigen::Index>(f)))) -
                                         dsp::kMagEpsilon);
      }
    }
    const auto edc = dsp::frame_energy_edc(lin);
    for (std::size_t t = 0; t < T; ++t) b.edc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = static_cast<float>(edc[t]);
  }
  return b;
}

}  // namespace

TEST_CASE("loss terms vanish when outputs equal targets") {
  const BatchTargets t = dyadic_targets(2, 10, 7);
  const LossBreakdown l = compute_loss(t.mag, t.ifr, t, 0.1);
  CHECK(l.l1_mag == 0.0);
  CHECK(l.l1_if == 0.0);
  CHECK(l.schroeder < 1e-4);
  CHECK(l.total == doctest::Approx(0.1 * l.schroeder));
}

TEST_CASE("constant log-magnitude offset gives l1_mag = delta") {
  const BatchTargets t = dyadic_targets(3, 12, 9);
  for (float delta : {0.25f, 0.5f, -0.125f}) {
    const Mat<float> shifted = t.mag.array() + delta;
    const LossBreakdown l = compute_loss(shifted, t.ifr, t, 0.1);
    CHECK(l.l1_mag == std::abs(static_cast<double>(delta)));
    CHECK(l.l1_if == 0.0);
  }
}

TEST_CASE("alpha = 0 leaves the sum of the L1 terms") {
  const BatchTargets t = dyadic_targets(2, 10, 7);
  const Mat<float> mag = t.mag.array() - 0.5f;
  const Mat<float> ifr = t.ifr.array() * 0.5f;
  const LossBreakdown l0 = compute_loss(mag, ifr, t, 0.0);
  CHECK(l0.schroeder > 0.0);
  CHECK(l0.total == doctest::Approx(l0.l1_mag + l0.l1_if).epsilon(1e-6));
  const LossBreakdown l1 = compute_loss(mag, ifr, t, 0.7);
  CHECK(l1.total == doctest::Approx(l1.l1_mag + l1.l1_if + 0.7 * l1.schroeder).epsilon(1e-6));
  CHECK(l1.total >= 0.0);
}

TEST_CASE("non-finite predictions raise a divergence error") {
  const BatchTargets t = dyadic_targets(1, 8, 5);
  Mat<float> mag = t.mag;
  mag(2, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(compute_loss(mag, t.ifr, t, 0.1), TrainingDiverged);
}

TEST_CASE("training config validation and JSON") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.samples_per_step(63) == 2);
  c.rirs_per_step = 3;
  CHECK(c.samples_per_step(63) == 2);
  c.rirs_per_step = 0;
  CHECK(c.samples_per_step(63) == 2);  // 256 frames ~ 4 RIRs
  c.ablation.drop_occ = true;
  c.separate = true;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  TrainConfig bad;
  bad.data_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.preset = "huge";
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("data_fraction keeps floor(f * |train|) training samples") {
  sim::DatasetManifest m;
  for (std::size_t i = 0; i < 100; ++i) {
    sim::Sample s;
    s.id = "s" + std::to_string(i);
    s.split = i < 80 ? sim::Split::Train : (i < 85 ? sim::Split::Val : sim::Split::Test);
    m.samples.push_back(s);
  }
  CHECK(training_subset(m, 1.0, 42).size() == 80);
  CHECK(training_subset(m, 0.1, 42).size() == 8);
  CHECK(training_subset(m, 0.5, 42).size() == 40);
  CHECK(training_subset(m, 0.001, 42).size() == 1);
  const auto sub = training_subset(m, 0.25, 42);
  CHECK(sub.size() == 20);
  CHECK(std::is_sorted(sub.begin(), sub.end()));
  for (std::size_t i : sub) CHECK(m.samples[i].split == sim::Split::Train);
  CHECK(training_subset(m, 0.25, 42) == sub);
  CHECK(training_subset(m, 0.25, 43) != sub);
}

TEST_CASE("probing is idempotent and independent of the worker count") {
  TempDir dir("probe");
  sim::DatasetConfig dc;
  dc.n_pairs = 6;
  dc.orientations = {0};
  dc.max_order = 2;
  const sim::DatasetManifest m = sim::generate_dataset(dc, dir.path);
  geometry::ProbeConfig pc;
  pc.n_rays = 64;
  const ProbeStats a = probe_positions(dir.path, m, "serial", pc, 0.0, 0, 1);
  CHECK(a.probed == m.positions.size());
  const ProbeStats again = probe_positions(dir.path, m, "serial", pc, 0.0, 0, 1);
  CHECK(again.probed == 0);
  CHECK(again.skipped == m.positions.size());
  probe_positions(dir.path, m, "parallel", pc, 0.0, 0, 3);
  for (const auto& p : m.positions) {
    CHECK(testing::slurp(context_path(dir.path / "serial", p)) == testing::slurp(context_path(dir.path / "parallel", p)));
  }
  // A different configuration is not up to date.
  pc.n_rays = 32;
  CHECK(probe_positions(dir.path, m, "serial", pc, 0.0, 0, 1).probed == m.positions.size());
  // Noise changes the caches.
  probe_positions(dir.path, m, "noisy", pc, 0.2, 5, 1);
  CHECK(testing::slurp(context_path(dir.path / "serial", m.positions[0])) !=
        testing::slurp(context_path(dir.path / "noisy", m.positions[0])));
}

TEST_CASE("training data loads targets and rejects missing caches") {
  TempDir dir("data");
  const model::ModelConfig tiny = model::ModelConfig::tiny();
  const auto m = testing::make_dataset(dir.path, 4, {0, 2}, tiny);
  const TrainingData d = load_training_data(dir.path);
  CHECK(d.contexts.size() == m.positions.size());
  CHECK(d.targets.size() == 8);
  CHECK(d.n_frames() == 63);
  CHECK(d.n_freq() == 257);
  CHECK(d.geometry_config.n_rays == 16);
  CHECK(d.geometry_config.scene_hi.isApprox(geometry::Vec3(4.0, 3.0, 2.5)));
  const RirTarget& t = d.targets[0][1];
  CHECK(t.mag.rows() == 63);
  CHECK(t.mag.cols() == 257);
  CHECK(t.edc(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  // IF target is zero exactly where the STFT magnitude is negligible.
  const auto& spec = d.specs[0][1];
  std::size_t zeroed = 0;
  for (std::size_t f = 0; f < spec.n_bins(); ++f) {
    for (std::size_t k = 0; k < spec.n_frames(); ++k) {
      if (std::abs(spec.at(f, k)) < dsp::kMagEpsilon) {
        CHECK(t.ifr(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) == 0.0f);
        ++zeroed;
      }
    }
  }
  CHECK(zeroed > 0);
  CHECK(t.ifr.cwiseAbs().maxCoeff() <= 1.0f);

  const model::RirQuery q = d.query(3, 1);
  CHECK(q.channel == 1);
  CHECK(q.orientation == m.samples[3].orientation);
  CHECK(q.p_rx == m.positions[m.samples[3].rx].p);

  fs::remove(context_path(dir.path / kDefaultContextDir, m.positions[1]));
  CHECK_THROWS_AS(load_training_data(dir.path), DataError);
  CHECK_THROWS_AS(load_training_data(dir.path, "absent"), DataError);
}

TEST_CASE("training is deterministic and logs the schedule") {
  TempDir dir("det");
  const auto m = testing::make_dataset(dir.path, 5, {0, 1}, model::ModelConfig::tiny());
  const TrainingData data = load_training_data(dir.path);
  const TrainConfig tc = tiny_train(3);

  MinafModel<float> a = make_model(data, tc);
  const TrainResult ra = train(a, data, tc, dir.path / "run_a");
  MinafModel<float> b = make_model(data, tc);
  const TrainResult rb = train(b, data, tc, dir.path / "run_b");

  CHECK(testing::slurp(ra.last_checkpoint) == testing::slurp(rb.last_checkpoint));
  CHECK(testing::slurp(ra.best_checkpoint) == testing::slurp(rb.best_checkpoint));
  CHECK(testing::slurp(dir.path / "run_a" / kStepLogFile) == testing::slurp(dir.path / "run_b" / kStepLogFile));

  const std::size_t n_train = m.indices(sim::Split::Train).size();
  const std::size_t per_epoch = (n_train + 1) / 2;
  CHECK(ra.steps == 3 * per_epoch);
  const auto lines = read_ndjson(dir.path / "run_a" / kStepLogFile);
  REQUIRE(lines.size() == ra.steps);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json& l = lines[i];
    const int e = l.at("epoch").get<int>();
    CHECK(l.at("step").get<std::size_t>() == i + 1);
    CHECK(l.at("lr").get<double>() == 5e-4 * std::pow(0.9, e));
    const double sum =
        l.at("l1_mag").get<double>() + l.at("l1_if").get<double>() + 0.1 * l.at("schroeder").get<double>();
    CHECK(l.at("total").get<double>() == doctest::Approx(sum).epsilon(1e-6));
    for (const char* k : {"l1_mag", "l1_if", "schroeder", "total"}) CHECK(l.at(k).get<double>() >= 0.0);
  }
  CHECK(read_ndjson(dir.path / "run_a" / kEpochLogFile).size() == 3);

  // The best checkpoint restores the recorded validation loss.
  LoadedModel best = load_model(ra.best_checkpoint);
  CHECK(best.header.at("epoch").get<int>() == ra.best_epoch);
  CHECK(spec_l1_on(best.model, data, m.indices(sim::Split::Val)) ==
        doctest::Approx(best.header.at("val_spec_l1").get<double>()).epsilon(1e-12));

  // Resuming the same data with a different seed changes the result.
  TrainConfig other = tc;
  other.seed = 7;
  MinafModel<float> c = make_model(data, other);
  const TrainResult rc = train(c, data, other, dir.path / "run_c");
  CHECK(testing::slurp(rc.last_checkpoint) != testing::slurp(ra.last_checkpoint));
}

TEST_CASE("separate training and ablations run and differ") {
  TempDir dir("variants");
  testing::make_dataset(dir.path, 3, {0, 1}, model::ModelConfig::tiny());
  const TrainingData data = load_training_data(dir.path);
  TrainConfig tc = tiny_train(1);
  MinafModel<float> joint = make_model(data, tc);
  train(joint, data, tc, dir.path / "joint");
  tc.separate = true;
  MinafModel<float> sep = make_model(data, tc);
  train(sep, data, tc, dir.path / "sep");
  CHECK(testing::slurp(dir.path / "joint" / kLastCheckpoint) != testing::slurp(dir.path / "sep" / kLastCheckpoint));
  tc.separate = false;
  tc.ablation.no_time_embed = true;
  MinafModel<float> nt = make_model(data, tc);
  CHECK(nt.config().core_input_dim() != joint.config().core_input_dim());
  CHECK_NOTHROW(train(nt, data, tc, dir.path / "nt"));
}

TEST_CASE("evaluation: untrained model, injected targets, report schema") {
  TempDir dir("eval");
  const auto m = testing::make_dataset(dir.path, 10, {0, 1}, model::ModelConfig::tiny(), 30);
  const TrainingData data = load_training_data(dir.path);
  MinafModel<float> net = make_model(data, tiny_train(1));

  const std::vector<ReconstructionMode> modes = model::all_modes();
  const EvalResult raw = evaluate(net, data, sim::Split::Test, modes);
  CHECK(raw.reports.size() == modes.size());
  CHECK(raw.n_rirs == 2 * m.indices(sim::Split::Test).size());
  CHECK(std::isfinite(raw.pred_spec_l1));
  CHECK(raw.pred_spec_l1 > 0.5);
  for (const auto& [mode, r] : raw.reports) {
    CHECK(metrics::validate_report_json(r.to_json()) == "");
    CHECK(std::isfinite(r.spec_l1));
  }

  // Perfect magnitude with ground-truth phase reproduces the RIRs.
  const auto test = m.indices(sim::Split::Test);
  std::vector<Prediction> perfect;
  for (std::size_t s : test) {
    for (int c = 0; c < 2; ++c) {
      const auto& spec = data.specs[s][static_cast<std::size_t>(c)];
      perfect.emplace_back(dsp::log_magnitude(spec), dsp::instantaneous_frequency(spec));
    }
  }
  const EvalResult ideal = evaluate_predictions(data, test, perfect,
                                                {ReconstructionMode::GTP, ReconstructionMode::PreP,
                                                 ReconstructionMode::GTM_PreP},
                                                42, 2);
  // Targets are held in float, so the log-magnitude round trip is exact to ~1e-7.
  CHECK(ideal.pred_spec_l1 < 1e-6);
  const auto& gtp = ideal.report(ReconstructionMode::GTP);
  CHECK(gtp.n_excluded == 0);
  CHECK(gtp.t60_err_percent < 1e-6);
  CHECK(gtp.edt_err_sec < 1e-9);
  CHECK(gtp.c50_err_db < 1e-6);
  CHECK(gtp.snr_db > 100.0);
  CHECK(ideal.report(ReconstructionMode::GTM_PreP).t60_err_percent < 5.0);

  const json j = ideal.to_json(true);
  for (auto& [name, rep] : j.at("modes").items()) {
    CHECK(metrics::validate_report_json(rep) == "");
    const auto back = metrics::AcousticReport::from_json(rep);
    CHECK(back.t60_err_percent == doctest::Approx(ideal.report(model::mode_from_string(name)).t60_err_percent));
  }
  CHECK_THROWS_AS(ideal.report(ReconstructionMode::RanP), InvalidArgument);

  // Workers do not change the numbers.
  const EvalResult serial = evaluate(net, data, sim::Split::Test, {ReconstructionMode::GLim}, 42, 1);
  const EvalResult parallel = evaluate(net, data, sim::Split::Test, {ReconstructionMode::GLim}, 42, 3);
  CHECK(serial.to_json(true) == parallel.to_json(true));
}

TEST_CASE("experiment matrix: single value, fixed schema, reproducible CSV") {
  TempDir dir("exp");
  testing::make_dataset(dir.path, 8, {0, 1}, model::ModelConfig::tiny(), 20);
  ExperimentConfig ec;
  ec.axis = Axis::Ablation;
  ec.values = {"drop_occ"};
  ec.train = tiny_train(1);
  const auto rows = run_experiment_matrix(dir.path, ec, dir.path / "out_a");
  CHECK(rows.size() == ec.modes.size());
  for (const auto& r : rows) CHECK(r.axis_value == "drop_occ");
  std::ifstream csv(dir.path / "out_a" / "results.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "axis_value,t60_pct,c50_db,edt_s,spec_l1,mode");
  CHECK(fs::exists(dir.path / "out_a" / "t60_pct.svg"));
  run_experiment_matrix(dir.path, ec, dir.path / "out_b");
  CHECK(testing::slurp(dir.path / "out_a" / "results.csv") == testing::slurp(dir.path / "out_b" / "results.csv"));
  const auto back = read_experiment_csv(dir.path / "out_a" / "results.csv");
  REQUIRE(back.size() == rows.size());
  CHECK(back[0].t60_pct == rows[0].t60_pct);

  // Probe axes write their caches into the run directory only.
  ExperimentConfig rays = ec;
  rays.axis = Axis::ProbeRays;
  rays.values = {"16"};
  rays.probe.n_thresholds = 4;
  rays.modes = {ReconstructionMode::GTP};
  const auto rr = run_experiment_matrix(dir.path, rays, dir.path / "out_rays");
  CHECK(rr.size() == 1);
  CHECK(fs::exists(dir.path / "out_rays" / "probe_rays_16" / kDefaultContextDir / kProbeStampFile));
  CHECK_THROWS_AS(axis_from_string("rays"), InvalidArgument);
}

TEST_CASE("desk model overfits a single sample") {
  TempDir dir("overfit1");
  testing::make_dataset(dir.path, 1, {0}, model::ModelConfig::desk(), 20, true);
  const TrainingData data = load_training_data(dir.path);
  TrainConfig tc;
  tc.epochs = 200;  // one step per epoch
  tc.lr_decay = 1.0;
  MinafModel<float> net = make_model(data, tc);
  const TrainResult r = train(net, data, tc, dir.path / "run");
  CHECK(r.steps == 200);
  const auto lines = read_ndjson(dir.path / "run" / kStepLogFile);
  const double first = lines.front().at("total").get<double>();
  const double last = lines.back().at("total").get<double>();
  MESSAGE("loss " << first << " -> " << last);
  CHECK(last * 10.0 <= first);
}

TEST_CASE("desk model fits a 4-sample dataset; time and channel inputs matter after training") {
  TempDir dir("overfit4");
  testing::make_dataset(dir.path, 2, {0, 1}, model::ModelConfig::desk(), 20, true);
  const TrainingData data = load_training_data(dir.path);
  REQUIRE(data.manifest.samples.size() == 4);
  TrainConfig tc;
  MinafModel<float> net = make_model(data, tc);
  nn::Adam<float> adam(net.params());
  const std::vector<std::size_t> all = {0, 1, 2, 3};
  const std::size_t per_step = tc.samples_per_step(data.n_frames());

  // Same step as train() at a constant learning rate, without per-epoch checkpoints.
  double fit = spec_l1_on(net, data, all);
  const double initial = fit;
  std::size_t steps = 0;
  while (steps < 2000 && fit >= 0.05) {
    for (std::size_t start = 0; start < all.size(); start += per_step, ++steps) {
      std::vector<std::pair<std::size_t, int>> items;
      std::vector<model::RirQuery> queries;
      for (std::size_t i = start; i < std::min(all.size(), start + per_step); ++i) {
        for (int c = 0; c < 2; ++c) {
          items.emplace_back(all[i], c);
          queries.push_back(data.query(all[i], c));
        }
      }
      const BatchTargets tg = gather_targets(data, items);
      Tape<float> tape;
      net.params().zero_grad();
      const auto fv = net.forward(tape, queries);
      tape.backward(compute_loss<float>(tape, fv.mag, fv.ifr, tg.mag, tg.ifr, tg.edc, tg.n_rirs, tg.n_frames, tc.alpha)
                        .total);
      adam.step(net.params(), tc.lr0);
    }
    if (steps % 100 == 0) fit = spec_l1_on(net, data, all);
  }
  MESSAGE("train spec_l1 " << initial << " -> " << fit << " after " << steps << " steps");
  CHECK(fit < 0.05);
  CHECK(steps <= 2000);

  // The fitted model reads the time embedding and the channel table.
  const model::RirQuery q = data.query(0, 0);
  const Mat<float> fused = net.fuse(*q.tx, *q.rx, q.p_tx, q.p_rx);
  const auto t0 = net.predict_column(net.embed_time(fused, 0), q.orientation, 0);
  const auto t10 = net.predict_column(net.embed_time(fused, 10), q.orientation, 0);
  const auto c1 = net.predict_column(net.embed_time(fused, 0), q.orientation, 1);
  CHECK((t0.first - t10.first).cwiseAbs().maxCoeff() > 1e-2f);
  CHECK((t0.first - c1.first).cwiseAbs().maxCoeff() > 1e-3f);
  CHECK((t0.second - c1.second).cwiseAbs().maxCoeff() > 1e-3f);
}
