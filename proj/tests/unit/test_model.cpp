#include <doctest.h>

#include <cmath>

#include "minaf/common/error.hpp"
#include "minaf/dsp/spectrogram.hpp"
#include "minaf/model/minaf.hpp"
#include "minaf/sim/image_source.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace minaf;
using namespace minaf::model;
using testing::RoomProbe;

namespace {

std::size_t count_prefix(const nn::ParamSet<float>& ps, const std::string& prefix) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].name.rfind(prefix, 0) == 0) n += ps[i].size();
  }
  return n;
}

dsp::Waveform simulated_rir(const Vec3& src, const Vec3& rx_pos, int channel = 0, double length = 0.5) {
  const sim::ShoeboxRoom room;
  sim::ReceiverSpec rx;
  rx.pos = rx_pos;
  return sim::render_rir(room, sim::image_sources(room, src, 20), rx, length)[static_cast<std::size_t>(channel)];
}

}  // namespace

TEST_CASE("presets and parameter counts") {
  CHECK(ModelConfig::paper().widths == std::vector<std::size_t>{2048, 1448, 1024, 724, 512});
  CHECK(ModelConfig::desk().widths == std::vector<std::size_t>{512, 362, 256, 181, 128});
  for (const ModelConfig& base : {ModelConfig::tiny(), ModelConfig::desk()}) {
    for (const char* abl : {"none", "no_time_embed"}) {
      ModelConfig cfg = base;
      cfg.ablation = Ablation::from_name(abl);
      const MinafModel<float> m(cfg, 1);
      const ParamCount pc = parameter_count(cfg);
      CHECK(m.params().count() == pc.total());
      CHECK(count_prefix(m.params(), "mag.") == pc.core_mag);
      CHECK(count_prefix(m.params(), "if.") == pc.core_if);
      CHECK(count_prefix(m.params(), "mag.") == count_prefix(m.params(), "if."));
      CHECK(count_prefix(m.params(), "head.") == pc.heads);
      CHECK(m.params().find("emb.orientation")->value.rows() == 4);
      CHECK(m.params().find("emb.channel")->value.rows() == 2);
      CHECK(m.params().find("emb.channel")->value.cols() == 64);
    }
  }
  // Tiny: heads 8 * (16, 48, 16, 16, 4, 60, 60, 20) * 8 + 8 * (8*8 + 16); core in = 96 + 128.
  const ParamCount tiny = parameter_count(ModelConfig::tiny());
  CHECK(tiny.heads == 8 * (16 + 48 + 16 + 16 + 4 + 60 + 60 + 20) + 8 * (64 + 16));
  CHECK(tiny.core_mag == (224 * 32 + 32) + (160 * 16 + 16) + (144 * 257 + 257));
  CHECK(tiny.embeddings == 384);
  MESSAGE("desk parameters: " << parameter_count(ModelConfig::desk()).total());
}

TEST_CASE("config json round trip") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.ablation.drop_occ = true;
  cfg.distance_scale = 7.25;
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(ModelConfig::from_json(nlohmann::json{{"h", 3}}), DataError);
  CHECK_THROWS_AS(Ablation::from_name("drop_everything"), InvalidArgument);
  CHECK(Ablation::from_name("drop_mu_sigma").name() == "drop_mu_sigma");
}

TEST_CASE("context projection and fusion") {
  const ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  const RoomProbe probe(cfg);
  MinafModel<double> m(cfg, 3);
  const Vec3 a(1.0, 1.2, 1.5), b(3.1, 2.2, 0.9);
  const ContextInput ca = probe.context(a, cfg), cb = probe.context(b, cfg);

  const Mat<double> latent = m.project_context(ca);
  CHECK(latent.rows() == 8);
  CHECK(latent.cols() == 5);
  CHECK(m.project_context(ca) == latent);

  const Mat<double> f = m.fuse(ca, cb, a, b);
  CHECK(f.rows() == 8);
  CHECK(f.cols() == 12);
  CHECK(f.leftCols(5) == latent);
  CHECK(f.middleCols(6, 5) == m.project_context(cb));

  SUBCASE("swapping Tx and Rx") {
    const Mat<double> g = m.fuse(cb, ca, b, a);
    CHECK(g.leftCols(5) == f.middleCols(6, 5));
    CHECK(g.middleCols(6, 5) == f.leftCols(5));
    // Position columns come from separate heads; with the heads made equal
    // the whole halves swap.
    for (const char* s : {".0.weight", ".0.bias", ".1.weight", ".1.bias"})
      m.params().find(std::string("head.prx") + s)->value = m.params().find(std::string("head.ptx") + s)->value;
    const Mat<double> f2 = m.fuse(ca, cb, a, b);
    const Mat<double> g2 = m.fuse(cb, ca, b, a);
    CHECK(g2.leftCols(6) == f2.rightCols(6));
    CHECK(g2.rightCols(6) == f2.leftCols(6));
  }

  SUBCASE("identical contexts at distinct positions") {
    const Mat<double> p = m.fuse(ca, ca, a, a);
    const Mat<double> q = m.fuse(ca, ca, b, b);
    CHECK(p.leftCols(5) == q.leftCols(5));
    CHECK((p.col(5) - q.col(5)).norm() > 1e-6);
    CHECK((p.col(11) - q.col(11)).norm() > 1e-6);
  }

  SUBCASE("dimension mismatch") {
    ContextInput bad = ca;
    bad.d.pop_back();
    CHECK_THROWS_AS(m.project_context(bad), InvalidArgument);
    geometry::ContextRaw raw;
    raw.distance.assign(20, 1.0);
    CHECK_THROWS_AS(ContextInput::from_raw(raw, cfg), InvalidArgument);
  }
}

TEST_CASE("probe-identical points in a translation-symmetric scene") {
  // Two large parallel planes: translating along them leaves every probe
  // ray's hit unchanged up to rounding.
  using geometry::Vec3;
  const double e = 1e4;
  std::vector<Vec3> v{{-e, 0, -e}, {e, 0, -e}, {e, 0, e}, {-e, 0, e}, {-e, 3, -e}, {e, 3, -e}, {e, 3, e}, {-e, 3, e}};
  const auto mesh = geometry::TriangleMesh::from_triangles(v, {{0, 1, 2}, {0, 2, 3}, {4, 6, 5}, {4, 7, 6}});
  const geometry::Bvh bvh(mesh);
  ModelConfig cfg = ModelConfig::tiny();
  cfg.scene_lo = Vec3(-5, 0, -5);
  cfg.scene_hi = Vec3(5, 3, 5);
  cfg.distance_scale = 100.0;
  geometry::ProbeConfig pc = RoomProbe::make_probe(cfg);
  pc.miss_distance = 3e4;
  const auto fan = geometry::RayFan::fibonacci(cfg.n_rays, pc.n_neighbors);
  const Vec3 a(0.0, 1.1, 0.0), b(1.7, 1.1, -0.8);
  const ContextInput ca = ContextInput::from_raw(geometry::probe_context(bvh, mesh, a, fan, pc), cfg);
  const ContextInput cb = ContextInput::from_raw(geometry::probe_context(bvh, mesh, b, fan, pc), cfg);
  for (std::size_t i = 0; i < ca.d.size(); ++i) CHECK(std::abs(ca.d[i] - cb.d[i]) < 1e-9);
  MinafModel<double> m(cfg, 5);
  const Mat<double> fa = m.fuse(ca, ca, a, a);
  const Mat<double> fb = m.fuse(cb, cb, b, b);
  CHECK((fa.leftCols(5) - fb.leftCols(5)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((fa.col(5) - fb.col(5)).norm() > 1e-3);
}

TEST_CASE("time embedding") {
  const ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  const RoomProbe probe(cfg);
  MinafModel<double> m(cfg, 3);
  const ContextInput c = probe.context(Vec3(1, 1, 1), cfg);
  const Mat<double> f = m.fuse(c, c, Vec3(1, 1, 1), Vec3(2, 2, 1));
  CHECK(m.embed_time(f, 5).rows() == 8);
  CHECK(m.embed_time(f, 5).cols() == 12);
  CHECK(m.embed_time(f, 0) != m.embed_time(f, 10));
  CHECK(m.time_coordinate(0) == doctest::Approx(-1.0 + 1.0 / 63));
  CHECK(m.time_coordinate(62) == doctest::Approx(1.0 - 1.0 / 63));
  m.params().find("head.t.1.weight")->value.setZero();
  m.params().find("head.t.1.bias")->value.setOnes();
  for (std::size_t t : {0, 17, 62}) CHECK(m.embed_time(f, t) == f);
}

TEST_CASE("column and spectrogram prediction") {
  const ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  const RoomProbe probe(cfg);
  MinafModel<float> m(cfg, 11);
  const Vec3 ptx(1.0, 1.2, 1.5), prx(3.1, 2.2, 1.5);
  const ContextInput ctx = probe.context(ptx, cfg), crx = probe.context(prx, cfg);
  const RirQuery q{&ctx, &crx, ptx, prx, 2, 1};

  const auto [mag, ifr] = m.predict_spectrogram(q);
  CHECK(mag.rows() == 257);
  CHECK(mag.cols() == 63);
  for (double v : ifr.data()) CHECK((v >= -1.0 && v <= 1.0));

  const Mat<float> fused = m.fuse(ctx, crx, ptx, prx);
  for (std::size_t t : {0, 1, 30, 62}) {
    const auto [mc, ic] = m.predict_column(m.embed_time(fused, t), 2, 1);
    REQUIRE(mc.rows() == 257);
    REQUIRE(mc.cols() == 1);
    bool same = true;
    for (std::size_t k = 0; k < 257; ++k) {
      same = same && static_cast<double>(mc(static_cast<Eigen::Index>(k), 0)) == mag.at(k, t) &&
             static_cast<double>(ic(static_cast<Eigen::Index>(k), 0)) == ifr.at(k, t);
    }
    CHECK(same);
  }

  // Batched queries reproduce single-query grids exactly.
  const RirQuery q2{&crx, &ctx, prx, ptx, 0, 0};
  const auto batch = m.predict_many({q2, q, q2});
  CHECK(batch[1].first == mag);
  CHECK(batch[1].second == ifr);
  CHECK(batch[0].first == batch[2].first);
  CHECK(batch[0].first == m.predict_spectrogram(q2).first);

  const auto other_channel = m.predict_spectrogram(RirQuery{&ctx, &crx, ptx, prx, 2, 0});
  CHECK(other_channel.first != mag);

  CHECK_THROWS_AS(m.predict_column(m.embed_time(fused, 0), 4, 0), InvalidArgument);
  CHECK_THROWS_AS(m.predict_column(m.embed_time(fused, 0), 0, 2), InvalidArgument);
  CHECK_THROWS_AS(m.predict_spectrogram(RirQuery{&ctx, &crx, ptx, prx, -1, 0}), InvalidArgument);
}

TEST_CASE("ablation masks") {
  ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  const RoomProbe probe(cfg);
  const ContextInput c = probe.context(Vec3(1, 1, 1), cfg);
  cfg.ablation = Ablation::from_name("drop_context");
  MinafModel<double> m(cfg, 3);
  const Mat<double> f = m.fuse(c, c, Vec3(1, 1, 1), Vec3(2, 2, 1));
  CHECK(f.leftCols(5).isZero(0.0));
  CHECK(f.middleCols(6, 5).isZero(0.0));
  CHECK(!f.col(5).isZero(0.0));
  cfg.ablation = Ablation::from_name("drop_mu_sigma");
  MinafModel<double> m2(cfg, 3);
  const Mat<double> g = m2.fuse(c, c, Vec3(1, 1, 1), Vec3(2, 2, 1));
  CHECK(g.middleCols(2, 2).isZero(0.0));
  CHECK(g.middleCols(8, 2).isZero(0.0));
  CHECK(!g.col(1).isZero(0.0));
  cfg.ablation = Ablation::from_name("no_time_embed");
  MinafModel<float> m3(cfg, 3);
  const auto [mag, ifr] = m3.predict_spectrogram(RirQuery{&c, &c, Vec3(1, 1, 1), Vec3(2, 2, 1), 0, 0});
  CHECK(mag.cols() == 63);
}

TEST_CASE("tiny model gradients") {
  ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  cfg.n_frames = 16;
  const RoomProbe probe(cfg);
  MinafModel<double> m(cfg, 21);
  const ContextInput c1 = probe.context(Vec3(1.0, 1.2, 1.5), cfg), c2 = probe.context(Vec3(3.1, 2.2, 1.5), cfg);
  const std::vector<RirQuery> qs{{&c1, &c2, Vec3(1.0, 1.2, 1.5), Vec3(3.1, 2.2, 1.5), 1, 0},
                                 {&c2, &c1, Vec3(3.1, 2.2, 1.5), Vec3(1.0, 1.2, 1.5), 3, 1}};
  Mat<double> tm(2 * 16, 257), ti(2 * 16, 257);
  CounterRng rng(1, 2);
  for (Eigen::Index i = 0; i < tm.size(); ++i) {
    tm.data()[i] = rng.uniform(-7, -1);
    ti.data()[i] = rng.uniform(-1, 1);
  }
  auto loss = [&](nn::Tape<double>& t) {
    const auto v = m.forward(t, qs);
    return t.weighted_sum({t.l1_mean(v.mag, tm), t.l1_mean(v.ifr, ti)}, {1.0, 1.0});
  };
  const auto r = testing::grad_check(m.params(), loss, 1e-5, 12);
  MESSAGE("worst " << r.worst_rel << " at " << r.worst_param << " over " << r.checked << " a=" << r.worst_analytic << " n=" << r.worst_numeric);
  CHECK(r.worst_rel < 1e-4);
  // Every parameter receives gradient.
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    INFO(m.params()[i].name);
    CHECK(m.params()[i].grad.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("separate training detaches the IF loss from the front end") {
  const ModelConfig cfg = RoomProbe::fit(ModelConfig::tiny());
  const RoomProbe probe(cfg);
  MinafModel<double> m(cfg, 21);
  const ContextInput c1 = probe.context(Vec3(1.0, 1.2, 1.5), cfg);
  const std::vector<RirQuery> qs{{&c1, &c1, Vec3(1.0, 1.2, 1.5), Vec3(3.1, 2.2, 1.5), 1, 0}};
  m.params().zero_grad();
  nn::Tape<double> t;
  const auto v = m.forward(t, qs, true);
  t.backward(t.mean(v.ifr));
  CHECK(m.params().find("head.d.0.weight")->grad.isZero(0.0));
  CHECK(m.params().find("emb.channel")->grad.isZero(0.0));
  CHECK(m.params().find("mag.0.weight")->grad.isZero(0.0));
  CHECK(!m.params().find("if.0.weight")->grad.isZero(0.0));
}

TEST_CASE("reconstruction modes") {
  const dsp::Waveform gt = simulated_rir(Vec3(1.0, 2.0, 1.2), Vec3(2.5, 1.2, 1.5));
  const auto spec = dsp::stft(gt);
  const dsp::MagSpec mag = dsp::log_magnitude(spec);
  const dsp::IfSpec ifr = dsp::instantaneous_frequency(spec);
  const std::size_t n = gt.size();

  const dsp::Waveform gtp = reconstruct_rir(mag, ifr, ReconstructionMode::GTP, &spec, 1, n);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(gtp.samples[i] - gt.samples[i]));
  CHECK(worst < 1e-5);

  // Predicted phase from the true IF integrates back to the true phase up to
  // the per-bin initial offset; GTM_PreP with it reproduces the magnitudes.
  const dsp::Waveform prep = reconstruct_rir(mag, ifr, ReconstructionMode::PreP, nullptr, 1, n);
  const dsp::Waveform gtm = reconstruct_rir(mag, ifr, ReconstructionMode::GTM_PreP, &spec, 1, n);
  CHECK(prep.size() == n);
  CHECK(gtm.size() == n);

  const dsp::Waveform r1 = reconstruct_rir(mag, ifr, ReconstructionMode::RanP, nullptr, 9, n);
  const dsp::Waveform r2 = reconstruct_rir(mag, ifr, ReconstructionMode::RanP, nullptr, 9, n);
  const dsp::Waveform r3 = reconstruct_rir(mag, ifr, ReconstructionMode::RanP, nullptr, 10, n);
  CHECK(r1.samples == r2.samples);
  CHECK(r1.samples != r3.samples);

  const dsp::Waveform gl = reconstruct_rir(mag, ifr, ReconstructionMode::GLim, nullptr, 9, n);
  const auto linear = dsp::linear_magnitude(mag);
  CHECK(dsp::spectral_convergence(dsp::stft(gl), linear) < dsp::spectral_convergence(dsp::stft(r1), linear));

  CHECK_THROWS_AS(reconstruct_rir(mag, ifr, ReconstructionMode::GTP, nullptr, 1, n), InvalidArgument);
  CHECK_THROWS_AS(reconstruct_rir(mag, ifr, ReconstructionMode::GTM_PreP, nullptr, 1, n), InvalidArgument);
  CHECK(mode_from_string("GTM+PreP") == ReconstructionMode::GTM_PreP);
  for (auto md : all_modes()) CHECK(mode_from_string(to_string(md)) == md);
  CHECK_THROWS_AS(mode_from_string("xyz"), InvalidArgument);
}

TEST_CASE("griffin-lim beats random phase on simulated RIRs") {
  int wins = 0, total = 0;
  for (double x : {0.8, 1.6, 2.4, 3.2}) {
    for (int ch = 0; ch < 2; ++ch) {
      const dsp::Waveform gt = simulated_rir(Vec3(x, 2.0, 1.2), Vec3(2.5, 1.2, 1.5), ch);
      const auto mag = dsp::log_magnitude(dsp::stft(gt));
      const dsp::IfSpec ifr(mag.rows(), mag.cols());
      const auto linear = dsp::linear_magnitude(mag);
      const double gl = dsp::spectral_convergence(dsp::stft(reconstruct_rir(mag, ifr, ReconstructionMode::GLim, nullptr, 4, gt.size())), linear);
      const double rp = dsp::spectral_convergence(dsp::stft(reconstruct_rir(mag, ifr, ReconstructionMode::RanP, nullptr, 4, gt.size())), linear);
      wins += gl < rp;
      ++total;
    }
  }
  CHECK(wins >= 0.9 * total);
}
