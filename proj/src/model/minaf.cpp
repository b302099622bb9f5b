#include "minaf/model/minaf.hpp"

#include <cmath>
#include <numbers>

#include "minaf/common/error.hpp"
#include "minaf/common/rng.hpp"

namespace minaf::model {

using nlohmann::json;

json Ablation::to_json() const {
  return {{"drop_context", drop_context},
          {"drop_n", drop_n},
          {"drop_mu_sigma", drop_mu_sigma},
          {"drop_occ", drop_occ},
          {"no_time_embed", no_time_embed}};
}

Ablation Ablation::from_json(const json& j) {
  Ablation a;
  a.drop_context = j.value("drop_context", false);
  a.drop_n = j.value("drop_n", false);
  a.drop_mu_sigma = j.value("drop_mu_sigma", false);
  a.drop_occ = j.value("drop_occ", false);
  a.no_time_embed = j.value("no_time_embed", false);
  return a;
}

Ablation Ablation::from_name(const std::string& name) {
  Ablation a;
  if (name == "none" || name.empty()) return a;
  if (name == "drop_context") a.drop_context = true;
  else if (name == "drop_n") a.drop_n = true;
  else if (name == "drop_mu_sigma") a.drop_mu_sigma = true;
  else if (name == "drop_occ") a.drop_occ = true;
  else if (name == "no_time_embed") a.no_time_embed = true;
  else throw InvalidArgument("unknown ablation '" + name + "'");
  return a;
}

std::string Ablation::name() const {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += n;
  };
  add(drop_context, "drop_context");
  add(drop_n, "drop_n");
  add(drop_mu_sigma, "drop_mu_sigma");
  add(drop_occ, "drop_occ");
  add(no_time_embed, "no_time_embed");
  return out.empty() ? "none" : out;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.widths = {2048, 1448, 1024, 724, 512};
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c = paper();
  for (auto& w : c.widths) w = static_cast<std::size_t>(std::lround(static_cast<double>(w) / 4.0));
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.n_rays = 16;
  c.n_thresholds = 4;
  c.h = 8;
  c.widths = {32, 16};
  return c;
}

void ModelConfig::validate() const {
  require(n_rays >= 1 && n_thresholds >= 1 && h >= 1 && embed_dim >= 1, "ModelConfig: sizes must be positive");
  require(bands >= 1, "ModelConfig: need at least one frequency band");
  require(!widths.empty(), "ModelConfig: core needs at least one hidden layer");
  for (auto w : widths) require(w >= 1, "ModelConfig: widths must be positive");
  require(n_freq >= 2 && n_frames >= 1, "ModelConfig: spectrogram shape must be positive");
  require(((scene_hi - scene_lo).array() > 0.0).all(), "ModelConfig: scene bounds must have positive extent");
  require(distance_scale > 0.0, "ModelConfig: distance scale must be positive");
}

std::size_t ModelConfig::core_input_dim() const {
  return fused_width() + (ablation.no_time_embed ? 2 * static_cast<std::size_t>(bands) : 0);
}

json ModelConfig::to_json() const {
  return {{"n_rays", n_rays},
          {"n_thresholds", n_thresholds},
          {"h", h},
          {"embed_dim", embed_dim},
          {"bands", bands},
          {"widths", widths},
          {"n_freq", n_freq},
          {"n_frames", n_frames},
          {"scene_lo", {scene_lo.x(), scene_lo.y(), scene_lo.z()}},
          {"scene_hi", {scene_hi.x(), scene_hi.y(), scene_hi.z()}},
          {"distance_scale", distance_scale},
          {"ablation", ablation.to_json()}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    ModelConfig c;
    c.n_rays = j.at("n_rays").get<std::size_t>();
    c.n_thresholds = j.at("n_thresholds").get<std::size_t>();
    c.h = j.at("h").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.bands = j.at("bands").get<int>();
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.n_freq = j.at("n_freq").get<std::size_t>();
    c.n_frames = j.at("n_frames").get<std::size_t>();
    const auto lo = j.at("scene_lo").get<std::vector<double>>();
    const auto hi = j.at("scene_hi").get<std::vector<double>>();
    require(lo.size() == 3 && hi.size() == 3, "scene bounds need 3 entries");
    c.scene_lo = Vec3(lo[0], lo[1], lo[2]);
    c.scene_hi = Vec3(hi[0], hi[1], hi[2]);
    c.distance_scale = j.at("distance_scale").get<double>();
    c.ablation = Ablation::from_json(j.at("ablation"));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
}

ParamCount parameter_count(const ModelConfig& cfg) {
  const std::size_t h = cfg.h;
  auto two_layer = [h](std::size_t in) { return in * h + h + h * h + h; };
  const std::size_t pos = 6 * static_cast<std::size_t>(cfg.bands);
  ParamCount c;
  c.heads = two_layer(cfg.n_rays) + two_layer(3 * cfg.n_rays) + 2 * two_layer(cfg.n_rays) +
            two_layer(cfg.n_thresholds) + 2 * two_layer(pos) + two_layer(2 * static_cast<std::size_t>(cfg.bands));
  c.embeddings = 6 * cfg.embed_dim;
  const std::size_t e = 2 * cfg.embed_dim;
  std::size_t in = cfg.core_input_dim();
  std::size_t core = 0;
  for (std::size_t w : cfg.widths) {
    core += (in + e) * w + w;
    in = w;
  }
  core += (in + e) * cfg.n_freq + cfg.n_freq;
  c.core_mag = core;
  c.core_if = core;
  return c;
}

ContextInput ContextInput::from_raw(const geometry::ContextRaw& raw, const ModelConfig& cfg) {
  require(raw.n_rays() == cfg.n_rays, "context has " + std::to_string(raw.n_rays()) + " rays, model expects " +
                                          std::to_string(cfg.n_rays));
  require(raw.n_thresholds() == cfg.n_thresholds, "context threshold count does not match the model");
  require(raw.normal.size() == 3 * raw.n_rays() && raw.mean.size() == raw.n_rays() &&
              raw.stddev.size() == raw.n_rays(),
          "context arrays have inconsistent sizes");
  ContextInput c;
  const double s = 1.0 / cfg.distance_scale;
  for (double v : raw.distance) c.d.push_back(v * s);
  c.n = raw.normal;
  for (double v : raw.mean) c.mu.push_back(v * s);
  for (double v : raw.stddev) c.sigma.push_back(v * s);
  const double inv_n = 1.0 / static_cast<double>(raw.n_rays());
  for (double v : raw.occupancy) c.occ.push_back(v * inv_n);
  return c;
}

template <typename T>
MinafModel<T>::MinafModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t h = cfg_.h;
  const auto bands = static_cast<std::size_t>(cfg_.bands);
  using nn::TwoLayer;
  TwoLayer<T>::create(params_, "head.d", cfg_.n_rays, h, seed);
  TwoLayer<T>::create(params_, "head.n", 3 * cfg_.n_rays, h, seed);
  TwoLayer<T>::create(params_, "head.mu", cfg_.n_rays, h, seed);
  TwoLayer<T>::create(params_, "head.sigma", cfg_.n_rays, h, seed);
  TwoLayer<T>::create(params_, "head.occ", cfg_.n_thresholds, h, seed);
  TwoLayer<T>::create(params_, "head.ptx", 6 * bands, h, seed);
  TwoLayer<T>::create(params_, "head.prx", 6 * bands, h, seed);
  TwoLayer<T>::create(params_, "head.t", 2 * bands, h, seed);
  params_.add("emb.orientation", nn::init_normal<T>(4, cfg_.embed_dim, 0.02, seed, "emb.orientation"));
  params_.add("emb.channel", nn::init_normal<T>(2, cfg_.embed_dim, 0.02, seed, "emb.channel"));
  const std::size_t e = 2 * cfg_.embed_dim;
  for (const char* core : {"mag", "if"}) {
    std::size_t in = cfg_.core_input_dim();
    for (std::size_t k = 0; k < cfg_.widths.size(); ++k) {
      nn::Linear<T>::create(params_, std::string(core) + "." + std::to_string(k), in + e, cfg_.widths[k],
                            nn::Init::HeUniform, seed);
      in = cfg_.widths[k];
    }
    nn::Linear<T>::create(params_, std::string(core) + "." + std::to_string(cfg_.widths.size()), in + e,
                          cfg_.n_freq, nn::Init::GlorotUniform, seed);
  }
  build_layers();
}

template <typename T>
template <typename U>
MinafModel<T>::MinafModel(ModelConfig cfg, const nn::ParamSet<U>& params) : MinafModel(cfg, 0) {
  require(params.size() == params_.size(), "parameter table does not match the model architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Param<T>* p = params_.find(params[i].name);
    require(p != nullptr, "unexpected parameter " + params[i].name);
    require(p->value.rows() == params[i].value.rows() && p->value.cols() == params[i].value.cols(),
            "parameter " + params[i].name + " has the wrong shape");
    p->value = params[i].value.template cast<T>();
  }
}

template <typename T>
void MinafModel<T>::build_layers() {
  using nn::TwoLayer;
  head_d_ = TwoLayer<T>::bind(params_, "head.d");
  head_n_ = TwoLayer<T>::bind(params_, "head.n");
  head_mu_ = TwoLayer<T>::bind(params_, "head.mu");
  head_sigma_ = TwoLayer<T>::bind(params_, "head.sigma");
  head_occ_ = TwoLayer<T>::bind(params_, "head.occ");
  head_ptx_ = TwoLayer<T>::bind(params_, "head.ptx");
  head_prx_ = TwoLayer<T>::bind(params_, "head.prx");
  head_t_ = TwoLayer<T>::bind(params_, "head.t");
  emb_orientation_ = params_.find("emb.orientation");
  emb_channel_ = params_.find("emb.channel");
  core_mag_.clear();
  core_if_.clear();
  for (std::size_t k = 0; k <= cfg_.widths.size(); ++k) {
    core_mag_.push_back(nn::Linear<T>::bind(params_, "mag." + std::to_string(k)));
    core_if_.push_back(nn::Linear<T>::bind(params_, "if." + std::to_string(k)));
  }
}

template <typename T>
double MinafModel<T>::time_coordinate(std::size_t t) const {
  return 2.0 * (static_cast<double>(t) + 0.5) / static_cast<double>(cfg_.n_frames) - 1.0;
}

template <typename T>
Vec3 MinafModel<T>::normalize_position(const Vec3& p) const {
  return (2.0 * (p - cfg_.scene_lo).array() / (cfg_.scene_hi - cfg_.scene_lo).array() - 1.0).matrix();
}

namespace {

template <typename T>
Mat<T> rows_of(const std::vector<const std::vector<double>*>& vs) {
  Mat<T> m(static_cast<Eigen::Index>(vs.size()), static_cast<Eigen::Index>(vs.front()->size()));
  for (std::size_t r = 0; r < vs.size(); ++r) {
    require(vs[r]->size() == vs.front()->size(), "context rows have inconsistent sizes");
    for (std::size_t c = 0; c < vs[r]->size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<T>((*vs[r])[c]);
  }
  return m;
}

}  // namespace

template <typename T>
Var MinafModel<T>::context_rows(Tape<T>& tape, const std::vector<const ContextInput*>& ctx) {
  auto field = [&](std::vector<double> ContextInput::*member, std::size_t expected) {
    std::vector<const std::vector<double>*> vs;
    for (const ContextInput* c : ctx) {
      require(c != nullptr, "missing context");
      require((c->*member).size() == expected, "context dimension does not match the model");
      vs.push_back(&(c->*member));
    }
    return tape.constant(rows_of<T>(vs));
  };
  const Var d = head_d_(tape, field(&ContextInput::d, cfg_.n_rays));
  const Var n = head_n_(tape, field(&ContextInput::n, 3 * cfg_.n_rays));
  const Var mu = head_mu_(tape, field(&ContextInput::mu, cfg_.n_rays));
  const Var sigma = head_sigma_(tape, field(&ContextInput::sigma, cfg_.n_rays));
  const Var occ = head_occ_(tape, field(&ContextInput::occ, cfg_.n_thresholds));
  return tape.concat_cols({d, n, mu, sigma, occ});
}

template <typename T>
Var MinafModel<T>::position_rows(Tape<T>& tape, const nn::TwoLayer<T>& head, const std::vector<Vec3>& ps) {
  const nn::PosEncConfig pe{cfg_.bands};
  Mat<T> x(static_cast<Eigen::Index>(ps.size()), 6 * cfg_.bands);
  for (std::size_t r = 0; r < ps.size(); ++r) {
    const Vec3 q = normalize_position(ps[r]);
    const auto g = nn::posenc(std::vector<double>{q.x(), q.y(), q.z()}, pe);
    for (std::size_t c = 0; c < g.size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<T>(g[c]);
  }
  return head(tape, tape.constant(std::move(x)));
}

template <typename T>
Mat<T> MinafModel<T>::column_mask() const {
  const auto h = static_cast<Eigen::Index>(cfg_.h);
  Mat<T> mask = Mat<T>::Ones(1, 12 * h);
  const Ablation& a = cfg_.ablation;
  for (int side = 0; side < 2; ++side) {
    const Eigen::Index base = side * 6 * h;  // C columns 0..4, then p' column 5
    auto zero = [&](int col) { mask.middleCols(base + col * h, h).setZero(); };
    if (a.drop_context) {
      for (int c = 0; c < 5; ++c) zero(c);
    }
    if (a.drop_n) zero(1);
    if (a.drop_mu_sigma) {
      zero(2);
      zero(3);
    }
    if (a.drop_occ) zero(4);
  }
  return mask;
}

template <typename T>
Var MinafModel<T>::fused_rows(Tape<T>& tape, const std::vector<RirQuery>& qs) {
  std::vector<const ContextInput*> tx, rx;
  std::vector<Vec3> ptx, prx;
  for (const auto& q : qs) {
    tx.push_back(q.tx);
    rx.push_back(q.rx);
    ptx.push_back(q.p_tx);
    prx.push_back(q.p_rx);
  }
  const Var fused = tape.concat_cols({context_rows(tape, tx), position_rows(tape, head_ptx_, ptx),
                                      context_rows(tape, rx), position_rows(tape, head_prx_, prx)});
  if (!(cfg_.ablation.drop_context || cfg_.ablation.drop_n || cfg_.ablation.drop_mu_sigma || cfg_.ablation.drop_occ))
    return fused;
  const Mat<T> mask = column_mask();
  Mat<T> tiled(static_cast<Eigen::Index>(qs.size()), mask.cols());
  tiled.rowwise() = mask.row(0);
  return tape.mul(fused, tape.constant(std::move(tiled)));
}

template <typename T>
ForwardVars<T> MinafModel<T>::forward(Tape<T>& tape, const std::vector<RirQuery>& qs, bool detach_if) {
  require(!qs.empty(), "forward: no queries");
  for (const auto& q : qs) {
    require(q.orientation >= 0 && q.orientation < 4, "orientation must be one of 4 quarter turns");
    require(q.channel == 0 || q.channel == 1, "channel must be 0 or 1");
  }
  const std::size_t n_frames = cfg_.n_frames;
  const nn::PosEncConfig pe{cfg_.bands};
  Mat<T> gamma(static_cast<Eigen::Index>(n_frames), 2 * cfg_.bands);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto g = nn::posenc(time_coordinate(t), pe);
    for (std::size_t c = 0; c < g.size(); ++c)
      gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = static_cast<T>(g[c]);
  }
  std::vector<int> rir_idx, t_idx, o_idx, c_idx;
  for (std::size_t b = 0; b < qs.size(); ++b) {
    for (std::size_t t = 0; t < n_frames; ++t) {
      rir_idx.push_back(static_cast<int>(b));
      t_idx.push_back(static_cast<int>(t));
      o_idx.push_back(qs[b].orientation);
      c_idx.push_back(qs[b].channel);
    }
  }
  const Var fused = fused_rows(tape, qs);
  Var x;
  if (cfg_.ablation.no_time_embed) {
    x = tape.concat_cols({tape.gather_rows(fused, rir_idx), tape.gather_rows(tape.constant(gamma), t_idx)});
  } else {
    const Var tvec = tape.tile_cols(head_t_(tape, tape.constant(gamma)), 12);
    x = tape.mul(tape.gather_rows(fused, rir_idx), tape.gather_rows(tvec, t_idx));
  }
  const Var emb = tape.concat_cols({tape.gather_rows(tape.param(*emb_orientation_), o_idx),
                                    tape.gather_rows(tape.param(*emb_channel_), c_idx)});
  auto core = [&](const std::vector<nn::Linear<T>>& layers, Var a, Var e) {
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) a = tape.relu(layers[k](tape, tape.concat_cols({a, e})));
    return layers.back()(tape, tape.concat_cols({a, e}));
  };
  ForwardVars<T> out;
  out.mag = core(core_mag_, x, emb);
  if (detach_if) {
    out.ifr = tape.tanh(core(core_if_, tape.detach(x), tape.detach(emb)));
  } else {
    out.ifr = tape.tanh(core(core_if_, x, emb));
  }
  return out;
}

template <typename T>
Mat<T> MinafModel<T>::project_context(const ContextInput& ctx) {
  Tape<T> tape(false);
  const Mat<T>& row = tape.value(context_rows(tape, {&ctx}));
  return Eigen::Map<const Mat<T>>(row.data(), 5, static_cast<Eigen::Index>(cfg_.h)).transpose();
}

template <typename T>
Mat<T> MinafModel<T>::fuse(const ContextInput& tx, const ContextInput& rx, const Vec3& p_tx, const Vec3& p_rx) {
  Tape<T> tape(false);
  const Mat<T>& row = tape.value(fused_rows(tape, {RirQuery{&tx, &rx, p_tx, p_rx, 0, 0}}));
  return Eigen::Map<const Mat<T>>(row.data(), 12, static_cast<Eigen::Index>(cfg_.h)).transpose();
}

template <typename T>
Mat<T> MinafModel<T>::time_vector(std::size_t t) {
  Tape<T> tape(false);
  const auto g = nn::posenc(time_coordinate(t), nn::PosEncConfig{cfg_.bands});
  Mat<T> x(1, static_cast<Eigen::Index>(g.size()));
  for (std::size_t c = 0; c < g.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = static_cast<T>(g[c]);
  return tape.value(head_t_(tape, tape.constant(std::move(x)))).transpose();
}

template <typename T>
Mat<T> MinafModel<T>::embed_time(const Mat<T>& fused, std::size_t t) {
  require(fused.rows() == static_cast<Eigen::Index>(cfg_.h) && fused.cols() == 12, "embed_time: fused grid must be h x 12");
  const Mat<T> tv = time_vector(t);
  Mat<T> out = fused;
  for (Eigen::Index j = 0; j < 12; ++j) out.col(j) = out.col(j).cwiseProduct(tv.col(0));
  return out;
}

template <typename T>
std::pair<Mat<T>, Mat<T>> MinafModel<T>::predict_column(const Mat<T>& fused_t, int orientation, int channel) {
  require(orientation >= 0 && orientation < 4, "orientation must be one of 4 quarter turns");
  require(channel == 0 || channel == 1, "channel must be 0 or 1");
  require(!cfg_.ablation.no_time_embed, "predict_column: time-concatenation models are queried per spectrogram");
  require(fused_t.rows() == static_cast<Eigen::Index>(cfg_.h) && fused_t.cols() == 12,
          "predict_column: fused grid must be h x 12");
  Tape<T> tape(false);
  // Column blocks of h, in column order.
  Mat<T> flat = fused_t.transpose();
  flat.resize(1, fused_t.size());
  const Var x = tape.constant(std::move(flat));
  const Var emb = tape.concat_cols({tape.gather_rows(tape.param(*emb_orientation_), {orientation}),
                                    tape.gather_rows(tape.param(*emb_channel_), {channel})});
  auto core = [&](const std::vector<nn::Linear<T>>& layers) {
    Var a = x;
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) a = tape.relu(layers[k](tape, tape.concat_cols({a, emb})));
    return layers.back()(tape, tape.concat_cols({a, emb}));
  };
  const Var mag = core(core_mag_);
  const Var ifr = tape.tanh(core(core_if_));
  return {tape.value(mag).transpose(), tape.value(ifr).transpose()};
}

template <typename T>
std::vector<std::pair<dsp::MagSpec, dsp::IfSpec>> MinafModel<T>::predict_many(const std::vector<RirQuery>& qs) {
  Tape<T> tape(false);
  const ForwardVars<T> v = forward(tape, qs);
  const Mat<T>& mag = tape.value(v.mag);
  const Mat<T>& ifr = tape.value(v.ifr);
  std::vector<std::pair<dsp::MagSpec, dsp::IfSpec>> out;
  const std::size_t T_ = cfg_.n_frames;
  for (std::size_t b = 0; b < qs.size(); ++b) {
    dsp::MagSpec m(cfg_.n_freq, T_);
    dsp::IfSpec f(cfg_.n_freq, T_);
    for (std::size_t t = 0; t < T_; ++t) {
      const auto r = static_cast<Eigen::Index>(b * T_ + t);
      for (std::size_t k = 0; k < cfg_.n_freq; ++k) {
        m.at(k, t) = static_cast<double>(mag(r, static_cast<Eigen::Index>(k)));
        f.at(k, t) = static_cast<double>(ifr(r, static_cast<Eigen::Index>(k)));
      }
    }
    out.emplace_back(std::move(m), std::move(f));
  }
  return out;
}

template <typename T>
std::pair<dsp::MagSpec, dsp::IfSpec> MinafModel<T>::predict_spectrogram(const RirQuery& q) {
  return std::move(predict_many({q}).front());
}

template class MinafModel<float>;
template class MinafModel<double>;
template MinafModel<double>::MinafModel(ModelConfig, const nn::ParamSet<float>&);
template MinafModel<float>::MinafModel(ModelConfig, const nn::ParamSet<float>&);
template MinafModel<double>::MinafModel(ModelConfig, const nn::ParamSet<double>&);

std::string to_string(ReconstructionMode m) {
  switch (m) {
    case ReconstructionMode::GTP: return "GTP";
    case ReconstructionMode::PreP: return "PreP";
    case ReconstructionMode::RanP: return "RanP";
    case ReconstructionMode::GLim: return "GLim";
    case ReconstructionMode::GTM_PreP: return "GTM_PreP";
  }
  return "GTP";
}

ReconstructionMode mode_from_string(const std::string& s) {
  for (ReconstructionMode m : all_modes()) {
    if (to_string(m) == s) return m;
  }
  if (s == "GTM+PreP") return ReconstructionMode::GTM_PreP;
  throw InvalidArgument("unknown reconstruction mode '" + s + "'");
}

dsp::Waveform reconstruct_rir(const dsp::MagSpec& mag, const dsp::IfSpec& ifr, ReconstructionMode mode,
                              const dsp::ComplexSpectrogram* gt, std::uint64_t seed, std::size_t n_samples,
                              double fs, const dsp::StftConfig& stft) {
  require(mag.rows() == stft.n_bins() && ifr.rows() == mag.rows() && ifr.cols() == mag.cols(),
          "reconstruct_rir: grid shapes do not match the STFT configuration");
  const bool needs_gt = mode == ReconstructionMode::GTP || mode == ReconstructionMode::GTM_PreP;
  require(!needs_gt || gt != nullptr, "reconstruct_rir: " + to_string(mode) + " needs the ground-truth spectrogram");
  if (gt != nullptr) {
    require(gt->n_bins() == mag.rows() && gt->n_frames() == mag.cols(), "reconstruct_rir: ground truth shape mismatch");
  }
  const dsp::RealGrid linear = dsp::linear_magnitude(mag);
  switch (mode) {
    case ReconstructionMode::GTP:
      return dsp::istft(dsp::polar(linear, dsp::phase(*gt), stft, n_samples), fs);
    case ReconstructionMode::PreP:
      return dsp::istft(dsp::polar(linear, dsp::integrate_phase(ifr), stft, n_samples), fs);
    case ReconstructionMode::RanP: {
      CounterRng rng(seed, 0x52414E50ULL);
      dsp::RealGrid ph(mag.rows(), mag.cols());
      for (double& p : ph.data()) p = rng.uniform(-std::numbers::pi, std::numbers::pi);
      return dsp::istft(dsp::polar(linear, ph, stft, n_samples), fs);
    }
    case ReconstructionMode::GLim:
      return dsp::griffin_lim(linear, kGriffinLimIters, seed, n_samples, fs, stft).waveform;
    case ReconstructionMode::GTM_PreP:
      return dsp::istft(dsp::polar(dsp::abs_magnitude(*gt), dsp::integrate_phase(ifr), stft, n_samples), fs);
  }
  throw InvalidArgument("reconstruct_rir: unknown mode");
}

}  // namespace minaf::model
