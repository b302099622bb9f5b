#include <doctest.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "minaf/common/error.hpp"
#include "minaf/dsp/wav.hpp"
#include "minaf/metrics/acoustic.hpp"
#include "minaf/pipeline/commands.hpp"
#include "minaf/pipeline/config.hpp"
#include "minaf/sim/dataset.hpp"
#include "minaf/training/data.hpp"
#include "support/dataset_fixture.hpp"

using namespace minaf;
using namespace minaf::pipeline;
using minaf::testing::slurp;
using minaf::testing::TempDir;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Runs the CLI with stdout and clog captured.
struct CliRun {
  int code = -1;
  std::string out;
  std::string log;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "minaf");
  std::ostringstream out, log, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_log = std::clog.rdbuf(log.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  r.code = run_cli(args);
  std::cout.rdbuf(old_out);
  std::clog.rdbuf(old_log);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.log = log.str() + err.str();
  return r;
}

/// Every regular file under `dir` with its bytes.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return m;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

const std::vector<std::string> kSmallGenerate = {"--set", "n_pairs=10", "--set", "orientations=0,90",
                                                 "--set", "max_order=10"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config: defaults, file, --set and flag precedence") {
  TempDir dir("cfg");
  RunConfig cfg("train");
  CHECK(cfg.get("lr0") == "5e-4");
  CHECK(cfg.get_double("lr0") == 5e-4);
  CHECK(cfg.get_int("epochs") == 50);
  CHECK(cfg.get("generate", "room") == "4,3,2.5");

  write_text(dir.path / "a.ini", "[train]\nlr0 = 1e-3\nepochs = 7\n\n[generate]\nseed = 5\n");
  cfg.load_file(dir.path / "a.ini");
  CHECK(cfg.get_double("lr0") == 1e-3);
  CHECK(cfg.get_int("epochs") == 7);
  CHECK(cfg.get("generate", "seed") == "5");

  cfg.set_assignment("epochs=9");
  cfg.set_assignment("generate.seed=6");
  CHECK(cfg.get_int("epochs") == 9);
  CHECK(cfg.get("generate", "seed") == "6");
  CHECK(cfg.get_double("lr0") == 1e-3);

  // The effective section names every documented key.
  const std::string ini = cfg.effective_ini();
  for (const KeySpec& k : section_keys("train")) CHECK(ini.find("\n" + k.key + " = ") != std::string::npos);
  CHECK(ini.find("epochs = 9") != std::string::npos);

  // Echoed config reloads to the same values.
  cfg.write_effective(dir.path / "echo.ini");
  RunConfig back("train");
  back.load_file(dir.path / "echo.ini");
  for (const KeySpec& k : section_keys("train")) CHECK(back.get(k.key) == cfg.get(k.key));
}

TEST_CASE("config: unknown keys, sections and bad values are rejected") {
  TempDir dir("cfgbad");
  RunConfig cfg("train");
  CHECK_THROWS_AS(cfg.set("learning_rate", "1"), InvalidArgument);
  CHECK_THROWS_AS(cfg.set("nosuch.lr0", "1"), InvalidArgument);
  CHECK_THROWS_AS(cfg.set_assignment("lr0"), InvalidArgument);
  write_text(dir.path / "k.ini", "[train]\nlr = 1\n");
  CHECK_THROWS_AS(cfg.load_file(dir.path / "k.ini"), InvalidArgument);
  write_text(dir.path / "s.ini", "[trian]\nlr0 = 1\n");
  CHECK_THROWS_AS(cfg.load_file(dir.path / "s.ini"), InvalidArgument);
  cfg.set("epochs", "many");
  CHECK_THROWS_AS(cfg.get_int("epochs"), InvalidArgument);
  CHECK_THROWS_AS(RunConfig("serve"), InvalidArgument);
  CHECK_THROWS_AS(section_keys("serve"), InvalidArgument);

  CHECK(cli({"train", "--set", "lr=1"}).code == kExitUsage);
  CHECK(cli({"train", "--bogus"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"serve"}).code == kExitUsage);
  CHECK(cli({"train", "--config", (dir.path / "missing.ini").string()}).code == kExitUsage);
  CHECK(cli({"train", "--config", (dir.path / "k.ini").string()}).code == kExitUsage);
}

TEST_CASE("cli: missing inputs give data errors") {
  TempDir dir("cliinput");
  const auto probe = cli({"probe", "--set", "dataset=" + (dir.path / "none").string()});
  CHECK(probe.code == kExitData);
  CHECK(probe.log.find("manifest") != std::string::npos);
  CHECK(cli({"train", "--set", "dataset=" + (dir.path / "none").string(), "--out", (dir.path / "run").string()})
            .code == kExitData);
  CHECK(cli({"eval", "--set", "checkpoint=" + (dir.path / "none.mnfw").string(), "--out",
             (dir.path / "ev").string()})
            .code == kExitData);
}

TEST_CASE("cli: generate, probe, train, eval, predict on a small dataset") {
  TempDir dir("cli");
  const std::string ds = (dir.path / "ds").string();

  // generate: valid manifest, echoed config, refuses to overwrite, seed reproducible.
  REQUIRE(cli(with({"generate", "--out", ds}, kSmallGenerate)).code == kExitOk);
  const sim::DatasetManifest m = sim::load_manifest(ds);
  CHECK(m.samples.size() == 20);
  CHECK(fs::exists(fs::path(ds) / "mesh.obj"));
  CHECK(fs::exists(fs::path(ds) / "config.ini"));
  CHECK(slurp(fs::path(ds) / "config.ini").find("n_pairs = 10") != std::string::npos);
  const auto gen1 = snapshot(ds);

  const auto again = cli(with({"generate", "--out", ds}, kSmallGenerate));
  CHECK(again.code == kExitUsage);
  CHECK(again.log.find("--force") != std::string::npos);
  CHECK(snapshot(ds) == gen1);
  REQUIRE(cli(with({"generate", "--out", ds, "--force"}, kSmallGenerate)).code == kExitOk);
  CHECK(snapshot(ds) == gen1);

  const std::string other = (dir.path / "other").string();
  REQUIRE(cli(with({"generate", "--out", other, "--seed", "43"}, kSmallGenerate)).code == kExitOk);
  CHECK(slurp(fs::path(other) / sim::kManifestFile) != slurp(fs::path(ds) / sim::kManifestFile));

  // probe: one cache per unique position; the second run does nothing.
  const std::vector<std::string> probe_args = {"probe", "--set", "dataset=" + ds, "--set", "n_rays=16",
                                               "--set", "n_thresholds=4"};
  const auto p1 = cli(probe_args);
  REQUIRE(p1.code == kExitOk);
  std::size_t caches = 0;
  for (const auto& e : fs::directory_iterator(fs::path(ds) / "contexts")) caches += e.path().extension() == ".mnfc";
  CHECK(caches == m.positions.size());
  const auto p2 = cli(probe_args);
  CHECK(p2.code == kExitOk);
  CHECK(p2.log.find("nothing to do") != std::string::npos);

  // Parallel probing into another directory gives the same bytes.
  const std::string par = (dir.path / "ctx_par").string();
  REQUIRE(cli(with(probe_args, {"--set", "workers=3", "--out", par})).code == kExitOk);
  for (const auto& pos : m.positions) {
    CHECK(slurp(training::context_path(fs::path(ds) / "contexts", pos)) ==
          slurp(training::context_path(par, pos)));
  }

  // train: inputs untouched, logs and checkpoints written, refuses to overwrite.
  const auto inputs = snapshot(ds);
  const std::string run = (dir.path / "run").string();
  const std::vector<std::string> train_args = {"train",   "--set", "dataset=" + ds, "--set", "preset=tiny",
                                               "--set",   "epochs=2", "--out", run};
  REQUIRE(cli(train_args).code == kExitOk);
  for (const char* f : {"best.mnfw", "last.mnfw", "train_log.ndjson", "epochs.ndjson", "config.ini", "loss.svg"}) {
    CHECK(fs::exists(fs::path(run) / f));
  }
  CHECK(cli(train_args).code == kExitUsage);

  // eval: schema-valid report for every requested mode.
  const std::string ev = (dir.path / "eval").string();
  const auto e = cli({"eval", "--set", "dataset=" + ds, "--set", "checkpoint=" + run + "/best.mnfw", "--set",
                      "modes=GTP,PreP,RanP", "--out", ev});
  REQUIRE(e.code == kExitOk);
  const json report = json::parse(slurp(fs::path(ev) / "report.json"));
  CHECK(report.at("modes").size() == 3);
  for (auto& [mode, rep] : report.at("modes").items()) CHECK(metrics::validate_report_json(rep) == "");
  CHECK(e.out.find("T60(%)") != std::string::npos);
  CHECK(fs::exists(fs::path(ev) / "edc_GTP.svg"));
  CHECK(fs::exists(fs::path(ev) / "config.ini"));

  // predict on a test pair: stereo WAV with a finite T60, heatmaps and EDC plots.
  const std::size_t t = m.indices(sim::Split::Test).front();
  const std::string pr = (dir.path / "pred").string();
  const auto p = cli({"predict", "--set", "dataset=" + ds, "--set", "checkpoint=" + run + "/best.mnfw", "--set",
                      "sample=" + m.samples[t].id, "--set", "mode=GTP", "--out", pr});
  REQUIRE(p.code == kExitOk);
  const auto wav = dsp::read_wav(fs::path(pr) / "pred.wav");
  REQUIRE(wav.size() == 2);
  for (const auto& w : wav) CHECK(std::isfinite(metrics::t60(w)));
  for (const char* f : {"mag_left.png", "if_right.png", "gt_mag_left.png", "edc_left.svg"}) {
    CHECK(fs::exists(fs::path(pr) / f));
  }
  const std::string png = slurp(fs::path(pr) / "mag_left.png");
  CHECK(png.substr(1, 3) == "PNG");

  // A pair by position ids; GTP without ground truth is a usage error.
  const auto& s0 = m.samples[t];
  const std::string pr2 = (dir.path / "pred2").string();
  CHECK(cli({"predict", "--set", "dataset=" + ds, "--set", "checkpoint=" + run + "/best.mnfw", "--set",
             "tx=" + m.positions[s0.tx].id, "--set", "rx=" + m.positions[s0.rx].id, "--set", "orientation=90",
             "--out", pr2})
            .code == kExitOk);
  CHECK(cli({"predict", "--set", "dataset=" + ds, "--set", "checkpoint=" + run + "/best.mnfw", "--set",
             "tx=" + m.positions[s0.tx].id, "--set", "rx=" + m.positions[s0.tx].id, "--set", "mode=GTP", "--out",
             (dir.path / "pred3").string()})
            .code == kExitUsage);
  CHECK(cli({"predict", "--set", "dataset=" + ds, "--set", "checkpoint=" + run + "/best.mnfw", "--set",
             "sample=nosuch", "--out", (dir.path / "pred4").string()})
            .code == kExitData);

  CHECK(snapshot(ds) == inputs);
}

TEST_CASE("cli: divergence exits with code 3") {
  TempDir dir("diverge");
  const std::string ds = (dir.path / "ds").string();
  REQUIRE(cli(with({"generate", "--out", ds}, kSmallGenerate)).code == kExitOk);
  REQUIRE(cli({"probe", "--set", "dataset=" + ds, "--set", "n_rays=16", "--set", "n_thresholds=4"}).code == kExitOk);
  const auto r = cli({"train", "--set", "dataset=" + ds, "--set", "preset=tiny", "--set", "lr0=1e30", "--set",
                      "epochs=3", "--out", (dir.path / "run").string()});
  CHECK(r.code == kExitDiverged);
  CHECK(r.log.find("diverged") != std::string::npos);
}
