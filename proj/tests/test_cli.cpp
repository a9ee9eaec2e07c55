// Config parsing and end-to-end CLI smoke tests (subprocess).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mpo/artifacts.hpp"
#include "mpo/config.hpp"
#include "mpo/dataset.hpp"
#include "mpo/potential.hpp"

using namespace mpo;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("MPO_CLI");
  return p ? p : "";
}

int run_cli(const std::string& args) {
  std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mpo_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config: defaults render and reparse to the same config") {
  ExperimentConfig cfg;
  std::string text = cfg.render();
  std::istringstream is(text);
  ExperimentConfig back = ExperimentConfig::parse(is);
  CHECK(back.render() == text);
  CHECK(back.trainer.epochs == 12);
  CHECK(back.trainer.minibatch == 2);
  CHECK(back.trainer.learning_rate == 1e-3);
  CHECK(back.trainer.max_grad_norm == 1.3);
  CHECK(back.objective.lambda == 0.5);
  CHECK(back.es.population == 256);
  CHECK(back.es.generations == 128);
  CHECK(back.es.sigma_init == 0.03);
  CHECK(back.es.sigma_decay == 0.999);
  CHECK(back.es.learning_rate == 0.02);
}

TEST_CASE("config: unknown keys and bad values are all reported") {
  std::istringstream is(
      "version = 1\n"
      "[env]\n"
      "states = 8\n"
      "mystery = 3\n"
      "[dataset]\n"
      "size = -5\n"
      "mode = sideways\n");
  try {
    ExperimentConfig::parse(is);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("unknown key 'env.mystery'") != std::string::npos);
    CHECK(msg.find("dataset.size") != std::string::npos);
    CHECK(msg.find("dataset.mode") != std::string::npos);
  }
}

TEST_CASE("config: comments and section-free version line") {
  std::istringstream is(
      "# experiment\n"
      "version = 1\n"
      "[trainer]\n"
      "epochs = 3\n");
  ExperimentConfig cfg = ExperimentConfig::parse(is);
  CHECK(cfg.trainer.epochs == 3);
}

TEST_CASE("atomic write and hash helpers") {
  fs::path dir = fresh_dir("artifacts");
  fs::path f = dir / "x.txt";
  atomic_write_file(f, "hello\n");
  CHECK(read_file(f) == "hello\n");
  CHECK(file_hash_hex(f) == content_hash_hex("hello\n"));
  CHECK_FALSE(fs::exists(dir / "x.txt.tmp"));
}

TEST_CASE("cli: gen-data writes a loadable dataset with manifest" *
          doctest::skip(false)) {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("gendata");
  fs::path data = dir / "d.txt";
  int rc = run_cli("gen-data --size 32 --seed 5 --out " + data.string());
  REQUIRE(rc == 0);
  PreferenceDataset d = load_dataset_file(data.string());
  CHECK(d.rows.size() == 32);
  CHECK(fs::exists(data.string() + ".manifest.json"));
}

TEST_CASE("cli: shuffled size must divide by 4") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("gendata_bad");
  int rc = run_cli("gen-data --mode shuffled --size 510 --out " +
                   (dir / "d.txt").string());
  CHECK(rc != 0);
}

TEST_CASE("cli: train emits summary rows plus mean/stderr footer") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("train");
  fs::path data = dir / "d.txt";
  REQUIRE(run_cli("gen-data --size 16 --seed 3 --out " + data.string()) == 0);
  // Tiny config to keep the smoke test fast.
  fs::path cfg_path = dir / "cfg.txt";
  ExperimentConfig cfg;
  cfg.trainer.epochs = 2;
  cfg.trainer.seeds = 3;
  atomic_write_file(cfg_path, cfg.render());
  int rc = run_cli("train --config " + cfg_path.string() + " --data " +
                   data.string() + " --seeds 3 --out " + (dir / "t").string());
  REQUIRE(rc == 0);
  std::string summary = read_file(dir / "t" / "summary.csv");
  CHECK(summary.find("seed,final_value") == 0);
  int lines = 0;
  for (char c : summary) lines += c == '\n';
  CHECK(lines == 1 + 3 + 2);  // header + 3 seeds + mean + stderr
  CHECK(summary.find("mean,") != std::string::npos);
  CHECK(summary.find("stderr,") != std::string::npos);
  CHECK(fs::exists(dir / "t" / "trace.csv"));
  CHECK(fs::exists(dir / "t" / "policy_seed0.txt"));
  CHECK(fs::exists(dir / "t" / "manifest.json"));
}

TEST_CASE("cli: verify-theorem succeeds on the default tiny envs") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("verify");
  int rc = run_cli("verify-theorem --potential neg_entropy --out " +
                   dir.string());
  CHECK(rc == 0);
  CHECK(fs::exists(dir / "verify.csv"));
}

TEST_CASE("cli: landscape csv carries the documented header rows") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("landscape");
  int rc = run_cli("landscape --objective orpo --points 6 --out " + dir.string());
  REQUIRE(rc == 0);
  std::string csv = read_file(dir / "landscape.csv");
  CHECK(csv.find("t,lambda,objective") == 0);
  CHECK(csv.find("log_p_w,log_p_l,grad_w_abs,grad_l_abs") != std::string::npos);
}

TEST_CASE("cli: eval reports exact and monte-carlo values") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("eval");
  fs::path data = dir / "d.txt";
  REQUIRE(run_cli("gen-data --size 8 --seed 3 --out " + data.string()) == 0);
  fs::path cfg_path = dir / "cfg.txt";
  ExperimentConfig cfg;
  cfg.trainer.epochs = 1;
  cfg.trainer.seeds = 1;
  atomic_write_file(cfg_path, cfg.render());
  REQUIRE(run_cli("train --config " + cfg_path.string() + " --data " +
                  data.string() + " --seeds 1 --out " + (dir / "t").string()) ==
          0);
  int rc = run_cli("eval --policy " + (dir / "t" / "policy_seed0.txt").string() +
                   " --episodes 1000 --out " + (dir / "e").string());
  REQUIRE(rc == 0);
  std::string csv = read_file(dir / "e" / "eval.csv");
  CHECK(csv.find("exact,") != std::string::npos);
  CHECK(csv.find("monte_carlo,") != std::string::npos);
}

TEST_CASE("cli: evolve discovers a loadable loss net usable downstream") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path dir = fresh_dir("evolve");
  ExperimentConfig cfg;
  cfg.dataset.size = 32;
  cfg.dataset.seed = 3;
  cfg.objective.temporal = true;
  cfg.trainer.epochs = 2;
  cfg.es.population = 4;
  cfg.es.generations = 2;
  cfg.es.inner_seeds = 1;
  atomic_write_file(dir / "cfg.txt", cfg.render());
  int rc = run_cli("evolve --config " + (dir / "cfg.txt").string() + " --out " +
                   (dir / "ev").string());
  REQUIRE(rc == 0);
  std::string evo = read_file(dir / "ev" / "evolution.csv");
  CHECK(evo.find("generation,sigma,best_fitness,mean_fitness") == 0);
  int lines = 0;
  for (char c : evo) lines += c == '\n';
  CHECK(lines == 1 + 2);  // header + one row per generation

  fs::path ckpt = dir / "ev" / "best_lossnet.txt";
  LossNetParams best = load_loss_net_file(ckpt.string());
  CHECK(best.temporal);
  CHECK(params_feasible(best));

  // The checkpoint plugs into training, landscapes and the learned potential.
  fs::path data = dir / "d.txt";
  REQUIRE(run_cli("gen-data --size 16 --seed 5 --out " + data.string()) == 0);
  fs::path tcfg = dir / "tcfg.txt";
  ExperimentConfig tc;
  tc.trainer.epochs = 2;
  tc.trainer.seeds = 1;
  atomic_write_file(tcfg, tc.render());
  CHECK(run_cli("train --config " + tcfg.string() + " --data " + data.string() +
                " --objective gen_orpo:" + ckpt.string() + " --out " +
                (dir / "t").string()) == 0);
  CHECK(run_cli("landscape --objective gen_orpo:" + ckpt.string() +
                " --points 6 --t 0.5 --out " + (dir / "l").string()) == 0);
  auto pot = OmegaPotential::from_name("learned:" + ckpt.string());
  CHECK(pot.kind() == OmegaPotential::Kind::kLearned);
  CHECK(std::isfinite(pot.inverse(0.3)));
}

TEST_CASE("cli: reruns produce bit-identical artifacts") {
  REQUIRE_FALSE(cli_path().empty());
  fs::path a = fresh_dir("repro_a");
  fs::path b = fresh_dir("repro_b");
  std::string flags = "gen-data --mode shuffled --size 64 --noise 0.1 --seed 9";
  REQUIRE(run_cli(flags + " --out " + (a / "d.txt").string()) == 0);
  REQUIRE(run_cli(flags + " --out " + (b / "d.txt").string()) == 0);
  CHECK(read_file(a / "d.txt") == read_file(b / "d.txt"));
}
