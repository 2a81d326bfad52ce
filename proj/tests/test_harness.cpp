// Config schema, stage caching/decoupling, CLI exit codes, and artifact
// determinism. A tiny pipeline is built once and shared across cases.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ractd/checkpoint.hpp"
#include "ractd/config.hpp"
#include "ractd/dataenv.hpp"
#include "ractd/harness.hpp"

using namespace ractd;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig smoke_config() {
  ExperimentConfig cfg;
  cfg.env = "bimodal-reach";
  cfg.n_episodes = 30;
  cfg.h = 1;
  cfg.c = 4;
  cfg.teacher.steps = 80;
  cfg.teacher.hidden = {32, 32};
  cfg.reward.steps = 60;
  cfg.rd.steps = 80;
  cfg.distill.steps = 100;
  cfg.distill.reward_weight = 0.5;
  cfg.eval.rollouts = 4;
  cfg.eval.bench_trials = 3;
  cfg.eval.bench_warmup = 1;
  cfg.out_root = "/tmp/ractd_test_harness/runs";
  cfg.seed = 3;
  return cfg;
}

// Builds the tiny pipeline once per process; cases share the stage dirs.
const ExperimentConfig& built_smoke() {
  static const ExperimentConfig cfg = [] {
    ExperimentConfig c = smoke_config();
    fs::remove_all("/tmp/ractd_test_harness");
    run_gen_data(c);
    run_train_reward(c);
    run_train_teacher(c);
    run_distill(c);
    run_reverse_dynamics(c);
    return c;
  }();
  return cfg;
}

fs::path write_config(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path p = fs::path("/tmp/ractd_test_harness") / name;
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << cfg.to_json().dump(2);
  return p;
}

}  // namespace

TEST_CASE("config json round-trips and hashes are stable") {
  const ExperimentConfig a = smoke_config();
  const ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.stage_hash("data").size() == 16);

  SUBCASE("out_root is excluded from every hash") {
    ExperimentConfig c = a;
    c.out_root = "/elsewhere";
    CHECK(c.hash() == a.hash());
    CHECK(c.stage_hash("distill") == a.stage_hash("distill"));
  }
  SUBCASE("downstream knobs leave upstream hashes alone") {
    ExperimentConfig c = a;
    c.eval.rollouts = 99;
    CHECK(c.stage_hash("data") == a.stage_hash("data"));
    CHECK(c.stage_hash("teacher") == a.stage_hash("teacher"));
    CHECK(c.stage_hash("distill") == a.stage_hash("distill"));
    CHECK(c.stage_hash("eval") != a.stage_hash("eval"));
  }
  SUBCASE("upstream knobs cascade downstream") {
    ExperimentConfig c = a;
    c.teacher.steps += 1;
    CHECK(c.stage_hash("data") == a.stage_hash("data"));
    CHECK(c.stage_hash("teacher") != a.stage_hash("teacher"));
    CHECK(c.stage_hash("distill") != a.stage_hash("distill"));
  }
  SUBCASE("reward stage only enters hashes it feeds") {
    ExperimentConfig zero = a;
    zero.distill.reward_weight = 0.0;
    ExperimentConfig zero2 = zero;
    zero2.reward.steps += 50;
    CHECK(zero.stage_hash("distill") == zero2.stage_hash("distill"));

    ExperimentConfig pos2 = a;
    pos2.reward.steps += 50;
    CHECK(a.stage_hash("distill") != pos2.stage_hash("distill"));
  }
}

TEST_CASE("config schema rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json({{"distil", {{"steps", 5}}}}),
                       doctest::Contains("unknown key 'distil'"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"data", {{"n_episodes", "lots"}}}}),
                  std::invalid_argument);

  ExperimentConfig cfg = smoke_config();
  cfg.distill.reward_weight = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = smoke_config();
  cfg.eval.model_select = "median";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = smoke_config();
  cfg.eval.mode = "open";  // bimodal env has no goal to plan states toward
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("stages refuse to run before their dependencies exist") {
  ExperimentConfig cfg = smoke_config();
  cfg.out_root = "/tmp/ractd_test_harness/empty";
  fs::remove_all(cfg.out_root);
  CHECK_THROWS_WITH_AS(run_train_teacher(cfg), doctest::Contains("gen-data"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(run_eval(cfg), doctest::Contains("gen-data"), std::invalid_argument);

  run_gen_data(cfg);
  CHECK_THROWS_WITH_AS(run_distill(cfg), doctest::Contains("train-teacher"),
                       std::invalid_argument);
  cfg.eval.sampler = "teacher-heun";
  CHECK_THROWS_WITH_AS(run_eval(cfg), doctest::Contains("train-teacher"),
                       std::invalid_argument);
}

TEST_CASE("pipeline stages write their artifacts") {
  const ExperimentConfig& cfg = built_smoke();
  CHECK(fs::exists(stage_dir(cfg, "data") / "dataset.jsonl"));
  CHECK(fs::exists(stage_dir(cfg, "data") / "stage.json"));
  CHECK(fs::exists(stage_dir(cfg, "teacher") / "teacher.ckpt"));
  CHECK(fs::exists(stage_dir(cfg, "teacher") / "log.csv"));
  CHECK(fs::exists(stage_dir(cfg, "reward") / "reward.ckpt"));
  CHECK(fs::exists(stage_dir(cfg, "distill") / "student.ckpt"));
  CHECK(fs::exists(stage_dir(cfg, "rd") / "rd.ckpt"));

  const std::string log = read_file(stage_dir(cfg, "distill") / "log.csv");
  CHECK(log.rfind("step,ctm,dsm,reward,total,wall_ms\n", 0) == 0);

  SUBCASE("checkpoints record the producing stage hash") {
    const Checkpoint ck = load_checkpoint(stage_dir(cfg, "teacher") / "teacher.ckpt", "teacher");
    CHECK(ck.config_hash == cfg.stage_hash("teacher"));
  }
  SUBCASE("eval writes report, rollout table, and console summary") {
    const fs::path dir = run_eval(cfg);
    nlohmann::json rep;
    std::ifstream(dir / "report.json") >> rep;
    CHECK(rep["n"] == 4);
    CHECK(rep["sampler"] == "student-1");
    CHECK(rep["mean_nfe"] == 1.0);
    CHECK(rep["config_hash"] == cfg.stage_hash("eval"));
    CHECK(rep.contains("timing"));
    CHECK(read_file(dir / "rollouts.csv")
              .rfind("rollout,return,nfe_per_action,median_wall_s,success,high_mode\n", 0) == 0);
  }
  SUBCASE("bench reports the exact sampler NFE table") {
    const fs::path dir = run_bench(cfg);
    const std::string csv = read_file(dir / "bench.csv");
    CHECK(csv.find("teacher-heun,79,") != std::string::npos);
    CHECK(csv.find("ddim-15,15,") != std::string::npos);
    CHECK(csv.find("ddpm-15,15,") != std::string::npos);
    CHECK(csv.find("student-1,1,") != std::string::npos);
  }
}

TEST_CASE("re-running a stage reproduces its artifacts byte for byte") {
  const ExperimentConfig& cfg = built_smoke();
  const std::string data1 = read_file(stage_dir(cfg, "data") / "dataset.jsonl");
  const std::string teach1 = read_file(stage_dir(cfg, "teacher") / "teacher.ckpt");
  const std::string stud1 = read_file(stage_dir(cfg, "distill") / "student.ckpt");
  run_gen_data(cfg);
  run_train_teacher(cfg);
  run_distill(cfg);
  CHECK(read_file(stage_dir(cfg, "data") / "dataset.jsonl") == data1);
  CHECK(read_file(stage_dir(cfg, "teacher") / "teacher.ckpt") == teach1);
  CHECK(read_file(stage_dir(cfg, "distill") / "student.ckpt") == stud1);
}

TEST_CASE("reward checkpoints swap over one teacher stage") {
  ExperimentConfig a = built_smoke();
  ExperimentConfig b = a;
  b.distill.reward_weight = 0.9;
  CHECK(stage_dir(a, "data") == stage_dir(b, "data"));
  CHECK(stage_dir(a, "teacher") == stage_dir(b, "teacher"));
  CHECK(stage_dir(a, "reward") == stage_dir(b, "reward"));
  CHECK(stage_dir(a, "distill") != stage_dir(b, "distill"));

  // b reuses a's cached teacher; only the distill stage is rebuilt
  ensure_distill(b);
  CHECK(fs::exists(stage_dir(b, "distill") / "student.ckpt"));
}

TEST_CASE("eval refuses a checkpoint trained under a different schedule") {
  const ExperimentConfig& a = built_smoke();
  ExperimentConfig b = a;
  b.n_bins = 40;  // same data stage, different schedule
  fs::create_directories(stage_dir(b, "teacher"));
  fs::copy_file(stage_dir(a, "teacher") / "teacher.ckpt",
                stage_dir(b, "teacher") / "teacher.ckpt",
                fs::copy_options::overwrite_existing);
  b.eval.sampler = "teacher-heun";
  CHECK_THROWS_WITH_AS(run_eval(b), doctest::Contains("schedule"), std::invalid_argument);
}

TEST_CASE("best-checkpoint selection records the chosen step") {
  ExperimentConfig cfg = built_smoke();
  cfg.eval.model_select = "best";
  cfg.distill.snapshot_every = 40;
  run_distill(cfg);
  const Checkpoint ck =
      load_checkpoint(stage_dir(cfg, "distill") / "student.ckpt", "student");
  CHECK(ck.meta.at("model_select") == "best");
  const int sel = ck.meta.at("selected_step").get<int>();
  CHECK(sel >= 40);
  CHECK(sel <= cfg.distill.steps);
  CHECK(ck.step == sel);
}

TEST_CASE("cli maps errors to exit codes") {
  const ExperimentConfig& cfg = built_smoke();
  const fs::path cfg_path = write_config(cfg, "cli.json");

  CHECK(run_cli({"eval", "--config", cfg_path.string()}) == 0);
  CHECK(run_cli({"eval", "--config", cfg_path.string(), "--badflag"}) == 1);
  CHECK(run_cli({"eval", "--config", "/nonexistent.json"}) == 1);
  CHECK(run_cli({"eval"}) == 1);  // default out root lacks the artifacts
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({"verify"}) == 0);

  SUBCASE("flag overrides reshape the run") {
    ExperimentConfig tiny = cfg;
    tiny.out_root = "/tmp/ractd_test_harness/override";
    const fs::path p = write_config(tiny, "override.json");
    CHECK(run_cli({"gen-data", "--config", p.string(), "--steps", "7"}) == 0);
    ExperimentConfig expect = tiny;
    expect.n_episodes = 7;
    const Dataset ds = load_dataset(stage_dir(expect, "data") / "dataset.jsonl");
    CHECK(ds.episodes.size() == 7);

    CHECK(run_cli({"gen-data", "--config", p.string(), "--seed", "11"}) == 0);
    ExperimentConfig seeded = tiny;
    seeded.seed = 11;
    CHECK(fs::exists(stage_dir(seeded, "data") / "dataset.jsonl"));
    CHECK(stage_dir(seeded, "data") != stage_dir(tiny, "data"));
  }
  SUBCASE("out root precedence: flag, then config, then environment") {
    nlohmann::json j = cfg.to_json();
    j.erase("out_root");
    const fs::path p = fs::path("/tmp/ractd_test_harness") / "noroot.json";
    std::ofstream(p) << j.dump(2);

    setenv("RACTD_OUT_ROOT", "/tmp/ractd_test_harness/envroot", 1);
    CHECK(run_cli({"gen-data", "--config", p.string()}) == 0);
    ExperimentConfig env_cfg = cfg;
    env_cfg.out_root = "/tmp/ractd_test_harness/envroot";
    CHECK(fs::exists(stage_dir(env_cfg, "data") / "dataset.jsonl"));

    CHECK(run_cli({"gen-data", "--config", p.string(), "--out",
                   "/tmp/ractd_test_harness/flagroot"}) == 0);
    ExperimentConfig flag_cfg = cfg;
    flag_cfg.out_root = "/tmp/ractd_test_harness/flagroot";
    CHECK(fs::exists(stage_dir(flag_cfg, "data") / "dataset.jsonl"));
    unsetenv("RACTD_OUT_ROOT");

    const fs::path with_root = write_config(cfg, "withroot.json");
    setenv("RACTD_OUT_ROOT", "/tmp/ractd_test_harness/ignored", 1);
    CHECK(run_cli({"gen-data", "--config", with_root.string()}) == 0);
    CHECK(!fs::exists("/tmp/ractd_test_harness/ignored"));
    unsetenv("RACTD_OUT_ROOT");
  }
  SUBCASE("runtime corruption exits 2 and leaves diagnostics") {
    ExperimentConfig broken = cfg;
    broken.out_root = "/tmp/ractd_test_harness/broken";
    run_gen_data(broken);
    fs::create_directories(stage_dir(broken, "distill"));
    std::ofstream(stage_dir(broken, "distill") / "student.ckpt") << "garbage";
    const fs::path p = write_config(broken, "broken.json");
    CHECK(run_cli({"eval", "--config", p.string()}) == 2);
    nlohmann::json diag;
    std::ifstream(fs::path(broken.out_root) / "diagnostics.json") >> diag;
    CHECK(diag["stage"] == "eval");
    CHECK(diag["error"].get<std::string>().find("load_checkpoint") != std::string::npos);
  }
}

TEST_CASE("verify prints one pass line per invariant") {
  std::ostringstream os;
  CHECK(run_verify(os) == 0);
  const std::string out = os.str();
  CHECK(out.find("[FAIL]") == std::string::npos);
  int passes = 0;
  for (std::size_t pos = 0; (pos = out.find("[PASS]", pos)) != std::string::npos; ++pos)
    ++passes;
  CHECK(passes == 5);
}

TEST_CASE("ablation grid caches shared stages and tabulates cells") {
  ExperimentConfig cfg = built_smoke();
  cfg.ablate.placements = {"none", "student"};
  cfg.ablate.reward_weights = {0.5};
  cfg.ablate.rollouts = 3;
  const fs::path dir = run_ablate(cfg);
  const std::string csv = read_file(dir / "ablation.csv");
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n' ? 1 : 0;
  CHECK(lines == 3);  // header + one row per cell
  CHECK(csv.find("none,0.5,") != std::string::npos);
  CHECK(csv.find("student,0.5,") != std::string::npos);

  // the none cell reuses the cached zero-reward distill stage if present
  ExperimentConfig none_cell = cfg;
  none_cell.distill.reward_weight = 0.0;
  none_cell.eval.rollouts = 3;
  CHECK(fs::exists(stage_dir(none_cell, "distill") / "student.ckpt"));
}
