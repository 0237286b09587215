#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nsg/eval/evaluator.hpp"

using namespace nsg;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NSG_CLI_BINARY) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path suite_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "nsg_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

const std::string kSmallTrainSets =
    " --set train.batch_size=2 --set train.max_steps=2 --set train.epochs=1"
    " --set train.log_walltime=false --set gen.base_channels=4 --set gen.n_resblocks=1"
    " --set gen.injection_channels=4 --set disc.base_channels=4";

/// Renders the shared dataset once; every case below reads it.
const fs::path& shared_dataset() {
  static const fs::path data = [] {
    const fs::path p = suite_root() / "data";
    REQUIRE(run_cli("make-synthetic --out " + p.string() + " --identities 4 --size 32 --seed 7") ==
            0);
    return p;
  }();
  return data;
}

}  // namespace

TEST_CASE("argument errors and help map to the documented exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("train --help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("no-such-subcommand") == 2);
  CHECK(run_cli("train") == 2);
  CHECK(run_cli("ablate --axis sideways --dry-run") == 2);
}

TEST_CASE("make-synthetic writes a loadable dataset with its snapshot") {
  const fs::path data = shared_dataset();
  CHECK(fs::exists(data / "manifest.jsonl"));
  CHECK(fs::exists(data / "resolved_config.txt"));
  int pngs = 0;
  for (int g = 0; g < kNumGroups; ++g)
    for (const auto& e : fs::directory_iterator(data / std::to_string(g)))
      if (e.path().extension() == ".png") ++pngs;
  CHECK(pngs == 4 * kNumGroups * 2);
  const Dataset ds = load_dataset(data);
  CHECK(ds.size() == 4 * kNumGroups);
  CHECK(ds.height == 32);
}

TEST_CASE("training runs are reproducible byte for byte") {
  const fs::path data = shared_dataset();
  const fs::path run1 = suite_root() / "run1";
  const fs::path run2 = suite_root() / "run2";
  const std::string common = "train --data " + data.string() + kSmallTrainSets;

  REQUIRE(run_cli(common + " --out " + run1.string()) == 0);
  CHECK(fs::exists(run1 / "ckpt_final.nsg"));
  CHECK(fs::exists(run1 / "resolved_config.txt"));
  CHECK(count_lines(run1 / "loss_log.jsonl") == 2);

  REQUIRE(run_cli(common + " --out " + run2.string()) == 0);
  CHECK(read_bytes(run1 / "loss_log.jsonl") == read_bytes(run2 / "loss_log.jsonl"));
  CHECK(read_bytes(run1 / "ckpt_final.nsg") == read_bytes(run2 / "ckpt_final.nsg"));

  SUBCASE("the resolved snapshot reproduces the run when fed back") {
    const fs::path run3 = suite_root() / "run3";
    REQUIRE(run_cli("train --data " + data.string() + " --config " +
                    (run1 / "resolved_config.txt").string() + " --out " + run3.string()) == 0);
    CHECK(read_bytes(run1 / "loss_log.jsonl") == read_bytes(run3 / "loss_log.jsonl"));
    CHECK(read_bytes(run1 / "ckpt_final.nsg") == read_bytes(run3 / "ckpt_final.nsg"));
  }

  SUBCASE("configuration mistakes exit with the config code") {
    CHECK(run_cli(common + " --out " + (suite_root() / "bad1").string() +
                  " --set nsg.bogus=1") == 2);
    CHECK(run_cli(common + " --out " + (suite_root() / "bad2").string() +
                  " --set train.scalar=f16") == 2);
  }

  SUBCASE("missing datasets exit with the data code") {
    CHECK(run_cli("train --data " + (suite_root() / "absent").string() + kSmallTrainSets +
                  " --out " + (suite_root() / "bad3").string()) == 3);
  }
}

TEST_CASE("translate writes per-target faces and comparison strips") {
  const fs::path data = shared_dataset();
  const fs::path run1 = suite_root() / "run1";
  REQUIRE(fs::exists(run1 / "ckpt_final.nsg"));
  const fs::path out = suite_root() / "translate1";
  REQUIRE(run_cli("translate --checkpoint " + (run1 / "ckpt_final.nsg").string() + " --data " +
                  data.string() + " --out " + out.string() + " --subjects 2") == 0);
  for (int t = 0; t < kNumGroups; ++t) {
    CHECK(fs::exists(out / ("subject_0_to_" + std::to_string(t) + ".png")));
    CHECK(fs::exists(out / ("subject_1_to_" + std::to_string(t) + ".png")));
  }
  CHECK(fs::exists(out / "grid_subject_0.png"));
  CHECK(fs::exists(out / "resolved_config.txt"));

  SUBCASE("bad target groups exit with the config code") {
    CHECK(run_cli("translate --checkpoint " + (run1 / "ckpt_final.nsg").string() + " --data " +
                  data.string() + " --out " + (suite_root() / "bad4").string() +
                  " --targets 9") == 2);
  }
}

TEST_CASE("evaluate scores a checkpoint and re-aggregates saved records") {
  const fs::path data = shared_dataset();
  const fs::path run1 = suite_root() / "run1";
  REQUIRE(fs::exists(run1 / "ckpt_final.nsg"));
  const fs::path out = suite_root() / "eval1";
  REQUIRE(run_cli("evaluate --checkpoint " + (run1 / "ckpt_final.nsg").string() + " --data " +
                  data.string() + " --out " + out.string() + " --max-subjects 4") == 0);
  CHECK(fs::exists(out / "records.jsonl"));
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "report.txt"));
  const std::string text = read_bytes(out / "report.txt");
  CHECK(text.find("Generated") != std::string::npos);
  CHECK(text.find("73.975") != std::string::npos);

  SUBCASE("the records file re-aggregates to the same report") {
    const fs::path out2 = suite_root() / "eval2";
    REQUIRE(run_cli("evaluate --records " + (out / "records.jsonl").string() + " --out " +
                    out2.string()) == 0);
    CHECK(read_bytes(out / "report.json") == read_bytes(out2 / "report.json"));
    CHECK(read_bytes(out / "report.txt") == read_bytes(out2 / "report.txt"));
  }

  SUBCASE("missing inputs map to the documented exit codes") {
    CHECK(run_cli("evaluate --records " + (suite_root() / "absent.jsonl").string() + " --out " +
                  (suite_root() / "bad5").string()) == 3);
    CHECK(run_cli("evaluate --out " + (suite_root() / "bad6").string()) == 2);
  }
}

TEST_CASE("ablate dry runs emit the sweep structure without training") {
  const fs::path out = suite_root() / "ablate_modules";
  REQUIRE(run_cli("ablate --axis modules --dry-run --out " + out.string()) == 0);
  const std::string text = read_bytes(out / "ablate_report.txt");
  CHECK(text.find("Encoder-decoder (Baseline)") != std::string::npos);
  CHECK(text.find("ProjectionNet") != std::string::npos);
  CHECK(text.find("ConstraintNet") != std::string::npos);
  CHECK(text.find("Feature Refinement Module") != std::string::npos);
  CHECK(fs::exists(out / "ablate_report.json"));

  SUBCASE("the strategy axis carries its three rows") {
    const fs::path out2 = suite_root() / "ablate_strategy";
    REQUIRE(run_cli("ablate --axis strategy --dry-run --out " + out2.string()) == 0);
    const std::string t2 = read_bytes(out2 / "ablate_report.txt");
    CHECK(t2.find("Self-Driven Only") != std::string::npos);
    CHECK(t2.find("Condition-Driven Only") != std::string::npos);
    CHECK(t2.find("Jointly Strategy") != std::string::npos);
    CHECK(t2.find("Age Translation Accuracy") != std::string::npos);
  }

  SUBCASE("training sweeps without data are refused") {
    CHECK(run_cli("ablate --axis strategy --out " + (suite_root() / "bad7").string()) == 2);
  }
}

TEST_CASE("the output root honors the environment override") {
  const fs::path root = suite_root() / "env_root";
  const std::string cmd = "NSG_OUT_ROOT=" + root.string() + " " + NSG_CLI_BINARY +
                          " make-synthetic --identities 1 --size 32 >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists(root / "synthetic" / "manifest.jsonl"));
}
