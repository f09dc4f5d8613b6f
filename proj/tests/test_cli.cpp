#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "acmg/analysis.hpp"
#include "acmg/config.hpp"
#include "acmg/corpus_io.hpp"

namespace fs = std::filesystem;
using namespace acmg;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "acmg_cli_test";

int run(const std::string& args, const std::string& log = "cli.log") {
  const std::string cmd = std::string(ACMG_CLI_PATH) + " " + args + " > " + (kRoot / log).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in, "missing file " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kConfig = R"({
  "synth": {"n_samples": 40, "d_a": 4, "d_t": 4, "len_range_a": [8, 12], "len_range_t": [7, 9], "seed": 5},
  "model": {"d_model": 8, "n_heads": 2, "n_layers": 1, "ff_mult": 2, "gating_mode": "cross_modal"},
  "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.003},
  "eval": {"folds": 5, "plot_samples": ["s00001", "s00002"]}
})";

struct Fixture {
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream(kRoot / "cfg.json") << kConfig;
  }
  std::string cfg() const { return "--config " + (kRoot / "cfg.json").string(); }
  std::string dir(const std::string& name) const { return (kRoot / name).string(); }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "generate is deterministic and rejects bad specs") {
  REQUIRE(run("generate -q " + cfg() + " --out " + dir("g1")) == 0);
  REQUIRE(run("generate -q " + cfg() + " --out " + dir("g2")) == 0);
  CHECK(slurp(kRoot / "g1" / kBlobName) == slurp(kRoot / "g2" / kBlobName));
  CHECK(slurp(kRoot / "g1" / kManifestName) == slurp(kRoot / "g2" / kManifestName));
  CHECK(read_corpus(kRoot / "g1").size() == 40);

  std::ofstream(kRoot / "bad.json") << R"({"synth": {"sparsity": 0.0}})";
  CHECK(run("generate --config " + dir("bad.json") + " --out " + dir("bad")) == 1);
  CHECK(slurp(kRoot / "cli.log").find("sparsity") != std::string::npos);
  std::ofstream(kRoot / "typo.json") << R"({"train": {"epoch": 3}})";
  CHECK(run("generate --config " + dir("typo.json") + " --out " + dir("bad")) == 1);
  CHECK(slurp(kRoot / "cli.log").find("epoch") != std::string::npos);
  CHECK(run("evaluate --corpus " + dir("missing") + " --kfold --out " + dir("bad")) == 1);
}

TEST_CASE_FIXTURE(Fixture, "train, evaluate and analyze") {
  REQUIRE(run("generate -q " + cfg() + " --out " + dir("data")) == 0);
  const std::string corpus = " --corpus " + dir("data");
  REQUIRE(run("train -q " + cfg() + corpus + " --out " + dir("t1")) == 0);
  REQUIRE(run("train -q " + cfg() + corpus + " --out " + dir("t2")) == 0);
  CHECK(slurp(kRoot / "t1" / "model.ckpt") == slurp(kRoot / "t2" / "model.ckpt"));
  CHECK(slurp(kRoot / "t1" / "history.csv") == slurp(kRoot / "t2" / "history.csv"));

  SUBCASE("held-out evaluation is reproducible") {
    const std::string ck = " --checkpoint " + dir("t1/model.ckpt");
    REQUIRE(run("evaluate -q " + cfg() + corpus + ck + " --out " + dir("e1")) == 0);
    REQUIRE(run("evaluate -q " + cfg() + corpus + ck + " --out " + dir("e2")) == 0);
    for (const char* f : {"report.json", "per_class.csv", "confusion.csv", "gate_energy_correlation.csv"}) {
      CHECK_MESSAGE(slurp(kRoot / "e1" / f) == slurp(kRoot / "e2" / f), f);
    }
    CHECK(run("evaluate -q " + cfg() + corpus + ck + " --kfold --out " + dir("e3")) == 1);
  }

  SUBCASE("resume continues where training stopped") {
    REQUIRE(run("train -q " + cfg() + corpus + " --epochs 4 --out " + dir("full")) == 0);
    REQUIRE(run("train -q " + cfg() + corpus + " --epochs 4 --resume " + dir("t1/model.ckpt") + " --out " +
                dir("resumed")) == 0);
    CHECK(slurp(kRoot / "full" / "model.ckpt") == slurp(kRoot / "resumed" / "model.ckpt"));
    CHECK(run("train -q " + cfg() + corpus + " --gating-mode none --epochs 4 --resume " + dir("t1/model.ckpt") +
              " --out " + dir("mismatch")) == 1);
  }

  SUBCASE("gating analysis writes plots") {
    REQUIRE(run("analyze-gating -q " + cfg() + corpus + " --checkpoint " + dir("t1/model.ckpt") + " --out " +
                dir("an")) == 0);
    CHECK(fs::exists(kRoot / "an" / "traces" / "s00001.svg"));
    CHECK(fs::exists(kRoot / "an" / "traces" / "s00002.svg"));
    CHECK(slurp(kRoot / "an" / "gate_energy_correlation.csv").rfind("class,r,n_frames", 0) == 0);
    CHECK(run("analyze-gating -q " + cfg() + corpus + " --checkpoint " + dir("t1/model.ckpt") +
              " --samples nope --out " + dir("an2")) == 1);
    REQUIRE(run("train -q " + cfg() + corpus + " --gating-mode none --out " + dir("plain")) == 0);
    CHECK(run("analyze-gating -q " + cfg() + corpus + " --checkpoint " + dir("plain/model.ckpt") + " --out " +
              dir("an3")) == 1);
  }
}

TEST_CASE_FIXTURE(Fixture, "k-fold through the CLI matches the library") {
  REQUIRE(run("generate -q " + cfg() + " --out " + dir("data")) == 0);
  REQUIRE(run("evaluate -q " + cfg() + " --corpus " + dir("data") + " --kfold --out " + dir("kf")) == 0);
  const auto text = slurp(kRoot / "kf" / "report.json");
  CHECK(nlohmann::json::parse(text).at("folds").size() == 5);
  CHECK(fs::exists(kRoot / "kf" / "folds.csv"));

  const RunConfig rc = load_run_config(kRoot / "kf" / "effective_config.json");
  KFoldOptions o;
  o.k = rc.eval.folds;
  o.seed = rc.train.seed;
  CHECK(report_json(kfold(read_corpus(kRoot / "data"), rc.model, rc.train, o)) == text);

  REQUIRE(run("evaluate -q " + cfg() + " --corpus " + dir("data") + " --kfold --threads 3 --out " + dir("kf3")) == 0);
  CHECK(slurp(kRoot / "kf3" / "report.json") == text);
}

TEST_CASE_FIXTURE(Fixture, "gradcheck command") {
  CHECK(run("gradcheck -q --gating-mode cross_modal --out " + dir("gc")) == 0);
  const auto j = nlohmann::json::parse(slurp(kRoot / "gc" / "gradcheck.json"));
  CHECK(j.dump().find("\"passed\":true") != std::string::npos);
  CHECK(run("gradcheck --gating-mode cross_modal --corrupt-gradient gate.w_a") == 1);
  CHECK(run("gradcheck --gating-mode cross_modal --corrupt-gradient no.such.param") == 1);
}
