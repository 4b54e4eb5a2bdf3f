#include "torch_doctest.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../../tools/commands.hpp"
#include "cisfa/container.hpp"
#include "cisfa/raster.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cisfa::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cisfa_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A few epochs of a very small model on a small synthetic set.
std::vector<std::string> tiny_train(const std::string& out, const std::string& epochs = "2") {
  return {"train", "--data", "d", "--out", out, "--epochs", epochs, "--gen-channels", "4", "--resblocks", "2",
          "--seg-channels", "4", "--seg-stages", "3", "--disc-channels", "4", "--head-dim", "16", "--head-hidden",
          "32", "--n-patches", "16"};
}

}  // namespace

TEST_CASE("synth-data") {
  const auto w = fresh("synth");
  auto r = cli({"--workdir", w.string(), "synth-data", "--out", "d1", "--seed", "7", "--size", "16", "--depth", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 classes") != std::string::npos);
  r = cli({"--workdir", w.string(), "synth-data", "--out", "d2", "--seed", "7", "--size", "16", "--depth", "4"});
  REQUIRE(r.code == 0);
  CHECK(cisfa::io::hash_tree(w / "d1") == cisfa::io::hash_tree(w / "d2"));

  std::ifstream meta(w / "d1" / "A" / "A000" / "meta.json");
  const auto j = nlohmann::json::parse(meta);
  CHECK(j.at("shape")[1] == 16);
  CHECK(j.at("shape")[2] == 16);

  r = cli({"synth-data", "--seed", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--out") != std::string::npos);
  CHECK(cli({"synth-data", "--out", "x", "--classes", "0"}).code == 2);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({"--help"}).code == 0);

  setenv("CISFA_SEED", "7", 1);
  r = cli({"--workdir", w.string(), "synth-data", "--out", "d3", "--size", "16", "--depth", "4"});
  unsetenv("CISFA_SEED");
  CHECK(cisfa::io::hash_tree(w / "d3") == cisfa::io::hash_tree(w / "d1"));
  fs::remove_all(w);
}

TEST_CASE("prepare-data") {
  const auto w = fresh("prepare");
  REQUIRE(cli({"--workdir", w.string(), "synth-data", "--out", "raw", "--size", "16", "--depth", "4"}).code == 0);
  auto r = cli({"--workdir", w.string(), "prepare-data", "--raw", "raw", "--out", "prep", "--source", "A", "--target",
                "B", "--size", "8", "--classes", "2"});
  REQUIRE(r.code == 0);
  const auto v = cisfa::data::read_volume(w / "prep" / "B" / "B003");
  CHECK(v.voxels.height == 8);
  CHECK(v.spacing[1] == doctest::Approx(2.0));
  CHECK(cli({"--workdir", w.string(), "prepare-data", "--raw", "nowhere", "--out", "p2"}).code == 3);
  fs::remove_all(w);
}

TEST_CASE("train, evaluate, translate, plot") {
  const auto w = fresh("pipeline");
  const std::string wd = w.string();
  REQUIRE(cli({"--workdir", wd, "synth-data", "--out", "d", "--size", "16", "--depth", "4"}).code == 0);

  auto args = tiny_train("run");
  args.insert(args.begin(), {"--workdir", wd});
  auto r = cli(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(w / "run" / "manifest.json"));
  CHECK(fs::exists(w / "run" / "ckpt_best" / "manifest.json"));

  // Identical invocation, identical loss log.
  auto again = tiny_train("run2");
  again.insert(again.begin(), {"--workdir", wd});
  REQUIRE(cli(again).code == 0);
  CHECK(slurp(w / "run" / "losses.csv") == slurp(w / "run2" / "losses.csv"));

  SUBCASE("ablation flags reach the manifest") {
    auto a = tiny_train("abl", "1");
    a.insert(a.begin(), {"--workdir", wd});
    for (const char* f : {"--no-pcl", "--no-gcl", "--unweighted-pcl"}) a.push_back(f);
    a.insert(a.end(), {"--gcl-mode", "sequential", "--direction", "b2a", "--fold", "1"});
    REQUIRE(cli(a).code == 0);
    std::ifstream in(w / "abl" / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    CHECK(m["config"]["use_pcl"] == false);
    CHECK(m["config"]["use_gcl"] == false);
    CHECK(m["config"]["pcl_weighted"] == false);
    CHECK(m["config"]["gcl_mode"] == "sequential");
    CHECK(m["config"]["direction"] == "b2a");
    CHECK(m["config"]["fold"] == 1);
    CHECK(m["source_domain"] == "B");
  }
  SUBCASE("config file precedence") {
    std::ofstream(w / "cfg.json") << R"({"epochs": 1, "seed": 5, "tau": 0.1})";
    auto a = tiny_train("cfgrun");
    a.insert(a.begin(), {"--workdir", wd});
    a.insert(a.end(), {"--config", "cfg.json", "--tau", "0.3"});
    REQUIRE(cli(a).code == 0);
    std::ifstream in(w / "cfgrun" / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    CHECK(m["config"]["epochs"] == 2);  // flag beats file
    CHECK(m["config"]["seed"] == 5);    // file beats default
    CHECK(m["config"]["tau"] == 0.3);
  }
  SUBCASE("evaluate") {
    r = cli({"--workdir", wd, "evaluate", "--run", "run"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(w / "run" / "eval" / "cv_report.csv"));
    CHECK(fs::exists(w / "run" / "eval" / "volumes.csv"));
    r = cli({"--workdir", wd, "evaluate", "--run", "run", "--oracle", "--out", "oracle"});
    REQUIRE(r.code == 0);
    const auto csv = slurp(w / "oracle" / "cv_report.csv");
    CHECK(csv.find("dice,class1,1.000000,0.000000,1,0") != std::string::npos);
    CHECK(csv.find("dice,avg,1.000000,0.000000,1,0") != std::string::npos);
    CHECK(cli({"--workdir", wd, "evaluate", "--run", "nothing"}).code == 3);
    fs::remove_all(w / "run2" / "ckpt_last");
    CHECK(cli({"--workdir", wd, "evaluate", "--run", "run2", "--checkpoint", "last"}).code == 3);

    fs::create_directories(w / "cv");
    for (int k = 0; k < 4; ++k) {
      auto a = tiny_train("cv/fold" + std::to_string(k), "1");
      a.insert(a.begin(), {"--workdir", wd});
      a.insert(a.end(), {"--fold", std::to_string(k)});
      REQUIRE(cli(a).code == 0);
    }
    r = cli({"--workdir", wd, "evaluate", "--run", "cv", "--folds", "all", "--oracle"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(w / "cv" / "eval" / "cv_report.csv").find("dice,avg,1.000000,0.000000,4,0") != std::string::npos);
  }
  SUBCASE("translate") {
    r = cli({"--workdir", wd, "translate", "--run", "run", "--rows", "3", "--out", "t/grid.pgm"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto img = cisfa::raster::read_pgm(w / "t" / "grid.pgm");
    CHECK(img.height == 3 * 16 + 2 * 2);
    CHECK(img.width == 3 * 16 + 2 * 2);
    std::ifstream in(w / "t" / "grid.json");
    const auto side = nlohmann::json::parse(in);
    CHECK(side["grid"] == nlohmann::json::array({3, 3}));
    CHECK(side["rows"].size() == 3);
    CHECK(side["rows"][0].contains("translated_range"));
    const auto first = slurp(w / "t" / "grid.pgm");
    REQUIRE(cli({"--workdir", wd, "translate", "--run", "run", "--rows", "3", "--out", "t/grid.pgm"}).code == 0);
    CHECK(slurp(w / "t" / "grid.pgm") == first);
  }
  SUBCASE("plot") {
    r = cli({"--workdir", wd, "plot", "--run", "run"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* n : {"loss_L_dice.pgm", "loss_L_G_adv.pgm", "loss_L_D_S.pgm", "metric_val_dice.pgm"})
      CHECK(fs::exists(w / "run" / "plots" / n));
    const auto once = slurp(w / "run" / "plots" / "loss_L_dice.pgm");
    REQUIRE(cli({"--workdir", wd, "plot", "--run", "run"}).code == 0);
    CHECK(slurp(w / "run" / "plots" / "loss_L_dice.pgm") == once);
    fs::create_directories(w / "empty");
    std::ofstream(w / "empty" / "losses.csv") << "step,L_dice\n";
    CHECK(cli({"--workdir", wd, "plot", "--run", "empty"}).code == 3);
  }
  SUBCASE("bad flag values") {
    auto a = tiny_train("bad");
    a.insert(a.begin(), {"--workdir", wd});
    a.insert(a.end(), {"--gcl-mode", "both"});
    CHECK(cli(a).code == 2);
    CHECK(cli({"--workdir", wd, "train", "--data", "missing", "--out", "x"}).code == 3);
  }
  fs::remove_all(w);
}
