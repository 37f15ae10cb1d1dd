#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "kmpc/cli.hpp"
#include "kmpc/io.hpp"

using namespace kmpc;
namespace fs = std::filesystem;

namespace {

struct Result
{
  int code;
  std::string out, err;
};

Result cli(const std::vector<std::string> & args)
{
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace
{
  fs::path root;
  fs::path identify_cfg, scenario_cfg, sweep_cfg, model;

  Workspace()
  {
    root = fs::temp_directory_path() / "kmpc_test_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    identify_cfg = root / "identify.json";
    write_file(identify_cfg, R"({"n_samples": 3000, "n_heldout": 100, "n_rbf": 10, "seed": 3})");
    scenario_cfg = root / "scenario.json";
    write_file(scenario_cfg, R"({"T_steps": 30, "mpc": {"N": 8}})");
    sweep_cfg = root / "sweep.json";
    write_file(sweep_cfg, R"({"base": {"T_steps": 10}, "N": [4, 8], "gamma": [0.2]})");
    const Result r = cli({"identify", "--config", identify_cfg.string(), "--out-dir", (root / "model").string()});
    REQUIRE(r.code == kExitOk);
    model = root / "model" / "model.json";
  }
};

const Workspace & ws()
{
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("identify writes a model, a report and one manifest")
{
  const fs::path dir = ws().root / "model";
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "fit_report.json"));
  const json manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest.at("command") == "identify");
  CHECK(manifest.at("model_sha256") == sha256_file(dir / "model.json"));
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("outputs").size() == 2);
  CHECK(load_model(dir / "model.json").n_psi() == 18);
}

TEST_CASE("identify is reproducible and honours --seed")
{
  const fs::path again = ws().root / "model_again";
  REQUIRE(cli({"identify", "--config", ws().identify_cfg.string(), "--out-dir", again.string()}).code == kExitOk);
  CHECK(sha256_file(again / "model.json") == sha256_file(ws().model));

  const fs::path other = ws().root / "model_seed";
  REQUIRE(cli({"identify", "--config", ws().identify_cfg.string(), "--out-dir", other.string(), "--seed", "4"}).code ==
          kExitOk);
  CHECK(sha256_file(other / "model.json") != sha256_file(ws().model));
}

TEST_CASE("larger ridge does not lower the reported training residual")
{
  const fs::path cfg = ws().root / "identify_ridge.json";
  write_file(cfg, R"({"n_samples": 3000, "n_heldout": 100, "n_rbf": 10, "seed": 3, "lambda": 1e-5})");
  const fs::path dir = ws().root / "model_ridge";
  REQUIRE(cli({"identify", "--config", cfg.string(), "--out-dir", dir.string()}).code == kExitOk);
  const double base = read_json_file(ws().root / "model" / "fit_report.json").at("train_misfit");
  const double ridge = read_json_file(dir / "fit_report.json").at("train_misfit");
  CHECK(ridge >= base);
}

TEST_CASE("predict")
{
  const fs::path sc = ws().root / "predict.json";
  write_file(sc, R"({"x0": [-3, -3, 0, 0.2], "T_steps": 50})");
  const fs::path dir = ws().root / "predict";
  const Result r = cli({"predict", "--model", ws().model.string(), "--scenario", sc.string(), "--out-dir", dir.string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = read_file(dir / "prediction.csv");
  CHECK(csv.rfind("t,x,y,theta,v,xhat,yhat,thetahat,vhat,h_true,h_hat,h_tilde,e\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);

  const fs::path empty = ws().root / "predict_empty.json";
  write_file(empty, R"({"T_steps": 0})");
  const fs::path dir0 = ws().root / "predict0";
  REQUIRE(cli({"predict", "--model", ws().model.string(), "--scenario", empty.string(), "--out-dir", dir0.string()})
            .code == kExitOk);
  CHECK(read_file(dir0 / "prediction.csv") == "t,x,y,theta,v,xhat,yhat,thetahat,vhat,h_true,h_hat,h_tilde,e\n");
}

TEST_CASE("run and its outputs")
{
  const fs::path dir = ws().root / "run";
  const Result r = cli({"run", "--model", ws().model.string(), "--scenario", ws().scenario_cfg.string(), "--out-dir",
                        dir.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("min_h") != std::string::npos);
  CHECK(r.out.find("mean_solve_ms") != std::string::npos);
  const json summary = read_json_file(dir / "summary.json");
  CHECK(summary.at("steps") == 30);
  const json manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest.at("config").at("mpc").at("enable_dcbf") == true);
  CHECK(manifest.at("model_sha256") == sha256_file(ws().model));

  // identical inputs give identical deterministic outputs
  const fs::path dir2 = ws().root / "run2";
  REQUIRE(cli({"run", "--model", ws().model.string(), "--scenario", ws().scenario_cfg.string(), "--out-dir",
               dir2.string()})
            .code == kExitOk);
  CHECK(read_file(dir / "simlog.csv") == read_file(dir2 / "simlog.csv"));

  const fs::path nd = ws().root / "run_nodcbf";
  REQUIRE(cli({"run", "--model", ws().model.string(), "--scenario", ws().scenario_cfg.string(), "--out-dir",
               nd.string(), "--no-dcbf"})
            .code == kExitOk);
  CHECK(read_json_file(nd / "manifest.json").at("config").at("mpc").at("enable_dcbf") == false);
}

TEST_CASE("sweep")
{
  const fs::path dir = ws().root / "sweep";
  const Result r =
    cli({"sweep", "--model", ws().model.string(), "--sweep", ws().sweep_cfg.string(), "--out-dir", dir.string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = read_file(dir / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("mean_solve_ms") != std::string::npos);

  const fs::path empty = ws().root / "sweep_empty.json";
  write_file(empty, R"({"N": [], "gamma": [0.2]})");
  const fs::path bad = ws().root / "sweep_bad";
  CHECK(cli({"sweep", "--model", ws().model.string(), "--sweep", empty.string(), "--out-dir", bad.string()}).code ==
        kExitUsage);
  CHECK_FALSE(fs::exists(bad));
}

TEST_CASE("error exit codes")
{
  const fs::path out = ws().root / "should_not_exist";
  SUBCASE("missing model")
  {
    const Result r = cli({"run", "--model", (ws().root / "nope.json").string(), "--scenario",
                          ws().scenario_cfg.string(), "--out-dir", out.string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("not found") != std::string::npos);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("bad config")
  {
    const fs::path cfg = ws().root / "bad.json";
    write_file(cfg, R"({"n_rbf": -3})");
    CHECK(cli({"identify", "--config", cfg.string(), "--out-dir", out.string()}).code == kExitUsage);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("dt mismatch between scenario and model")
  {
    const fs::path cfg = ws().root / "dt.json";
    write_file(cfg, R"({"dt": 0.1})");
    CHECK(cli({"run", "--model", ws().model.string(), "--scenario", cfg.string(), "--out-dir", out.string()}).code ==
          kExitUsage);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("usage")
  {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"fly"}).code == kExitUsage);
    CHECK(cli({"run", "--model", "m.json"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
  }
  SUBCASE("singular identification")
  {
    const fs::path cfg = ws().root / "singular.json";
    // zero-width input range makes the input rows of the Gram matrix vanish
    write_file(cfg, R"({"n_samples": 500, "n_rbf": 2, "lambda": 0,
                        "ranges": {"input_lo": [0, 0], "input_hi": [0, 0]}})");
    const Result r = cli({"identify", "--config", cfg.string(), "--out-dir", out.string()});
    CHECK(r.code == kExitNumerical);
    CHECK_FALSE(fs::exists(out));
  }
}
