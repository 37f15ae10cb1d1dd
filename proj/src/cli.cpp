#include "kmpc/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "kmpc/format.hpp"
#include "kmpc/io.hpp"

namespace kmpc {

namespace fs = std::filesystem;

namespace {

struct Output
{
  std::string name;
  std::string contents;
};

std::string utc_timestamp()
{
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Everything is computed before the directory is touched, so a failing command leaves
// no partial outputs behind.
void write_outputs(
  const fs::path & dir, const std::string & command, const json & config, const std::optional<std::string> & model_hash,
  std::uint64_t seed, const std::vector<Output> & outputs, const std::vector<std::string> & timing_dependent)
{
  fs::create_directories(dir);
  json files = json::array();
  for (const auto & o : outputs) {
    write_file(dir / o.name, o.contents);
    files.push_back({{"name", o.name}, {"sha256", sha256_hex(o.contents)}});
  }
  json manifest{{"tool", "kmpc"},
                {"version", kToolVersion},
                {"command", command},
                {"config", config},
                {"seed", seed},
                {"model_sha256", model_hash ? json(*model_hash) : json(nullptr)},
                {"created_utc", utc_timestamp()},
                {"outputs", files},
                {"timing_dependent", timing_dependent}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct Loaded
{
  KoopmanModel model;
  std::string hash;
};

Loaded load_model_with_hash(const std::string & path)
{
  if (!fs::is_regular_file(path)) { throw ConfigError("model file '" + path + "' not found"); }
  const std::string bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error & e) {
    throw ConfigError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return {model_from_json(j), sha256_hex(bytes)};
}

int cmd_identify(const std::string & config_path, const std::string & out_dir, std::optional<std::uint64_t> seed,
                 std::ostream & out)
{
  IdentifyConfig cfg = identify_config_from_json(read_json_file(config_path));
  if (seed) { cfg.seed = *seed; }
  const KoopmanModel m = identify(cfg);

  const std::string model_text = model_to_json(m).dump(1) + "\n";
  const std::string report_text = fit_report_to_json(m.report).dump(2) + "\n";
  write_outputs(out_dir, "identify", to_json(cfg), sha256_hex(model_text), cfg.seed,
                {{"model.json", model_text}, {"fit_report.json", report_text}}, {});

  out << "n_psi " << m.n_psi() << "\n"
      << "train_rms " << format_double(m.report.train_rms) << "\n"
      << "barrier_bound " << format_double(m.report.barrier_bound) << "\n"
      << "relative_degree " << (m.report.relative_degree ? std::to_string(*m.report.relative_degree) : "none") << "\n";
  return kExitOk;
}

int cmd_predict(const std::string & model_path, const std::string & scenario_path, const std::string & out_dir,
                std::optional<std::uint64_t> seed, std::ostream & out)
{
  const Loaded lm = load_model_with_hash(model_path);
  const json sj = read_json_file(scenario_path);
  Scenario sc = scenario_from_json(sj);
  if (seed) { sc.seed = *seed; }
  const std::vector<Input> inputs = inputs_from_json(sj);
  const auto rows = validate_prediction(lm.model, sc.x0, inputs, sc.T_steps, sc.dt);

  std::ostringstream csv;
  write_prediction_csv(csv, rows);
  json cfg = to_json(sc);
  cfg["inputs"] = sj.contains("inputs") ? sj.at("inputs") : json::array();
  write_outputs(out_dir, "predict", cfg, lm.hash, sc.seed, {{"prediction.csv", csv.str()}}, {});

  double mean_e = 0.0;
  for (const auto & r : rows) { mean_e += r.e; }
  out << "rows " << rows.size() << "\n";
  if (!rows.empty()) { out << "mean_e " << format_double(mean_e / static_cast<double>(rows.size())) << "\n"; }
  return kExitOk;
}

int cmd_run(const std::string & model_path, const std::string & scenario_path, const std::string & out_dir,
            bool no_dcbf, std::optional<std::uint64_t> seed, std::ostream & out, std::ostream & err)
{
  const Loaded lm = load_model_with_hash(model_path);
  Scenario sc = scenario_from_json(read_json_file(scenario_path));
  if (seed) { sc.seed = *seed; }
  if (no_dcbf) { sc.mpc.enable_dcbf = false; }
  const SimLog log = run_closed_loop(lm.model, sc);
  if (log.records.empty()) { throw ConfigError("scenario has no steps to run"); }
  const Summary s = metrics(log, sc.x_goal);

  std::ostringstream csv;
  write_simlog_csv(csv, log);
  json summary = summary_to_json(s);
  summary["final_state"] = std::vector<double>{log.final_state.x, log.final_state.y, log.final_state.theta,
                                                log.final_state.v};
  summary["aborted_reason"] = log.aborted ? json(*log.aborted) : json(nullptr);
  write_outputs(out_dir, "run", to_json(sc), lm.hash, sc.seed,
                {{"simlog.csv", csv.str()}, {"summary.json", summary.dump(2) + "\n"}}, {"summary.json"});

  char mean_ms[32];
  std::snprintf(mean_ms, sizeof mean_ms, "%.3g", s.mean_solve_ms);
  out << "min_h " << format_double(s.min_h_true) << "\n"
      << "final_goal_distance " << format_double(s.final_goal_distance) << "\n"
      << "mean_solve_ms " << mean_ms << "\n"
      << "nonoptimal_steps " << s.nonoptimal_steps << "\n";
  if (log.aborted) {
    err << "run stopped early: " << *log.aborted << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sweep(const std::string & model_path, const std::string & sweep_path, const std::string & out_dir,
              bool no_dcbf, std::optional<std::uint64_t> seed, std::ostream & out)
{
  const Loaded lm = load_model_with_hash(model_path);
  SweepSpec spec = sweep_from_json(read_json_file(sweep_path));
  if (seed) { spec.base.seed = *seed; }
  if (no_dcbf) { spec.base.mpc.enable_dcbf = false; }
  spec.base.validate(lm.model);
  const auto rows = sweep(lm.model, spec.base, spec.N_list, spec.gamma_list);

  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_outputs(out_dir, "sweep", to_json(spec), lm.hash, spec.base.seed, {{"sweep.csv", csv.str()}}, {"sweep.csv"});
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Koopman linear MPC with discrete-time control barrier functions", "kmpc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config, model, scenario, sweep_file, out_dir;
  bool no_dcbf = false;
  std::optional<std::uint64_t> seed;

  auto * identify = app.add_subcommand("identify", "fit a lifted linear model from sampled transitions");
  identify->add_option("--config", config, "identification config (JSON)")->required();

  auto * predict = app.add_subcommand("predict", "compare the linear predictor with the true plant");
  predict->add_option("--model", model, "model file")->required();
  predict->add_option("--scenario", scenario, "scenario config (JSON)")->required();

  auto * run = app.add_subcommand("run", "closed-loop simulation");
  run->add_option("--model", model, "model file")->required();
  run->add_option("--scenario", scenario, "scenario config (JSON)")->required();
  run->add_flag("--no-dcbf", no_dcbf, "drop the barrier constraints");

  auto * sw = app.add_subcommand("sweep", "closed-loop runs over an (N, gamma) grid");
  sw->add_option("--model", model, "model file")->required();
  sw->add_option("--sweep", sweep_file, "sweep config (JSON)")->required();
  sw->add_flag("--no-dcbf", no_dcbf, "drop the barrier constraints");

  for (auto * sub : {identify, predict, run, sw}) {
    sub->add_option("--out-dir", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "override the configured seed");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion &) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError & e) {
    err << "kmpc: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*identify) { return cmd_identify(config, out_dir, seed, out); }
    if (*predict) { return cmd_predict(model, scenario, out_dir, seed, out); }
    if (*run) { return cmd_run(model, scenario, out_dir, no_dcbf, seed, out, err); }
    return cmd_sweep(model, sweep_file, out_dir, no_dcbf, seed, out);
  } catch (const std::invalid_argument & e) {
    err << "kmpc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IdentificationError & e) {
    err << "kmpc: identification failed: " << e.what() << " (condition number " << e.condition_number() << ")\n";
    return kExitNumerical;
  } catch (const std::exception & e) {
    err << "kmpc: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace kmpc
