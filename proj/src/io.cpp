#include "kmpc/io.hpp"

#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "kmpc/format.hpp"

namespace kmpc {

namespace {

void check_keys(const json & j, std::initializer_list<const char *> allowed, const std::string & where)
{
  if (!j.is_object()) { throw ConfigError(where + ": expected an object"); }
  for (const auto & [key, value] : j.items()) {
    bool ok = false;
    for (const char * a : allowed) { ok = ok || key == a; }
    if (!ok) { throw ConfigError(where + ": unknown key '" + key + "'"); }
  }
}

template <typename T>
void read(const json & j, const char * key, T & out, const std::string & where)
{
  if (!j.contains(key)) { return; }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception & e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <int Rows>
void read_vec(const json & j, const char * key, Eigen::Matrix<double, Rows, 1> & out, const std::string & where)
{
  if (!j.contains(key)) { return; }
  std::vector<double> v;
  read(j, key, v, where);
  if (static_cast<int>(v.size()) != Rows) {
    throw ConfigError(where + "." + key + ": expected " + std::to_string(Rows) + " numbers");
  }
  for (int i = 0; i < Rows; ++i) { out(i) = v[i]; }
}

void read_state(const json & j, const char * key, State & out, const std::string & where)
{
  if (!j.contains(key)) { return; }
  Eigen::Vector4d v = out.vec();
  read_vec<4>(j, key, v, where);
  out = State::from(v);
}

void read_input(const json & j, const char * key, Input & out, const std::string & where)
{
  if (!j.contains(key)) { return; }
  Eigen::Vector2d v = out.vec();
  read_vec<2>(j, key, v, where);
  out = Input::from(v);
}

template <typename Derived>
std::vector<double> as_vector(const Eigen::MatrixBase<Derived> & v)
{
  return std::vector<double>(v.derived().data(), v.derived().data() + v.size());
}

json matrix_to_json(const Eigen::MatrixXd & M)
{
  std::vector<double> flat;
  flat.reserve(M.size());
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) { flat.push_back(M(r, c)); }
  }
  return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const json & j, const std::string & where)
{
  check_keys(j, {"rows", "cols", "data"}, where);
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> flat;
  read(j, "rows", rows, where);
  read(j, "cols", cols, where);
  read(j, "data", flat, where);
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw ConfigError(where + ": data length does not match rows x cols");
  }
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) { M(r, c) = flat[r * cols + c]; }
  }
  return M;
}

json obstacle_to_json(const ObstacleSpec & o) { return json{{"cx", o.cx}, {"cy", o.cy}, {"r", o.r}}; }

ObstacleSpec obstacle_from_json(const json & j, const std::string & where)
{
  check_keys(j, {"cx", "cy", "r"}, where);
  ObstacleSpec o;
  read(j, "cx", o.cx, where);
  read(j, "cy", o.cy, where);
  read(j, "r", o.r, where);
  try {
    o.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(where + ": " + e.what());
  }
  return o;
}

json bounds_to_json(const BoxBounds & b)
{
  return json{{"state_lo", as_vector(b.state_lo)}, {"state_hi", as_vector(b.state_hi)},
              {"input_lo", as_vector(b.input_lo)}, {"input_hi", as_vector(b.input_hi)}};
}

BoxBounds bounds_from_json(const json & j, BoxBounds b, const std::string & where)
{
  check_keys(j, {"state_lo", "state_hi", "input_lo", "input_hi"}, where);
  read_vec<4>(j, "state_lo", b.state_lo, where);
  read_vec<4>(j, "state_hi", b.state_hi, where);
  read_vec<2>(j, "input_lo", b.input_lo, where);
  read_vec<2>(j, "input_hi", b.input_hi, where);
  try {
    b.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(where + ": " + e.what());
  }
  return b;
}

std::string csv(double v) { return format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------------------
// models

json model_to_json(const KoopmanModel & m)
{
  json basis{{"n_rbf", m.basis.n_rbf()},
             {"centers", matrix_to_json(m.basis.centers())},
             {"widths", as_vector(m.basis.widths())},
             {"seed", m.basis.seed()}};
  return json{{"format", "kmpc-model"},
              {"version", 1},
              {"n_psi", m.n_psi()},
              {"q", m.n_inputs()},
              {"dt", m.dt},
              {"lambda", m.lambda},
              {"obstacle", obstacle_to_json(m.obstacle)},
              {"basis", basis},
              {"A", matrix_to_json(m.A)},
              {"B", matrix_to_json(m.B)},
              {"C", matrix_to_json(m.C)},
              {"fit_residuals", fit_report_to_json(m.report)}};
}

KoopmanModel model_from_json(const json & j)
{
  const std::string where = "model";
  check_keys(j, {"format", "version", "n_psi", "q", "dt", "lambda", "obstacle", "basis", "A", "B", "C", "fit_residuals"},
             where);
  std::string format;
  int version = 0;
  read(j, "format", format, where);
  read(j, "version", version, where);
  if (format != "kmpc-model" || version != 1) { throw ConfigError("model: unsupported format or version"); }
  for (const char * key : {"n_psi", "q", "dt", "lambda", "obstacle", "basis", "A", "B", "C"}) {
    if (!j.contains(key)) { throw ConfigError(std::string("model: missing '") + key + "'"); }
  }

  KoopmanModel m;
  read(j, "dt", m.dt, where);
  read(j, "lambda", m.lambda, where);
  m.obstacle = obstacle_from_json(j.at("obstacle"), "model.obstacle");

  const json & b = j.at("basis");
  check_keys(b, {"n_rbf", "centers", "widths", "seed"}, "model.basis");
  std::vector<double> widths;
  std::uint64_t seed = 0;
  read(b, "widths", widths, "model.basis");
  read(b, "seed", seed, "model.basis");
  if (!b.contains("centers")) { throw ConfigError("model.basis: missing 'centers'"); }
  try {
    m.basis = ObservableBasis(
      matrix_from_json(b.at("centers"), "model.basis.centers"),
      Eigen::Map<const Eigen::VectorXd>(widths.data(), static_cast<Eigen::Index>(widths.size())), seed);
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument & e) {
    throw ConfigError(std::string("model.basis: ") + e.what());
  }

  m.A = matrix_from_json(j.at("A"), "model.A");
  m.B = matrix_from_json(j.at("B"), "model.B");
  m.C = matrix_from_json(j.at("C"), "model.C");
  int n_psi = 0, q = 0;
  read(j, "n_psi", n_psi, where);
  read(j, "q", q, where);
  if (n_psi != m.A.rows() || q != m.B.cols()) { throw ConfigError("model: n_psi or q disagrees with the matrices"); }
  try {
    m.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  if (j.contains("fit_residuals")) {
    const json & r = j.at("fit_residuals");
    const std::string rw = "model.fit_residuals";
    FitReport & rep = m.report;
    read(r, "train_misfit", rep.train_misfit, rw);
    read(r, "train_rms", rep.train_rms, rw);
    read(r, "barrier_bound", rep.barrier_bound, rw);
    read(r, "n_train", rep.n_train, rw);
    read(r, "n_heldout", rep.n_heldout, rw);
    std::vector<double> v;
    if (r.contains("output_max_abs")) {
      read(r, "output_max_abs", v, rw);
      rep.output_max_abs = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (r.contains("heldout_max_abs")) {
      read(r, "heldout_max_abs", v, rw);
      rep.heldout_max_abs = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (r.contains("relative_degree") && !r.at("relative_degree").is_null()) {
      int rd = 0;
      read(r, "relative_degree", rd, rw);
      rep.relative_degree = rd;
    }
  }
  return m;
}

json fit_report_to_json(const FitReport & r)
{
  return json{{"train_misfit", r.train_misfit},
              {"train_rms", r.train_rms},
              {"output_max_abs", as_vector(r.output_max_abs)},
              {"heldout_max_abs", as_vector(r.heldout_max_abs)},
              {"barrier_bound", r.barrier_bound},
              {"relative_degree", r.relative_degree ? json(*r.relative_degree) : json(nullptr)},
              {"n_train", r.n_train},
              {"n_heldout", r.n_heldout}};
}

void save_model(const KoopmanModel & m, const std::filesystem::path & path)
{
  write_file(path, model_to_json(m).dump(1) + "\n");
}

KoopmanModel load_model(const std::filesystem::path & path) { return model_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------------------
// configs

json read_json_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw ConfigError("cannot open '" + path.string() + "'"); }
  try {
    return json::parse(in);
  } catch (const json::parse_error & e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

IdentifyConfig identify_config_from_json(const json & j)
{
  const std::string w = "identify";
  check_keys(j, {"ranges", "n_samples", "n_heldout", "dt", "seed", "obstacle", "n_rbf", "rbf_width", "basis_seed",
                 "lambda", "output_eps", "relative_degree_max"},
             w);
  IdentifyConfig c;
  if (j.contains("ranges")) { c.ranges = bounds_from_json(j.at("ranges"), c.ranges, w + ".ranges"); }
  read(j, "n_samples", c.n_samples, w);
  read(j, "n_heldout", c.n_heldout, w);
  read(j, "dt", c.dt, w);
  read(j, "seed", c.seed, w);
  if (j.contains("obstacle")) { c.obstacle = obstacle_from_json(j.at("obstacle"), w + ".obstacle"); }
  read(j, "n_rbf", c.n_rbf, w);
  read(j, "rbf_width", c.rbf_width, w);
  read(j, "basis_seed", c.basis_seed, w);
  read(j, "lambda", c.lambda, w);
  read(j, "output_eps", c.output_eps, w);
  read(j, "relative_degree_max", c.relative_degree_max, w);
  if (!(c.dt > 0.0)) { throw ConfigError("identify.dt must be positive"); }
  if (c.n_rbf < 0 || !(c.rbf_width > 0.0)) { throw ConfigError("identify: n_rbf must be >= 0 and rbf_width > 0"); }
  if (!(c.lambda >= 0.0) || !(c.output_eps >= 0.0)) { throw ConfigError("identify: ridge parameters must be >= 0"); }
  if (c.n_samples < c.n_rbf + lifted::kFixed + kInputDim) {
    throw ConfigError("identify.n_samples must be at least n_psi + q");
  }
  if (c.n_heldout < 0 || c.relative_degree_max < 1) {
    throw ConfigError("identify: n_heldout must be >= 0 and relative_degree_max >= 1");
  }
  return c;
}

json to_json(const IdentifyConfig & c)
{
  return json{{"ranges", bounds_to_json(c.ranges)},
              {"n_samples", c.n_samples},
              {"n_heldout", c.n_heldout},
              {"dt", c.dt},
              {"seed", c.seed},
              {"obstacle", obstacle_to_json(c.obstacle)},
              {"n_rbf", c.n_rbf},
              {"rbf_width", c.rbf_width},
              {"basis_seed", c.basis_seed},
              {"lambda", c.lambda},
              {"output_eps", c.output_eps},
              {"relative_degree_max", c.relative_degree_max}};
}

MpcConfig mpc_config_from_json(const json & j)
{
  const std::string w = "mpc";
  check_keys(j, {"N", "gamma", "Q", "P", "R", "S", "bounds", "x_ref", "u_ref", "omega_ref", "enable_dcbf",
                 "epsilon_margin", "dt", "formulation"},
             w);
  MpcConfig c;
  read(j, "N", c.N, w);
  read(j, "gamma", c.gamma, w);
  read_vec<kTrackedDim>(j, "Q", c.q_weights, w);
  read_vec<kTrackedDim>(j, "P", c.p_weights, w);
  read_vec<2>(j, "R", c.r_weights, w);
  read(j, "S", c.s_weight, w);
  if (j.contains("bounds")) { c.bounds = bounds_from_json(j.at("bounds"), c.bounds, w + ".bounds"); }
  read_state(j, "x_ref", c.x_ref, w);
  read_input(j, "u_ref", c.u_ref, w);
  read(j, "omega_ref", c.omega_ref, w);
  read(j, "enable_dcbf", c.enable_dcbf, w);
  read(j, "epsilon_margin", c.epsilon_margin, w);
  read(j, "dt", c.dt, w);
  if (j.contains("formulation")) {
    std::string f;
    read(j, "formulation", f, w);
    if (f == "condensed") {
      c.formulation = Formulation::condensed;
    } else if (f == "sparse") {
      c.formulation = Formulation::sparse;
    } else {
      throw ConfigError("mpc.formulation must be 'condensed' or 'sparse'");
    }
  }
  c.validate();
  return c;
}

json to_json(const MpcConfig & c)
{
  return json{{"N", c.N},
              {"gamma", c.gamma},
              {"Q", as_vector(c.q_weights)},
              {"P", as_vector(c.p_weights)},
              {"R", as_vector(c.r_weights)},
              {"S", c.s_weight},
              {"bounds", bounds_to_json(c.bounds)},
              {"x_ref", as_vector(c.x_ref.vec())},
              {"u_ref", as_vector(c.u_ref.vec())},
              {"omega_ref", c.omega_ref},
              {"enable_dcbf", c.enable_dcbf},
              {"epsilon_margin", c.epsilon_margin},
              {"dt", c.dt},
              {"formulation", c.formulation == Formulation::sparse ? "sparse" : "condensed"}};
}

SolverSettings solver_settings_from_json(const json & j)
{
  const std::string w = "solver";
  check_keys(j, {"eps_abs", "eps_rel", "eps_prim_inf", "eps_dual_inf", "max_iters", "rho", "sigma", "alpha",
                 "adapt_rho_interval", "check_interval", "scaling_iters", "polish"},
             w);
  SolverSettings s;
  read(j, "eps_abs", s.eps_abs, w);
  read(j, "eps_rel", s.eps_rel, w);
  read(j, "eps_prim_inf", s.eps_prim_inf, w);
  read(j, "eps_dual_inf", s.eps_dual_inf, w);
  read(j, "max_iters", s.max_iters, w);
  read(j, "rho", s.rho, w);
  read(j, "sigma", s.sigma, w);
  read(j, "alpha", s.alpha, w);
  read(j, "adapt_rho_interval", s.adapt_rho_interval, w);
  read(j, "check_interval", s.check_interval, w);
  read(j, "scaling_iters", s.scaling_iters, w);
  read(j, "polish", s.polish, w);
  try {
    s.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  return s;
}

json to_json(const SolverSettings & s)
{
  return json{{"eps_abs", s.eps_abs},
              {"eps_rel", s.eps_rel},
              {"eps_prim_inf", s.eps_prim_inf},
              {"eps_dual_inf", s.eps_dual_inf},
              {"max_iters", s.max_iters},
              {"rho", s.rho},
              {"sigma", s.sigma},
              {"alpha", s.alpha},
              {"adapt_rho_interval", s.adapt_rho_interval},
              {"check_interval", s.check_interval},
              {"scaling_iters", s.scaling_iters},
              {"polish", s.polish}};
}

Scenario scenario_from_json(const json & j)
{
  const std::string w = "scenario";
  check_keys(j, {"label", "x0", "x_goal", "obstacle", "T_steps", "dt", "mpc", "solver", "model_path", "seed", "inputs"},
             w);
  Scenario s;
  read(j, "label", s.label, w);
  read_state(j, "x0", s.x0, w);
  read_state(j, "x_goal", s.x_goal, w);
  if (j.contains("obstacle")) { s.obstacle = obstacle_from_json(j.at("obstacle"), w + ".obstacle"); }
  read(j, "T_steps", s.T_steps, w);
  read(j, "dt", s.dt, w);
  read(j, "model_path", s.model_path, w);
  read(j, "seed", s.seed, w);
  if (j.contains("mpc")) {
    json mj = j.at("mpc");
    // Goal and dt belong to the scenario; the MPC block may omit them.
    if (mj.is_object()) {
      if (!mj.contains("x_ref")) { mj["x_ref"] = as_vector(s.x_goal.vec()); }
      if (!mj.contains("dt")) { mj["dt"] = s.dt; }
    }
    s.mpc = mpc_config_from_json(mj);
  } else {
    s.mpc.x_ref = s.x_goal;
    s.mpc.dt = s.dt;
  }
  if (j.contains("solver")) { s.solver = solver_settings_from_json(j.at("solver")); }
  if (s.T_steps < 0) { throw ConfigError("scenario.T_steps must be >= 0"); }
  if (!(s.dt > 0.0)) { throw ConfigError("scenario.dt must be positive"); }
  return s;
}

json to_json(const Scenario & s)
{
  return json{{"label", s.label},
              {"x0", as_vector(s.x0.vec())},
              {"x_goal", as_vector(s.x_goal.vec())},
              {"obstacle", obstacle_to_json(s.obstacle)},
              {"T_steps", s.T_steps},
              {"dt", s.dt},
              {"mpc", to_json(s.effective_mpc())},
              {"solver", to_json(s.solver)},
              {"model_path", s.model_path},
              {"seed", s.seed}};
}

SweepSpec sweep_from_json(const json & j)
{
  const std::string w = "sweep";
  check_keys(j, {"base", "N", "gamma"}, w);
  SweepSpec s;
  if (j.contains("base")) { s.base = scenario_from_json(j.at("base")); }
  read(j, "N", s.N_list, w);
  read(j, "gamma", s.gamma_list, w);
  if (s.N_list.empty() || s.gamma_list.empty()) { throw ConfigError("sweep: N and gamma grids must be non-empty"); }
  return s;
}

json to_json(const SweepSpec & s) { return json{{"base", to_json(s.base)}, {"N", s.N_list}, {"gamma", s.gamma_list}}; }

std::vector<Input> inputs_from_json(const json & j)
{
  std::vector<Input> out;
  if (!j.contains("inputs")) { return out; }
  std::vector<std::vector<double>> raw;
  read(j, "inputs", raw, "scenario");
  for (const auto & u : raw) {
    if (u.size() != kInputDim) { throw ConfigError("scenario.inputs: each entry must hold 2 numbers"); }
    out.push_back({u[0], u[1]});
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// CSV

const char * const kPredictionCsvHeader = "t,x,y,theta,v,xhat,yhat,thetahat,vhat,h_true,h_hat,h_tilde,e";
const char * const kSimLogCsvHeader = "t,x,y,theta,v,u1,u2,h_true,h_lifted,omega_first,status,iterations,fallback";
const char * const kSweepCsvHeader =
  "N,gamma,steps,min_h_true,min_h_lifted,final_goal_distance,mean_solve_ms,max_solve_ms,relaxed_steps,"
  "nonoptimal_steps,aborted";
const char * const kMpcStepCsvHeader = "u1,u2,status,iterations,h_tilde_now,omega_first,min_predicted_h,solve_time_ms";

void write_prediction_csv(std::ostream & os, const std::vector<PredictionRow> & rows)
{
  os << kPredictionCsvHeader << '\n';
  for (const auto & r : rows) {
    os << csv(r.t) << ',' << csv(r.truth.x) << ',' << csv(r.truth.y) << ',' << csv(r.truth.theta) << ','
       << csv(r.truth.v) << ',' << csv(r.predicted.x) << ',' << csv(r.predicted.y) << ',' << csv(r.predicted.theta)
       << ',' << csv(r.predicted.v) << ',' << csv(r.h_true) << ',' << csv(r.h_hat) << ',' << csv(r.h_tilde) << ','
       << csv(r.e) << '\n';
  }
}

// Wall-clock timings are left out so that identical runs give identical files.
void write_simlog_csv(std::ostream & os, const SimLog & log)
{
  os << kSimLogCsvHeader << '\n';
  for (const auto & r : log.records) {
    os << r.t << ',' << csv(r.state.x) << ',' << csv(r.state.y) << ',' << csv(r.state.theta) << ','
       << csv(r.state.v) << ',' << csv(r.input.u1) << ',' << csv(r.input.u2) << ',' << csv(r.h_true) << ','
       << csv(r.h_lifted) << ',' << csv(r.omega_first) << ',' << to_string(r.status) << ',' << r.iterations << ','
       << (r.fallback ? 1 : 0) << '\n';
  }
}

void write_sweep_csv(std::ostream & os, const std::vector<SweepRow> & rows)
{
  os << kSweepCsvHeader << '\n';
  for (const auto & r : rows) {
    const Summary & s = r.summary;
    os << r.N << ',' << csv(r.gamma) << ',' << s.steps << ',' << csv(s.min_h_true) << ',' << csv(s.min_h_lifted)
       << ',' << csv(s.final_goal_distance) << ',' << csv(s.mean_solve_ms) << ',' << csv(s.max_solve_ms) << ','
       << s.relaxed_steps << ',' << s.nonoptimal_steps << ',' << (s.aborted ? 1 : 0) << '\n';
  }
}

std::string mpc_step_csv_row(const MpcStep & step)
{
  double min_h = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < step.predicted_h.size(); ++k) { min_h = std::min(min_h, step.predicted_h[k]); }
  std::ostringstream os;
  os << csv(step.u0.u1) << ',' << csv(step.u0.u2) << ',' << to_string(step.status) << ',' << step.iterations << ','
     << csv(step.h_tilde_now) << ',' << csv(step.predicted_omega.empty() ? 0.0 : step.predicted_omega.front()) << ','
     << csv(min_h) << ',' << csv(1e3 * step.solve_time);
  return os.str();
}

json summary_to_json(const Summary & s)
{
  return json{{"steps", s.steps},
              {"min_h_true", s.min_h_true},
              {"min_h_lifted", s.min_h_lifted},
              {"final_goal_distance", s.final_goal_distance},
              {"mean_solve_ms", s.mean_solve_ms},
              {"max_solve_ms", s.max_solve_ms},
              {"relaxed_steps", s.relaxed_steps},
              {"nonoptimal_steps", s.nonoptimal_steps},
              {"aborted", s.aborted}};
}

// ---------------------------------------------------------------------------------------
// files

std::string sha256_hex(const std::string & bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) { os << std::setw(2) << static_cast<int>(digest[i]); }
  return os.str();
}

std::string sha256_file(const std::filesystem::path & path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw ConfigError("cannot open '" + path.string() + "'"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path & path, const std::string & contents)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw std::runtime_error("cannot write '" + path.string() + "'"); }
  out << contents;
  if (!out) { throw std::runtime_error("write failed for '" + path.string() + "'"); }
}

}  // namespace kmpc
