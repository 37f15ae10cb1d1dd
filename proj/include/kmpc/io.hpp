#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmpc/controller.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/sim.hpp"

namespace kmpc {

using json = nlohmann::json;

inline constexpr const char * kToolVersion = "0.1.0";

// Model files. Matrices are stored row-major with explicit dimensions.
json model_to_json(const KoopmanModel & m);
KoopmanModel model_from_json(const json & j);  // throws ConfigError
void save_model(const KoopmanModel & m, const std::filesystem::path & path);
KoopmanModel load_model(const std::filesystem::path & path);  // throws ConfigError

json fit_report_to_json(const FitReport & r);

// Config files. Unknown keys are rejected; absent keys keep their defaults.
json read_json_file(const std::filesystem::path & path);  // throws ConfigError
IdentifyConfig identify_config_from_json(const json & j);
json to_json(const IdentifyConfig & c);
MpcConfig mpc_config_from_json(const json & j);
json to_json(const MpcConfig & c);
SolverSettings solver_settings_from_json(const json & j);
json to_json(const SolverSettings & s);
Scenario scenario_from_json(const json & j);
json to_json(const Scenario & s);

struct SweepSpec
{
  Scenario base;
  std::vector<int> N_list;
  std::vector<double> gamma_list;
};
SweepSpec sweep_from_json(const json & j);  // throws ConfigError on an empty grid
json to_json(const SweepSpec & s);

/// Inputs for the predict command; absent entries are zero.
std::vector<Input> inputs_from_json(const json & j);

// CSV output: '.' decimal, shortest round-trip numbers, LF line endings.
extern const char * const kPredictionCsvHeader;
extern const char * const kSimLogCsvHeader;
extern const char * const kSweepCsvHeader;
extern const char * const kMpcStepCsvHeader;

void write_prediction_csv(std::ostream & os, const std::vector<PredictionRow> & rows);
void write_simlog_csv(std::ostream & os, const SimLog & log);
void write_sweep_csv(std::ostream & os, const std::vector<SweepRow> & rows);
std::string mpc_step_csv_row(const MpcStep & step);

json summary_to_json(const Summary & s);

/// Lower-case hex SHA-256 of a byte string or of a file's contents.
std::string sha256_hex(const std::string & bytes);
std::string sha256_file(const std::filesystem::path & path);

std::string read_file(const std::filesystem::path & path);
void write_file(const std::filesystem::path & path, const std::string & contents);

}  // namespace kmpc
