#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdi/dataset.hpp"
#include "pdi/evaluation.hpp"
#include "pdi/synthetic.hpp"

namespace pdi {

inline constexpr int kReportSchemaVersion = 1;

// Process exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Column mapping for annotation tables. LLM columns are every column whose
/// name starts with `llm_prefix`; the remainder of the name is the variant.
struct CsvSchema {
  RatingScale scale = RatingScale::Likert(1, 5);
  std::vector<std::string> demographics;
  std::string id_column = "instance_id";
  std::string label_column = "human_rating";
  std::string llm_prefix = "llm_";
  std::string text_column = "text";  // optional in the file
  std::string pi_column = "pi";      // optional in the file
  std::string xi_column = "xi";      // optional in the file
  double max_reject_fraction = 0.01;
};

struct RowReject {
  std::size_t row = 0;  // 1-based line number in the source file (header is line 1)
  std::string reason;
};

struct IngestResult {
  Dataset dataset;
  std::vector<RowReject> rejects;
};

/// Parses an RFC 4180 CSV document into rows of fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_escape(const std::string& field);

/// Reads an annotation table. Missing required columns raise SchemaError;
/// bad rows are collected as rejects, and more than max_reject_fraction of
/// rejected rows raises DataError. An empty human rating cell means the
/// label is unobserved.
IngestResult ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);
IngestResult ingest_csv_text(const std::string& text, const CsvSchema& schema);

/// Writes a dataset in the layout ingest_csv reads, ratings on the
/// dataset's original scale, plus pi/xi columns when any record has them.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& dataset);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kGroupShare;
  std::vector<double> values;
};

struct ExperimentConfig {
  std::optional<std::string> csv_path;
  CsvSchema csv;
  std::optional<SynthConfig> synthetic;
  std::string axis;
  std::vector<GroupRule> buckets;   // empty: one group per category
  std::vector<Method> methods = {Method::kPpi, Method::kPdi};
  std::string variant = "zero_shot";
  SamplingConfig sampling;
  double alpha = 0.1;
  int bootstrap = 1000;
  int trials = 20;
  std::uint64_t seed = 0;
  std::string output_dir = "pdi_run";
  std::optional<SweepSpec> sweep;
  std::vector<std::string> count_axes;  // extra axes for the labeled-count table
  bool write_traces = true;
  int threads = 1;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// In-memory results of a run, enough to emit every report format.
struct RunArtifacts {
  nlohmann::json config;
  std::uint64_t master_seed = 0;
  std::vector<std::string> groups;
  std::vector<double> truth;
  std::vector<MethodMetrics> metrics;
  std::vector<std::string> warnings;
};

struct RunSummary {
  RunArtifacts artifacts;
  std::filesystem::path directory;
  int exit_code = kExitOk;
};

/// Runs every method for T trials (and every sweep point, if configured)
/// and writes estimates, metrics, traces, counts, truth and reports into
/// the output directory. Same config and seed give byte-identical files.
RunSummary run_experiment(const ExperimentConfig& config);

std::string metrics_to_csv(const RunArtifacts& artifacts);
/// Parses the output of metrics_to_csv.
RunArtifacts metrics_from_csv(const std::string& text);

nlohmann::json report_json(const RunArtifacts& artifacts);
std::string report_csv(const RunArtifacts& artifacts);

/// Writes report.json or report.csv into `directory`; format is "json" or
/// "csv" (ConfigError otherwise). Returns the written path.
std::filesystem::path emit_report(const RunArtifacts& artifacts, const std::string& format,
                                  const std::filesystem::path& directory);

}  // namespace pdi
