#include "pdi/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pdi/errors.hpp"

namespace pdi {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

std::vector<CsvRow> parse_csv_rows(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;
  bool any = false;  // current record has content
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (!(row.fields.size() == 1 && row.fields[0].empty())) rows.push_back(std::move(row));
    row = CsvRow{};
    any = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!any) {
      row.line = line;
      any = true;
    }
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_row();
        break;
      default:
        field += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted field starting on line " + std::to_string(row.line));
  if (any) end_row();
  return rows;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::optional<double> parse_number(const std::string& s) {
  std::string t = s;
  t.erase(0, t.find_first_not_of(" \t"));
  t.erase(t.find_last_not_of(" \t") + 1);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) throw DataError("'" + s + "' is not a number");
  return v;
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string scale_to_string(const RatingScale& s) {
  return s.binary ? "binary" : std::to_string(s.min) + "-" + std::to_string(s.max);
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  for (auto& r : parse_csv_rows(text)) out.push_back(std::move(r.fields));
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

IngestResult ingest_csv_text(const std::string& text, const CsvSchema& schema) {
  auto rows = parse_csv_rows(text);
  if (rows.empty()) throw SchemaError("CSV has no header row");
  const auto& header = rows.front().fields;
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("missing required column '" + name + "'");
    return it->second;
  };
  const std::size_t id_col = require(schema.id_column);
  const std::size_t label_col = require(schema.label_column);
  std::vector<std::pair<std::string, std::size_t>> llm_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& h = header[j];
    if (h.size() > schema.llm_prefix.size() && h.compare(0, schema.llm_prefix.size(), schema.llm_prefix) == 0)
      llm_cols.emplace_back(h.substr(schema.llm_prefix.size()), j);
  }
  if (llm_cols.empty()) throw SchemaError("no LLM label columns (expected prefix '" + schema.llm_prefix + "')");
  std::vector<std::pair<std::string, std::size_t>> demo_cols;
  for (const auto& d : schema.demographics) demo_cols.emplace_back(d, require(d));
  const auto opt = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    return it == col.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  };
  const auto text_col = opt(schema.text_column);
  const auto pi_col = opt(schema.pi_column);
  const auto xi_col = opt(schema.xi_column);

  IngestResult result;
  result.dataset.rating_scale = schema.scale;
  std::size_t data_rows = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++data_rows;
    try {
      if (row.fields.size() != header.size())
        throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(row.fields.size()));
      AnnotationRecord rec;
      rec.instance_id = row.fields[id_col];
      if (rec.instance_id.empty()) throw DataError("empty " + schema.id_column);
      if (auto v = parse_number(row.fields[label_col])) rec.human_label = normalize_rating(*v, schema.scale);
      for (const auto& [variant, j] : llm_cols)
        if (auto v = parse_number(row.fields[j])) rec.llm_labels[variant] = normalize_rating(*v, schema.scale);
      for (const auto& [axis, j] : demo_cols) {
        if (row.fields[j].empty()) throw DataError("missing demographic '" + axis + "'");
        rec.demographics.attributes[axis] = row.fields[j];
      }
      if (text_col && !row.fields[*text_col].empty()) rec.text = row.fields[*text_col];
      if (pi_col) {
        if (auto v = parse_number(row.fields[*pi_col])) {
          if (*v < 0.0 || *v > 1.0) throw DataError("pi outside [0, 1]");
          rec.pi = *v;
        }
      }
      if (xi_col) {
        if (auto v = parse_number(row.fields[*xi_col])) {
          if (*v != 0.0 && *v != 1.0) throw DataError("xi must be 0 or 1");
          rec.xi = static_cast<int>(*v);
        }
      }
      if (rec.labeled() && !rec.human_label) throw DataError("xi = 1 without a human rating");
      if (rec.xi && !rec.pi) throw DataError("xi given without pi");
      result.dataset.records.push_back(std::move(rec));
    } catch (const DataError& e) {
      result.rejects.push_back({row.line, e.what()});
    }
  }

  if (data_rows == 0) throw DataError("CSV has no data rows");
  if (static_cast<double>(result.rejects.size()) > schema.max_reject_fraction * static_cast<double>(data_rows)) {
    std::string msg = std::to_string(result.rejects.size()) + " of " + std::to_string(data_rows) +
                      " rows rejected; first: line " + std::to_string(result.rejects.front().row) + ": " +
                      result.rejects.front().reason;
    throw DataError(msg);
  }
  const auto report = validate_dataset(result.dataset);
  if (!report.accepted()) throw DataError("dataset failed validation:\n" + report.summary());
  return result;
}

IngestResult ingest_csv(const fs::path& path, const CsvSchema& schema) {
  return ingest_csv_text(read_file(path), schema);
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::set<std::string> variants;
  std::vector<std::string> axes;
  bool any_text = false, any_sampling = false;
  for (const auto& r : dataset.records) {
    for (const auto& [v, _] : r.llm_labels) variants.insert(v);
    any_text = any_text || r.text.has_value();
    any_sampling = any_sampling || r.pi.has_value();
  }
  if (!dataset.records.empty())
    for (const auto& [axis, _] : dataset.records.front().demographics.attributes) axes.push_back(axis);

  std::ostringstream os;
  os << "instance_id";
  if (any_text) os << ",text";
  os << ",human_rating";
  for (const auto& v : variants) os << ",llm_" << csv_escape(v);
  for (const auto& a : axes) os << ',' << csv_escape(a);
  if (any_sampling) os << ",pi,xi";
  os << '\n';

  const auto& scale = dataset.rating_scale;
  for (const auto& r : dataset.records) {
    os << csv_escape(r.instance_id);
    if (any_text) os << ',' << csv_escape(r.text.value_or(""));
    os << ',' << (r.human_label ? format_double(denormalize_rating(*r.human_label, scale)) : "");
    for (const auto& v : variants) {
      auto it = r.llm_labels.find(v);
      os << ',' << (it == r.llm_labels.end() ? "" : format_double(denormalize_rating(it->second, scale)));
    }
    for (const auto& a : axes) {
      const auto* c = r.demographics.find(a);
      os << ',' << (c ? csv_escape(*c) : "");
    }
    if (any_sampling) os << ',' << format_optional(r.pi) << ',' << (r.xi ? std::to_string(*r.xi) : "");
    os << '\n';
  }
  return os.str();
}

void write_dataset_csv(const Dataset& dataset, const fs::path& path) { write_file(path, dataset_to_csv(dataset)); }

// ---------------------------------------------------------------------------
// Configuration

namespace {

RatingScale parse_scale(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "binary") return RatingScale::Binary();
    const auto dash = s.find_first_of("-:");
    if (dash != std::string::npos) {
      try {
        return RatingScale::Likert(std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1)));
      } catch (const std::exception&) {
      }
    }
    throw ConfigError("rating scale '" + s + "' is neither 'binary' nor 'min-max'");
  }
  if (j.is_array() && j.size() == 2) return RatingScale::Likert(j[0].get<int>(), j[1].get<int>());
  throw ConfigError("rating scale must be 'binary', 'min-max' or [min, max]");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SynthConfig parse_synth(const json& j) {
  reject_unknown(j, {"N", "small_group_share", "base_rate_g1", "base_rate_g2", "err_g1", "err_g2", "seed"},
                 "dataset.synthetic");
  SynthConfig s;
  read(j, "N", s.N);
  read(j, "small_group_share", s.small_group_share);
  read(j, "base_rate_g1", s.base_rate_g1);
  read(j, "base_rate_g2", s.base_rate_g2);
  read(j, "err_g1", s.err_g1);
  read(j, "err_g2", s.err_g2);
  read(j, "seed", s.seed);
  return s;
}

json synth_to_json(const SynthConfig& s) {
  return {{"N", s.N},           {"small_group_share", s.small_group_share}, {"base_rate_g1", s.base_rate_g1},
          {"base_rate_g2", s.base_rate_g2}, {"err_g1", s.err_g1},           {"err_g2", s.err_g2},
          {"seed", s.seed}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (csv_path.has_value() == synthetic.has_value())
    throw ConfigError("dataset must name exactly one of 'csv' or 'synthetic'");
  if (synthetic) synthetic->validate();
  if (axis.empty()) throw ConfigError("partition axis is required");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (variant.empty()) throw ConfigError("llm variant is required");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (bootstrap < 1) throw ConfigError("bootstrap must be >= 1");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (output_dir.empty()) throw ConfigError("output directory is required");
  if (sampling.n_batches < 1) throw ConfigError("at least one batch is required");
  if (!(sampling.gamma >= 0.0 && sampling.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(sampling.n_human > 0.0)) throw ConfigError("budget must be positive");
  if (!(sampling.n_burnin >= 0.0) || sampling.n_burnin > sampling.n_human)
    throw ConfigError("burn-in must lie in [0, budget]");
  if (sweep && !synthetic) throw ConfigError("sweeps require a synthetic dataset");
  if (synthetic && axis != kSyntheticAxis)
    throw ConfigError(std::string("synthetic data is partitioned on axis '") + kSyntheticAxis + "'");
  if (csv_path) {
    const auto& d = csv.demographics;
    for (const auto& a : count_axes)
      if (std::find(d.begin(), d.end(), a) == d.end())
        throw ConfigError("count axis '" + a + "' is not a declared demographic column");
    if (std::find(d.begin(), d.end(), axis) == d.end())
      throw ConfigError("partition axis '" + axis + "' is not a declared demographic column");
  }
}

ExperimentConfig parse_experiment_config(const json& j) {
  try {
    reject_unknown(j, {"dataset", "axis", "buckets", "methods", "variant", "sampling", "alpha", "bootstrap", "trials",
                       "seed", "output", "sweep", "count_axes", "write_traces", "threads"},
                   "config");
    ExperimentConfig c;
    if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' section");
    const auto& d = j.at("dataset");
    reject_unknown(d, {"csv", "scale", "demographics", "columns", "max_reject_fraction", "synthetic"}, "dataset");
    if (d.contains("csv")) {
      c.csv_path = d.at("csv").get<std::string>();
      if (d.contains("scale")) c.csv.scale = parse_scale(d.at("scale"));
      read(d, "demographics", c.csv.demographics);
      read(d, "max_reject_fraction", c.csv.max_reject_fraction);
      if (d.contains("columns")) {
        const auto& cols = d.at("columns");
        reject_unknown(cols, {"id", "label", "llm_prefix", "text", "pi", "xi"}, "dataset.columns");
        read(cols, "id", c.csv.id_column);
        read(cols, "label", c.csv.label_column);
        read(cols, "llm_prefix", c.csv.llm_prefix);
        read(cols, "text", c.csv.text_column);
        read(cols, "pi", c.csv.pi_column);
        read(cols, "xi", c.csv.xi_column);
      }
    }
    if (d.contains("synthetic")) {
      c.synthetic = parse_synth(d.at("synthetic"));
      c.axis = kSyntheticAxis;
      c.variant = kSyntheticVariant;
    }
    read(j, "axis", c.axis);
    if (j.contains("buckets")) {
      const auto& b = j.at("buckets");
      if (b.is_array()) {
        for (const auto& g : b) c.buckets.push_back({g.at("name").get<std::string>(), g.at("categories")});
      } else {
        for (const auto& [name, cats] : b.items()) c.buckets.push_back({name, cats.get<std::vector<std::string>>()});
      }
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    read(j, "variant", c.variant);
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      reject_unknown(s, {"budget", "burnin", "batches", "gamma", "pi_floor", "predictor", "kappa", "rounds",
                         "learning_rate"},
                     "sampling");
      read(s, "budget", c.sampling.n_human);
      read(s, "burnin", c.sampling.n_burnin);
      read(s, "batches", c.sampling.n_batches);
      read(s, "gamma", c.sampling.gamma);
      read(s, "pi_floor", c.sampling.pi_floor);
      if (s.contains("predictor")) c.sampling.predictor.kind = parse_error_model_kind(s.at("predictor"));
      read(s, "kappa", c.sampling.predictor.kappa);
      read(s, "rounds", c.sampling.predictor.rounds);
      read(s, "learning_rate", c.sampling.predictor.learning_rate);
    }
    read(j, "alpha", c.alpha);
    read(j, "bootstrap", c.bootstrap);
    read(j, "trials", c.trials);
    read(j, "seed", c.seed);
    read(j, "output", c.output_dir);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      reject_unknown(s, {"axis", "values"}, "sweep");
      c.sweep = SweepSpec{parse_sweep_axis(s.at("axis").get<std::string>()), s.at("values").get<std::vector<double>>()};
    }
    read(j, "count_axes", c.count_axes);
    read(j, "write_traces", c.write_traces);
    read(j, "threads", c.threads);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return parse_experiment_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (c.csv_path) {
    j["dataset"] = {{"csv", *c.csv_path},
                    {"scale", scale_to_string(c.csv.scale)},
                    {"demographics", c.csv.demographics},
                    {"max_reject_fraction", c.csv.max_reject_fraction},
                    {"columns",
                     {{"id", c.csv.id_column},
                      {"label", c.csv.label_column},
                      {"llm_prefix", c.csv.llm_prefix},
                      {"text", c.csv.text_column},
                      {"pi", c.csv.pi_column},
                      {"xi", c.csv.xi_column}}}};
  } else if (c.synthetic) {
    j["dataset"] = {{"synthetic", synth_to_json(*c.synthetic)}};
  }
  j["axis"] = c.axis;
  json buckets = json::array();
  for (const auto& b : c.buckets) buckets.push_back({{"name", b.name}, {"categories", b.categories}});
  j["buckets"] = buckets;
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["variant"] = c.variant;
  j["sampling"] = {{"budget", c.sampling.n_human},
                   {"burnin", c.sampling.n_burnin},
                   {"batches", c.sampling.n_batches},
                   {"gamma", c.sampling.gamma},
                   {"pi_floor", c.sampling.pi_floor},
                   {"predictor", to_string(c.sampling.predictor.kind)},
                   {"kappa", c.sampling.predictor.kappa},
                   {"rounds", c.sampling.predictor.rounds},
                   {"learning_rate", c.sampling.predictor.learning_rate}};
  j["alpha"] = c.alpha;
  j["bootstrap"] = c.bootstrap;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["output"] = c.output_dir;
  if (c.sweep) j["sweep"] = {{"axis", to_string(c.sweep->axis)}, {"values", c.sweep->values}};
  j["count_axes"] = c.count_axes;
  j["write_traces"] = c.write_traces;
  // threads is deliberately left out: it never changes results.
  return j;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string artifact_preamble(const RunArtifacts& a) {
  std::string out = "# schema_version=" + std::to_string(kReportSchemaVersion) + "\n";
  out += "# master_seed=" + std::to_string(a.master_seed) + "\n";
  out += "# config=" + a.config.dump() + "\n";
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string metrics_to_csv(const RunArtifacts& a) {
  std::ostringstream os;
  os << artifact_preamble(a);
  os << "method,group,truth,trials,successes,coverage,delta_pp,delta_sd_pp,mean_count,ci_width_mean,warning\n";
  for (const auto& m : a.metrics) {
    for (std::size_t g = 0; g < m.groups.size(); ++g) {
      const auto& gm = m.groups[g];
      os << to_string(m.method) << ',' << csv_escape(gm.group) << ','
         << (g < a.truth.size() ? format_double(a.truth[g]) : "") << ',' << m.trials << ',' << gm.successes << ','
         << format_optional(gm.coverage) << ',' << format_optional(gm.delta_pp) << ','
         << format_optional(gm.delta_sd_pp) << ',' << format_optional(gm.mean_count) << ','
         << format_optional(gm.ci_width_mean) << ',' << csv_escape(gm.warning.value_or("")) << '\n';
    }
  }
  return os.str();
}

RunArtifacts metrics_from_csv(const std::string& text) {
  RunArtifacts a;
  std::string body;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# master_seed=", 0) == 0) {
      a.master_seed = std::stoull(line.substr(14));
    } else if (line.rfind("# config=", 0) == 0) {
      a.config = json::parse(line.substr(9));
    } else if (line.rfind('#', 0) != 0) {
      body += line;
      body += '\n';
    }
  }
  const auto rows = parse_csv(body);
  if (rows.empty()) throw DataError("metrics table has no header");
  const std::vector<std::string> expected = {"method",      "group",      "truth",    "trials",
                                             "successes",   "coverage",   "delta_pp", "delta_sd_pp",
                                             "mean_count",  "ci_width_mean", "warning"};
  if (rows.front() != expected) throw SchemaError("unexpected metrics table header");

  auto num = [](const std::string& s) { return parse_number(s); };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != expected.size()) throw DataError("metrics row " + std::to_string(r + 1) + " is malformed");
    const Method method = parse_method(f[0]);
    auto it = std::find_if(a.metrics.begin(), a.metrics.end(), [&](const MethodMetrics& m) { return m.method == method; });
    if (it == a.metrics.end()) {
      a.metrics.push_back({method, std::stoi(f[3]), {}, std::nullopt});
      it = a.metrics.end() - 1;
    }
    GroupMetrics gm;
    gm.group = f[1];
    gm.successes = std::stoul(f[4]);
    gm.coverage = num(f[5]);
    gm.delta_pp = num(f[6]);
    gm.delta_sd_pp = num(f[7]);
    gm.mean_count = num(f[8]);
    gm.ci_width_mean = num(f[9]);
    if (!f[10].empty()) gm.warning = f[10];
    if (std::find(a.groups.begin(), a.groups.end(), gm.group) == a.groups.end()) {
      a.groups.push_back(gm.group);
      a.truth.push_back(num(f[2]).value_or(std::nan("")));
    }
    it->groups.push_back(std::move(gm));
  }
  for (auto& m : a.metrics) {
    double sum = 0;
    std::size_t used = 0;
    for (const auto& g : m.groups)
      if (g.delta_pp) {
        sum += *g.delta_pp;
        ++used;
      }
    if (used > 0) m.avg_delta_pp = sum / static_cast<double>(used);
  }
  return a;
}

json report_json(const RunArtifacts& a) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["master_seed"] = a.master_seed;
  j["config"] = a.config;
  json truth = json::object();
  for (std::size_t g = 0; g < a.groups.size() && g < a.truth.size(); ++g) truth[a.groups[g]] = a.truth[g];
  j["truth"] = truth;
  json methods = json::object();
  json averages = json::object();
  for (const auto& m : a.metrics) {
    json groups = json::object();
    for (const auto& g : m.groups) {
      json entry = {{"coverage", optional_json(g.coverage)},
                    {"delta_pp", optional_json(g.delta_pp)},
                    {"mean_count", optional_json(g.mean_count)},
                    {"ci_width_mean", optional_json(g.ci_width_mean)}};
      if (g.warning) entry["warning"] = *g.warning;
      groups[g.group] = entry;
    }
    methods[to_string(m.method)] = groups;
    averages[to_string(m.method)] = optional_json(m.avg_delta_pp);
  }
  j["methods"] = methods;
  j["avg_delta_pp"] = averages;
  j["warnings"] = a.warnings;
  return j;
}

std::string report_csv(const RunArtifacts& a) {
  std::ostringstream os;
  os << artifact_preamble(a);
  os << "method,group,metric,value\n";
  for (const auto& m : a.metrics) {
    for (const auto& g : m.groups) {
      const std::pair<const char*, const std::optional<double>*> metrics[] = {{"coverage", &g.coverage},
                                                                              {"delta_pp", &g.delta_pp},
                                                                              {"mean_count", &g.mean_count},
                                                                              {"ci_width_mean", &g.ci_width_mean}};
      for (const auto& [name, value] : metrics)
        os << to_string(m.method) << ',' << csv_escape(g.group) << ',' << name << ',' << format_optional(*value)
           << '\n';
    }
    os << to_string(m.method) << ",Avg,delta_pp," << format_optional(m.avg_delta_pp) << '\n';
  }
  return os.str();
}

fs::path emit_report(const RunArtifacts& a, const std::string& format, const fs::path& directory) {
  if (format != "json" && format != "csv")
    throw ConfigError("unknown report format '" + format + "' (expected json or csv)");
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw ConfigError("cannot create '" + directory.string() + "': " + ec.message());
  fs::path path;
  if (format == "json") {
    path = directory / "report.json";
    write_file(path, report_json(a).dump(2) + "\n");
  } else if (format == "csv") {
    path = directory / "report.csv";
    write_file(path, report_csv(a));
  }
  return path;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

struct Loaded {
  Dataset dataset;
  std::vector<RowReject> rejects;
};

Loaded load_dataset(const ExperimentConfig& c) {
  if (c.synthetic) return {generate_synthetic(*c.synthetic), {}};
  auto r = ingest_csv(*c.csv_path, c.csv);
  return {std::move(r.dataset), std::move(r.rejects)};
}

std::string estimates_csv(const std::vector<TrialResult>& trials) {
  std::ostringstream os;
  os << "trial,method,group,theta_hat,ci_lower,ci_upper,lambda,n_labeled,n_total,status\n";
  for (const auto& t : trials) {
    if (!t.ok()) {
      os << t.trial << ',' << to_string(t.method) << ",,,,,,,," << csv_escape(*t.error) << '\n';
      continue;
    }
    for (const auto& e : t.estimates.groups) {
      os << t.trial << ',' << to_string(t.method) << ',' << csv_escape(e.group) << ',';
      if (e.ok())
        os << format_double(e.theta_hat) << ',' << format_double(e.ci.lower) << ',' << format_double(e.ci.upper) << ','
           << format_double(e.lambda) << ',' << e.n_labeled << ',' << e.n_total << ",ok\n";
      else
        os << ",,,," << e.n_labeled << ',' << e.n_total << ',' << csv_escape(*e.error) << '\n';
    }
  }
  return os.str();
}

std::string traces_csv(const std::vector<TrialResult>& trials) {
  std::ostringstream os;
  os << "trial,method,record,pi,xi,batch\n";
  for (const auto& t : trials) {
    if (!t.trace) continue;
    const auto& tr = *t.trace;
    for (std::size_t i = 0; i < tr.size(); ++i)
      os << t.trial << ',' << to_string(t.method) << ',' << i << ',' << format_double(tr.pi[i]) << ','
         << static_cast<int>(tr.xi[i]) << ',' << tr.batch[i] << '\n';
  }
  return os.str();
}

RunArtifacts evaluate(const Dataset& dataset, const GroupPartition& partition, const ExperimentConfig& c,
                      const std::vector<TrialResult>& trials, const json& snapshot) {
  RunArtifacts a;
  a.config = snapshot;
  a.master_seed = c.seed;
  for (const auto& g : partition.groups) a.groups.push_back(g.name);
  a.truth = compute_ground_truth(dataset, partition);
  a.metrics = build_metrics(trials, partition, a.truth);
  a.warnings = partition.warnings;
  return a;
}

bool all_methods_succeeded(const std::vector<MethodMetrics>& metrics, const std::vector<TrialResult>& trials) {
  for (const auto& m : metrics) {
    bool any = false;
    for (const auto& t : trials) any = any || (t.method == m.method && t.ok());
    if (!any) return false;
  }
  return true;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& c) {
  c.validate();
  const fs::path dir = c.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());

  const json snapshot = to_json(c);
  auto loaded = load_dataset(c);
  const Dataset& dataset = loaded.dataset;
  const auto partition = partition_groups(dataset, c.axis, c.buckets);

  TrialConfig tc;
  tc.sampling = c.sampling;
  tc.estimator = {c.variant, c.alpha, c.bootstrap};
  tc.sampling.validate(dataset.size());

  const auto trials = run_trials(dataset, partition, c.methods, tc, c.trials, c.seed, c.threads, c.write_traces);

  RunSummary summary;
  summary.directory = dir;
  summary.artifacts = evaluate(dataset, partition, c, trials, snapshot);
  for (const auto& r : loaded.rejects)
    summary.artifacts.warnings.push_back("rejected line " + std::to_string(r.row) + ": " + r.reason);

  const auto preamble = artifact_preamble(summary.artifacts);
  write_file(dir / "config.json", json({{"schema_version", kReportSchemaVersion}, {"master_seed", c.seed},
                                        {"config", snapshot}})
                                          .dump(2) +
                                      "\n");
  write_file(dir / "estimates.csv", preamble + estimates_csv(trials));
  write_file(dir / "metrics.csv", metrics_to_csv(summary.artifacts));
  if (c.write_traces) write_file(dir / "traces.csv", preamble + traces_csv(trials));

  {
    std::ostringstream os;
    os << preamble << "group,truth\n";
    for (std::size_t g = 0; g < partition.K(); ++g)
      os << csv_escape(partition.groups[g].name) << ',' << format_double(summary.artifacts.truth[g]) << '\n';
    write_file(dir / "truth.csv", os.str());
  }

  {
    std::vector<GroupPartition> axes{partition};
    for (const auto& a : c.count_axes)
      if (a != c.axis) axes.push_back(partition_groups(dataset, a));
    std::ostringstream os;
    os << preamble << "axis,group,method,mean_count\n";
    for (Method m : c.methods) {
      std::vector<TrialResult> mine;
      for (const auto& t : trials)
        if (t.method == m) mine.push_back(t);
      const auto table = sampling_count_table(mine, axes);
      for (std::size_t a = 0; a < axes.size(); ++a)
        for (std::size_t g = 0; g < axes[a].K(); ++g)
          os << csv_escape(axes[a].axis) << ',' << csv_escape(axes[a].groups[g].name) << ',' << to_string(m) << ','
             << format_double(table[a][g]) << '\n';
    }
    write_file(dir / "counts.csv", os.str());
  }

  if (c.sweep) {
    SweepBase base{*c.synthetic, c.sampling, c.trials};
    const auto grid = make_sweep_grid(c.sweep->axis, c.sweep->values, base);
    const fs::path sweep_dir = dir / "sweep";
    fs::create_directories(sweep_dir, ec);
    if (ec) throw ConfigError("cannot create '" + sweep_dir.string() + "'");
    std::ostringstream plot;
    plot << preamble << "axis_value,method,group,coverage,delta,ci_low,ci_high\n";
    for (const auto& point : grid) {
      const auto point_data = generate_synthetic(point.synth);
      const auto point_partition = partition_groups(point_data, kSyntheticAxis);
      TrialConfig ptc = tc;
      ptc.sampling = point.sampling;
      const auto point_trials =
          run_trials(point_data, point_partition, c.methods, ptc, point.trials, c.seed, c.threads, false);
      auto point_artifacts = evaluate(point_data, point_partition, c, point_trials, snapshot);
      point_artifacts.config["sweep_point"] = point.label;
      const fs::path point_dir = sweep_dir / point.label;
      fs::create_directories(point_dir, ec);
      write_file(point_dir / "metrics.csv", metrics_to_csv(point_artifacts));
      for (const auto& m : point_artifacts.metrics) {
        for (const auto& g : m.groups) {
          std::optional<double> lo, hi;
          if (g.delta_pp && g.delta_sd_pp && g.successes > 0) {
            const double half = 1.96 * *g.delta_sd_pp / std::sqrt(static_cast<double>(g.successes));
            lo = *g.delta_pp - half;
            hi = *g.delta_pp + half;
          }
          plot << format_double(point.value) << ',' << to_string(m.method) << ',' << csv_escape(g.group) << ','
               << format_optional(g.coverage) << ',' << format_optional(g.delta_pp) << ',' << format_optional(lo)
               << ',' << format_optional(hi) << '\n';
        }
      }
      if (!all_methods_succeeded(point_artifacts.metrics, point_trials)) summary.exit_code = kExitRuntime;
    }
    write_file(dir / ("sweep_" + to_string(c.sweep->axis) + ".csv"), plot.str());
  }

  emit_report(summary.artifacts, "json", dir);
  emit_report(summary.artifacts, "csv", dir);
  if (!all_methods_succeeded(summary.artifacts.metrics, trials)) summary.exit_code = kExitRuntime;
  return summary;
}

}  // namespace pdi
