#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sgmcmc/samplers.hpp"
#include "sgmcmc/simulate.hpp"

namespace sgmcmc {

/// Shortest round-trip text for a double ("%.17g").
std::string format_double(double v);
double parse_double(const std::string& s);

/// RFC 4180 field splitting and quoting.
std::vector<std::string> split_csv_line(const std::string& line);
std::string quote_csv(const std::string& field);

// Observations: header t,y0,...,y{m-1}; t runs 0, 1, 2, ...
void write_observations_csv(const std::string& path, const Matrix& obs);
Matrix read_observations_csv(const std::string& path);

// Latents: header t[,z][,x0,...,x{n-1}].
void write_latents_csv(const std::string& path, const LatentSequence& latents);
LatentSequence read_latents_csv(const std::string& path);

// Parameters: {"family": ..., block: nested arrays, ...}.
nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);
void write_params_json(const std::string& path, const ModelParams& params);
ModelParams read_params_json(const std::string& path);

/// Stable column names and values of the stored (constrained) parameters.
std::vector<std::pair<std::string, double>> flatten_params(const ModelParams& params);
ModelParams unflatten_params(const ModelParams& shape, const std::vector<double>& values);

// Trace CSV: step,wall_seconds,<flattened parameters>, one row per sample.
void write_trace_csv(const std::string& path, const Trace& trace);
/// `shape` supplies the family and dimensions; column names must match it.
Trace read_trace_csv(const std::string& path, const ModelParams& shape);

/// Sidecar with the run configuration, final parameters and status flags.
nlohmann::json trace_sidecar(const Trace& trace, const nlohmann::json& config, bool identity_second_moment);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

struct MetricRow {
  std::string metric;
  std::string block;
  double value = 0.0;
  std::string meta_json = "{}";
  bool operator==(const MetricRow&) const = default;
};

// Metrics CSV: metric,block,value,meta_json.
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
/// Appends, writing the header first when the file is new or empty.
void append_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

}  // namespace sgmcmc
