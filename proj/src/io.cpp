#include "sgmcmc/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "detail.hpp"

namespace sgmcmc {

using detail::overloaded;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s.empty()) throw std::runtime_error("empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quoted CSV field");
  out.push_back(std::move(cur));
  return out;
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | std::ios::binary | mode);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_table(const std::string& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  t.header = split_csv_line(line);
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != t.header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                               " fields");
    t.rows.push_back(std::move(f));
  }
  return t;
}

void check_time_column(const CsvTable& t, const std::string& path) {
  if (t.header.empty() || t.header[0] != "t") throw std::runtime_error(path + ": first column must be t");
  for (size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r][0] != std::to_string(r))
      throw std::runtime_error(path + ": t must run 0, 1, 2, ... (row " + std::to_string(r) + ")");
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <class T, class F>
json list_json(const std::vector<T>& xs, F f) {
  json out = json::array();
  for (const auto& x : xs) out.push_back(f(x));
  return out;
}

double json_number(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

Matrix json_matrix(const json& j) {
  if (!j.is_array()) throw std::runtime_error("expected a nested array");
  const Index r = static_cast<Index>(j.size());
  const Index c = r > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    if (!j[i].is_array() || static_cast<Index>(j[i].size()) != c) throw std::runtime_error("ragged matrix");
    for (Index k = 0; k < c; ++k) m(i, k) = json_number(j[i][k]);
  }
  return m;
}

Vector json_vector(const json& j) {
  if (!j.is_array()) throw std::runtime_error("expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = json_number(j[i]);
  return v;
}

std::vector<Matrix> json_matrices(const json& j) {
  std::vector<Matrix> out;
  for (const auto& x : j) out.push_back(json_matrix(x));
  return out;
}

const json& field(const json& j, const char* name) {
  if (!j.contains(name)) throw std::runtime_error(std::string("parameter JSON is missing '") + name + "'");
  return j.at(name);
}

}  // namespace

void write_observations_csv(const std::string& path, const Matrix& obs) {
  auto out = open_out(path);
  out << 't';
  for (Index j = 0; j < obs.cols(); ++j) out << ",y" << j;
  out << '\n';
  for (Index t = 0; t < obs.rows(); ++t) {
    out << t;
    for (Index j = 0; j < obs.cols(); ++j) out << ',' << format_double(obs(t, j));
    out << '\n';
  }
}

Matrix read_observations_csv(const std::string& path) {
  const CsvTable t = read_table(path);
  check_time_column(t, path);
  for (size_t j = 1; j < t.header.size(); ++j)
    if (t.header[j] != "y" + std::to_string(j - 1)) throw std::runtime_error(path + ": unexpected column " + t.header[j]);
  if (t.header.size() < 2) throw std::runtime_error(path + ": no observation columns");
  Matrix obs(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size() - 1));
  for (Index r = 0; r < obs.rows(); ++r)
    for (Index j = 0; j < obs.cols(); ++j) obs(r, j) = parse_double(t.rows[static_cast<size_t>(r)][static_cast<size_t>(j + 1)]);
  return obs;
}

void write_latents_csv(const std::string& path, const LatentSequence& latents) {
  const Index T = latents.z.empty() ? latents.x.rows() : static_cast<Index>(latents.z.size());
  if (!latents.z.empty() && latents.x.size() > 0 && latents.x.rows() != T)
    throw std::invalid_argument("discrete and continuous latents differ in length");
  auto out = open_out(path);
  out << 't';
  if (!latents.z.empty()) out << ",z";
  for (Index j = 0; j < latents.x.cols(); ++j) out << ",x" << j;
  out << '\n';
  for (Index t = 0; t < T; ++t) {
    out << t;
    if (!latents.z.empty()) out << ',' << latents.z[static_cast<size_t>(t)];
    for (Index j = 0; j < latents.x.cols(); ++j) out << ',' << format_double(latents.x(t, j));
    out << '\n';
  }
}

LatentSequence read_latents_csv(const std::string& path) {
  const CsvTable t = read_table(path);
  check_time_column(t, path);
  const bool has_z = t.header.size() > 1 && t.header[1] == "z";
  const size_t x0 = has_z ? 2 : 1;
  for (size_t j = x0; j < t.header.size(); ++j)
    if (t.header[j] != "x" + std::to_string(j - x0)) throw std::runtime_error(path + ": unexpected column " + t.header[j]);
  LatentSequence out;
  const Index T = static_cast<Index>(t.rows.size()), n = static_cast<Index>(t.header.size() - x0);
  if (n > 0) out.x.resize(T, n);
  for (Index r = 0; r < T; ++r) {
    const auto& row = t.rows[static_cast<size_t>(r)];
    if (has_z) out.z.push_back(std::stoi(row[1]));
    for (Index j = 0; j < n; ++j) out.x(r, j) = parse_double(row[x0 + static_cast<size_t>(j)]);
  }
  return out;
}

json params_to_json(const ModelParams& params) {
  json j;
  j["family"] = std::string(to_string(family_of(params)));
  std::visit(overloaded{[&](const GaussianHMMParams& p) {
                          j["phi"] = matrix_json(p.phi);
                          j["mu"] = list_json(p.mu, vector_json);
                          j["psi_sigma"] = list_json(p.psi_sigma, matrix_json);
                        },
                        [&](const ARHMMParams& p) {
                          j["phi"] = matrix_json(p.phi);
                          j["A"] = list_json(p.A, matrix_json);
                          j["psi_q"] = list_json(p.psi_q, matrix_json);
                          j["lag"] = p.lag;
                        },
                        [&](const LGSSMParams& p) {
                          j["A"] = matrix_json(p.A);
                          j["psi_q"] = matrix_json(p.psi_q);
                          j["C"] = matrix_json(p.C);
                          j["psi_r"] = matrix_json(p.psi_r);
                        },
                        [&](const SLDSParams& p) {
                          j["phi"] = matrix_json(p.phi);
                          j["A"] = list_json(p.A, matrix_json);
                          j["psi_q"] = list_json(p.psi_q, matrix_json);
                          j["C"] = matrix_json(p.C);
                          j["psi_r"] = matrix_json(p.psi_r);
                        }},
             params);
  return j;
}

ModelParams params_from_json(const json& j) {
  const Family family = parse_family(field(j, "family").get<std::string>());
  ModelParams out;
  switch (family) {
    case Family::GaussianHMM: {
      GaussianHMMParams p;
      p.phi = json_matrix(field(j, "phi"));
      for (const auto& m : field(j, "mu")) p.mu.push_back(json_vector(m));
      p.psi_sigma = json_matrices(field(j, "psi_sigma"));
      out = p;
      break;
    }
    case Family::ARHMM: {
      ARHMMParams p;
      p.phi = json_matrix(field(j, "phi"));
      p.A = json_matrices(field(j, "A"));
      p.psi_q = json_matrices(field(j, "psi_q"));
      p.lag = j.value("lag", 1);
      out = p;
      break;
    }
    case Family::LGSSM: {
      LGSSMParams p;
      p.A = json_matrix(field(j, "A"));
      p.psi_q = json_matrix(field(j, "psi_q"));
      p.C = json_matrix(field(j, "C"));
      p.psi_r = json_matrix(field(j, "psi_r"));
      out = p;
      break;
    }
    case Family::SLDS: {
      SLDSParams p;
      p.phi = json_matrix(field(j, "phi"));
      p.A = json_matrices(field(j, "A"));
      p.psi_q = json_matrices(field(j, "psi_q"));
      p.C = json_matrix(field(j, "C"));
      p.psi_r = json_matrix(field(j, "psi_r"));
      out = p;
      break;
    }
  }
  validate(out);
  return out;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_params_json(const std::string& path, const ModelParams& params) { write_json(path, params_to_json(params)); }

ModelParams read_params_json(const std::string& path) { return params_from_json(read_json(path)); }

namespace {

// Visits every stored scalar in a fixed order: name, reference.
template <class P, class F>
void for_each_scalar(P& params, F&& f) {
  const auto mat = [&](const std::string& name, auto& m, bool lower) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < (lower ? i + 1 : m.cols()); ++j)
        f(name + "[" + std::to_string(i) + "," + std::to_string(j) + "]", m(i, j));
  };
  const auto per_state = [&](const std::string& name, auto& ms, bool lower) {
    for (size_t k = 0; k < ms.size(); ++k) mat(name + "[" + std::to_string(k) + "]", ms[k], lower);
  };
  std::visit(overloaded{[&](auto& p) {
               using T = std::decay_t<decltype(p)>;
               if constexpr (std::is_same_v<T, GaussianHMMParams>) {
                 mat("phi", p.phi, false);
                 for (size_t k = 0; k < p.mu.size(); ++k)
                   for (Index i = 0; i < p.mu[k].size(); ++i)
                     f("mu[" + std::to_string(k) + "][" + std::to_string(i) + "]", p.mu[k](i));
                 per_state("psi_sigma", p.psi_sigma, true);
               } else if constexpr (std::is_same_v<T, ARHMMParams>) {
                 mat("phi", p.phi, false);
                 per_state("A", p.A, false);
                 per_state("psi_q", p.psi_q, true);
               } else if constexpr (std::is_same_v<T, LGSSMParams>) {
                 mat("A", p.A, false);
                 mat("psi_q", p.psi_q, true);
                 mat("C", p.C, false);
                 mat("psi_r", p.psi_r, true);
               } else {
                 mat("phi", p.phi, false);
                 per_state("A", p.A, false);
                 per_state("psi_q", p.psi_q, true);
                 mat("C", p.C, false);
                 mat("psi_r", p.psi_r, true);
               }
             }},
             params);
}

}  // namespace

std::vector<std::pair<std::string, double>> flatten_params(const ModelParams& params) {
  std::vector<std::pair<std::string, double>> out;
  for_each_scalar(params, [&](const std::string& name, const double& v) { out.emplace_back(name, v); });
  return out;
}

ModelParams unflatten_params(const ModelParams& shape, const std::vector<double>& values) {
  ModelParams out = shape;
  size_t pos = 0;
  for_each_scalar(out, [&](const std::string&, double& v) {
    if (pos >= values.size()) throw std::invalid_argument("too few parameter values");
    v = values[pos++];
  });
  if (pos != values.size()) throw std::invalid_argument("too many parameter values");
  return out;
}

void write_trace_csv(const std::string& path, const Trace& trace) {
  auto out = open_out(path);
  out << "step,wall_seconds";
  if (!trace.samples.empty())
    for (const auto& [name, v] : flatten_params(trace.samples.front())) out << ',' << quote_csv(name);
  out << '\n';
  for (size_t s = 0; s < trace.samples.size(); ++s) {
    out << trace.steps[s] << ',' << format_double(trace.seconds[s]);
    for (const auto& [name, v] : flatten_params(trace.samples[s])) out << ',' << format_double(v);
    out << '\n';
  }
}

Trace read_trace_csv(const std::string& path, const ModelParams& shape) {
  const CsvTable t = read_table(path);
  const auto names = flatten_params(shape);
  if (t.header.size() < 2 || t.header[0] != "step" || t.header[1] != "wall_seconds")
    throw std::runtime_error(path + ": trace must start with step,wall_seconds");
  if (!t.rows.empty()) {
    if (t.header.size() != names.size() + 2) throw std::runtime_error(path + ": parameter columns do not match the model");
    for (size_t i = 0; i < names.size(); ++i)
      if (t.header[i + 2] != names[i].first)
        throw std::runtime_error(path + ": expected column " + names[i].first + ", found " + t.header[i + 2]);
  }
  Trace trace;
  std::vector<double> values(names.size());
  for (const auto& row : t.rows) {
    trace.steps.push_back(std::stoll(row[0]));
    trace.seconds.push_back(parse_double(row[1]));
    for (size_t i = 0; i < names.size(); ++i) values[i] = parse_double(row[i + 2]);
    trace.samples.push_back(unflatten_params(shape, values));
  }
  return trace;
}

json trace_sidecar(const Trace& trace, const json& config, bool identity_second_moment) {
  json j;
  j["config"] = config;
  j["n_samples"] = trace.samples.size();
  j["n_steps_completed"] = trace.diagnostics.size();
  j["final_params"] = trace.samples.empty() ? json() : params_to_json(trace.samples.back());
  j["identity_second_moment"] = identity_second_moment;
  j["step_halved"] = trace.step_halved;
  j["hit_wall_limit"] = trace.hit_wall_limit;
  j["error"] = trace.error;
  return j;
}

namespace {

void write_metric_rows(std::ofstream& out, const std::vector<MetricRow>& rows) {
  for (const auto& r : rows)
    out << quote_csv(r.metric) << ',' << quote_csv(r.block) << ',' << format_double(r.value) << ','
        << quote_csv(r.meta_json) << '\n';
}

constexpr const char* kMetricsHeader = "metric,block,value,meta_json";

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  auto out = open_out(path);
  out << kMetricsHeader << '\n';
  write_metric_rows(out, rows);
}

void append_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  bool fresh = true;
  {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    fresh = !in || in.tellg() == 0;
  }
  auto out = open_out(path, std::ios::app);
  if (fresh) out << kMetricsHeader << '\n';
  write_metric_rows(out, rows);
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  const CsvTable t = read_table(path);
  if (t.header != std::vector<std::string>{"metric", "block", "value", "meta_json"})
    throw std::runtime_error(path + ": unexpected metrics header");
  std::vector<MetricRow> out;
  for (const auto& row : t.rows) out.push_back({row[0], row[1], parse_double(row[2]), row[3]});
  return out;
}

}  // namespace sgmcmc
