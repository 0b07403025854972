// File ingestion (return series, network-snapshot manifests) and result
// emission. CSV is the interchange format for matrices and long-form tables,
// JSON for metadata and structured results; all floats are written with 17
// significant digits so load/store round trips are lossless.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/firms.hpp"
#include "stabnet/inference.hpp"
#include "stabnet/negotiation.hpp"
#include "stabnet/regulator.hpp"
#include "stabnet/stability.hpp"
#include "stabnet/version.hpp"

namespace stabnet {

struct ReturnsTable {
  std::vector<std::string> labels;  // entity names, one per row of data
  MatrixXd data;                    // n x T per-period returns
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline double parse_cell(const std::string& cell, long line_no, std::size_t col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto result = std::from_chars(first, last, value);
  if (result.ec != std::errc() || result.ptr != last || cell.empty()) {
    throw ParseError("non-numeric cell '" + cell + "' at column " + std::to_string(col + 1),
                     line_no);
  }
  return value;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) lines.push_back(line);
  }
  return lines;
}

// 17-significant-digit decimal rendering.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Creates parent directories as needed; I/O failures carry the path.
inline void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// Returns CSV: header row of entity labels; each following row is one period.
inline ReturnsTable load_returns(const std::string& path) {
  const auto lines = detail::read_lines(path);
  if (lines.size() < 2) throw ParseError("returns file needs a header and at least one period", 1);
  ReturnsTable table;
  table.labels = detail::split_csv_line(lines[0]);
  const std::size_t n = table.labels.size();
  if (n < 2) throw ParseError("returns file needs at least 2 entities", 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (table.labels[i].empty()) throw ParseError("empty label at column " + std::to_string(i + 1), 1);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (table.labels[i] == table.labels[j]) {
        throw ParseError("duplicate label '" + table.labels[i] + "' at columns " +
                             std::to_string(i + 1) + " and " + std::to_string(j + 1),
                         1);
      }
    }
  }
  const std::size_t periods = lines.size() - 1;
  table.data.resize(static_cast<int>(n), static_cast<int>(periods));
  for (std::size_t r = 0; r < periods; ++r) {
    const auto cells = detail::split_csv_line(lines[r + 1]);
    const long line_no = static_cast<long>(r + 2);
    if (cells.size() != n) {
      throw ParseError("ragged row: expected " + std::to_string(n) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < n; ++c) {
      table.data(static_cast<int>(c), static_cast<int>(r)) = detail::parse_cell(cells[c], line_no, c);
    }
  }
  return table;
}

// Sample covariance of the table after centering each entity's series.
inline MatrixXd returns_covariance(const ReturnsTable& table) {
  MatrixXd centered = table.data;
  for (int i = 0; i < centered.rows(); ++i) {
    centered.row(i).array() -= centered.row(i).mean();
  }
  return sample_covariance(centered);
}

namespace detail {

// Snapshot CSV: header row of n entity ids, then the n x n matrix row-major.
inline std::pair<std::vector<std::string>, MatrixXd> load_snapshot_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError("empty snapshot file: " + path, 1);
  const auto ids = split_csv_line(lines[0]);
  const std::size_t n = ids.size();
  if (lines.size() != n + 1) {
    throw ParseError("snapshot " + path + ": expected " + std::to_string(n) + " data rows, found " +
                         std::to_string(lines.size() - 1),
                     static_cast<long>(lines.size()));
  }
  MatrixXd a(static_cast<int>(n), static_cast<int>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split_csv_line(lines[r + 1]);
    const long line_no = static_cast<long>(r + 2);
    if (cells.size() != n) {
      throw ParseError("snapshot " + path + ": ragged row", line_no);
    }
    for (std::size_t c = 0; c < n; ++c) {
      a(static_cast<int>(r), static_cast<int>(c)) = parse_cell(cells[c], line_no, c);
    }
  }
  return {ids, a};
}

}  // namespace detail

// Manifest JSON: {"snapshots": [paths...], "mask": "full" | "no_self_loops"
// | [[partners of 0], [partners of 1], ...]}. Snapshot paths resolve
// relative to the manifest. Snapshots that are exactly symmetric are taken
// as undirected weights; otherwise entries are read as directed flows and
// opposite orientations are summed (self-flows counted once). Entries
// prohibited by the mask are zeroed.
inline NetworkSequence load_snapshots(const std::string& manifest_path) {
  nlohmann::json manifest;
  {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest JSON: ") + e.what(), 0);
    }
  }
  if (!manifest.contains("snapshots") || !manifest["snapshots"].is_array() ||
      manifest["snapshots"].empty()) {
    throw ParseError("manifest must list at least one snapshot", 0);
  }
  const auto base = std::filesystem::path(manifest_path).parent_path();

  NetworkSequence seq;
  std::vector<std::string> first_ids;
  for (const auto& entry : manifest["snapshots"]) {
    if (!entry.is_string()) throw ParseError("manifest snapshot entries must be paths", 0);
    const auto path = (base / entry.get<std::string>()).string();
    auto [ids, a] = detail::load_snapshot_csv(path);
    if (first_ids.empty()) {
      first_ids = ids;
    } else if (ids != first_ids) {
      throw ParseError("snapshot " + path + ": entity ids differ from earlier snapshots", 1);
    }
    MatrixXd w;
    if (a == a.transpose()) {
      w = a;
    } else {
      w = a + a.transpose();
      w.diagonal() = a.diagonal();
    }
    seq.snapshots.push_back(Network::from_dense(w));
  }

  const int n = seq.n();
  if (!manifest.contains("mask") || manifest["mask"].is_null() ||
      (manifest["mask"].is_string() && manifest["mask"].get<std::string>() == "full")) {
    seq.mask = full_allowed(n);
  } else if (manifest["mask"].is_string() &&
             manifest["mask"].get<std::string>() == "no_self_loops") {
    seq.mask.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j != i) seq.mask[static_cast<std::size_t>(i)].push_back(j);
      }
    }
  } else if (manifest["mask"].is_array()) {
    if (static_cast<int>(manifest["mask"].size()) != n) {
      throw ParseError("manifest mask must list partners for each of the " + std::to_string(n) +
                           " agents",
                       0);
    }
    seq.mask.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (const auto& v : manifest["mask"][static_cast<std::size_t>(i)]) {
        if (!v.is_number_integer()) throw ParseError("manifest mask entries must be integers", 0);
        seq.mask[static_cast<std::size_t>(i)].push_back(v.get<int>());
      }
      std::sort(seq.mask[static_cast<std::size_t>(i)].begin(),
                seq.mask[static_cast<std::size_t>(i)].end());
    }
  } else {
    throw ParseError("manifest mask must be \"full\", \"no_self_loops\", or an adjacency list", 0);
  }
  validate_sequence(seq);  // rejects asymmetric masks with index diagnostics
  for (auto& w : seq.snapshots) {
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        if (!seq.entry_allowed(i, j)) w.set(i, j, 0.0);
      }
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Setting files.

namespace detail {

inline MatrixXd json_to_matrix(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ParseError(what + " must be a non-empty array of rows", 0);
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (!j[static_cast<std::size_t>(r)].is_array() ||
        static_cast<int>(j[static_cast<std::size_t>(r)].size()) != cols) {
      throw ParseError(what + " row " + std::to_string(r) + " has inconsistent length", 0);
    }
    for (int c = 0; c < cols; ++c) {
      const auto& cell = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (!cell.is_number()) throw ParseError(what + " has a non-numeric cell", 0);
      m(r, c) = cell.get<double>();
    }
  }
  return m;
}

inline nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

// Setting JSON schema: {"n": int, "M": [[...]], "gamma": [...],
// "sigma": [[...]] or "sigmas": [[[...]], ...],
// "allowed": "full" | [[partners of 0], ...]} with 0-based agent indices.
// Structural parse only; operations run their own validation.
inline NetworkSetting load_setting(const std::string& path) {
  nlohmann::json j;
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open setting file: " + path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("setting JSON: ") + e.what(), 0);
    }
  }
  NetworkSetting s;
  if (!j.contains("n") || !j["n"].is_number_integer()) {
    throw ParseError("setting file needs an integer \"n\"", 0);
  }
  s.n = j["n"].get<int>();
  if (!j.contains("M")) throw ParseError("setting file needs \"M\"", 0);
  s.M = detail::json_to_matrix(j["M"], "M");
  if (!j.contains("gamma") || !j["gamma"].is_array()) {
    throw ParseError("setting file needs a \"gamma\" array", 0);
  }
  s.gamma.resize(static_cast<int>(j["gamma"].size()));
  for (int i = 0; i < s.gamma.size(); ++i) {
    const auto& cell = j["gamma"][static_cast<std::size_t>(i)];
    if (!cell.is_number()) throw ParseError("gamma has a non-numeric cell", 0);
    s.gamma(i) = cell.get<double>();
  }
  if (j.contains("sigma")) {
    s.sigmas = {detail::json_to_matrix(j["sigma"], "sigma")};
  } else if (j.contains("sigmas") && j["sigmas"].is_array()) {
    for (std::size_t k = 0; k < j["sigmas"].size(); ++k) {
      s.sigmas.push_back(detail::json_to_matrix(j["sigmas"][k], "sigmas[" + std::to_string(k) + "]"));
    }
  } else {
    throw ParseError("setting file needs \"sigma\" or \"sigmas\"", 0);
  }
  if (!j.contains("allowed") || (j["allowed"].is_string() && j["allowed"] == "full")) {
    s.allowed = full_allowed(s.n);
  } else if (j["allowed"].is_array()) {
    for (const auto& row : j["allowed"]) {
      std::vector<int> partners;
      for (const auto& v : row) {
        if (!v.is_number_integer()) throw ParseError("allowed entries must be integers", 0);
        partners.push_back(v.get<int>());
      }
      std::sort(partners.begin(), partners.end());
      s.allowed.push_back(std::move(partners));
    }
  } else {
    throw ParseError("allowed must be \"full\" or an adjacency list", 0);
  }
  return s;
}

inline nlohmann::json setting_to_json(const NetworkSetting& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["M"] = detail::matrix_to_json(s.M);
  std::vector<double> gamma(s.gamma.data(), s.gamma.data() + s.gamma.size());
  j["gamma"] = gamma;
  if (s.shared_sigma()) {
    j["sigma"] = detail::matrix_to_json(s.sigmas[0]);
  } else {
    nlohmann::json sigmas = nlohmann::json::array();
    for (const auto& sig : s.sigmas) sigmas.push_back(detail::matrix_to_json(sig));
    j["sigmas"] = sigmas;
  }
  bool full = true;
  for (int i = 0; i < s.n && full; ++i) {
    full = static_cast<int>(s.allowed[static_cast<std::size_t>(i)].size()) == s.n;
  }
  if (full) {
    j["allowed"] = "full";
  } else {
    j["allowed"] = s.allowed;
  }
  return j;
}

inline void save_setting(const NetworkSetting& s, const std::string& path) {
  write_text_file(path, setting_to_json(s).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Result serialization.

inline std::vector<double> matrix_values(const MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows() * m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

inline nlohmann::json to_json(const NegotiationTrace& trace) {
  nlohmann::json j;
  j["rounds"] = static_cast<int>(trace.residuals.size());
  j["eta"] = trace.eta;
  j["converged"] = trace.converged;
  j["residuals"] = trace.residuals;
  if (!trace.prices.empty()) j["final_prices"] = matrix_values(trace.prices.back().dense());
  if (trace.final) {
    j["W"] = matrix_values(trace.final->W.dense());
    j["residual"] = trace.final->residual;
  }
  return j;
}

inline nlohmann::json to_json(const RateCertificate& cert) {
  return nlohmann::json{{"eta_star", cert.eta_star},
                        {"lambda_min", cert.lambda_min},
                        {"lambda_max", cert.lambda_max}};
}

inline nlohmann::json to_json(const SigmaEstimate& est) {
  nlohmann::json j;
  j["Sigma"] = matrix_values(est.Sigma);
  j["n"] = static_cast<int>(est.Sigma.rows());
  j["objective"] = est.objective;
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  j["degenerate"] = est.degenerate;
  j["null_directions"] = est.null_directions;
  return j;
}

inline nlohmann::json to_json(const FrictionOutcome& outcome) {
  nlohmann::json j;
  if (outcome.status == FrictionStatus::Stable) {
    j["status"] = "Stable";
    j["W"] = matrix_values(outcome.W->dense());
  } else {
    j["status"] = "NoEquilibrium";
    j["witness"] = {outcome.witness_i, outcome.witness_j};
    j["H_value"] = outcome.witness_h;
  }
  return j;
}

inline nlohmann::json to_json(const PerturbResult& result) {
  return nlohmann::json{{"W", matrix_values(result.W.dense())},
                        {"W_scaled", matrix_values(result.W_scaled.dense())},
                        {"max_rel_dev", result.max_rel_dev}};
}

inline nlohmann::json to_json(const SensitivityTensor& tensor) {
  return nlohmann::json{{"k", tensor.k},
                        {"l", tensor.l},
                        {"grad", matrix_values(tensor.grad)},
                        {"eigenvalues", std::vector<double>(
                                            tensor.lambdas.data(),
                                            tensor.lambdas.data() + tensor.lambdas.size())}};
}

inline nlohmann::json to_json(const PermutationReport& report) {
  return nlohmann::json{{"max_abs_z", report.max_abs_z},
                        {"statistics", report.statistics},
                        {"draws", report.draws}};
}

// Long-form CSV: one row per cell, ready for heatmap plotting.
inline std::string to_csv(const std::vector<SourceRateCell>& table) {
  std::string out = "alpha,eps,rate,ci_halfwidth,trials\n";
  for (const auto& cell : table) {
    out += detail::format_double(cell.alpha) + "," + detail::format_double(cell.eps) + "," +
           detail::format_double(cell.rate) + "," + detail::format_double(cell.ci_halfwidth) +
           "," + std::to_string(cell.trials) + "\n";
  }
  return out;
}

inline std::string to_csv(const std::vector<OutlierRatePoint>& curve) {
  std::string out = "sigma,deviation_sds,rate,ci_halfwidth,n\n";
  for (const auto& point : curve) {
    out += detail::format_double(point.sigma) + "," + detail::format_double(point.deviation_sds) +
           "," + detail::format_double(point.rate) + "," +
           detail::format_double(point.ci_halfwidth) + "," + std::to_string(point.n) + "\n";
  }
  return out;
}

// Matrix CSV with a header of column ids (snapshot schema).
inline std::string to_csv(const MatrixXd& m, const std::vector<std::string>& ids) {
  if (static_cast<int>(ids.size()) != m.cols()) throw InputError("to_csv: header size mismatch");
  std::string out;
  for (std::size_t c = 0; c < ids.size(); ++c) {
    if (c) out += ",";
    out += ids[c];
  }
  out += "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) out += ",";
      out += detail::format_double(m(r, c));
    }
    out += "\n";
  }
  return out;
}

// Wraps a result payload with the library version and the resolved
// configuration that produced it, then writes deterministic 2-space JSON.
inline void write_result_json(const std::string& path, const nlohmann::json& config,
                              const nlohmann::json& payload) {
  nlohmann::json doc;
  doc["version"] = kVersionString;
  doc["config"] = config;
  doc["result"] = payload;
  write_text_file(path, doc.dump(2) + "\n");
}

// CSV payloads keep the table clean for plot tooling; version and config go
// to a `<path>.meta.json` sidecar.
inline void write_result_csv(const std::string& path, const nlohmann::json& config,
                             const std::string& csv) {
  write_text_file(path, csv);
  nlohmann::json meta;
  meta["version"] = kVersionString;
  meta["config"] = config;
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

template <typename Result>
void write_results(const Result& result, const std::string& path, const std::string& format,
                   const nlohmann::json& config = nlohmann::json::object()) {
  if (format == "json") {
    write_result_json(path, config, to_json(result));
  } else {
    throw InputError("write_results: unsupported format '" + format + "'");
  }
}

inline void write_results(const std::vector<SourceRateCell>& table, const std::string& path,
                          const std::string& format,
                          const nlohmann::json& config = nlohmann::json::object()) {
  if (format == "csv") {
    write_result_csv(path, config, to_csv(table));
  } else {
    throw InputError("write_results: unsupported format '" + format + "' for rate tables");
  }
}

inline void write_results(const std::vector<OutlierRatePoint>& curve, const std::string& path,
                          const std::string& format,
                          const nlohmann::json& config = nlohmann::json::object()) {
  if (format == "csv") {
    write_result_csv(path, config, to_csv(curve));
  } else {
    throw InputError("write_results: unsupported format '" + format + "' for rate curves");
  }
}

}  // namespace stabnet
