#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "narnet/estimation.hpp"
#include "narnet/nar_model.hpp"
#include "narnet/panel.hpp"

namespace narnet {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse '" + s + "' as a number");
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size()) throw DataError(where + ": cannot parse '" + s + "' as a number");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Headerless dense numeric CSV.
inline Matrix read_matrix_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(detail::parse_double(c, path + ":" + std::to_string(lineno)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": empty matrix file");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << detail::format_double(m(i, j));
    os << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_matrix_csv(out, m);
}

/// Square weight matrix from CSV; the diagonal is forced to zero.
inline Matrix read_weights_csv(const std::string& path) {
  Matrix w = read_matrix_csv(path);
  if (w.rows() != w.cols()) throw DataError(path + ": weight matrix must be square");
  return zero_diagonal(w);
}

// ---------------------------------------------------------------------------
// Panel ingestion

enum class GapPolicy { error, forward_fill, drop_node };

inline GapPolicy gap_policy_from(const std::string& s) {
  if (s == "error") return GapPolicy::error;
  if (s == "forward_fill") return GapPolicy::forward_fill;
  if (s == "drop_node") return GapPolicy::drop_node;
  throw DataError("unknown gap policy '" + s + "' (error | forward_fill | drop_node)");
}

struct PanelSchema {
  std::string time_col = "t";
  std::string node_col = "node";
  std::string value_col = "value";
  std::vector<std::string> covariate_cols;
};

/// Dense panel; nodes and times keep their first-appearance order.
struct PanelDataset {
  std::vector<std::string> node_ids;
  std::vector<std::string> times;
  NarData data;
  bool log_transformed = false;
  std::vector<std::string> dropped_nodes;
};

inline PanelDataset ingest_panel(std::istream& in, const PanelSchema& schema, GapPolicy policy,
                                 bool log_transform = false, const std::string& source = "panel") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError(source + ": missing column '" + name + "'");
  };
  const std::size_t tc = column(schema.time_col), nc = column(schema.node_col), vc = column(schema.value_col);
  std::vector<std::size_t> cc;
  for (const auto& c : schema.covariate_cols) cc.push_back(column(c));
  const std::size_t p = cc.size();

  std::vector<std::string> times, nodes;
  std::map<std::string, int> time_idx, node_idx;
  // (time, node) -> [value, covariates...]
  std::map<std::pair<int, int>, std::vector<double>> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
    auto [ti, tnew] = time_idx.try_emplace(f[tc], static_cast<int>(times.size()));
    if (tnew) times.push_back(f[tc]);
    auto [ni, nnew] = node_idx.try_emplace(f[nc], static_cast<int>(nodes.size()));
    if (nnew) nodes.push_back(f[nc]);
    std::vector<double> vals{detail::parse_double(f[vc], where)};
    for (std::size_t k : cc) vals.push_back(detail::parse_double(f[k], where));
    if (log_transform) {
      if (!(vals[0] > 0.0)) throw DataError(where + ": log transform needs positive values");
      vals[0] = std::log(vals[0]);
    }
    if (!cells.emplace(std::pair{ti->second, ni->second}, std::move(vals)).second)
      throw DataError(where + ": duplicate cell (time " + f[tc] + ", node " + f[nc] + ")");
  }
  if (times.empty()) throw DataError(source + ": no data rows");

  const int t_len = static_cast<int>(times.size());
  const int n_all = static_cast<int>(nodes.size());
  std::vector<int> keep;
  PanelDataset out;
  out.log_transformed = log_transform;
  for (int i = 0; i < n_all; ++i) {
    bool complete = true;
    for (int t = 0; t < t_len && complete; ++t) complete = cells.count({t, i}) > 0;
    if (complete || policy != GapPolicy::drop_node)
      keep.push_back(i);
    else
      out.dropped_nodes.push_back(nodes[static_cast<std::size_t>(i)]);
  }
  if (keep.empty()) throw DataError(source + ": every node has gaps");
  const int n = static_cast<int>(keep.size());
  out.times = times;
  out.data.x = Matrix(t_len, n);
  out.data.y.assign(p, Matrix(t_len, n));
  for (int j = 0; j < n; ++j) {
    const int i = keep[static_cast<std::size_t>(j)];
    out.node_ids.push_back(nodes[static_cast<std::size_t>(i)]);
    const std::vector<double>* last = nullptr;
    for (int t = 0; t < t_len; ++t) {
      auto it = cells.find({t, i});
      const std::vector<double>* v = it != cells.end() ? &it->second : nullptr;
      if (!v) {
        if (policy == GapPolicy::forward_fill && last) {
          v = last;
        } else {
          throw DataError(source + ": missing cell (time " + times[static_cast<std::size_t>(t)] + ", node " +
                          nodes[static_cast<std::size_t>(i)] + ")" +
                          (policy == GapPolicy::forward_fill ? " with no earlier value to carry forward" : ""));
        }
      }
      out.data.x(t, j) = (*v)[0];
      for (std::size_t k = 0; k < p; ++k) out.data.y[k](t, j) = (*v)[k + 1];
      last = v;
    }
  }
  return out;
}

inline PanelDataset ingest_panel(const std::string& path, const PanelSchema& schema, GapPolicy policy,
                                 bool log_transform = false) {
  auto in = detail::open_in(path);
  return ingest_panel(in, schema, policy, log_transform, path);
}

/// Long format: t,node,value[,y1..yp], one row per (time, node).
inline void write_panel_csv(std::ostream& os, const NarData& data, const std::vector<std::string>& covariate_names = {}) {
  os << "t,node,value";
  for (int k = 0; k < data.p(); ++k)
    os << ',' << (k < static_cast<int>(covariate_names.size()) ? covariate_names[static_cast<std::size_t>(k)]
                                                               : "y" + std::to_string(k + 1));
  os << '\n';
  for (int t = 0; t < data.n_times(); ++t)
    for (int i = 0; i < data.n_nodes(); ++i) {
      os << t << ',' << i << ',' << detail::format_double(data.x(t, i));
      for (int k = 0; k < data.p(); ++k) os << ',' << detail::format_double(data.y[static_cast<std::size_t>(k)](t, i));
      os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Distance-based weights

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct GeoWeights {
  Matrix w;    // inverse distance within the cutoff, row-normalized
  Matrix phi;  // inverse distance over all pairs, row-normalized
  double cutoff_km = 500.0;
};

constexpr double kEarthRadiusKm = 6371.0088;

inline double haversine_km(const GeoPoint& p, const GeoPoint& q) {
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (q.lat - p.lat) * rad;
  const double dlon = (q.lon - p.lon) * rad;
  const double h = std::pow(std::sin(dlat / 2), 2) + std::cos(p.lat * rad) * std::cos(q.lat * rad) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Weights from a symmetric distance matrix (km).
inline GeoWeights weights_from_distances(const Matrix& d, double cutoff_km = 500.0,
                                         const std::vector<std::string>& names = {}) {
  detail::require(d.rows() == d.cols() && d.rows() >= 2, "geo weights: need at least two nodes");
  detail::require(cutoff_km > 0.0, "geo weights: cutoff must be positive");
  const Eigen::Index n = d.rows();
  auto name = [&](Eigen::Index i) {
    return i < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(i)] : std::to_string(i);
  };
  GeoWeights g;
  g.cutoff_km = cutoff_km;
  g.w = Matrix::Zero(n, n);
  g.phi = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (!(d(i, j) > 0.0)) throw DataError("geo weights: nodes " + name(i) + " and " + name(j) + " are at zero distance");
      g.phi(i, j) = 1.0 / d(i, j);
      if (d(i, j) <= cutoff_km) g.w(i, j) = 1.0 / d(i, j);
    }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = g.w.row(i).sum();
    if (!(sw > 0.0))
      throw DataError("geo weights: node " + name(i) + " has no neighbor within " + detail::format_double(cutoff_km) + " km");
    g.w.row(i) /= sw;
    g.phi.row(i) /= g.phi.row(i).sum();
  }
  return g;
}

inline GeoWeights build_geo_weights(const std::vector<GeoPoint>& coords, double cutoff_km = 500.0,
                                    const std::vector<std::string>& names = {}) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  detail::require(n >= 2, "geo weights: need at least two nodes");
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = haversine_km(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
  return weights_from_distances(d, cutoff_km, names);
}

/// Coordinates CSV with header node,lat,lon.
inline std::pair<std::vector<std::string>, std::vector<GeoPoint>> read_coords_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = detail::split_csv_line(line);
  auto col = [&](const char* name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError(path + ": missing column '" + std::string(name) + "'");
  };
  const std::size_t nc = col("node"), la = col("lat"), lo = col("lon");
  std::vector<std::string> names;
  std::vector<GeoPoint> pts;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (f.size() != header.size()) throw DataError(where + ": wrong field count");
    names.push_back(f[nc]);
    pts.push_back({detail::parse_double(f[la], where), detail::parse_double(f[lo], where)});
  }
  return {names, pts};
}

// ---------------------------------------------------------------------------
// Model spec JSON: {n, q1, q2, p, a: [[...]], b: [[...]], gamma: [[...]], w_path}
// a and b hold one row of N values per lag; gamma holds N rows of p values.

inline NarSpec spec_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  NarSpec s;
  try {
    s.n_nodes = j.at("n").get<int>();
    s.q1 = j.value("q1", 1);
    s.q2 = j.value("q2", 1);
    s.p = j.value("p", 0);
    detail::require(s.n_nodes > 0, "spec: n must be positive");
    auto vectors = [&](const char* key, int count) {
      std::vector<Vector> out;
      const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
      if (static_cast<int>(rows.size()) != count)
        throw DataError(std::string("spec: '") + key + "' must have " + std::to_string(count) + " rows");
      for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != s.n_nodes)
          throw DataError(std::string("spec: each '") + key + "' row must have n values");
        out.push_back(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
      }
      return out;
    };
    s.a = vectors("a", s.q1);
    s.b = vectors("b", s.q2);
    s.gamma = Matrix::Zero(s.n_nodes, s.p);
    if (s.p > 0) {
      const auto g = j.at("gamma").get<std::vector<std::vector<double>>>();
      if (static_cast<int>(g.size()) != s.n_nodes) throw DataError("spec: gamma must have n rows");
      for (int i = 0; i < s.n_nodes; ++i) {
        if (static_cast<int>(g[static_cast<std::size_t>(i)].size()) != s.p)
          throw DataError("spec: each gamma row must have p values");
        for (int k = 0; k < s.p; ++k) s.gamma(i, k) = g[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      }
    }
    if (j.contains("w_path")) {
      std::filesystem::path wp = j.at("w_path").get<std::string>();
      if (wp.is_relative() && !base_dir.empty()) wp = base_dir / wp;
      s.w = read_weights_csv(wp.string());
    } else if (j.contains("w_width")) {
      s.w = banded_weights(s.n_nodes, j.at("w_width").get<int>());
    } else {
      throw DataError("spec: needs w_path (or w_width for a banded matrix)");
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline NarSpec read_spec(const std::string& path) {
  auto in = detail::open_in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return spec_from_json(j, std::filesystem::path(path).parent_path());
}

inline Json spec_to_json(const NarSpec& s, const std::string& w_path) {
  auto rows = [](const std::vector<Vector>& v) {
    Json out = Json::array();
    for (const auto& r : v) out.push_back(std::vector<double>(r.data(), r.data() + r.size()));
    return out;
  };
  Json gamma = Json::array();
  for (int i = 0; i < s.n_nodes; ++i) {
    std::vector<double> r(static_cast<std::size_t>(s.p));
    for (int k = 0; k < s.p; ++k) r[static_cast<std::size_t>(k)] = s.gamma(i, k);
    gamma.push_back(r);
  }
  return Json{{"n", s.n_nodes}, {"q1", s.q1}, {"q2", s.q2}, {"p", s.p},
              {"a", rows(s.a)}, {"b", rows(s.b)}, {"gamma", gamma}, {"w_path", w_path}};
}

// ---------------------------------------------------------------------------
// Fit JSON

inline Json fit_to_json(const FitResult& fit, const Matrix& w, double level = 0.95) {
  const CoefLayout& layout = fit.layout();
  const int n = layout.n_nodes();
  std::vector<Interval> cis;
  if (fit.has_vcov()) cis = confidence_intervals(fit, level);
  const Vector se = fit.standard_errors();
  Json coefs = Json::array();
  for (int idx : fit.free_indices) {
    const auto info = layout.type_info(idx / n);
    Json c{{"node", idx % n}, {"lag", info.lag}, {"kind", to_string(info.kind)}, {"estimate", fit.beta_hat.values(idx)}};
    if (fit.has_vcov()) {
      c["se"] = se(idx);
      c["ci_lo"] = cis[static_cast<std::size_t>(idx)].lo;
      c["ci_hi"] = cis[static_cast<std::size_t>(idx)].hi;
    } else {
      c["se"] = nullptr;
      c["ci_lo"] = nullptr;
      c["ci_hi"] = nullptr;
    }
    coefs.push_back(std::move(c));
  }
  Json sigma;
  switch (fit.sigma_used.kind) {
    case SigmaInfo::Kind::sar: {
      const auto& s = *fit.sigma_used.sar;
      sigma = {{"sar", {{"rho", s.rho_hat}, {"sigma_u2", s.sigma_u2_hat}, {"loglik", s.loglik},
                        {"score", s.score}, {"at_boundary", s.at_boundary}}}};
      break;
    }
    case SigmaInfo::Kind::factor: {
      const auto& f = *fit.sigma_used.factor;
      sigma = {{"factor", {{"k", f.k}, {"sigma2", f.sigma2_hat}}}};
      break;
    }
    default: sigma = to_string(fit.sigma_used.kind);
  }
  const NarSpec fitted = unflatten(fit.beta_hat, w);
  Json diag{{"sufficient_condition", sufficient_condition(fitted)}, {"t_eff", fit.t_eff}};
  try {
    diag["radius"] = spectral_radius(build_companion(fitted));
  } catch (const NumericalError&) {
    diag["radius"] = nullptr;
  }
  Json out{{"estimator", to_string(fit.estimator)}, {"q1", layout.q1()}, {"q2", layout.q2()},
           {"coefficients", coefs}, {"sigma_kind", sigma}, {"diagnostics", diag}, {"level", level}};
  if (fit.sigma_used.sar) out["rho_hat"] = fit.sigma_used.sar->rho_hat;
  if (fit.penalties)
    out["penalty"] = {{"lambda1", fit.penalties->lambda1}, {"lambda2", fit.penalties->lambda2},
                      {"lambda3", fit.penalties->lambda3}};
  return out;
}

}  // namespace narnet
