#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "narnet/estimation.hpp"
#include "narnet/inference.hpp"
#include "narnet/parallel.hpp"
#include "narnet/simulation.hpp"

namespace narnet {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario description

/// Node pattern for one coefficient vector: a constant, contiguous blocks of
/// equal size (the last block absorbs the remainder) or a repeating cycle.
struct LevelPattern {
  enum class Kind { constant, blocks, cycle };
  Kind kind = Kind::constant;
  std::vector<double> levels{0.0};

  Vector expand(int n) const {
    Vector v(n);
    const int m = static_cast<int>(levels.size());
    for (int i = 0; i < n; ++i) {
      switch (kind) {
        case Kind::constant: v(i) = levels[0]; break;
        case Kind::blocks: v(i) = levels[static_cast<std::size_t>(std::min(m - 1, i * m / n))]; break;
        case Kind::cycle: v(i) = levels[static_cast<std::size_t>(i % m)]; break;
      }
    }
    return v;
  }
};

struct ErrorSpec {
  std::string type = "gaussian";  // gaussian | sar | factor | student_t
  double sigma2 = 1.0;            // gaussian variance, SAR sigma_u2, factor idiosyncratic variance
  double rho = 0.5;
  int phi_width = 5;
  int k = 3;
  double loading_lo = 0.0;
  double loading_hi = 1.0;
  double df = 4.0;
  std::string scale = "sar";  // student_t scale matrix: sar | identity
};

struct Scenario {
  int schema_version = 1;
  std::string id = "scenario";
  int n_nodes = 20;
  int q1 = 1;
  int q2 = 1;
  int p = 0;
  std::vector<LevelPattern> a;  // q1 patterns
  std::vector<LevelPattern> b;  // q2 patterns
  std::vector<double> gamma;    // p values shared by all nodes
  int w_width = 5;
  ErrorSpec errors;
  CovariateMode covariates = CovariateMode::gaussian;
  double covariate_df = 4.0;
  std::vector<int> t_grid{200};
  int replicates = 100;
  int burn_in = 200;
  std::vector<std::string> estimators{"ols"};
  std::string egls_cov;  // sar | factor; empty: from the error model
  double level = 0.95;
  std::uint64_t seed = 1;
  std::string ci_sigma = "plugin";  // plugin | nominal
  int bootstrap_draws = 500;
  int threads = 1;
};

namespace detail {

inline LevelPattern pattern_from_json(const Json& j) {
  LevelPattern p;
  if (j.is_number()) {
    p.levels = {j.get<double>()};
  } else if (j.is_array()) {
    p.kind = LevelPattern::Kind::blocks;
    p.levels = j.get<std::vector<double>>();
  } else if (j.is_object() && j.contains("cycle")) {
    p.kind = LevelPattern::Kind::cycle;
    p.levels = j.at("cycle").get<std::vector<double>>();
  } else {
    throw DataError("scenario: coefficient pattern must be a number, an array or {\"cycle\": [...]}");
  }
  if (p.levels.empty()) throw DataError("scenario: empty coefficient pattern");
  return p;
}

inline Json pattern_to_json(const LevelPattern& p) {
  switch (p.kind) {
    case LevelPattern::Kind::constant: return p.levels[0];
    case LevelPattern::Kind::blocks: return p.levels;
    case LevelPattern::Kind::cycle: return Json{{"cycle", p.levels}};
  }
  return nullptr;
}

inline const char* to_string(CovariateMode m) {
  switch (m) {
    case CovariateMode::gaussian: return "gaussian";
    case CovariateMode::student_t: return "student_t";
    case CovariateMode::zero: return "zero";
  }
  return "?";
}

inline CovariateMode covariate_mode_from(const std::string& s) {
  if (s == "gaussian") return CovariateMode::gaussian;
  if (s == "student_t") return CovariateMode::student_t;
  if (s == "zero") return CovariateMode::zero;
  throw DataError("scenario: unknown covariate mode '" + s + "'");
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline Scenario scenario_from_json(const Json& j) {
  Scenario s;
  try {
    detail::read_opt(j, "schema_version", s.schema_version);
    if (s.schema_version != 1) throw DataError("scenario: unsupported schema_version " + std::to_string(s.schema_version));
    detail::read_opt(j, "id", s.id);
    detail::read_opt(j, "n_nodes", s.n_nodes);
    detail::read_opt(j, "q1", s.q1);
    detail::read_opt(j, "q2", s.q2);
    detail::read_opt(j, "p", s.p);
    if (j.contains("a"))
      for (const auto& e : j.at("a")) s.a.push_back(detail::pattern_from_json(e));
    if (j.contains("b"))
      for (const auto& e : j.at("b")) s.b.push_back(detail::pattern_from_json(e));
    detail::read_opt(j, "gamma", s.gamma);
    detail::read_opt(j, "w_width", s.w_width);
    if (j.contains("errors")) {
      const Json& e = j.at("errors");
      detail::read_opt(e, "type", s.errors.type);
      detail::read_opt(e, "sigma2", s.errors.sigma2);
      detail::read_opt(e, "rho", s.errors.rho);
      detail::read_opt(e, "phi_width", s.errors.phi_width);
      detail::read_opt(e, "k", s.errors.k);
      detail::read_opt(e, "loading_lo", s.errors.loading_lo);
      detail::read_opt(e, "loading_hi", s.errors.loading_hi);
      detail::read_opt(e, "df", s.errors.df);
      detail::read_opt(e, "scale", s.errors.scale);
    }
    if (j.contains("covariates")) s.covariates = detail::covariate_mode_from(j.at("covariates").get<std::string>());
    detail::read_opt(j, "covariate_df", s.covariate_df);
    detail::read_opt(j, "t_grid", s.t_grid);
    detail::read_opt(j, "replicates", s.replicates);
    detail::read_opt(j, "burn_in", s.burn_in);
    detail::read_opt(j, "estimators", s.estimators);
    detail::read_opt(j, "egls_cov", s.egls_cov);
    detail::read_opt(j, "level", s.level);
    detail::read_opt(j, "seed", s.seed);
    detail::read_opt(j, "ci_sigma", s.ci_sigma);
    detail::read_opt(j, "bootstrap_draws", s.bootstrap_draws);
    detail::read_opt(j, "threads", s.threads);
  } catch (const Json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  return s;
}

inline Json scenario_to_json(const Scenario& s) {
  Json a = Json::array(), b = Json::array();
  for (const auto& p : s.a) a.push_back(detail::pattern_to_json(p));
  for (const auto& p : s.b) b.push_back(detail::pattern_to_json(p));
  const auto& e = s.errors;
  return Json{{"schema_version", s.schema_version},
              {"id", s.id},
              {"n_nodes", s.n_nodes},
              {"q1", s.q1},
              {"q2", s.q2},
              {"p", s.p},
              {"a", a},
              {"b", b},
              {"gamma", s.gamma},
              {"w_width", s.w_width},
              {"errors",
               {{"type", e.type},
                {"sigma2", e.sigma2},
                {"rho", e.rho},
                {"phi_width", e.phi_width},
                {"k", e.k},
                {"loading_lo", e.loading_lo},
                {"loading_hi", e.loading_hi},
                {"df", e.df},
                {"scale", e.scale}}},
              {"covariates", detail::to_string(s.covariates)},
              {"covariate_df", s.covariate_df},
              {"t_grid", s.t_grid},
              {"replicates", s.replicates},
              {"burn_in", s.burn_in},
              {"estimators", s.estimators},
              {"egls_cov", s.egls_cov},
              {"level", s.level},
              {"seed", s.seed},
              {"ci_sigma", s.ci_sigma},
              {"bootstrap_draws", s.bootstrap_draws},
              {"threads", s.threads}};
}

inline void validate(const Scenario& s) {
  detail::require(s.n_nodes >= 2, "scenario: n_nodes must be >= 2");
  detail::require(s.q1 >= 0 && s.q2 >= 0 && std::max(s.q1, s.q2) >= 1, "scenario: need max(q1, q2) >= 1");
  detail::require(static_cast<int>(s.a.size()) == s.q1, "scenario: need one 'a' pattern per self lag");
  detail::require(static_cast<int>(s.b.size()) == s.q2, "scenario: need one 'b' pattern per network lag");
  detail::require(static_cast<int>(s.gamma.size()) == s.p, "scenario: gamma must have p entries");
  detail::require(s.w_width >= 1, "scenario: w_width must be >= 1");
  detail::require(!s.t_grid.empty(), "scenario: empty t_grid");
  for (int t : s.t_grid) detail::require(t >= std::max(s.q1, s.q2) + 2, "scenario: T too small");
  detail::require(s.replicates >= 1, "scenario: replicates must be >= 1");
  detail::require(s.level > 0.0 && s.level < 1.0, "scenario: level must be in (0, 1)");
  detail::require(s.ci_sigma == "plugin" || s.ci_sigma == "nominal", "scenario: ci_sigma must be plugin or nominal");
  const auto& t = s.errors.type;
  detail::require(t == "gaussian" || t == "sar" || t == "factor" || t == "student_t",
                  "scenario: unknown error type '" + t + "'");
  for (const auto& e : s.estimators)
    detail::require(e == "ols" || e == "gls" || e == "egls" || e == "bootstrap_ols" || e == "bootstrap_egls",
                    "scenario: unknown estimator '" + e + "'");
  detail::require(s.egls_cov.empty() || s.egls_cov == "sar" || s.egls_cov == "factor",
                  "scenario: egls_cov must be sar or factor");
}

inline NarSpec scenario_spec(const Scenario& s) {
  const Matrix w = banded_weights(s.n_nodes, s.w_width);
  NarSpec spec = NarSpec::zeros(s.n_nodes, {s.q1, s.q2}, s.p, w);
  for (int l = 0; l < s.q1; ++l) spec.a[l] = s.a[l].expand(s.n_nodes);
  for (int l = 0; l < s.q2; ++l) spec.b[l] = s.b[l].expand(s.n_nodes);
  for (int k = 0; k < s.p; ++k) spec.gamma.col(k).setConstant(s.gamma[static_cast<std::size_t>(k)]);
  return spec;
}

inline Matrix scenario_phi(const Scenario& s) { return banded_weights(s.n_nodes, s.errors.phi_width); }

/// Error model of the scenario; factor loadings are drawn once per scenario.
inline ErrorModel scenario_error_model(const Scenario& s) {
  const auto& e = s.errors;
  const int n = s.n_nodes;
  if (e.type == "sar") return SarGaussian{e.rho, scenario_phi(s), e.sigma2};
  if (e.type == "factor") {
    CounterRng rng = CounterRng::stream(s.seed, {0xFAC7u});
    Matrix lambda(n, e.k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < e.k; ++j) lambda(i, j) = e.loading_lo + (e.loading_hi - e.loading_lo) * rng.uniform();
    return FactorGaussian{lambda, e.sigma2};
  }
  if (e.type == "student_t") {
    const Matrix scale = e.scale == "identity" ? Matrix(Matrix::Identity(n, n))
                                               : sar_covariance(e.rho, scenario_phi(s), e.sigma2);
    return StudentT{e.df, scale};
  }
  return GaussianIid{e.sigma2};
}

// ---------------------------------------------------------------------------
// Metrics

/// Coefficients sharing a kind, lag (a, b only) and true value.
struct CoefGroup {
  std::string name;
  double truth = 0.0;
  std::vector<int> indices;
};

inline std::vector<CoefGroup> coefficient_groups(const NarSpec& spec) {
  const CoefLayout layout = spec.layout();
  const CoefVector beta = flatten(spec);
  std::map<std::string, std::size_t> where;
  std::vector<CoefGroup> groups;
  for (int idx : layout.free_indices()) {
    const auto info = layout.type_info(idx / layout.n_nodes());
    const double v = beta.values(idx);
    std::ostringstream name;
    name << to_string(info.kind);
    if (info.kind != CoefKind::gamma) name << info.lag;
    name << '=' << v;
    auto [it, inserted] = where.try_emplace(name.str(), groups.size());
    if (inserted) groups.push_back({name.str(), v, {}});
    groups[it->second].indices.push_back(idx);
  }
  return groups;
}

struct MetricsRow {
  std::string estimator;
  std::string group;
  int t_len = 0;
  double truth = 0.0;
  double mean_est = 0.0;
  double rmse = 0.0;    // mean over replicates of the relative Frobenius error
  double ci_len = 0.0;  // mean over coefficients and replicates
  double cp = 0.0;
  int n_ok = 0;
  double sd_est = 0.0;  // replicate SD of the group-mean estimate
};

struct MetricsTable {
  std::string scenario_id;
  std::vector<MetricsRow> rows;
  std::vector<std::string> failures;

  const MetricsRow& find(const std::string& estimator, const std::string& group, int t_len) const {
    for (const auto& r : rows)
      if (r.estimator == estimator && r.group == group && r.t_len == t_len) return r;
    throw DataError("MetricsTable: no row for " + estimator + "/" + group + "/T=" + std::to_string(t_len));
  }

  void write_csv(std::ostream& os) const {
    os << "scenario_id,estimator,group,T,true,mean_est,rmse,ci_len,cp,n_ok\n";
    os.precision(10);
    for (const auto& r : rows)
      os << scenario_id << ',' << r.estimator << ',' << r.group << ',' << r.t_len << ',' << r.truth << ','
         << r.mean_est << ',' << r.rmse << ',' << r.ci_len << ',' << r.cp << ',' << r.n_ok << '\n';
  }
};

namespace detail {

/// Per-replicate summary for one estimator and group.
struct GroupStat {
  double mean_est = 0.0;
  double rel_err = 0.0;
  double ci_len = 0.0;
  double covered = 0.0;  // fraction of the group's coefficients covered
};

/// Interval coverage with a tiny tolerance so exact fits with zero-width
/// intervals count as covering.
inline bool covers(const Interval& ci, double truth) {
  const double tol = 1e-10 * std::max(1.0, std::abs(truth));
  return ci.lo - tol <= truth && truth <= ci.hi + tol;
}

inline std::vector<GroupStat> group_stats(const std::vector<CoefGroup>& groups, const CoefVector& truth,
                                          const Vector& beta_hat, const std::vector<Interval>& cis) {
  std::vector<GroupStat> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    GroupStat s;
    double num = 0.0, den = 0.0;
    for (int idx : g.indices) {
      const double d = beta_hat(idx) - truth.values(idx);
      num += d * d;
      den += truth.values(idx) * truth.values(idx);
      s.mean_est += beta_hat(idx);
      const auto& ci = cis[static_cast<std::size_t>(idx)];
      s.ci_len += ci.length();
      s.covered += covers(ci, truth.values(idx)) ? 1.0 : 0.0;
    }
    const double m = static_cast<double>(g.indices.size());
    s.mean_est /= m;
    s.ci_len /= m;
    s.covered /= m;
    s.rel_err = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    out.push_back(s);
  }
  return out;
}

struct ReplicateOutcome {
  std::vector<std::vector<GroupStat>> per_estimator;  // empty inner vector: failed
  std::vector<std::string> errors;
};

}  // namespace detail

/// One replicate of the scenario at sample size t_len; the stream depends only
/// on (seed, t_len, replicate) so results do not depend on scheduling.
inline detail::ReplicateOutcome run_replicate(const Scenario& s, const NarSpec& spec, const ErrorModel& model,
                                              const std::vector<CoefGroup>& groups, int t_len, int rep) {
  const CounterRng root =
      CounterRng::stream(s.seed, {0x5CE7u, static_cast<std::uint64_t>(t_len), static_cast<std::uint64_t>(rep)});
  SimConfig cfg;
  cfg.t_len = t_len;
  cfg.burn_in = s.burn_in;
  cfg.seed = root.substream(0)();
  cfg.y_mode = s.covariates;
  cfg.y_df = s.covariate_df;
  const SimResult sim = simulate(spec, model, cfg);
  const NarData data = sim.data();
  const CoefVector truth = flatten(spec);
  const int n = s.n_nodes;
  const LagOrders orders{s.q1, s.q2};
  const bool nominal = s.ci_sigma == "nominal";
  const Matrix sigma_true = nominal ? nominal_sigma(model, n) : error_covariance(model, n);
  const std::string cov = !s.egls_cov.empty() ? s.egls_cov : (s.errors.type == "factor" ? "factor" : "sar");
  const Matrix phi = scenario_phi(s);

  detail::ReplicateOutcome out;
  for (const auto& est : s.estimators) {
    try {
      FitResult fit;
      std::vector<Interval> cis;
      if (est == "ols") {
        FitOptions fo;
        if (nominal) fo.sandwich_sigma = sigma_true;
        fit = fit_ols(data, spec.w, orders, fo);
        cis = confidence_intervals(fit, s.level);
      } else if (est == "gls") {
        fit = fit_gls(data, spec.w, orders, sigma_true);
        cis = confidence_intervals(fit, s.level);
      } else if (est == "egls") {
        const CovKind kind = cov == "sar" ? CovKind{SarCovSpec{phi}} : CovKind{FactorCovSpec{}};
        fit = fit_egls(data, spec.w, orders, kind);
        cis = confidence_intervals(fit, s.level);
      } else {
        BootstrapOptions bo;
        bo.b_reps = s.bootstrap_draws;
        bo.level = s.level;
        bo.seed = root.substream(1)();
        const BootstrapEstimator be =
            est == "bootstrap_ols" ? BootstrapEstimator{BootstrapOls{}} : BootstrapEstimator{BootstrapEglsSar{phi}};
        BootstrapResult br = residual_bootstrap(data, spec.w, orders, be, bo);
        fit = std::move(br.fit);
        cis = std::move(br.percentile_cis);
      }
      out.per_estimator.push_back(detail::group_stats(groups, truth, fit.beta_hat.values, cis));
    } catch (const std::exception& e) {
      out.per_estimator.emplace_back();
      out.errors.push_back(est + " T=" + std::to_string(t_len) + " rep=" + std::to_string(rep) + ": " + e.what());
    }
  }
  return out;
}

inline MetricsTable run_scenario(const Scenario& s, int threads = -1) {
  validate(s);
  const NarSpec spec = scenario_spec(s);
  const auto st = is_stable(spec);
  if (!st.stable)
    throw NumericalError("run_scenario: scenario spec is not stable (spectral radius " + std::to_string(st.radius) + ")");
  const ErrorModel model = scenario_error_model(s);
  const auto groups = coefficient_groups(spec);
  const int workers = threads >= 0 ? threads : s.threads;

  MetricsTable table;
  table.scenario_id = s.id;
  for (int t_len : s.t_grid) {
    std::vector<detail::ReplicateOutcome> reps(static_cast<std::size_t>(s.replicates));
    parallel_for(s.replicates, workers, [&](int r) {
      reps[static_cast<std::size_t>(r)] = run_replicate(s, spec, model, groups, t_len, r);
    });
    for (const auto& r : reps) table.failures.insert(table.failures.end(), r.errors.begin(), r.errors.end());
    for (std::size_t e = 0; e < s.estimators.size(); ++e) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        MetricsRow row;
        row.estimator = s.estimators[e];
        row.group = groups[g].name;
        row.t_len = t_len;
        row.truth = groups[g].truth;
        double sum_sq = 0.0;
        for (const auto& r : reps) {  // replicate order, so sums are reproducible
          const auto& stats = r.per_estimator[e];
          if (stats.empty()) continue;
          const auto& gs = stats[g];
          ++row.n_ok;
          row.mean_est += gs.mean_est;
          sum_sq += gs.mean_est * gs.mean_est;
          row.rmse += gs.rel_err;
          row.ci_len += gs.ci_len;
          row.cp += gs.covered;
        }
        if (row.n_ok > 0) {
          const double m = row.n_ok;
          row.mean_est /= m;
          row.rmse /= m;
          row.ci_len /= m;
          row.cp /= m;
          if (row.n_ok > 1) row.sd_est = std::sqrt(std::max(0.0, (sum_sq - m * row.mean_est * row.mean_est) / (m - 1)));
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Weight-matrix misspecification experiment

struct MisspecRow {
  double exponent = 0.0;  // ||pi_T||_inf = scale * T^{-exponent}
  int t_len = 0;
  std::string weights;  // "true" or "misspecified"
  double error_norm = 0.0;  // mean ||beta_hat - beta||_F
  double cp = 0.0;          // coverage over all coefficients and replicates
  int n_ok = 0;
};

struct MisspecOptions {
  std::vector<double> exponents{0.5, 2.0 / 3.0};
  double scale = 1.0;
  bool preserve_row_sums = false;
};

struct MisspecTable {
  std::string scenario_id;
  std::vector<MisspecRow> rows;
  std::vector<std::string> failures;

  const MisspecRow& find(double exponent, int t_len, const std::string& weights) const {
    for (const auto& r : rows)
      if (std::abs(r.exponent - exponent) < 1e-12 && r.t_len == t_len && r.weights == weights) return r;
    throw DataError("MisspecTable: missing row");
  }

  void write_csv(std::ostream& os) const {
    os << "scenario_id,exponent,T,weights,error_norm,cp,n_ok\n";
    os.precision(10);
    for (const auto& r : rows)
      os << scenario_id << ',' << r.exponent << ',' << r.t_len << ',' << r.weights << ',' << r.error_norm << ','
         << r.cp << ',' << r.n_ok << '\n';
  }
};

/// OLS on the same simulated panels with W and with W^M = W + pi_T, where one
/// perturbation is drawn per (rate, T). Sandwich intervals use the plug-in
/// residual covariance.
inline MisspecTable run_misspec_experiment(const Scenario& s, const MisspecOptions& opt = {}, int threads = -1) {
  validate(s);
  const NarSpec spec = scenario_spec(s);
  if (!is_stable(spec).stable) throw NumericalError("run_misspec_experiment: scenario spec is not stable");
  const ErrorModel model = scenario_error_model(s);
  const CoefVector truth = flatten(spec);
  const auto free_idx = spec.layout().free_indices();
  const LagOrders orders{s.q1, s.q2};
  const int workers = threads >= 0 ? threads : s.threads;

  MisspecTable table;
  table.scenario_id = s.id;
  for (std::size_t ri = 0; ri < opt.exponents.size(); ++ri) {
    const double expo = opt.exponents[ri];
    for (int t_len : s.t_grid) {
      const double target = opt.scale * std::pow(static_cast<double>(t_len), -expo);
      const Matrix w_m = perturb_weights(spec.w, target, opt.preserve_row_sums,
                                         CounterRng::stream(s.seed, {0x3157u, ri, static_cast<std::uint64_t>(t_len)}))
                             .w_m;
      struct Out {
        bool ok = false;
        double err[2] = {0.0, 0.0};
        double cov[2] = {0.0, 0.0};
        std::string error;
      };
      std::vector<Out> reps(static_cast<std::size_t>(s.replicates));
      parallel_for(s.replicates, workers, [&](int r) {
        Out& o = reps[static_cast<std::size_t>(r)];
        try {
          const CounterRng root = CounterRng::stream(
              s.seed, {0x5CE7u, static_cast<std::uint64_t>(t_len), static_cast<std::uint64_t>(r)});
          SimConfig cfg;
          cfg.t_len = t_len;
          cfg.burn_in = s.burn_in;
          cfg.seed = root.substream(0)();
          cfg.y_mode = s.covariates;
          cfg.y_df = s.covariate_df;
          const NarData data = simulate(spec, model, cfg).data();
          const Matrix* ws[2] = {&spec.w, &w_m};
          for (int k = 0; k < 2; ++k) {
            const FitResult fit = fit_ols(data, *ws[k], orders);
            const auto cis = confidence_intervals(fit, s.level);
            double sq = 0.0, hit = 0.0;
            for (int idx : free_idx) {
              const double d = fit.beta_hat.values(idx) - truth.values(idx);
              sq += d * d;
              hit += detail::covers(cis[static_cast<std::size_t>(idx)], truth.values(idx)) ? 1.0 : 0.0;
            }
            o.err[k] = std::sqrt(sq);
            o.cov[k] = hit / static_cast<double>(free_idx.size());
          }
          o.ok = true;
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      });
      MisspecRow rows[2];
      for (int k = 0; k < 2; ++k) {
        rows[k].exponent = expo;
        rows[k].t_len = t_len;
        rows[k].weights = k == 0 ? "true" : "misspecified";
      }
      for (std::size_t r = 0; r < reps.size(); ++r) {
        const Out& o = reps[r];
        if (!o.ok) {
          table.failures.push_back("T=" + std::to_string(t_len) + " rep=" + std::to_string(r) + ": " + o.error);
          continue;
        }
        for (int k = 0; k < 2; ++k) {
          ++rows[k].n_ok;
          rows[k].error_norm += o.err[k];
          rows[k].cp += o.cov[k];
        }
      }
      for (auto& row : rows) {
        if (row.n_ok > 0) {
          row.error_norm /= row.n_ok;
          row.cp /= row.n_ok;
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

}  // namespace narnet
