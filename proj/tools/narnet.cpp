// narnet command-line interface.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "narnet/narnet.hpp"

namespace {

using namespace narnet;

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  std::string format = "json";
};

struct PanelArgs {
  std::string data;
  std::string time_col = "t";
  std::string node_col = "node";
  std::string value_col = "value";
  std::vector<std::string> covariates;
  bool auto_covariates = true;
  std::string gap_policy = "error";
  bool log_transform = false;
};

struct ModelArgs {
  std::string w_path;
  int q1 = 1;
  int q2 = 1;
};

struct EstimatorArgs {
  std::string estimator = "ols";
  std::string cov = "sar";
  std::string phi_path;
  std::string sigma_path;
  std::optional<double> lambda;
  int kmax = -1;
  bool iterate = false;
  double level = 0.95;
};

void add_panel_options(CLI::App* app, PanelArgs& a) {
  app->add_option("--data", a.data, "Long-format panel CSV")->required()->check(CLI::ExistingFile);
  app->add_option("--time-col", a.time_col, "Time column");
  app->add_option("--node-col", a.node_col, "Node column");
  app->add_option("--value-col", a.value_col, "Response column");
  app->add_option("--covariates", a.covariates, "Covariate columns (default: all other columns)")->delimiter(',');
  app->add_option("--gap-policy", a.gap_policy, "error | forward_fill | drop_node")
      ->check(CLI::IsMember({"error", "forward_fill", "drop_node"}));
  app->add_flag("--log", a.log_transform, "Log-transform the response");
}

void add_model_options(CLI::App* app, ModelArgs& m) {
  app->add_option("--w", m.w_path, "Weight matrix CSV (N x N, no header)")->required()->check(CLI::ExistingFile);
  app->add_option("--q1", m.q1, "Self-lag order")->check(CLI::NonNegativeNumber);
  app->add_option("--q2", m.q2, "Network-lag order")->check(CLI::NonNegativeNumber);
}

void add_estimator_options(CLI::App* app, EstimatorArgs& e) {
  app->add_option("--estimator", e.estimator, "ols | ridge_ols | gls | ridge_gls | egls")
      ->check(CLI::IsMember({"ols", "ridge_ols", "gls", "ridge_gls", "egls"}));
  app->add_option("--cov", e.cov, "EGLS covariance model: sar | factor")->check(CLI::IsMember({"sar", "factor"}));
  app->add_option("--phi", e.phi_path, "SAR weight matrix CSV (default: W)");
  app->add_option("--sigma", e.sigma_path, "Known error covariance CSV for gls / ridge_gls");
  app->add_option("--lambda", e.lambda, "Ridge penalty (same for all blocks); default T^-0.6");
  app->add_option("--kmax", e.kmax, "Largest factor count considered");
  app->add_flag("--iterate", e.iterate, "Repeat EGLS until the coefficients settle");
  app->add_option("--level", e.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
}

Json panel_config(const PanelArgs& a) {
  return Json{{"data", a.data},          {"time_col", a.time_col}, {"node_col", a.node_col},
              {"value_col", a.value_col}, {"covariates", a.covariates}, {"gap_policy", a.gap_policy},
              {"log", a.log_transform}};
}

Json model_config(const ModelArgs& m) { return Json{{"w", m.w_path}, {"q1", m.q1}, {"q2", m.q2}}; }

Json estimator_config(const EstimatorArgs& e) {
  Json j{{"estimator", e.estimator}, {"cov", e.cov},         {"phi", e.phi_path}, {"sigma", e.sigma_path},
         {"kmax", e.kmax},           {"iterate", e.iterate}, {"level", e.level}};
  j["lambda"] = e.lambda ? Json(*e.lambda) : Json(nullptr);
  return j;
}

PanelDataset load_panel(const PanelArgs& a) {
  PanelSchema schema{a.time_col, a.node_col, a.value_col, a.covariates};
  if (a.covariates.empty() && a.auto_covariates) {
    std::ifstream in(a.data);
    std::string header;
    std::getline(in, header);
    for (const auto& c : detail::split_csv_line(header))
      if (c != a.time_col && c != a.node_col && c != a.value_col) schema.covariate_cols.push_back(c);
  }
  return ingest_panel(a.data, schema, gap_policy_from(a.gap_policy), a.log_transform);
}

Matrix load_weights(const std::string& path, int n, const char* what) {
  Matrix w = read_weights_csv(path);
  if (w.rows() != n)
    throw DataError(std::string(what) + " has " + std::to_string(w.rows()) + " rows but the panel has " +
                    std::to_string(n) + " nodes");
  validate_weights(w);
  return w;
}

FitResult run_fit(const NarData& data, const Matrix& w, const ModelArgs& m, const EstimatorArgs& e) {
  const LagOrders orders{m.q1, m.q2};
  const int t_eff = data.n_times() - orders.q();
  const RidgePenalty pen = e.lambda ? RidgePenalty::uniform(*e.lambda) : RidgePenalty::default_for(std::max(1, t_eff));
  if (e.estimator == "ols") return fit_ols(data, w, orders);
  if (e.estimator == "ridge_ols") return fit_ridge_ols(data, w, orders, pen);
  if (e.estimator == "gls" || e.estimator == "ridge_gls") {
    if (e.sigma_path.empty()) throw DataError("--sigma is required for " + e.estimator);
    const Matrix sigma = read_matrix_csv(e.sigma_path);
    return e.estimator == "gls" ? fit_gls(data, w, orders, sigma) : fit_ridge_gls(data, w, orders, sigma, pen);
  }
  EglsOptions opt;
  opt.iterate = e.iterate;
  if (e.lambda) opt.penalty = pen;
  CovKind kind;
  if (e.cov == "sar") {
    kind = SarCovSpec{e.phi_path.empty() ? w : load_weights(e.phi_path, data.n_nodes(), "--phi")};
  } else {
    FactorCovSpec f;
    f.kmax = e.kmax;
    kind = f;
  }
  return fit_egls(data, w, orders, kind, opt);
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DataError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void echo_config(const std::string& command, const Globals& g, Json extra) {
  extra["command"] = command;
  extra["seed"] = g.seed;
  extra["threads"] = g.threads;
  extra["out"] = g.out;
  extra["format"] = g.format;
  std::cerr << extra.dump() << '\n';
}

void write_coefficients_csv(std::ostream& os, const Json& coefs) {
  os << "kind,lag,node,estimate,se,ci_lo,ci_hi\n";
  os.precision(17);
  auto cell = [](const Json& v) { return v.is_null() ? std::string() : detail::format_double(v.get<double>()); };
  for (const auto& c : coefs)
    os << c["kind"].get<std::string>() << ',' << c["lag"] << ',' << c["node"] << ',' << cell(c["estimate"]) << ','
       << cell(c["se"]) << ',' << cell(c["ci_lo"]) << ',' << cell(c["ci_hi"]) << '\n';
}

ErrorModel error_model_from(const std::string& type, int n, double sigma2, double rho, const Matrix& phi, int k,
                            double df, std::uint64_t seed) {
  if (type == "gaussian") return GaussianIid{sigma2};
  if (type == "sar") return SarGaussian{rho, phi, sigma2};
  if (type == "factor") {
    CounterRng rng = CounterRng::stream(seed, {0xFAC7u});
    Matrix lambda(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) lambda(i, j) = rng.uniform();
    return FactorGaussian{lambda, sigma2};
  }
  return StudentT{df, sar_covariance(rho, phi, sigma2)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network autoregression: simulation, estimation and inference"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: all cores)")->capture_default_str();
  app.add_option("--out", g.out, "Output file (default: stdout)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a panel from a model spec");
  std::string sim_spec, sim_errors_type = "gaussian", sim_phi, sim_cov_mode = "gaussian", sim_err_out;
  int sim_t = 200, sim_burn = 200, sim_k = 3, sim_phi_width = -1;
  double sim_sigma2 = 1.0, sim_rho = 0.5, sim_df = 4.0;
  bool sim_unstable = false;
  sim->add_option("--spec", sim_spec, "Model spec JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--T", sim_t, "Number of time points")->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", sim_burn, "Discarded initial steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--errors", sim_errors_type, "gaussian | sar | factor | student_t")
      ->check(CLI::IsMember({"gaussian", "sar", "factor", "student_t"}));
  sim->add_option("--sigma2", sim_sigma2, "Error (innovation) variance");
  sim->add_option("--rho", sim_rho, "SAR parameter");
  sim->add_option("--phi", sim_phi, "SAR weight matrix CSV (default: W)");
  sim->add_option("--phi-width", sim_phi_width, "Banded SAR weight matrix of this width");
  sim->add_option("--k", sim_k, "Number of factors");
  sim->add_option("--df", sim_df, "Student-t degrees of freedom");
  sim->add_option("--covariates", sim_cov_mode, "gaussian | student_t | zero")
      ->check(CLI::IsMember({"gaussian", "student_t", "zero"}));
  sim->add_option("--errors-out", sim_err_out, "Also write the error matrix (T x N CSV)");
  sim->add_flag("--allow-unstable", sim_unstable, "Simulate even if the spec is not stable");

  // stability
  auto* stab = app.add_subcommand("stability", "Spectral radius of the companion matrix");
  std::string stab_spec;
  stab->add_option("--spec", stab_spec, "Model spec JSON")->required()->check(CLI::ExistingFile);

  // fit
  auto* fit = app.add_subcommand("fit", "Estimate a NAR model");
  PanelArgs fit_panel;
  ModelArgs fit_model;
  EstimatorArgs fit_est;
  add_panel_options(fit, fit_panel);
  add_model_options(fit, fit_model);
  add_estimator_options(fit, fit_est);

  // forecast
  auto* fc = app.add_subcommand("forecast", "One-step forecasts and PMSE over a held-out window");
  PanelArgs fc_panel;
  ModelArgs fc_model;
  EstimatorArgs fc_est;
  int fc_test_len = 20;
  add_panel_options(fc, fc_panel);
  add_model_options(fc, fc_model);
  add_estimator_options(fc, fc_est);
  fc->add_option("--test-len", fc_test_len, "Number of final time points held out")->check(CLI::PositiveNumber);

  // select
  auto* sel = app.add_subcommand("select", "Lag-order (BIC) or factor-count (IC) selection");
  PanelArgs sel_panel;
  std::string sel_w, sel_what = "q";
  int sel_qmax = 4, sel_kmax = -1, sel_q = 1;
  add_panel_options(sel, sel_panel);
  sel->add_option("--w", sel_w, "Weight matrix CSV")->required()->check(CLI::ExistingFile);
  sel->add_option("--what", sel_what, "q | k")->check(CLI::IsMember({"q", "k"}));
  sel->add_option("--qmax", sel_qmax, "Largest lag order")->check(CLI::PositiveNumber);
  sel->add_option("--kmax", sel_kmax, "Largest factor count");
  sel->add_option("--q", sel_q, "Lag order of the OLS fit whose residuals feed factor selection");

  // bootstrap
  auto* boot = app.add_subcommand("bootstrap", "Residual-bootstrap percentile intervals");
  PanelArgs boot_panel;
  ModelArgs boot_model;
  std::string boot_estimator = "ols", boot_phi;
  int boot_reps = 500;
  double boot_level = 0.95;
  add_panel_options(boot, boot_panel);
  add_model_options(boot, boot_model);
  boot->add_option("--estimator", boot_estimator, "ols | egls")->check(CLI::IsMember({"ols", "egls"}));
  boot->add_option("--phi", boot_phi, "SAR weight matrix CSV for egls (default: W)");
  boot->add_option("--reps", boot_reps, "Bootstrap replicates (>= 100)");
  boot->add_option("--level", boot_level, "Confidence level")->check(CLI::Range(0.0, 1.0));

  // replicate
  auto* rep = app.add_subcommand("replicate", "Monte-Carlo scenario runner");
  std::string rep_scenario;
  bool rep_misspec = false;
  std::vector<double> rep_exponents{0.5, 2.0 / 3.0};
  double rep_scale = 1.0;
  bool rep_preserve = false;
  rep->add_option("--scenario", rep_scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  rep->add_flag("--misspec", rep_misspec, "Run the weight-misspecification experiment instead");
  rep->add_option("--exponents", rep_exponents, "Misspecification rates ||pi||_inf = scale * T^-e")->delimiter(',');
  rep->add_option("--scale", rep_scale, "Misspecification scale");
  rep->add_flag("--preserve-row-sums", rep_preserve, "Keep the rows of W^M summing to one");

  // geo-weights
  auto* geo = app.add_subcommand("geo-weights", "Inverse-distance W and Phi from coordinates");
  std::string geo_coords, geo_phi_out;
  double geo_cutoff = 500.0;
  geo->add_option("--coords", geo_coords, "CSV with columns node,lat,lon")->required()->check(CLI::ExistingFile);
  geo->add_option("--cutoff-km", geo_cutoff, "Neighbor cutoff for W (km)")->check(CLI::PositiveNumber);
  geo->add_option("--phi-out", geo_phi_out, "Write Phi to this CSV");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Output out(g.out);
    std::ostream& os = out.stream();

    if (sim->parsed()) {
      const NarSpec spec = read_spec(sim_spec);
      Matrix phi = spec.w;
      if (!sim_phi.empty()) phi = load_weights(sim_phi, spec.n_nodes, "--phi");
      if (sim_phi_width > 0) phi = banded_weights(spec.n_nodes, sim_phi_width);
      echo_config("simulate", g,
                  {{"spec", sim_spec}, {"T", sim_t}, {"burn_in", sim_burn}, {"errors", sim_errors_type},
                   {"sigma2", sim_sigma2}, {"rho", sim_rho}, {"phi", sim_phi}, {"phi_width", sim_phi_width},
                   {"k", sim_k}, {"df", sim_df}, {"covariates", sim_cov_mode}, {"allow_unstable", sim_unstable}});
      const ErrorModel model =
          error_model_from(sim_errors_type, spec.n_nodes, sim_sigma2, sim_rho, phi, sim_k, sim_df, g.seed);
      SimConfig cfg;
      cfg.t_len = sim_t;
      cfg.burn_in = sim_burn;
      cfg.seed = g.seed;
      cfg.y_mode = detail::covariate_mode_from(sim_cov_mode);
      cfg.allow_unstable = sim_unstable;
      const SimResult r = simulate(spec, model, cfg);
      write_panel_csv(os, r.data());
      if (!sim_err_out.empty()) write_matrix_csv(sim_err_out, r.errors);
    } else if (stab->parsed()) {
      echo_config("stability", g, {{"spec", stab_spec}});
      const NarSpec spec = read_spec(stab_spec);
      const auto st = is_stable(spec);
      const bool suff = sufficient_condition(spec);
      if (g.format == "csv") {
        os << "radius,stable,sufficient_condition\n"
           << detail::format_double(st.radius) << ',' << (st.stable ? "true" : "false") << ','
           << (suff ? "true" : "false") << '\n';
      } else {
        os << Json{{"radius", st.radius}, {"stable", st.stable}, {"sufficient_condition", suff}}.dump(2) << '\n';
      }
    } else if (fit->parsed()) {
      Json cfg{{"panel", panel_config(fit_panel)}, {"model", model_config(fit_model)},
               {"estimator", estimator_config(fit_est)}};
      echo_config("fit", g, cfg);
      const PanelDataset panel = load_panel(fit_panel);
      const Matrix w = load_weights(fit_model.w_path, panel.data.n_nodes(), "--w");
      const FitResult res = run_fit(panel.data, w, fit_model, fit_est);
      Json j = fit_to_json(res, w, fit_est.level);
      j["node_ids"] = panel.node_ids;
      if (g.format == "csv")
        write_coefficients_csv(os, j["coefficients"]);
      else
        os << j.dump(2) << '\n';
    } else if (fc->parsed()) {
      Json cfg{{"panel", panel_config(fc_panel)}, {"model", model_config(fc_model)},
               {"estimator", estimator_config(fc_est)}, {"test_len", fc_test_len}};
      echo_config("forecast", g, cfg);
      const PanelDataset panel = load_panel(fc_panel);
      const int t_len = panel.data.n_times();
      const int test_start = t_len - fc_test_len;
      if (test_start < std::max(fc_model.q1, fc_model.q2) + 2)
        throw DataError("forecast: the training window is too short for the requested test length");
      const Matrix w = load_weights(fc_model.w_path, panel.data.n_nodes(), "--w");
      const FitResult res = run_fit(panel.data.rows(0, test_start), w, fc_model, fc_est);
      const Matrix pred = forecast_window(res, w, panel.data, test_start);
      const double score = pmse(res, w, panel.data, test_start);
      if (g.format == "json") {
        os << Json{{"estimator", to_string(res.estimator)}, {"test_start", test_start}, {"test_len", fc_test_len},
                   {"pmse", score}}
                  .dump(2)
           << '\n';
      } else {
        os << "time,node,forecast,actual,error\n";
        for (int r = 0; r < pred.rows(); ++r)
          for (int i = 0; i < pred.cols(); ++i) {
            const double actual = panel.data.x(test_start + r, i);
            os << panel.times[static_cast<std::size_t>(test_start + r)] << ','
               << panel.node_ids[static_cast<std::size_t>(i)] << ',' << detail::format_double(pred(r, i)) << ','
               << detail::format_double(actual) << ',' << detail::format_double(actual - pred(r, i)) << '\n';
          }
        std::cerr << "pmse " << detail::format_double(score) << '\n';
      }
    } else if (sel->parsed()) {
      echo_config("select", g,
                  {{"panel", panel_config(sel_panel)}, {"w", sel_w}, {"what", sel_what}, {"qmax", sel_qmax},
                   {"kmax", sel_kmax}, {"q", sel_q}});
      const PanelDataset panel = load_panel(sel_panel);
      const Matrix w = load_weights(sel_w, panel.data.n_nodes(), "--w");
      Json j;
      if (sel_what == "q") {
        const LagSelection s = select_q_bic(panel.data, w, sel_qmax);
        Json bic = Json::array();
        for (double v : s.bic_values) bic.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
        j = {{"q_hat", s.q_hat}, {"bic_values", bic}, {"regularized", s.regularized}};
      } else {
        FitOptions fo;
        fo.compute_vcov = false;
        const FitResult res = fit_ols(panel.data, w, {sel_q, sel_q}, fo);
        const int kmax = sel_kmax < 0 ? default_kmax(res.residuals.cols(), res.residuals.rows()) : sel_kmax;
        const FactorSelection s = select_k(res.residuals, kmax);
        j = {{"k_hat", s.k_hat},
             {"ic_values", std::vector<double>(s.ic_values.data(), s.ic_values.data() + s.ic_values.size())},
             {"perfect_fit", s.perfect_fit}};
      }
      os << j.dump(2) << '\n';
    } else if (boot->parsed()) {
      echo_config("bootstrap", g,
                  {{"panel", panel_config(boot_panel)}, {"model", model_config(boot_model)},
                   {"estimator", boot_estimator}, {"phi", boot_phi}, {"reps", boot_reps}, {"level", boot_level}});
      const PanelDataset panel = load_panel(boot_panel);
      const Matrix w = load_weights(boot_model.w_path, panel.data.n_nodes(), "--w");
      BootstrapOptions bo;
      bo.b_reps = boot_reps;
      bo.level = boot_level;
      bo.seed = g.seed;
      bo.threads = g.threads;
      BootstrapEstimator be = BootstrapOls{};
      if (boot_estimator == "egls")
        be = BootstrapEglsSar{boot_phi.empty() ? w : load_weights(boot_phi, panel.data.n_nodes(), "--phi")};
      const BootstrapResult r = residual_bootstrap(panel.data, w, {boot_model.q1, boot_model.q2}, be, bo);
      const CoefLayout& layout = r.fit.layout();
      Json coefs = Json::array();
      for (int idx : r.fit.free_indices) {
        const auto info = layout.type_info(idx / layout.n_nodes());
        const auto& ci = r.percentile_cis[static_cast<std::size_t>(idx)];
        coefs.push_back({{"node", idx % layout.n_nodes()}, {"lag", info.lag}, {"kind", to_string(info.kind)},
                         {"estimate", r.fit.beta_hat.values(idx)}, {"se", nullptr}, {"ci_lo", ci.lo}, {"ci_hi", ci.hi}});
      }
      if (g.format == "csv")
        write_coefficients_csv(os, coefs);
      else
        os << Json{{"estimator", to_string(r.fit.estimator)}, {"b_reps", r.b_reps}, {"n_failed", r.n_failed},
                   {"level", r.level}, {"coefficients", coefs}}
                  .dump(2)
           << '\n';
    } else if (rep->parsed()) {
      std::ifstream in(rep_scenario);
      Json sj;
      try {
        sj = Json::parse(in);
      } catch (const Json::exception& e) {
        throw DataError(rep_scenario + ": " + e.what());
      }
      Scenario s = scenario_from_json(sj);
      if (app.get_option("--seed")->count() > 0) s.seed = g.seed;
      if (app.get_option("--threads")->count() > 0) s.threads = g.threads;
      Json cfg{{"scenario", scenario_to_json(s)}, {"misspec", rep_misspec}};
      if (rep_misspec) cfg["misspec_options"] = {{"exponents", rep_exponents}, {"scale", rep_scale},
                                                 {"preserve_row_sums", rep_preserve}};
      echo_config("replicate", g, cfg);
      if (rep_misspec) {
        const MisspecTable t = run_misspec_experiment(s, {rep_exponents, rep_scale, rep_preserve});
        t.write_csv(os);
        for (const auto& f : t.failures) std::cerr << "replicate failed: " << f << '\n';
      } else {
        const MetricsTable t = run_scenario(s);
        t.write_csv(os);
        for (const auto& f : t.failures) std::cerr << "replicate failed: " << f << '\n';
      }
    } else if (geo->parsed()) {
      echo_config("geo-weights", g, {{"coords", geo_coords}, {"cutoff_km", geo_cutoff}, {"phi_out", geo_phi_out}});
      const auto [names, pts] = read_coords_csv(geo_coords);
      const GeoWeights gw = build_geo_weights(pts, geo_cutoff, names);
      if (g.format == "json") {
        auto rows = [](const Matrix& m) {
          Json out = Json::array();
          for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const Vector r = m.row(i).transpose();
            out.push_back(std::vector<double>(r.data(), r.data() + r.size()));
          }
          return out;
        };
        os << Json{{"node_ids", names}, {"cutoff_km", gw.cutoff_km}, {"w", rows(gw.w)}, {"phi", rows(gw.phi)}}.dump(2)
           << '\n';
      } else {
        write_matrix_csv(os, gw.w);
      }
      if (!geo_phi_out.empty()) write_matrix_csv(geo_phi_out, gw.phi);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
