#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ruinlab/functionals.hpp"
#include "ruinlab/harness.hpp"
#include "ruinlab/json_io.hpp"
#include "ruinlab/montecarlo.hpp"

using namespace ruinlab;

namespace {

// "a:b:step", both endpoints included.
std::vector<double> parse_grid(const std::string& spec) {
  double a = 0.0, b = 0.0, step = 0.0;
  char colon1 = 0, colon2 = 0;
  std::istringstream in(spec);
  in >> a >> colon1 >> b >> colon2 >> step;
  if (!in || colon1 != ':' || colon2 != ':' || !(step > 0.0) || b < a)
    throw Error("bad grid spec '" + spec + "' (want start:stop:step)");
  std::vector<double> out;
  long n = static_cast<long>((b - a) / step + 1e-9);
  for (long i = 0; i <= n; ++i) out.push_back(a + step * static_cast<double>(i));
  return out;
}

std::vector<double> resolve_grid(const std::vector<double>& values,
                                 const std::string& grid_spec,
                                 const std::vector<double>& fallback) {
  if (!values.empty() && !grid_spec.empty())
    throw Error("give either explicit values or a grid spec, not both");
  if (!values.empty()) return values;
  if (!grid_spec.empty()) return parse_grid(grid_spec);
  return fallback;
}

int env_threads() {
  const char* s = std::getenv("RUINLAB_THREADS");
  if (!s) return 1;
  int n = std::atoi(s);
  return n >= 1 ? n : 1;
}

void write_text(const std::string& text, const std::string& out_path) {
  if (out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot open output file: " + out_path);
  out << text;
}

void write_report(const ErrorReport& rep, const std::string& out_path,
                  const std::string& format) {
  if (format == "json")
    write_text(report_to_json(rep).dump(2) + "\n", out_path);
  else
    write_text(emit_csv(rep), out_path);
}

nlohmann::json estimate_to_json(const SimEstimate& e) {
  nlohmann::json j;
  j["point"] = e.point;
  j["std_error"] = e.std_error;
  j["n_effective"] = e.n_effective;
  j["ruin_count"] = e.ruin_count;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ruinlab: ruin probabilities, ruin-state moments and moment-fit "
      "approximations for the compound Poisson surplus process"};
  app.require_subcommand(1);

  std::string model_path, out_path = "-", format = "csv";
  app.add_option("--model", model_path,
                 "model json file (default: built-in reference mixture)");
  app.add_option("--out", out_path, "output file, - for stdout");
  app.add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  std::vector<double> u_values, theta_values;
  std::string u_grid_spec, theta_grid_spec;
  auto add_u = [&](CLI::App* sub) {
    sub->add_option("--u", u_values, "reserve values")->delimiter(',');
    sub->add_option("--u-grid", u_grid_spec, "reserve grid start:stop:step");
  };
  auto add_theta = [&](CLI::App* sub) {
    sub->add_option("--theta-grid", theta_values, "loading values")
        ->delimiter(',');
    sub->add_option("--theta-grid-spec", theta_grid_spec,
                    "loading grid start:stop:step");
  };

  auto* psi_cmd = app.add_subcommand(
      "psi", "ruin probability of a method against the exact reference");
  std::string psi_method = "exact";
  psi_cmd->add_option("--method", psi_method,
                      "exact|renewal|devylder[:k]|cl|lundberg");
  add_u(psi_cmd);

  auto* fn_cmd = app.add_subcommand(
      "functional", "ruin-state moment of a method against the reference");
  std::string fn_kind = "time";
  int fn_order = 1;
  std::string fn_approx = "devylder:3";
  fn_cmd->add_option("--kind", fn_kind, "time|deficit|surplus")
      ->check(CLI::IsMember({"time", "deficit", "surplus"}));
  fn_cmd->add_option("--order", fn_order, "moment order")->check(CLI::Range(1, 9));
  fn_cmd->add_option("--approx", fn_approx, "exact|renewal|devylder[:k]");
  add_u(fn_cmd);

  auto* lb_cmd = app.add_subcommand(
      "lundberg", "adjustment coefficient, expansion and fitted root");
  int lb_k = 3;
  lb_cmd->add_option("--k", lb_k, "fit order")->check(CLI::Range(3, 4));

  auto* fit_cmd = app.add_subcommand(
      "fit", "moment fit of the model; emits a reusable model json");
  int fit_k = 3;
  std::string fit_family;
  fit_cmd->add_option("--k", fit_k, "fit order")->check(CLI::Range(3, 4));
  fit_cmd->add_option("--family", fit_family, "exponential|gamma")
      ->check(CLI::IsMember({"exponential", "gamma"}));

  auto* sweep_cmd = app.add_subcommand(
      "sweep", "error table of one quantity over (u, theta) grids");
  std::string sweep_quantity = "psi";
  std::vector<std::string> sweep_methods{"devylder:3"};
  sweep_cmd->add_option("--quantity", sweep_quantity, "psi|tN|dN|sN");
  sweep_cmd->add_option("--methods", sweep_methods, "comma-separated methods")
      ->delimiter(',');
  add_u(sweep_cmd);
  add_theta(sweep_cmd);

  auto* table_cmd = app.add_subcommand(
      "table1", "reference error table: psi, t1, d1, s1 at one loading");
  double table_theta = -1.0;
  int table_k = 3;
  table_cmd->add_option("--theta", table_theta, "loading (default 0.1)");
  table_cmd->add_option("--k", table_k, "fit order")->check(CLI::Range(3, 4));
  add_u(table_cmd);

  auto* sol_cmd = app.add_subcommand(
      "solvency", "reserve where exact psi reaches the target, and the "
                  "approximation error there");
  double sol_target = 0.005;
  std::string sol_method = "devylder:3";
  sol_cmd->add_option("--target", sol_target, "ruin probability target");
  sol_cmd->add_option("--method", sol_method, "approximation method");

  auto* bounds_cmd = app.add_subcommand(
      "bounds", "empirical-error / bound-shape ratio tables");
  std::string bounds_mode = "psi";
  bounds_cmd->add_option("--mode", bounds_mode,
                         "psi|time|moment|gap|lundberg");
  add_u(bounds_cmd);
  add_theta(bounds_cmd);

  auto* mc_cmd = app.add_subcommand(
      "mc", "Monte Carlo estimate of psi (and ruin-state moments with "
            "--paths)");
  double mc_u = 0.0;
  long mc_n = 100000;
  std::uint64_t mc_seed = 1;
  bool mc_paths = false;
  double mc_horizon = 0.0;
  mc_cmd->add_option("--u", mc_u, "initial reserve")->required();
  mc_cmd->add_option("--n", mc_n, "sample count");
  mc_cmd->add_option("--seed", mc_seed, "rng seed");
  mc_cmd->add_flag("--paths", mc_paths, "simulate full paths");
  mc_cmd->add_option("--horizon", mc_horizon, "path time horizon (0 = auto)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RiskModel model = model_path.empty() ? reference_mixture_model()
                                         : load_model_file(model_path);
    ErrorReport rep;
    bool have_report = false;

    if (psi_cmd->parsed()) {
      std::vector<double> us = resolve_grid(u_values, u_grid_spec, {0.0});
      rep = sweep(model, "psi", {psi_method}, us, {model.theta()});
      have_report = true;
    } else if (fn_cmd->parsed()) {
      std::vector<double> us = resolve_grid(u_values, u_grid_spec, {0.0});
      std::string tag = std::string(1, fn_kind == "time"      ? 't'
                                       : fn_kind == "deficit" ? 'd'
                                                              : 's') +
                        std::to_string(fn_order);
      rep = sweep(model, tag, {fn_approx}, us, {model.theta()});
      have_report = true;
    } else if (lb_cmd->parsed()) {
      rep = lundberg_report(model, lb_k);
      have_report = true;
    } else if (fit_cmd->parsed()) {
      DeVylderFit fit =
          fit_family.empty()
              ? devylder_fit(model, fit_k)
              : devylder_fit(model, fit_k,
                             fit_family == "gamma" ? FitFamily::gamma
                                                   : FitFamily::exponential);
      nlohmann::json j = model_to_json(fit.fitted);
      j["fit_order"] = fit.k;
      j["fit_family"] =
          fit.family == FitFamily::gamma ? "gamma" : "exponential";
      j["large_loading"] = fit.large_loading;
      write_text(j.dump(2) + "\n", out_path);
    } else if (sweep_cmd->parsed()) {
      std::vector<double> us = resolve_grid(u_values, u_grid_spec, {0.0});
      std::vector<double> thetas =
          resolve_grid(theta_values, theta_grid_spec, {model.theta()});
      rep = sweep(model, sweep_quantity, sweep_methods, us, thetas);
      have_report = true;
    } else if (table_cmd->parsed()) {
      std::vector<double> us =
          resolve_grid(u_values, u_grid_spec, {0.0, 100.0, 200.0});
      double th = table_theta > 0.0 ? table_theta : model.theta();
      rep = table_reproduce(model, th, us, table_k);
      have_report = true;
    } else if (sol_cmd->parsed()) {
      rep = solvency_report(model, sol_target, sol_method);
      have_report = true;
    } else if (bounds_cmd->parsed()) {
      std::vector<double> us = resolve_grid(u_values, u_grid_spec, {});
      std::vector<double> thetas =
          resolve_grid(theta_values, theta_grid_spec, {});
      rep = bound_diagnostics(model, bounds_mode, us, thetas);
      have_report = true;
    } else if (mc_cmd->parsed()) {
      SimConfig cfg;
      cfg.n_samples = mc_n;
      cfg.seed = mc_seed;
      cfg.stream_count = env_threads();
      cfg.horizon = mc_horizon;
      MethodEvaluator ref(model, parse_method("exact"));
      if (format == "json") {
        nlohmann::json j;
        j["u"] = mc_u;
        j["n"] = mc_n;
        j["seed"] = mc_seed;
        if (mc_paths) {
          PathFunctionalEstimates est = path_functionals(model, mc_u, cfg);
          j["psi"] = estimate_to_json(est.psi);
          j["time"] = {estimate_to_json(est.time[0]),
                       estimate_to_json(est.time[1])};
          j["deficit"] = {estimate_to_json(est.deficit[0]),
                          estimate_to_json(est.deficit[1])};
          j["surplus"] = {estimate_to_json(est.surplus[0]),
                          estimate_to_json(est.surplus[1])};
          j["censor_flag"] = est.censor_flag;
          j["horizon"] = est.horizon;
        } else {
          j["psi"] = estimate_to_json(pk_psi(model, mc_u, cfg));
        }
        write_text(j.dump(2) + "\n", out_path);
      } else {
        long dropped = 0;
        double theta = model.theta();
        if (mc_paths) {
          PathFunctionalEstimates est = path_functionals(model, mc_u, cfg);
          std::string flag = est.censor_flag ? "censored" : "";
          detail::push_row(rep, dropped,
                           ReportRow{mc_u, theta, "psi", "mc",
                                     ref(parse_quantity("psi"), mc_u),
                                     est.psi.point, 0.0, flag});
          const char* names[3] = {"t", "d", "s"};
          const std::array<SimEstimate, 2>* ests[3] = {&est.time, &est.deficit,
                                                       &est.surplus};
          for (int q = 0; q < 3; ++q)
            for (int ord = 1; ord <= 2; ++ord) {
              Quantity qt =
                  parse_quantity(std::string(names[q]) + std::to_string(ord));
              detail::push_row(rep, dropped,
                               ReportRow{mc_u, theta, qt.tag, "mc",
                                         ref(qt, mc_u),
                                         (*ests[q])[ord - 1].point, 0.0,
                                         flag});
            }
          rep.meta["horizon"] = format_double(est.horizon);
        } else {
          SimEstimate est = pk_psi(model, mc_u, cfg);
          detail::push_row(rep, dropped,
                           ReportRow{mc_u, theta, "psi", "mc",
                                     ref(parse_quantity("psi"), mc_u),
                                     est.point, 0.0, ""});
        }
        detail::stamp_model(rep, model);
        rep.meta["op"] = "mc";
        rep.meta["n"] = std::to_string(mc_n);
        rep.meta["seed"] = std::to_string(mc_seed);
        rep.meta["dropped_zero_exact"] = std::to_string(dropped);
        have_report = true;
      }
    }

    if (have_report) {
      write_report(rep, out_path, format);
      if (rep.has_failures()) return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
