#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ruinlab/functionals.hpp"
#include "ruinlab/json_io.hpp"
#include "ruinlab/lundberg.hpp"
#include "ruinlab/ruin_exact.hpp"

namespace ruinlab {

// One evaluated grid cell. For error reports exact/approx are the two
// evaluations and rel_err = |exact - approx| / |exact|; for bound
// diagnostics exact is the empirical error, approx the bound expression and
// rel_err their ratio. flag is empty on success, "failed: ..." when the cell
// could not be evaluated.
struct ReportRow {
  double u = 0.0;
  double theta = 0.0;
  std::string quantity;
  std::string method;
  double exact = 0.0;
  double approx = 0.0;
  double rel_err = 0.0;
  std::string flag;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ErrorReport {
  std::map<std::string, std::string> meta;  // emitted as sorted "# k=v" lines
  std::vector<ReportRow> rows;
  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;

  bool has_failures() const {
    for (const auto& r : rows)
      if (!r.flag.empty() && r.flag.rfind("failed", 0) == 0) return true;
    return false;
  }
};

inline constexpr const char* kCsvHeader =
    "u,theta,quantity,method,exact,approx,rel_err,flag";

// The two-component mixture used as the default experiment model.
inline RiskModel reference_mixture_model(double theta = 0.1) {
  return RiskModel::from_loading(1.0, theta, ExpMixture{{0.01, 0.99},
                                                        {0.1, 0.6}});
}

// ---------------------------------------------------------------------------
// formatting

// Shortest round-trip decimal form; identical bytes on every run/platform
// with a correct to_chars, which is what makes report emission reproducible.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double_field(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error("csv: bad numeric field '" + std::string(s) + "'");
  return v;
}

namespace detail {

inline std::string sanitize_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

// Drops rows whose exact value is zero (their relative error is undefined)
// and fills rel_err for the rest; failed cells pass through untouched.
inline void push_row(ErrorReport& rep, long& dropped, ReportRow row) {
  if (row.flag.empty()) {
    if (row.exact == 0.0) {
      ++dropped;
      return;
    }
    row.rel_err = std::abs(row.exact - row.approx) / std::abs(row.exact);
  }
  rep.rows.push_back(std::move(row));
}

inline std::string join_formatted(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV / JSON emission

inline void emit_csv(const ErrorReport& rep, std::ostream& out) {
  for (const auto& [k, v] : rep.meta) out << "# " << k << "=" << v << "\n";
  out << kCsvHeader << "\n";
  for (const auto& r : rep.rows) {
    out << format_double(r.u) << ',' << format_double(r.theta) << ','
        << r.quantity << ',' << r.method << ',' << format_double(r.exact)
        << ',' << format_double(r.approx) << ',' << format_double(r.rel_err)
        << ',' << r.flag << "\n";
  }
}

inline std::string emit_csv(const ErrorReport& rep) {
  std::ostringstream out;
  emit_csv(rep, out);
  return out.str();
}

inline ErrorReport parse_csv(std::istream& in) {
  ErrorReport rep;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      auto eq = line.find('=', 2);
      if (eq == std::string::npos) throw Error("csv: bad metadata line");
      rep.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!saw_header) {
      if (line != kCsvHeader) throw Error("csv: unexpected header");
      saw_header = true;
      continue;
    }
    std::vector<std::string> f;
    size_t pos = 0;
    while (true) {
      size_t c = line.find(',', pos);
      if (c == std::string::npos) {
        f.push_back(line.substr(pos));
        break;
      }
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    if (f.size() != 8) throw Error("csv: expected 8 fields per row");
    ReportRow r;
    r.u = parse_double_field(f[0]);
    r.theta = parse_double_field(f[1]);
    r.quantity = f[2];
    r.method = f[3];
    r.exact = parse_double_field(f[4]);
    r.approx = parse_double_field(f[5]);
    r.rel_err = parse_double_field(f[6]);
    r.flag = f[7];
    rep.rows.push_back(std::move(r));
  }
  if (!saw_header) throw Error("csv: missing header");
  return rep;
}

inline ErrorReport parse_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

inline nlohmann::json report_to_json(const ErrorReport& rep) {
  nlohmann::json j;
  j["meta"] = rep.meta;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json row;
    row["u"] = r.u;
    row["theta"] = r.theta;
    row["quantity"] = r.quantity;
    row["method"] = r.method;
    row["exact"] = r.exact;
    row["approx"] = r.approx;
    row["rel_err"] = r.rel_err;
    row["flag"] = r.flag;
    j["rows"].push_back(std::move(row));
  }
  return j;
}

// ---------------------------------------------------------------------------
// quantities and methods

struct Quantity {
  bool is_psi = true;
  FunctionalKind kind = FunctionalKind::time_to_ruin;
  int order = 1;
  std::string tag = "psi";
};

// "psi", or one of t/d/s followed by the moment order: t1, t2, d1, s2, ...
inline Quantity parse_quantity(std::string_view s) {
  Quantity q;
  q.tag = std::string(s);
  if (s == "psi") return q;
  if (s.size() >= 2 && (s[0] == 't' || s[0] == 'd' || s[0] == 's')) {
    int order = 0;
    auto res = std::from_chars(s.data() + 1, s.data() + s.size(), order);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() &&
        order >= 1) {
      q.is_psi = false;
      q.order = order;
      q.kind = s[0] == 't'   ? FunctionalKind::time_to_ruin
               : s[0] == 'd' ? FunctionalKind::deficit_at_ruin
                             : FunctionalKind::surplus_before_ruin;
      return q;
    }
  }
  throw Error("unknown quantity '" + std::string(s) +
              "' (expected psi, tN, dN or sN)");
}

struct Method {
  enum class Kind { exact, renewal, devylder, cl, lundberg };
  Kind kind = Kind::exact;
  int k = 3;  // fit order for devylder
  std::string tag = "exact";
};

// "exact", "renewal", "cl", "lundberg", "devylder" or "devylder:k".
inline Method parse_method(std::string_view s) {
  Method m;
  if (s == "exact") {
    m.kind = Method::Kind::exact;
  } else if (s == "renewal") {
    m.kind = Method::Kind::renewal;
  } else if (s == "cl") {
    m.kind = Method::Kind::cl;
  } else if (s == "lundberg") {
    m.kind = Method::Kind::lundberg;
  } else if (s == "devylder" || s.rfind("devylder:", 0) == 0) {
    m.kind = Method::Kind::devylder;
    if (s != "devylder") {
      auto num = s.substr(9);
      auto res = std::from_chars(num.data(), num.data() + num.size(), m.k);
      if (res.ec != std::errc() || res.ptr != num.data() + num.size())
        throw Error("bad fit order in method '" + std::string(s) + "'");
    }
    m.tag = "devylder:" + std::to_string(m.k);
    return m;
  } else {
    throw Error("unknown method '" + std::string(s) + "'");
  }
  m.tag = std::string(s);
  return m;
}

// True when the method defines the quantity: the exponential reference
// curves approximate psi only.
inline bool method_supports(const Method& m, const Quantity& q) {
  if (q.is_psi) return true;
  return m.kind == Method::Kind::exact || m.kind == Method::Kind::renewal ||
         m.kind == Method::Kind::devylder;
}

// Evaluates one (quantity, u) cell for a fixed model and method. The psi
// evaluator (and fit) are built once so sweeps reuse them across cells.
class MethodEvaluator {
 public:
  MethodEvaluator(RiskModel model, Method method)
      : model_(std::move(model)), method_(method) {
    switch (method_.kind) {
      case Method::Kind::exact:
        psi_ = psi_exact(model_);
        break;
      case Method::Kind::renewal:
        psi_ = psi_renewal_numeric(model_, default_renewal_umax(model_),
                                   default_renewal_step(model_));
        break;
      case Method::Kind::devylder:
        fit_ = devylder_fit(model_, method_.k);
        psi_ = devylder_psi(*fit_);
        break;
      case Method::Kind::cl:
        psi_ = cramer_lundberg(model_);
        break;
      case Method::Kind::lundberg:
        psi_ = psi_lundberg_pure(model_);
        break;
    }
  }

  double operator()(const Quantity& q, double u) const {
    if (q.is_psi) return (*psi_)(u);
    if (!method_supports(method_, q))
      throw Error("method " + method_.tag + " does not define " + q.tag);
    FunctionalRequest req{q.kind, q.order, u};
    if (fit_) return devylder_functional(*fit_, req);
    return ruin_functional(model_, *psi_, req);
  }

  const RiskModel& model() const { return model_; }
  const std::optional<DeVylderFit>& fit() const { return fit_; }
  const PsiEvaluator& psi() const { return *psi_; }

 private:
  RiskModel model_;
  Method method_;
  std::optional<DeVylderFit> fit_;
  std::optional<PsiEvaluator> psi_;
};

// ---------------------------------------------------------------------------
// experiment operations

namespace detail {

inline void stamp_model(ErrorReport& rep, const RiskModel& m) {
  rep.meta["model"] = model_signature(m);
  rep.meta["model_hash"] = model_hash_hex(m);
}

inline std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

// Cross-product evaluation of one quantity under several methods against the
// exact reference. Rows come out sorted by (theta, u); evaluation failures
// become flagged rows rather than aborting the sweep.
inline ErrorReport sweep(const RiskModel& base, const std::string& quantity,
                         const std::vector<std::string>& methods,
                         const std::vector<double>& u_grid,
                         const std::vector<double>& theta_grid) {
  Quantity q = parse_quantity(quantity);
  if (methods.empty()) throw Error("sweep needs at least one method");
  if (u_grid.empty() || theta_grid.empty())
    throw Error("sweep needs nonempty u and theta grids");
  std::vector<Method> ms;
  for (const auto& tag : methods) {
    Method m = parse_method(tag);
    if (!method_supports(m, q))
      throw Error("method " + m.tag + " does not define " + q.tag);
    ms.push_back(std::move(m));
  }
  std::vector<double> us = detail::sorted(u_grid);
  std::vector<double> thetas = detail::sorted(theta_grid);

  ErrorReport rep;
  long dropped = 0;
  std::string method_list;
  for (size_t i = 0; i < ms.size(); ++i)
    method_list += (i ? " " : "") + ms[i].tag;

  for (double theta : thetas) {
    RiskModel m = RiskModel::from_loading(base.lambda(), theta, base.claims());
    std::optional<MethodEvaluator> exact;
    std::string exact_err;
    try {
      exact.emplace(m, parse_method("exact"));
    } catch (const std::exception& e) {
      exact_err = detail::sanitize_field(e.what());
    }
    for (const auto& meth : ms) {
      std::optional<MethodEvaluator> ev;
      std::string ev_err = exact_err;
      if (ev_err.empty()) {
        try {
          ev.emplace(m, meth);
        } catch (const std::exception& e) {
          ev_err = detail::sanitize_field(e.what());
        }
      }
      for (double u : us) {
        ReportRow row{u, theta, q.tag, meth.tag, 0.0, 0.0, 0.0, ""};
        if (!ev_err.empty()) {
          row.flag = "failed: " + ev_err;
        } else {
          try {
            row.exact = (*exact)(q, u);
            row.approx = (*ev)(q, u);
          } catch (const std::exception& e) {
            row.flag = "failed: " + detail::sanitize_field(e.what());
          }
        }
        detail::push_row(rep, dropped, std::move(row));
      }
    }
  }
  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const ReportRow& a, const ReportRow& b) {
                     if (a.theta != b.theta) return a.theta < b.theta;
                     return a.u < b.u;
                   });
  detail::stamp_model(rep, base);
  rep.meta["op"] = "sweep";
  rep.meta["quantity"] = q.tag;
  rep.meta["methods"] = method_list;
  rep.meta["u_grid"] = detail::join_formatted(us);
  rep.meta["theta_grid"] = detail::join_formatted(thetas);
  rep.meta["dropped_zero_exact"] = std::to_string(dropped);
  return rep;
}

// Relative errors of the order-k approximation for psi, t1, d1 and s1 at one
// loading over a list of reserves; the reference error table.
inline ErrorReport table_reproduce(const RiskModel& base, double theta,
                                   const std::vector<double>& u_list,
                                   int k = 3) {
  if (u_list.empty()) throw Error("table needs a nonempty u list");
  RiskModel m = RiskModel::from_loading(base.lambda(), theta, base.claims());
  Method meth = parse_method("devylder:" + std::to_string(k));
  MethodEvaluator exact(m, parse_method("exact"));
  MethodEvaluator approx(m, meth);

  ErrorReport rep;
  long dropped = 0;
  const char* tags[4] = {"psi", "t1", "d1", "s1"};
  for (double u : detail::sorted(u_list)) {
    for (const char* tag : tags) {
      Quantity q = parse_quantity(tag);
      ReportRow row{u, theta, q.tag, meth.tag, 0.0, 0.0, 0.0, ""};
      try {
        row.exact = exact(q, u);
        row.approx = approx(q, u);
      } catch (const std::exception& e) {
        row.flag = "failed: " + detail::sanitize_field(e.what());
      }
      detail::push_row(rep, dropped, std::move(row));
    }
  }
  detail::stamp_model(rep, m);
  rep.meta["op"] = "table";
  rep.meta["fit_order"] = std::to_string(k);
  rep.meta["theta"] = format_double(theta);
  rep.meta["dropped_zero_exact"] = std::to_string(dropped);
  return rep;
}

// ---------------------------------------------------------------------------
// solvency threshold

struct SolvencyResult {
  double u_star = 0.0;
  double psi_at = 0.0;     // exact psi(u_star), within 1e-8 of the target
  double approx_at = 0.0;  // method value at u_star
  double rel_err = 0.0;
  std::string method;
};

// Smallest reserve whose exact ruin probability reaches the target, by
// bisection on the exact evaluator, plus the approximation error there.
inline SolvencyResult solvency_threshold(const RiskModel& model, double target,
                                         const std::string& method_tag =
                                             "devylder:3") {
  if (!(target > 0.0 && target < 1.0))
    throw Error("solvency target must lie in (0,1)");
  Method meth = parse_method(method_tag);
  Quantity q = parse_quantity("psi");
  MethodEvaluator exact(model, parse_method("exact"));
  MethodEvaluator approx(model, meth);

  const double tol = 1e-8;
  double psi0 = exact(q, 0.0);
  if (psi0 + tol < target)
    throw Error("solvency target exceeds psi(0); not achievable");

  double u_star = 0.0;
  if (std::abs(psi0 - target) > tol) {
    double lo = 0.0, hi = std::max(model.claim_moment(1), 1.0);
    int guard = 0;
    while (exact(q, hi) > target) {
      lo = hi;
      hi *= 2.0;
      if (++guard > 200) throw Error("solvency bracket search diverged");
    }
    double mid = hi;
    for (int i = 0; i < 400; ++i) {
      mid = 0.5 * (lo + hi);
      double p = exact(q, mid);
      if (std::abs(p - target) <= tol) break;
      (p > target ? lo : hi) = mid;
      if (hi - lo <= 1e-13 * std::max(1.0, hi)) break;
    }
    u_star = mid;
    if (std::abs(exact(q, u_star) - target) > tol)
      throw Error("solvency bisection did not reach the target tolerance");
  }

  SolvencyResult res;
  res.u_star = u_star;
  res.psi_at = exact(q, u_star);
  res.approx_at = approx(q, u_star);
  res.rel_err = std::abs(res.psi_at - res.approx_at) / res.psi_at;
  res.method = meth.tag;
  return res;
}

inline ErrorReport solvency_report(const RiskModel& model, double target,
                                   const std::string& method_tag =
                                       "devylder:3") {
  SolvencyResult r = solvency_threshold(model, target, method_tag);
  ErrorReport rep;
  rep.rows.push_back(ReportRow{r.u_star, model.theta(), "psi", r.method,
                               r.psi_at, r.approx_at, r.rel_err, ""});
  detail::stamp_model(rep, model);
  rep.meta["op"] = "solvency";
  rep.meta["target"] = format_double(target);
  rep.meta["u_star"] = format_double(r.u_star);
  rep.meta["dropped_zero_exact"] = "0";
  return rep;
}

// ---------------------------------------------------------------------------
// bound-shape diagnostics

// Ratio tables of empirical error against a bound expression with all
// constants set to one, so only the shape is judged. Modes:
//   psi      |psi - psi_k| / psi        vs (theta + theta^3 u) * growth
//   time     |t1 - t1_fit| / t1         vs (1 + u theta) / (u + u^2 theta + 1)
//   moment   |d1-|, |s1-| rel errors    vs 1 (level check)
//   gap      |R - R_fit| / theta^3      vs 1 (stabilizing ratio)
//   lundberg |psi - e^{-Ru}|            vs theta e^{-Ru}
// where growth = exp(theta^3 u) when R exceeds the fitted R, else 1.
// The summary meta "bounded" is true when max ratio <= 20 x median ratio.
inline ErrorReport bound_diagnostics(const RiskModel& base,
                                     const std::string& mode,
                                     std::vector<double> u_grid,
                                     std::vector<double> theta_grid) {
  if (mode != "psi" && mode != "time" && mode != "moment" && mode != "gap" &&
      mode != "lundberg")
    throw Error("unknown bounds mode '" + mode +
                "' (psi, time, moment, gap, lundberg)");
  if (theta_grid.empty()) theta_grid = {0.05, 0.1, 0.2};
  bool default_u = u_grid.empty();
  if (default_u)
    for (int i = 0; i <= 12; ++i) u_grid.push_back(25.0 * i);

  std::vector<double> thetas = detail::sorted(theta_grid);
  ErrorReport rep;
  long dropped = 0;
  std::vector<double> ratios;

  for (double theta : thetas) {
    RiskModel m = RiskModel::from_loading(base.lambda(), theta, base.claims());
    double R = adjustment_coefficient(m).R;
    std::vector<double> us;
    if (mode == "gap") {
      us = {0.0};
    } else if (mode == "lundberg" && default_u) {
      for (int i = 0; i <= 10; ++i) us.push_back(0.5 * i / R);
    } else {
      us = detail::sorted(u_grid);
    }

    std::optional<MethodEvaluator> exact, fit_ev;
    if (mode != "gap") exact.emplace(m, parse_method("exact"));
    if (mode != "lundberg") fit_ev.emplace(m, parse_method("devylder:3"));

    for (double u : us) {
      ReportRow row{u, theta, mode, "devylder:3", 0.0, 0.0, 0.0, ""};
      try {
        if (mode == "psi") {
          Quantity q = parse_quantity("psi");
          double e = (*exact)(q, u), a = (*fit_ev)(q, u);
          row.exact = std::abs(e - a) / e;
          double grow = adjustment_gap(m, *fit_ev->fit()) > 0.0
                            ? std::exp(theta * theta * theta * u)
                            : 1.0;
          row.approx = (theta + theta * theta * theta * u) * grow;
        } else if (mode == "time") {
          Quantity q = parse_quantity("t1");
          double e = (*exact)(q, u), a = (*fit_ev)(q, u);
          row.exact = std::abs(e - a) / e;
          row.approx = (1.0 + u * theta) / (u + u * u * theta + 1.0);
        } else if (mode == "moment") {
          Quantity q = parse_quantity("d1");
          double e = (*exact)(q, u), a = (*fit_ev)(q, u);
          row.exact = std::abs(e - a) / e;
          row.approx = 1.0;
          row.quantity = "d1";
          row.rel_err = row.exact / row.approx;
          ratios.push_back(row.rel_err);
          rep.rows.push_back(row);
          q = parse_quantity("s1");
          e = (*exact)(q, u);
          a = (*fit_ev)(q, u);
          ReportRow srow{u,        theta, "s1", "devylder:3", std::abs(e - a) / e,
                         1.0,      0.0,   ""};
          srow.rel_err = srow.exact;
          ratios.push_back(srow.rel_err);
          rep.rows.push_back(std::move(srow));
          continue;
        } else if (mode == "gap") {
          row.exact = std::abs(adjustment_gap(m, *fit_ev->fit())) /
                      (theta * theta * theta);
          row.approx = 1.0;
        } else {  // lundberg
          Quantity q = parse_quantity("psi");
          double e = (*exact)(q, u);
          double bound_ref = std::exp(-R * u);
          row.exact = std::abs(e - bound_ref);
          row.approx = theta * bound_ref;
          row.method = "lundberg";
        }
        row.rel_err = row.exact / row.approx;
        ratios.push_back(row.rel_err);
        rep.rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        row.flag = "failed: " + detail::sanitize_field(e.what());
        detail::push_row(rep, dropped, std::move(row));
      }
    }
  }

  double max_ratio = 0.0;
  for (double r : ratios) max_ratio = std::max(max_ratio, r);
  double median = 0.0;
  if (!ratios.empty()) {
    std::vector<double> s = detail::sorted(ratios);
    median = s[s.size() / 2];
  }
  bool bounded = max_ratio == 0.0 || (median > 0.0 && max_ratio <= 20.0 *
                                                          median);
  detail::stamp_model(rep, base);
  rep.meta["op"] = "bounds";
  rep.meta["mode"] = mode;
  rep.meta["bounded"] = bounded ? "true" : "false";
  rep.meta["max_ratio"] = format_double(max_ratio);
  rep.meta["median_ratio"] = format_double(median);
  rep.meta["dropped_zero_exact"] = std::to_string(dropped);
  return rep;
}

// Adjustment-coefficient summary: exact root, first-order expansion and the
// fitted model's root.
inline ErrorReport lundberg_report(const RiskModel& model, int k = 3) {
  double R = adjustment_coefficient(model).R;
  ErrorReport rep;
  long dropped = 0;
  detail::push_row(rep, dropped,
                   ReportRow{0.0, model.theta(), "R", "exact", R, R, 0.0, ""});
  detail::push_row(rep, dropped,
                   ReportRow{0.0, model.theta(), "R", "first_order", R,
                             first_order_R(model), 0.0, ""});
  ReportRow fit_row{0.0, model.theta(), "R",
                    "devylder:" + std::to_string(k), R, 0.0, 0.0, ""};
  try {
    DeVylderFit fit = devylder_fit(model, k);
    fit_row.approx = adjustment_coefficient(fit.fitted).R;
  } catch (const std::exception& e) {
    fit_row.flag = "failed: " + detail::sanitize_field(e.what());
  }
  detail::push_row(rep, dropped, std::move(fit_row));
  detail::stamp_model(rep, model);
  rep.meta["op"] = "lundberg";
  rep.meta["dropped_zero_exact"] = std::to_string(dropped);
  return rep;
}

}  // namespace ruinlab
