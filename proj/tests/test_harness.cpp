#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "ruinlab/harness.hpp"

using namespace ruinlab;

namespace {

double rel(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

const ReportRow* find_row(const ErrorReport& rep, double u,
                          const std::string& quantity) {
  for (const auto& r : rep.rows)
    if (r.u == u && r.quantity == quantity) return &r;
  return nullptr;
}

}  // namespace

TEST_CASE("model json: parsing, validation, canonical hash", "[harness]") {
  auto j = nlohmann::json::parse(R"({
    "lambda": 1.0, "theta": 0.1,
    "claims": {"kind": "mixture", "weights": [0.01, 0.99], "rates": [0.1, 0.6]}
  })");
  RiskModel m = model_from_json(j);
  CHECK(m.lambda() == 1.0);
  CHECK(rel(m.theta(), 0.1) < 1e-12);
  CHECK(std::holds_alternative<ExpMixture>(m.claims()));

  // premium_rate form round-trips through the canonical serialization
  RiskModel back = model_from_json(model_to_json(m));
  CHECK(model_signature(back) == model_signature(m));
  CHECK(model_hash_hex(back) == model_hash_hex(m));
  CHECK(model_hash_hex(m).size() == 16);
  CHECK(model_hash_hex(m) != model_hash_hex(m.with_loading(0.2)));

  RiskModel g = model_from_json(nlohmann::json::parse(
      R"({"lambda": 2.0, "premium_rate": 4.5,
          "claims": {"kind": "gamma", "shape": 2.3, "scale": 0.7}})"));
  CHECK(g.premium_rate() == 4.5);
  CHECK(std::get<GammaClaims>(g.claims()).scale == 0.7);

  auto bad = [](const char* text) {
    return nlohmann::json::parse(text);
  };
  CHECK_THROWS_AS(model_from_json(bad(
                      R"({"lambda": 1, "theta": 0.1, "premium_rate": 2,
                          "claims": {"kind": "exponential", "rate": 1}})")),
                  Error);
  CHECK_THROWS_AS(model_from_json(bad(
                      R"({"lambda": 1,
                          "claims": {"kind": "exponential", "rate": 1}})")),
                  Error);
  CHECK_THROWS_AS(model_from_json(bad(
                      R"({"lambda": 1, "theta": 0.1,
                          "claims": {"kind": "weibull", "rate": 1}})")),
                  Error);
  CHECK_THROWS_AS(load_model_file("/nonexistent/model.json"), Error);

  RiskModel file_model =
      load_model_file(std::string(RUINLAB_TEST_DATA) +
                      "/reference_mixture.json");
  CHECK(model_signature(file_model) ==
        model_signature(reference_mixture_model()));
}

TEST_CASE("csv emission round-trips exactly", "[harness]") {
  ErrorReport rep;
  rep.meta["op"] = "sweep";
  rep.meta["model"] = R"({"claims":{"kind":"exponential","rate":1}})";
  rep.rows.push_back(
      ReportRow{0.0, 0.1, "psi", "devylder:3", 1.0 / 3.0, 0.3333, 1e-4, ""});
  rep.rows.push_back(ReportRow{17.25, 0.05, "t1", "exact", 1e-17,
                               9.9999999999999998e-18, 0.25, ""});
  rep.rows.push_back(
      ReportRow{300.0, 1.0, "s2", "devylder:4", 0.0, 0.0, 0.0, "failed: nope"});

  std::string text = emit_csv(rep);
  ErrorReport parsed = parse_csv(text);
  CHECK(parsed == rep);
  CHECK(emit_csv(parsed) == text);

  CHECK_THROWS_AS(parse_csv(std::string("u,theta,bogus\n")), Error);
  CHECK_THROWS_AS(parse_csv(std::string(kCsvHeader) + "\n1,2,psi,exact,x,0,0,\n"),
                  Error);

  // json view carries the same cells
  nlohmann::json j = report_to_json(rep);
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][0]["quantity"] == "psi");
  CHECK(j["meta"]["op"] == "sweep");
}

TEST_CASE("zero-exact rows are dropped and counted", "[harness]") {
  RiskModel e = RiskModel::from_loading(1.0, 0.5, Exponential{1.0});
  ErrorReport rep = sweep(e, "psi", {"devylder:3"}, {0.0, 3000.0}, {0.5});
  CHECK(rep.rows.size() == 1);
  CHECK(rep.rows[0].u == 0.0);
  CHECK(rep.meta.at("dropped_zero_exact") == "1");
}

TEST_CASE("reference error table at ten percent loading", "[harness]") {
  ErrorReport rep =
      table_reproduce(reference_mixture_model(), 0.1, {0.0, 100.0, 200.0});
  REQUIRE(rep.rows.size() == 12);
  CHECK_FALSE(rep.has_failures());
  CHECK(rep.meta.at("op") == "table");
  CHECK(rep.meta.at("model_hash").size() == 16);

  // u=0 errors have closed forms: 22/319 for psi, 22/27 for the ruin-state
  // moments (the fitted scale does not depend on theta).
  CHECK(rel(find_row(rep, 0.0, "psi")->rel_err, 22.0 / 319.0) < 1e-10);
  CHECK(rel(find_row(rep, 0.0, "t1")->rel_err, 22.0 / 27.0) < 1e-10);
  CHECK(rel(find_row(rep, 0.0, "d1")->rel_err, 22.0 / 27.0) < 1e-10);
  CHECK(rel(find_row(rep, 0.0, "s1")->rel_err, 22.0 / 27.0) < 1e-10);

  CHECK(rel(find_row(rep, 100.0, "psi")->rel_err, 0.0428978263828577) < 1e-9);
  CHECK(rel(find_row(rep, 200.0, "psi")->rel_err, 0.144803181595162) < 1e-9);
  CHECK(rel(find_row(rep, 100.0, "t1")->rel_err, 0.030120727543818) < 1e-9);
  CHECK(rel(find_row(rep, 200.0, "t1")->rel_err, 0.0497763644911225) < 1e-9);
  CHECK(rel(find_row(rep, 100.0, "d1")->rel_err, 0.160357488172146) < 1e-9);
  CHECK(rel(find_row(rep, 200.0, "d1")->rel_err, 0.160373645303371) < 1e-9);
  CHECK(rel(find_row(rep, 100.0, "s1")->rel_err, 0.263941023076149) < 1e-9);
  CHECK(rel(find_row(rep, 200.0, "s1")->rel_err, 0.265628216307434) < 1e-9);

  // rows come out sorted by u with the fixed quantity order inside a cell
  const char* order[4] = {"psi", "t1", "d1", "s1"};
  for (int i = 0; i < 12; ++i) {
    CHECK(rep.rows[i].u == 100.0 * (i / 4));
    CHECK(rep.rows[i].quantity == order[i % 4]);
    CHECK(rep.rows[i].method == "devylder:3");
  }

  // identity fit: every entry collapses
  RiskModel e = RiskModel::from_loading(1.0, 0.3, Exponential{0.7});
  ErrorReport idrep = table_reproduce(e, 0.3, {0.0, 5.0, 20.0});
  for (const auto& r : idrep.rows) CHECK(r.rel_err < 1e-10);

  CHECK_THROWS_AS(table_reproduce(e, 0.3, {}), Error);
}

TEST_CASE("sweep ordering, failure flagging and validation", "[harness]") {
  RiskModel m = reference_mixture_model();
  ErrorReport rep = sweep(m, "psi", {"exact", "cl", "lundberg", "devylder:3"},
                          {10.0, 0.0}, {0.1, 0.05});
  CHECK(rep.rows.size() == 16);
  CHECK_FALSE(rep.has_failures());
  for (size_t i = 1; i < rep.rows.size(); ++i) {
    const auto& a = rep.rows[i - 1];
    const auto& b = rep.rows[i];
    CHECK((a.theta < b.theta || (a.theta == b.theta && a.u <= b.u)));
  }
  for (const auto& r : rep.rows)
    if (r.method == "exact") CHECK(r.rel_err == 0.0);

  // the order-4 fit is infeasible on this mixture: flagged rows, no abort
  ErrorReport bad = sweep(m, "psi", {"devylder:4"}, {0.0, 10.0}, {0.1});
  CHECK(bad.rows.size() == 2);
  CHECK(bad.has_failures());
  for (const auto& r : bad.rows) CHECK(r.flag.rfind("failed: ", 0) == 0);

  CHECK_THROWS_AS(sweep(m, "psi", {}, {0.0}, {0.1}), Error);
  CHECK_THROWS_AS(sweep(m, "psi", {"exact"}, {}, {0.1}), Error);
  CHECK_THROWS_AS(sweep(m, "psi", {"exact"}, {0.0}, {}), Error);
  CHECK_THROWS_AS(sweep(m, "t1", {"cl"}, {0.0}, {0.1}), Error);
  CHECK_THROWS_AS(sweep(m, "x1", {"exact"}, {0.0}, {0.1}), Error);
  CHECK_THROWS_AS(sweep(m, "psi", {"newton"}, {0.0}, {0.1}), Error);
  CHECK_THROWS_AS(parse_method("devylder:x"), Error);

  // functional sweep through the fitted model
  ErrorReport ft = sweep(m, "d1", {"devylder:3"}, {0.0, 100.0}, {0.1});
  CHECK(ft.rows.size() == 2);
  CHECK(rel(ft.rows[0].rel_err, 22.0 / 27.0) < 1e-10);
}

TEST_CASE("solvency thresholds at the regulatory target", "[harness]") {
  RiskModel m = reference_mixture_model(0.05);
  SolvencyResult r = solvency_threshold(m, 0.005);
  CHECK(std::abs(r.u_star - 244.65662819267135) < 1e-3);
  CHECK(std::abs(r.psi_at - 0.005) <= 1e-8);
  CHECK(std::abs(r.rel_err - 0.022033) < 1e-3);
  CHECK(r.method == "devylder:3");

  SolvencyResult r20 = solvency_threshold(reference_mixture_model(0.2), 0.005);
  CHECK(std::abs(r20.u_star - 76.357834170000141) < 1e-3);
  CHECK(r20.rel_err > 0.21);
  CHECK(r20.rel_err < 0.23);

  // target equal to psi(0) needs no reserve at all
  RiskModel e = RiskModel::from_loading(1.0, 0.5, Exponential{1.0});
  CHECK(solvency_threshold(e, 1.0 / 1.5).u_star == 0.0);
  CHECK_THROWS_AS(solvency_threshold(e, 0.9), Error);
  CHECK_THROWS_AS(solvency_threshold(e, 1.5), Error);
  CHECK_THROWS_AS(solvency_threshold(e, 0.0), Error);

  ErrorReport rep = solvency_report(m, 0.005);
  CHECK(rep.rows.size() == 1);
  CHECK(rep.meta.at("op") == "solvency");
  CHECK(parse_double_field(rep.meta.at("u_star")) == rep.rows[0].u);
}

TEST_CASE("bound diagnostics shapes", "[harness]") {
  RiskModel m = reference_mixture_model();

  ErrorReport gap = bound_diagnostics(m, "gap", {},
                                      {0.4, 0.2, 0.1, 0.05, 0.025});
  REQUIRE(gap.rows.size() == 5);
  CHECK(gap.meta.at("bounded") == "true");
  double lo = 1e300, hi = 0.0;
  for (const auto& r : gap.rows) {
    lo = std::min(lo, r.rel_err);
    hi = std::max(hi, r.rel_err);
  }
  CHECK(hi / lo < 4.0);

  ErrorReport lb = bound_diagnostics(m, "lundberg", {}, {0.2, 0.1, 0.05});
  CHECK(lb.rows.size() == 33);
  CHECK(lb.meta.at("bounded") == "true");
  for (const auto& r : lb.rows) {
    if (r.u == 0.0) CHECK(rel(r.rel_err, 1.0 / (1.0 + r.theta)) < 1e-12);
    CHECK(r.rel_err > 0.0);
    CHECK(r.rel_err < 10.0);
  }

  ErrorReport ps = bound_diagnostics(m, "psi", {}, {});
  CHECK(ps.meta.at("bounded") == "true");
  CHECK(ps.rows.size() == 39);  // default grids: 13 reserves x 3 loadings

  ErrorReport mo = bound_diagnostics(m, "moment", {0.0, 100.0, 300.0},
                                     {0.1, 0.05});
  CHECK(mo.rows.size() == 12);
  double worst = 0.0;
  for (const auto& r : mo.rows) {
    CHECK(r.rel_err <= 1.0);
    worst = std::max(worst, r.rel_err);
  }
  CHECK(worst >= 0.01);

  ErrorReport tm = bound_diagnostics(m, "time", {0.0, 100.0}, {0.1});
  CHECK(tm.rows.size() == 2);
  for (const auto& r : tm.rows) CHECK(r.rel_err > 0.0);

  CHECK_THROWS_AS(bound_diagnostics(m, "bogus", {}, {}), Error);
}

TEST_CASE("adjustment-coefficient report", "[harness]") {
  RiskModel e = RiskModel::from_loading(1.0, 0.5, Exponential{1.0});
  ErrorReport rep = lundberg_report(e);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rel(rep.rows[0].exact, 1.0 / 3.0) < 1e-12);
  CHECK(rep.rows[0].method == "exact");
  CHECK(rep.rows[1].method == "first_order");
  CHECK(rel(rep.rows[1].approx, 0.5) < 1e-12);
  CHECK(rep.rows[2].method == "devylder:3");
  CHECK(rel(rep.rows[2].approx, 1.0 / 3.0) < 1e-12);
  CHECK(rep.rows[2].rel_err < 1e-12);
}
