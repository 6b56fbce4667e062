#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ruinlab/ruin_exact.hpp"

using namespace ruinlab;

namespace {

double rel(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

const ExpMixture kMix{{0.01, 0.99}, {0.1, 0.6}};

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("exponential closed form", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 1.0, Exponential{1.0});
  PsiEvaluator psi = psi_exponential_claims(m);
  CHECK(psi.provenance() == PsiProvenance::closed_form);
  CHECK(psi.has_exp_form());
  CHECK(rel(psi(0.0), 0.5) < 1e-14);
  CHECK(rel(psi(2.0 * std::log(2.0)), 0.25) < 1e-14);  // R = 1/2
  for (double u = 0.0; u < 20.0; u += 0.5) CHECK(psi(u) >= psi(u + 0.5));
  CHECK_THROWS_AS(psi(-1.0), Error);
  CHECK_THROWS_AS(psi_exponential_claims(
                      RiskModel::from_loading(1.0, 0.1, kMix)),
                  Error);
}

TEST_CASE("mixture closed form: roots, coefficients, identities",
          "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.1, kMix);
  PsiEvaluator psi = psi_mixture_closed_form(m);
  REQUIRE(psi.has_exp_form());
  const auto& terms = psi.exp_form().terms();  // sorted by rate
  REQUIRE(terms.size() == 2);
  CHECK(rel(terms[0].rate, 0.038372600646823437) < 1e-12);
  CHECK(rel(terms[1].rate, 0.14214687987265708) < 1e-12);
  CHECK(rel(terms[0].coef, 0.79016626363135349) < 1e-12);
  CHECK(rel(terms[1].coef, 0.1189246454595556) < 1e-12);

  CHECK(rel(psi(0.0), 1.0 / 1.1) < 1e-14);
  CHECK(rel(psi(50.0), 0.11610009392848915) < 1e-12);
  CHECK(rel(psi(100.0), 0.017030196000604699) < 1e-12);
  CHECK(rel(psi(200.0), 0.00036704282601059463) < 1e-12);
  CHECK(rel(psi(300.0), 7.9107173648447918e-6) < 1e-12);

  // integral_0^inf psi = m2/(2 m1 theta)
  double want = 7.5 / (2.0 * 1.75 * 0.1);
  CHECK(rel(psi.exp_form().total_integral(), want) < 1e-12);

  // the smallest root is the adjustment coefficient
  CHECK(rel(terms[0].rate, adjustment_coefficient(m).R) < 1e-12);
}

TEST_CASE("mixture closed form at 5% loading", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.05, kMix);
  PsiEvaluator psi = psi_mixture_closed_form(m);
  CHECK(rel(psi(245.0), 0.0049636746295565836) < 1e-12);
  CHECK(rel(psi(0.0), 1.0 / 1.05) < 1e-14);
}

TEST_CASE("single-component mixture reduces to the exponential form",
          "[ruin_exact]") {
  RiskModel mix = RiskModel::from_loading(1.0, 0.3, ExpMixture{{1.0}, {0.7}});
  RiskModel exp = RiskModel::from_loading(1.0, 0.3, Exponential{0.7});
  PsiEvaluator pm = psi_mixture_closed_form(mix);
  PsiEvaluator pe = psi_exponential_claims(exp);
  for (double u : {0.0, 1.0, 10.0, 100.0}) CHECK(rel(pm(u), pe(u)) < 1e-12);
}

TEST_CASE("constant-claims series", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 1.0, Deterministic{1.0});
  PsiEvaluator psi = psi_deterministic(m);
  CHECK(rel(psi(0.0), 0.5) < 1e-14);
  struct Row {
    double u, psi, tol;
  };
  const Row rows[] = {
      {0.5, 0.35798729165612926, 1e-13}, {1.0, 0.17563936464993593, 1e-13},
      {2.5, 0.028640630363086352, 1e-12}, {5.0, 0.0012357297307816899, 1e-10},
      {7.5, 5.3424782519100134e-5, 1e-8}, {10.0, 2.3098787092859863e-6, 1e-7},
  };
  for (const auto& r : rows) CHECK(rel(psi(r.u), r.psi) < r.tol);
  for (double u = 0.0; u < 8.0; u += 0.25) CHECK(psi(u) >= psi(u + 0.25));

  // different scale and loading
  CHECK(rel(detail::shiu_psi(2.0, 0.3, 3.0), 0.39876670595917571) < 1e-13);

  // cancellation floor and overflow guard both flag and return 0
  bool fl = false;
  CHECK(detail::shiu_psi(1.0, 1.0, 100.0, &fl) == 0.0);
  CHECK(fl);
  fl = false;
  CHECK(detail::shiu_psi(1.0, 1.0, 2000.0, &fl) == 0.0);
  CHECK(fl);
}

TEST_CASE("renewal solver against the exponential closed form",
          "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.2, Exponential{0.6});
  double R = 0.1;  // beta theta/(1+theta)
  auto sup_err = [&](double h) {
    PsiEvaluator num = psi_renewal_numeric(m, 60.0, h);
    const auto& v = num.grid_values();
    double worst = 0.0;
    for (size_t j = 0; j < v.size(); ++j) {
      double u = static_cast<double>(j) * h;
      double exact = std::exp(-R * u) / 1.2;
      worst = std::max(worst, std::abs(v[j] - exact) / exact);
    }
    return worst;
  };
  double e2 = sup_err(4e-3);
  double e1 = sup_err(2e-3);
  CHECK(e1 < 1e-7);
  CHECK(e2 / e1 > 3.5);  // at least second-order step-size decay

  PsiEvaluator num = psi_renewal_numeric(m, 60.0, 2e-3);
  CHECK(num.provenance() == PsiProvenance::renewal_numeric);
  CHECK(num.grid_values()[0] == 1.0 / 1.2);  // psi(0) exact by construction
}

TEST_CASE("renewal solver against the mixture closed form", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.1, kMix);
  PsiEvaluator exact = psi_mixture_closed_form(m);
  double h = 8e-3;
  PsiEvaluator num = psi_renewal_numeric(m, 300.0, h);
  const auto& v = num.grid_values();
  double worst = 0.0;
  for (size_t j = 0; j < v.size(); ++j) {
    double u = static_cast<double>(j) * h;
    worst = std::max(worst, std::abs(v[j] - exact(u)) / exact(u));
  }
  CHECK(worst < 6e-7);

  // interpolation between nodes and the fitted exponential tail beyond
  CHECK(rel(num(100.0004), exact(100.0004)) < 1e-5);
  CHECK(rel(num(305.0), exact(305.0)) < 1e-3);
  CHECK(num.tail_rate() > 0.038);
  CHECK(num.tail_rate() < 0.039);
}

TEST_CASE("renewal solver against the constant-claims series",
          "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 1.0, Deterministic{1.0});
  PsiEvaluator exact = psi_deterministic(m);
  double h = 1e-3;
  PsiEvaluator num = psi_renewal_numeric(m, 10.0, h);
  const auto& v = num.grid_values();
  double worst = 0.0;
  for (size_t j = 0; j < v.size(); ++j) {
    double u = static_cast<double>(j) * h;
    worst = std::max(worst, std::abs(v[j] - exact(u)));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("renewal grid size cap", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.2, Exponential{0.6});
  CHECK_THROWS_AS(psi_renewal_numeric(m, 1e5, 1e-3), Error);
}

TEST_CASE("exact-evaluator dispatch by family", "[ruin_exact]") {
  CHECK(psi_exact(RiskModel::from_loading(1.0, 0.5, Exponential{1.0}))
            .has_exp_form());
  CHECK(psi_exact(RiskModel::from_loading(1.0, 0.1, kMix)).has_exp_form());
  PsiEvaluator pd =
      psi_exact(RiskModel::from_loading(1.0, 1.0, Deterministic{1.0}));
  CHECK(pd.provenance() == PsiProvenance::closed_form);
  CHECK_FALSE(pd.has_exp_form());
  CHECK_FALSE(pd.has_grid());
  RiskModel g = RiskModel::from_loading(1.0, 0.5, GammaClaims{2.0, 1.0});
  PsiEvaluator pg = psi_exact(g);
  CHECK(pg.provenance() == PsiProvenance::renewal_numeric);
  CHECK(pg.has_grid());
  CHECK(rel(pg(0.0), 1.0 / 1.5) < 1e-14);
}

TEST_CASE("Cramer-Lundberg approximation", "[ruin_exact]") {
  // exponential claims: alpha reduces to 1/(1+theta), the exact coefficient
  RiskModel e = RiskModel::from_loading(1.0, 0.25, Exponential{0.5});
  PsiEvaluator cl = cramer_lundberg(e);
  CHECK(cl.provenance() == PsiProvenance::cramer_lundberg);
  const auto& t = cl.exp_form().terms();
  REQUIRE(t.size() == 1);
  CHECK(rel(t[0].coef, 0.8) < 1e-12);
  CHECK(rel(t[0].rate, 0.1) < 1e-12);

  // mixture: alpha equals the dominant partial-fraction coefficient
  RiskModel m = RiskModel::from_loading(1.0, 0.1, kMix);
  PsiEvaluator clm_eval = cramer_lundberg(m);
  const auto& tm = clm_eval.exp_form().terms();
  CHECK(rel(tm[0].coef, 0.79016626363135349) < 1e-10);
  CHECK(rel(tm[0].rate, 0.038372600646823437) < 1e-10);

  // alpha = 1 + O(theta): inside [0.9, 1.1] at 5% loading
  RiskModel m5 = RiskModel::from_loading(1.0, 0.05, kMix);
  double alpha5 = cramer_lundberg(m5).exp_form().terms()[0].coef;
  CHECK(rel(alpha5, 0.90215615583885548) < 1e-10);
  CHECK(alpha5 > 0.9);
  CHECK(alpha5 < 1.1);

  // psi/psi_CL -> 1 far in the tail
  PsiEvaluator exact = psi_mixture_closed_form(m);
  PsiEvaluator clm = cramer_lundberg(m);
  CHECK(std::abs(exact(300.0) / clm(300.0) - 1.0) < 1e-3);
}

TEST_CASE("pure Lundberg curve", "[ruin_exact]") {
  RiskModel e = RiskModel::from_loading(1.0, 0.25, Exponential{0.5});
  PsiEvaluator pl = psi_lundberg_pure(e);
  CHECK(pl(0.0) == 1.0);
  // exponential claims: psi - e^{-Ru} = -theta/(1+theta) e^{-Ru}
  PsiEvaluator ex = psi_exponential_claims(e);
  for (double u : {0.0, 2.0, 10.0})
    CHECK(rel(ex(u) - pl(u), -0.25 / 1.25 * pl(u)) < 1e-13);

  // banded relative distance: |psi - e^{-Ru}|/(theta e^{-Ru}) within a
  // factor 10 of its grid median; at u=0 it equals 1/(1+theta)
  std::vector<double> ratios;
  for (double th : {0.2, 0.1, 0.05}) {
    RiskModel m = RiskModel::from_loading(1.0, th, kMix);
    PsiEvaluator psi = psi_mixture_closed_form(m);
    PsiEvaluator lb = psi_lundberg_pure(m);
    double R = adjustment_coefficient(m).R;
    double at0 = std::abs(psi(0.0) - 1.0) / th;
    CHECK(rel(at0, 1.0 / (1.0 + th)) < 1e-12);
    for (int i = 0; i <= 50; ++i) {
      double u = 5.0 / R * i / 50.0;
      ratios.push_back(std::abs(psi(u) - lb(u)) / (th * lb(u)));
    }
  }
  double med = median_of(ratios);
  for (double r : ratios) {
    CHECK(r <= 10.0 * med);
    CHECK(r >= med / 10.0);
  }
}

TEST_CASE("auxiliary exponential approximation", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.1, kMix);
  PsiEvaluator aux = psi_auxiliary_exponential(m);
  CHECK(aux.provenance() == PsiProvenance::auxiliary_exponential);
  const auto& t = aux.exp_form().terms();
  REQUIRE(t.size() == 1);
  CHECK(rel(t[0].coef, 1.0 / 1.1) < 1e-14);
  CHECK(rel(t[0].rate, adjustment_coefficient(m).R) < 1e-12);
}

TEST_CASE("fitted-model psi: identity on exponential input", "[ruin_exact]") {
  RiskModel e = RiskModel::from_loading(0.7, 0.3, Exponential{0.7});
  PsiEvaluator dv = devylder_psi(e, 3);
  PsiEvaluator ex = psi_exponential_claims(e);
  CHECK(dv.provenance() == PsiProvenance::devylder);
  for (double u : {0.0, 3.0, 20.0}) CHECK(rel(dv(u), ex(u)) < 1e-12);
}

TEST_CASE("fitted-model psi on the reference mixture", "[ruin_exact]") {
  RiskModel m = RiskModel::from_loading(1.0, 0.1, kMix);
  DeVylderFit fit = devylder_fit(m, 3);
  PsiEvaluator dv = devylder_psi(fit);
  PsiEvaluator ex = psi_mixture_closed_form(m);

  // at u=0 the relative error is exactly (theta~ - theta)/(1 + theta~)
  double err0 = std::abs(ex(0.0) - dv(0.0)) / ex(0.0);
  double want0 =
      (fit.fitted.theta() - m.theta()) / (1.0 + fit.fitted.theta());
  CHECK(rel(err0, want0) < 1e-10);
  CHECK(err0 > 0.068);
  CHECK(err0 < 0.070);

  double err100 = std::abs(ex(100.0) - dv(100.0)) / ex(100.0);
  CHECK(err100 > 0.0419);
  CHECK(err100 < 0.0439);
  double err200 = std::abs(ex(200.0) - dv(200.0)) / ex(200.0);
  CHECK(err200 > 0.1438);
  CHECK(err200 < 0.1458);
}

TEST_CASE("fitted-model psi: order-4 identity on gamma input",
          "[ruin_exact]") {
  RiskModel g = RiskModel::from_loading(1.3, 0.2, GammaClaims{2.3, 0.7});
  PsiEvaluator dv = devylder_psi(g, 4);
  PsiEvaluator ex = psi_exact(g);
  CHECK(dv.provenance() == PsiProvenance::devylder);
  CHECK(dv.has_grid());
  for (double u : {0.0, 1.0, 5.0, 10.0, 20.0})
    CHECK(rel(dv(u), ex(u)) < 1e-6);
}

TEST_CASE("approximation error shape stays banded", "[ruin_exact]") {
  // |psi - psi_fit| / ((theta + theta^3 u) e^{-min(R, R_fit) u}) over a
  // (u, theta) grid stays within a factor 20 of its median
  std::vector<double> ratios;
  for (double th : {0.2, 0.1, 0.05}) {
    RiskModel m = RiskModel::from_loading(1.0, th, kMix);
    DeVylderFit fit = devylder_fit(m, 3);
    PsiEvaluator ex = psi_mixture_closed_form(m);
    PsiEvaluator dv = devylder_psi(fit);
    double R = adjustment_coefficient(m).R;
    double Rf = adjustment_coefficient(fit.fitted).R;
    double rmin = std::min(R, Rf);
    for (double u = 0.0; u <= 200.0; u += 25.0) {
      double bound = (th + th * th * th * u) * std::exp(-rmin * u);
      ratios.push_back(std::abs(ex(u) - dv(u)) / bound);
    }
  }
  // upper band only: the signed error crosses zero inside the grid (near
  // u=100 at theta=0.05), so no pointwise lower band can hold
  double med = median_of(ratios);
  CHECK(med > 1e-4);
  for (double r : ratios) CHECK(r <= 20.0 * med);
}
