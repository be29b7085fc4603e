#include "oracles.hpp"
#include "smsat/rng.hpp"
#include "smsat/stats.hpp"

#include <doctest.h>

using namespace smsat;

TEST_CASE("one-way ANOVA hand example") {
  const auto r = stats::anova_oneway({{1, 2, 3, 4}, {2, 3, 4, 5}, {3, 4, 5, 6}});
  CHECK(r.ss_between == doctest::Approx(8.0));
  CHECK(r.ss_within == doctest::Approx(15.0));
  CHECK(r.df_between == 2);
  CHECK(r.df_within == 9);
  CHECK(r.f == doctest::Approx(2.4));
  CHECK(std::abs(r.p - 0.146) < 1e-3);
  CHECK_THROWS_AS(stats::anova_oneway({{1, 1}, {2, 2}}), Error);
  CHECK_THROWS_AS(stats::anova_oneway({{1, 2}}), Error);
}

TEST_CASE("Welch t-test hand example") {
  const auto r = stats::welch_t({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
  CHECK(r.t == doctest::Approx(-1.0));
  CHECK(r.df == doctest::Approx(8.0));
  CHECK(std::abs(r.p - 0.3466) < 1e-3);
  CHECK_THROWS_AS(stats::welch_t({1, 1}, {1, 1}), Error);
  const auto sep = stats::welch_t({1, 1}, {2, 2});
  CHECK(std::isinf(sep.t));
  CHECK(sep.p == 0.0);
}

TEST_CASE("t CDF against quadrature") {
  for (double v : {1.0, 2.5, 8.0, 30.0})
    for (double x : {-4.0, -1.3, -0.2, 0.0, 0.7, 2.0, 5.0}) CHECK(std::abs(stats::t_cdf(x, v) - oracle::t_cdf_quad(x, v)) < 1e-8);
}

TEST_CASE("F CDF against quadrature") {
  for (double d1 : {2.0, 3.0, 5.0})
    for (double d2 : {4.0, 9.0, 40.0})
      for (double x : {0.1, 0.8, 2.4, 6.0}) CHECK(std::abs(stats::f_cdf(x, d1, d2) - oracle::f_cdf_quad(x, d1, d2)) < 1e-8);
}

TEST_CASE("incomplete beta closed forms") {
  CHECK(stats::inc_beta(1, 1, 0.3) == doctest::Approx(0.3));
  CHECK(stats::inc_beta(2, 1, 0.3) == doctest::Approx(0.09));
  CHECK(stats::inc_beta(3, 4, 0.0) == 0.0);
  CHECK(stats::inc_beta(3, 4, 1.0) == 1.0);
  CHECK_THROWS_AS(stats::inc_beta(-1, 1, 0.5), Error);
}

TEST_CASE("calmest class and ties") {
  CHECK(stats::calmest_per_feature({1.0, 2.0, 3.0}).label == ClassLabel::SpiritualMeditation);
  const auto tie = stats::calmest_per_feature({1.0, 2.0, 1.0});
  CHECK(tie.tie);
  CHECK(tie.label == ClassLabel::NormalSilence);
  const auto tie2 = stats::calmest_per_feature({1.0, 1.0, 2.0});
  CHECK(tie2.label == ClassLabel::SpiritualMeditation);
}

TEST_CASE("majority vote") {
  using L = ClassLabel;
  const auto v = stats::majority_vote({L::Music, L::Music, L::NormalSilence});
  CHECK(v.winner == L::Music);
  CHECK(v.tally[1] == 2);
  CHECK_FALSE(v.tie);
  const auto t = stats::majority_vote({L::Music, L::SpiritualMeditation});
  CHECK(t.tie);
  CHECK(t.winner == L::SpiritualMeditation);
}

TEST_CASE("calmness report rows and CSV layout") {
  // Column 0 separates the classes, column 1 does not.
  std::vector<std::vector<double>> values(2);
  std::vector<ClassLabel> labels;
  CounterRng r(1);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 30; ++i) {
      labels.push_back(label_from_index(k));
      values[0].push_back(10.0 * k + r.normal());
      values[1].push_back(r.normal());
    }
  const auto rep = stats::calmness_report({"sep", "flat"}, values, labels, 2);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].calmest.label == ClassLabel::SpiritualMeditation);
  CHECK(rep.rows[0].comparison == "SM < NS > M");
  CHECK(rep.rows[0].result == "SM vs M diff; SM vs NS diff; M vs NS diff");
  CHECK(rep.rows[0].anova.p < 1e-10);
  const std::string csv = stats::report_to_csv(rep);
  CHECK(csv.rfind("feature,mean_SM,mean_NS,mean_M,comparison,calmest,anova_p,p_SM_M,p_SM_NS,p_M_NS,result\n", 0) == 0);
  const auto same = stats::calmness_report({"sep", "flat"}, values, labels, 1);
  CHECK(stats::report_to_json(same) == stats::report_to_json(rep));
}

TEST_CASE("published means reproduce the calmest column") {
  std::vector<ClassLabel> calmest;
  for (const auto& row : oracle::table_iii()) {
    // Means are listed SM, NS, M; the library indexes SM, M, NS.
    const auto c = stats::calmest_per_feature({row.sm, row.m, row.ns});
    CHECK_FALSE(c.tie);
    CHECK(label_code(c.label) == std::string_view(row.calmest));
    calmest.push_back(c.label);
  }
  const auto v = stats::majority_vote(calmest);
  CHECK(v.tally[label_index(ClassLabel::NormalSilence)] == 11);
  CHECK(v.tally[label_index(ClassLabel::SpiritualMeditation)] == 10);
  CHECK(v.tally[label_index(ClassLabel::Music)] == 4);
  CHECK(v.winner == ClassLabel::NormalSilence);
}
