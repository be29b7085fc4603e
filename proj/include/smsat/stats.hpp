#pragma once

#include "smsat/features.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace smsat::stats {

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double inc_beta(double a, double b, double x);
double t_cdf(double x, double df);
double f_cdf(double x, double d1, double d2);

struct AnovaResult {
  double f = 0.0, p = 1.0;
  double ss_between = 0.0, ss_within = 0.0;
  double df_between = 0.0, df_within = 0.0;
};
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

struct WelchResult {
  double t = 0.0, df = 0.0, p = 1.0;
};
/// Two-sided unequal-variance t-test.
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

struct Calmest {
  ClassLabel label = ClassLabel::NormalSilence;
  bool tie = false;
};
/// Lowest mean wins. Ties are flagged and resolved in the order NS, SM, M.
Calmest calmest_per_feature(const std::array<double, kNumClasses>& means);

struct Vote {
  std::array<int, kNumClasses> tally{};
  ClassLabel winner = ClassLabel::NormalSilence;
  bool tie = false;
};
Vote majority_vote(const std::vector<ClassLabel>& labels);

struct FeatureGroupSummary {
  std::string feature;
  std::array<double, kNumClasses> mean{}, var{};
  std::array<int, kNumClasses> n{};
  AnovaResult anova;
  // Pairs in table order: SM vs M, SM vs NS, M vs NS.
  std::array<WelchResult, 3> pair;
  std::array<bool, 3> significant{};
  Calmest calmest;
  std::string comparison;  // e.g. "SM < NS > M"
  std::string result;      // "No diff" or the significant pairs
};

struct CalmnessReport {
  std::vector<FeatureGroupSummary> rows;
  Vote vote;
};

inline constexpr double kAlpha = 0.05;

/// One row per named column. values[i] is the column vector across examples.
CalmnessReport calmness_report(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values,
                               const std::vector<ClassLabel>& labels, int jobs = 1);
CalmnessReport calmness_report(const std::vector<features::FeatureRow>& rows, int jobs = 1);

nlohmann::json report_to_json(const CalmnessReport& r);
/// feature, mean_SM, mean_NS, mean_M, comparison, calmest, anova_p, p_SM_M, p_SM_NS, p_M_NS, result
std::string report_to_csv(const CalmnessReport& r);

}  // namespace smsat::stats
