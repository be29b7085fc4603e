#include "smsat/stats.hpp"

#include "smsat/parallel.hpp"
#include "smsat/text.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace smsat::stats {

namespace {

constexpr int kMaxIter = 300;
constexpr double kTol = 1e-12;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTol) return h;
  }
  throw Error("inc_beta: continued fraction did not converge (a=" + text::fmt(a) + ", b=" + text::fmt(b) +
              ", x=" + text::fmt(x) + ")");
}

}  // namespace

double inc_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error("inc_beta: parameters must be positive");
  if (std::isnan(x)) throw Error("inc_beta: x is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_cdf(double x, double df) {
  if (!(df > 0.0)) throw Error("t_cdf: degrees of freedom must be positive");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * inc_beta(0.5 * df, 0.5, df / (df + x * x));
  return x >= 0.0 ? 1.0 - tail : tail;
}

double f_cdf(double x, double d1, double d2) {
  if (!(d1 > 0.0 && d2 > 0.0)) throw Error("f_cdf: degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return inc_beta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2));
}

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_var(const std::vector<double>& v, double mu) {
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("anova: need at least 2 groups");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("anova: every group needs at least 2 samples");
    total += std::accumulate(g.begin(), g.end(), 0.0);
    n += g.size();
  }
  const double grand = total / static_cast<double>(n);
  AnovaResult r;
  for (const auto& g : groups) {
    const double mu = mean_of(g);
    r.ss_between += static_cast<double>(g.size()) * (mu - grand) * (mu - grand);
    for (double x : g) r.ss_within += (x - mu) * (x - mu);
  }
  r.df_between = static_cast<double>(groups.size() - 1);
  r.df_within = static_cast<double>(n - groups.size());
  if (!(r.ss_within > 0.0)) throw Error("anova: zero within-group variance (degenerate input)");
  r.f = (r.ss_between / r.df_between) / (r.ss_within / r.df_within);
  r.p = std::clamp(1.0 - f_cdf(r.f, r.df_between, r.df_within), 0.0, 1.0);
  return r;
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error("welch_t: each sample needs at least 2 values");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_var(a, ma) / static_cast<double>(a.size());
  const double vb = sample_var(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  WelchResult r;
  if (!(se2 > 0.0)) {
    if (ma == mb) throw Error("welch_t: both samples have zero variance and equal means");
    r.t = ma < mb ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p = 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = std::clamp(2.0 * t_cdf(-std::abs(r.t), r.df), 0.0, 1.0);
  return r;
}

namespace {

constexpr std::array<ClassLabel, 3> kTieOrder = {ClassLabel::NormalSilence, ClassLabel::SpiritualMeditation,
                                                 ClassLabel::Music};

}  // namespace

Calmest calmest_per_feature(const std::array<double, kNumClasses>& means) {
  for (double m : means)
    if (!std::isfinite(m)) throw Error("calmest_per_feature: non-finite mean");
  const double lo = *std::min_element(means.begin(), means.end());
  Calmest c;
  int hits = 0;
  for (auto l : kTieOrder)
    if (means[label_index(l)] == lo && hits++ == 0) c.label = l;
  c.tie = hits > 1;
  return c;
}

Vote majority_vote(const std::vector<ClassLabel>& labels) {
  if (labels.empty()) throw Error("majority_vote: no labels");
  Vote v;
  for (auto l : labels) ++v.tally[label_index(l)];
  const int hi = *std::max_element(v.tally.begin(), v.tally.end());
  int hits = 0;
  for (auto l : kTieOrder)
    if (v.tally[label_index(l)] == hi && hits++ == 0) v.winner = l;
  v.tie = hits > 1;
  return v;
}

namespace {

constexpr std::array<std::pair<ClassLabel, ClassLabel>, 3> kPairs = {
    std::pair{ClassLabel::SpiritualMeditation, ClassLabel::Music},
    std::pair{ClassLabel::SpiritualMeditation, ClassLabel::NormalSilence},
    std::pair{ClassLabel::Music, ClassLabel::NormalSilence}};

// Table order of the mean columns.
constexpr std::array<ClassLabel, 3> kColumnOrder = {ClassLabel::SpiritualMeditation, ClassLabel::NormalSilence,
                                                    ClassLabel::Music};

std::string comparison_string(const std::array<double, kNumClasses>& mean) {
  std::string s(label_code(kColumnOrder[0]));
  for (std::size_t i = 1; i < kColumnOrder.size(); ++i) {
    const double a = mean[label_index(kColumnOrder[i - 1])], b = mean[label_index(kColumnOrder[i])];
    s += a < b ? " < " : (a > b ? " > " : " = ");
    s += label_code(kColumnOrder[i]);
  }
  return s;
}

FeatureGroupSummary summarize(const std::string& name, const std::vector<double>& values,
                              const std::vector<ClassLabel>& labels) {
  std::array<std::vector<double>, kNumClasses> groups;
  for (std::size_t i = 0; i < values.size(); ++i) groups[label_index(labels[i])].push_back(values[i]);
  FeatureGroupSummary s;
  s.feature = name;
  for (auto l : kAllLabels) {
    const int k = label_index(l);
    if (groups[k].size() < 2)
      throw Error("calmness: feature " + name + " has " + std::to_string(groups[k].size()) + " samples for class " +
                  std::string(label_name(l)) + ", need at least 2");
    s.n[k] = static_cast<int>(groups[k].size());
    s.mean[k] = mean_of(groups[k]);
    s.var[k] = sample_var(groups[k], s.mean[k]);
  }
  s.anova = anova_oneway({groups[0], groups[1], groups[2]});
  std::string result;
  for (std::size_t i = 0; i < kPairs.size(); ++i) {
    const auto [a, b] = kPairs[i];
    s.pair[i] = welch_t(groups[label_index(a)], groups[label_index(b)]);
    s.significant[i] = s.pair[i].p < kAlpha;
    if (s.significant[i]) {
      if (!result.empty()) result += "; ";
      result += std::string(label_code(a)) + " vs " + std::string(label_code(b)) + " diff";
    }
  }
  s.result = result.empty() ? "No diff" : result;
  s.calmest = calmest_per_feature(s.mean);
  s.comparison = comparison_string(s.mean);
  return s;
}

}  // namespace

CalmnessReport calmness_report(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values,
                               const std::vector<ClassLabel>& labels, int jobs) {
  if (names.size() != values.size()) throw ShapeError("calmness: names and columns differ in count");
  if (names.empty()) throw Error("calmness: no features");
  for (const auto& col : values)
    if (col.size() != labels.size()) throw ShapeError("calmness: column length does not match label count");
  CalmnessReport r;
  r.rows = parallel_map<FeatureGroupSummary>(names.size(), jobs,
                                             [&](std::size_t i) { return summarize(names[i], values[i], labels); });
  std::vector<ClassLabel> picks;
  for (const auto& row : r.rows) picks.push_back(row.calmest.label);
  r.vote = majority_vote(picks);
  return r;
}

CalmnessReport calmness_report(const std::vector<features::FeatureRow>& rows, int jobs) {
  std::vector<std::string> names(features::feature_names().begin(), features::feature_names().end());
  std::vector<std::vector<double>> values(names.size());
  std::vector<ClassLabel> labels;
  for (const auto& r : rows) {
    labels.push_back(r.label);
    for (std::size_t k = 0; k < names.size(); ++k) values[k].push_back(r.x(static_cast<Eigen::Index>(k)));
  }
  return calmness_report(names, values, labels, jobs);
}

nlohmann::json report_to_json(const CalmnessReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.rows) {
    nlohmann::json means, vars, ns;
    for (auto l : kColumnOrder) {
      means[std::string(label_code(l))] = s.mean[label_index(l)];
      vars[std::string(label_code(l))] = s.var[label_index(l)];
      ns[std::string(label_code(l))] = s.n[label_index(l)];
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t i = 0; i < kPairs.size(); ++i)
      pairs.push_back({{"pair", std::string(label_code(kPairs[i].first)) + " vs " + std::string(label_code(kPairs[i].second))},
                       {"t", std::isfinite(s.pair[i].t) ? nlohmann::json(s.pair[i].t) : nlohmann::json(s.pair[i].t > 0 ? "inf" : "-inf")},
                       {"df", s.pair[i].df},
                       {"p", s.pair[i].p},
                       {"significant", s.significant[i]}});
    rows.push_back({{"feature", s.feature},
                    {"mean", means},
                    {"variance", vars},
                    {"n", ns},
                    {"comparison", s.comparison},
                    {"calmest", label_code(s.calmest.label)},
                    {"calmest_tie", s.calmest.tie},
                    {"anova", {{"F", s.anova.f}, {"p", s.anova.p}, {"df_between", s.anova.df_between}, {"df_within", s.anova.df_within}}},
                    {"pairwise", pairs},
                    {"result", s.result}});
  }
  nlohmann::json tally;
  for (auto l : kColumnOrder) tally[std::string(label_code(l))] = r.vote.tally[label_index(l)];
  return {{"alpha", kAlpha},
          {"features", rows},
          {"vote", {{"tally", tally}, {"calmest", label_code(r.vote.winner)}, {"tie", r.vote.tie}}}};
}

std::string report_to_csv(const CalmnessReport& r) {
  text::CsvWriter csv({"feature", "mean_SM", "mean_NS", "mean_M", "comparison", "calmest", "anova_p", "p_SM_M", "p_SM_NS",
                       "p_M_NS", "result"});
  for (const auto& s : r.rows) {
    std::string calm(label_code(s.calmest.label));
    if (s.calmest.tie) calm += " (tie)";
    csv.row({s.feature, text::fmt(s.mean[label_index(ClassLabel::SpiritualMeditation)]),
             text::fmt(s.mean[label_index(ClassLabel::NormalSilence)]), text::fmt(s.mean[label_index(ClassLabel::Music)]),
             s.comparison, calm, text::fmt(s.anova.p), text::fmt(s.pair[0].p), text::fmt(s.pair[1].p),
             text::fmt(s.pair[2].p), s.result});
  }
  return csv.str();
}

}  // namespace smsat::stats
