#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smsat::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 360;
};

/// One polyline per series, shared axes, legend in the top-right corner.
std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt);

struct ScatterGroup {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::pair<double, double>> centroid;
};

/// Points per group with an optional larger centroid marker each.
std::string scatter(const std::vector<ScatterGroup>& groups, const ChartOptions& opt);

/// Stacks complete <svg> documents vertically into one document.
std::string stack(const std::vector<std::string>& charts);

}  // namespace smsat::svg
