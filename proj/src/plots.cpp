#include "smsat/plots.hpp"

#include "smsat/svg.hpp"

#include <charconv>
#include <map>

namespace smsat::plots {

namespace {

double number(const std::string& cell, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw Error("malformed " + what + ": '" + cell + "' is not a number");
  return v;
}

}  // namespace

std::string history_svg(const text::CsvTable& t, const std::string& title) {
  const int epoch = t.column("epoch");
  if (epoch < 0) throw Error("malformed history: no epoch column");
  if (t.rows.empty()) throw Error("malformed history: no rows");
  std::vector<std::string> charts;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (static_cast<int>(c) == epoch || t.header[c] == "seconds") continue;
    svg::Series s{t.header[c], {}, {}};
    for (const auto& r : t.rows) {
      s.x.push_back(number(r[epoch], "history"));
      s.y.push_back(number(r[c], "history"));
    }
    charts.push_back(svg::line_chart({s}, {title + ": " + t.header[c], "epoch", t.header[c]}));
  }
  if (charts.empty()) throw Error("malformed history: no metric columns");
  return charts.size() == 1 ? charts[0] : svg::stack(charts);
}

std::string scatter_table_svg(const text::CsvTable& t, const std::string& title) {
  const int label = t.column("label"), x = t.column("x"), y = t.column("y");
  if (label < 0 || x < 0 || y < 0) throw Error("malformed scatter table: need label, x and y columns");
  std::map<std::string, svg::ScatterGroup> groups;
  for (const auto& r : t.rows) {
    auto& g = groups[r[label]];
    g.name = r[label];
    g.x.push_back(number(r[x], "scatter table"));
    g.y.push_back(number(r[y], "scatter table"));
  }
  std::vector<svg::ScatterGroup> out;
  for (auto& [name, g] : groups) {
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
      cx += g.x[i];
      cy += g.y[i];
    }
    g.centroid = std::make_pair(cx / static_cast<double>(g.x.size()), cy / static_cast<double>(g.y.size()));
    out.push_back(std::move(g));
  }
  return svg::scatter(out, {title, "dim 1", "dim 2"});
}

}  // namespace smsat::plots
