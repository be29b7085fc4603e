#include "smsat/svg.hpp"

#include "smsat/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace smsat::svg {

namespace {

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

constexpr int kLeft = 64, kRight = 16, kTop = 32, kBottom = 44;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return text::fmt_fixed(v, 2); }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(1e-6, std::abs(lo) * 0.05);
      lo -= pad;
      hi += pad;
    }
  }
};

struct Frame {
  Range xr, yr;
  int w, h;
  double px(double x) const { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (w - kLeft - kRight); }
  double py(double y) const { return h - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (h - kTop - kBottom); }
};

std::string open(const ChartOptions& opt) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
                  std::to_string(opt.height) + "\" viewBox=\"0 0 " + std::to_string(opt.width) + " " +
                  std::to_string(opt.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(opt.width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
       esc(opt.title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const ChartOptions& opt) {
  std::string s;
  const double x0 = kLeft, x1 = f.w - kRight, y0 = f.h - kBottom, y1 = kTop;
  s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" + num(y0 - y1) +
       "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 4.0;
    const double yv = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(y0 + 14) + "\" text-anchor=\"middle\">" + text::fmt_fixed(xv, 3) +
         "</text>\n";
    s += "<text x=\"" + num(x0 - 4) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + text::fmt_fixed(yv, 3) +
         "</text>\n";
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(f.h - 8.0) + "\" text-anchor=\"middle\">" + esc(opt.x_label) +
       "</text>\n";
  s += "<text x=\"14\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num((y0 + y1) / 2) + ")\">" + esc(opt.y_label) + "</text>\n";
  return s;
}

std::string legend(const std::vector<std::string>& names, int w) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 12.0 + 14.0 * static_cast<double>(i);
    s += "<g class=\"legend\"><rect x=\"" + num(w - kRight - 110.0) + "\" y=\"" + num(y - 8) +
         "\" width=\"10\" height=\"10\" fill=\"" + kPalette[i % kPalette.size()] + "\"/><text x=\"" +
         num(w - kRight - 96.0) + "\" y=\"" + num(y + 1) + "\">" + esc(names[i]) + "</text></g>\n";
  }
  return s;
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  Frame f{{}, {}, opt.width, opt.height};
  for (const auto& s : series) {
    for (double v : s.x) f.xr.add(v);
    for (double v : s.y) f.yr.add(v);
  }
  f.xr.finish();
  f.yr.finish();
  std::string out = open(opt) + axes(f, opt);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    names.push_back(s.name);
    std::string pts;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(f.px(s.x[k])) + "," + num(f.py(s.y[k]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[i % kPalette.size()]) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  }
  out += legend(names, opt.width);
  out += "</svg>\n";
  return out;
}

std::string scatter(const std::vector<ScatterGroup>& groups, const ChartOptions& opt) {
  Frame f{{}, {}, opt.width, opt.height};
  for (const auto& g : groups) {
    for (double v : g.x) f.xr.add(v);
    for (double v : g.y) f.yr.add(v);
  }
  f.xr.finish();
  f.yr.finish();
  std::string out = open(opt) + axes(f, opt);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    const std::string color = kPalette[i % kPalette.size()];
    names.push_back(g.name);
    for (std::size_t k = 0; k < std::min(g.x.size(), g.y.size()); ++k)
      out += "<circle cx=\"" + num(f.px(g.x[k])) + "\" cy=\"" + num(f.py(g.y[k])) + "\" r=\"3\" fill=\"" + color +
             "\" fill-opacity=\"0.7\"/>\n";
    if (g.centroid)
      out += "<path class=\"centroid\" d=\"M" + num(f.px(g.centroid->first) - 7) + "," + num(f.py(g.centroid->second)) +
             " h14 M" + num(f.px(g.centroid->first)) + "," + num(f.py(g.centroid->second) - 7) +
             " v14\" stroke=\"black\" stroke-width=\"3\"/>\n";
  }
  out += legend(names, opt.width);
  out += "</svg>\n";
  return out;
}

std::string stack(const std::vector<std::string>& charts) {
  auto attr = [](const std::string& doc, const std::string& name) {
    const auto pos = doc.find(name + "=\"");
    if (pos == std::string::npos) return 0;
    return std::stoi(doc.substr(pos + name.size() + 2));
  };
  int width = 0, height = 0;
  for (const auto& c : charts) {
    width = std::max(width, attr(c, "width"));
    height += attr(c, "height");
  }
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\">\n";
  int y = 0;
  for (const auto& c : charts) {
    std::string inner = c;
    const auto tag_end = inner.find('>');
    inner.insert(tag_end, " y=\"" + std::to_string(y) + "\"");
    out += inner;
    y += attr(c, "height");
  }
  out += "</svg>\n";
  return out;
}

}  // namespace smsat::svg
