#include "collapse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace collapse {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kFont = "font-family=\"ui-monospace,Menlo,monospace\"";

const std::vector<std::string>& series_palette() {
  static const std::vector<std::string> p = {"#3b6fb6", "#c6502e", "#3f8f4e", "#8655b5",
                                             "#b58900", "#4aa3a3", "#a34a72", "#666666"};
  return p;
}

struct Frame {
  double x0, y0, x1, y1;  // plot rectangle in canvas coordinates (y grows down)
  double lo_x, hi_x, lo_y, hi_y;
  bool log_y = false;

  double px(double x) const { return x0 + (x - lo_x) / (hi_x - lo_x) * (x1 - x0); }
  double py(double y) const {
    const double v = log_y ? std::log10(y) : y;
    const double lo = log_y ? std::log10(lo_y) : lo_y;
    const double hi = log_y ? std::log10(hi_y) : hi_y;
    return y1 - (v - lo) / (hi - lo) * (y1 - y0);
  }
};

void draw_axes(SvgCanvas& svg, const Frame& f, const std::string& x_label,
               const std::string& y_label) {
  svg.line(f.x0, f.y1, f.x1, f.y1, "#444444", 1.0);
  svg.line(f.x0, f.y0, f.x0, f.y1, "#444444", 1.0);
  svg.text((f.x0 + f.x1) / 2, f.y1 + 32, x_label, 12, "middle");
  svg.text(f.x0 - 44, f.y0 - 6, y_label, 12, "start");

  // x ticks on integers when the span is small, else ~6 even steps
  const double span = f.hi_x - f.lo_x;
  double step = span <= 14 ? 1.0 : std::ceil(span / 6.0);
  for (double x = std::ceil(f.lo_x); x <= f.hi_x + 1e-9; x += step) {
    svg.line(f.px(x), f.y1, f.px(x), f.y1 + 4, "#444444", 1.0);
    svg.text(f.px(x), f.y1 + 16, num(x), 10, "middle");
  }
  if (f.log_y) {
    const int d0 = static_cast<int>(std::floor(std::log10(f.lo_y)));
    const int d1 = static_cast<int>(std::ceil(std::log10(f.hi_y)));
    for (int d = d0; d <= d1; ++d) {
      const double y = std::pow(10.0, d);
      if (y < f.lo_y || y > f.hi_y) continue;
      svg.line(f.x0 - 4, f.py(y), f.x0, f.py(y), "#444444", 1.0);
      svg.text(f.x0 - 6, f.py(y) + 3, "1e" + std::to_string(d), 10, "end");
      svg.line(f.x0, f.py(y), f.x1, f.py(y), "#e3e3e3", 0.5);
    }
  } else {
    const double dy = (f.hi_y - f.lo_y) / 4.0;
    for (int k = 0; k <= 4; ++k) {
      const double y = f.lo_y + k * dy;
      svg.line(f.x0 - 4, f.py(y), f.x0, f.py(y), "#444444", 1.0);
      svg.text(f.x0 - 6, f.py(y) + 3, num(y), 10, "end");
      svg.line(f.x0, f.py(y), f.x1, f.py(y), "#e3e3e3", 0.5);
    }
  }
}

}  // namespace

SvgCanvas::SvgCanvas(double width, double height) : width_(width), height_(height) {
  body_ += "<rect x=\"0\" y=\"0\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
           "\" fill=\"#ffffff\"/>\n";
}

void SvgCanvas::rect(double x, double y, double w, double h, const std::string& fill,
                     const std::string& extra_attrs) {
  body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
           "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"";
  if (!extra_attrs.empty()) body_ += " " + extra_attrs;
  body_ += "/>\n";
}

void SvgCanvas::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                     double width) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
           num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& stroke, double width) {
  if (pts.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
           "\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) body_ += ' ';
    body_ += num(pts[i].first) + "," + num(pts[i].second);
  }
  body_ += "\"/>\n";
}

void SvgCanvas::circle(double cx, double cy, double r, const std::string& fill) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) +
           "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::text(double x, double y, const std::string& s, double size,
                     const std::string& anchor, const std::string& fill) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) + "\" " +
           kFont + " text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" + escape(s) +
           "</text>\n";
}

void SvgCanvas::comment(const std::string& s) { body_ += "<!-- " + escape(s) + " -->\n"; }

std::string SvgCanvas::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" +
         num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n" + body_ +
         "</svg>\n";
}

void SvgCanvas::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("svg: cannot open " + path.string());
  f << str();
}

std::string heat_color(double unit) {
  // four-stop ramp, dark navy -> purple -> orange -> pale yellow
  static const double stops[4][3] = {
      {11, 10, 51}, {122, 46, 168}, {230, 107, 78}, {248, 230, 122}};
  const double u = std::clamp(unit, 0.0, 1.0) * 3.0;
  const int s = std::min(2, static_cast<int>(u));
  const double t = u - s;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[s][0] + t * (stops[s + 1][0] - stops[s][0]))),
                static_cast<int>(std::lround(stops[s][1] + t * (stops[s + 1][1] - stops[s][1]))),
                static_cast<int>(std::lround(stops[s][2] + t * (stops[s + 1][2] - stops[s][2]))));
  return buf;
}

double heat_unit(double v, double lo, double hi) {
  const double a = std::abs(v);
  if (!(a > lo)) return 0.0;
  if (a >= hi) return 1.0;
  return (std::log(a) - std::log(lo)) / (std::log(hi) - std::log(lo));
}

std::pair<double, double> heat_range(const Mat& contrib) {
  double hi = 0.0;
  for (int64_t k = 0; k < contrib.rows(); ++k)
    for (int64_t n = 0; n < contrib.cols(); ++n) {
      const double v = contrib(k, n);
      if (std::isfinite(v)) hi = std::max(hi, std::abs(v));
    }
  if (hi <= 0.0) return {1e-8, 1.0};
  return {hi * 1e-4, hi};
}

void write_heatmap_svg(const std::filesystem::path& path, const Mat& contrib) {
  const auto n_gen = static_cast<int>(contrib.rows());
  const double cell = std::max(18.0, std::min(44.0, 360.0 / std::max(1, n_gen)));
  const double x0 = 64, y0 = 28;
  const double grid = cell * n_gen;
  SvgCanvas svg(x0 + grid + 96, y0 + grid + 56);
  const auto [lo, hi] = heat_range(contrib);
  svg.comment("color range |v| in [" + num(lo) + ", " + num(hi) + "], log scale");

  for (int k = 1; k <= n_gen; ++k) {
    for (int n = k; n <= n_gen; ++n) {
      const double v = contrib(k - 1, n - 1);
      if (!std::isfinite(v)) continue;
      const std::string fill = heat_color(heat_unit(v, lo, hi));
      svg.rect(x0 + (n - 1) * cell, y0 + (k - 1) * cell, cell - 1, cell - 1, fill,
               "data-k=\"" + std::to_string(k) + "\" data-n=\"" + std::to_string(n) + "\"");
    }
  }
  for (int k = 1; k <= n_gen; ++k) {
    svg.text(x0 - 8, y0 + (k - 0.5) * cell + 4, std::to_string(k), 10, "end");
    svg.text(x0 + (k - 0.5) * cell, y0 + grid + 16, std::to_string(k), 10, "middle");
  }
  svg.text(x0 + grid / 2, y0 + grid + 40, "horizon generation n", 12, "middle");
  svg.text(x0 - 52, y0 - 10, "ablated generation k", 12, "start");

  // legend: vertical bar, log-scale labels
  const double lx = x0 + grid + 24, lw = 16, lh = grid;
  const int steps = 64;
  for (int s = 0; s < steps; ++s) {
    const double u = 1.0 - static_cast<double>(s) / (steps - 1);
    svg.rect(lx, y0 + s * lh / steps, lw, lh / steps + 0.5, heat_color(u));
  }
  svg.text(lx + lw + 4, y0 + 10, num(hi), 10, "start");
  svg.text(lx + lw + 4, y0 + lh, num(lo), 10, "start");
  svg.text(lx, y0 - 10, "|contribution|", 10, "start");
  svg.write(path);
}

void write_probe_svg(const std::filesystem::path& path, const std::vector<ProbeRow>& rows) {
  std::map<std::string, std::vector<double>> by_class;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!by_class.count(r.perturbation)) order.push_back(r.perturbation);
    by_class[r.perturbation].push_back(r.eta.eta);
  }
  const auto n_bars = static_cast<int>(order.size());
  const double x0 = 64, y0 = 24, plot_w = std::max(240, 90 * n_bars), plot_h = 220;
  SvgCanvas svg(x0 + plot_w + 24, y0 + plot_h + 56);
  Frame f{x0, y0, x0 + plot_w, y0 + plot_h, 0.0, static_cast<double>(n_bars), 0.0, 1.0, false};
  draw_axes(svg, f, "perturbation class", "eta");

  for (int b = 0; b < n_bars; ++b) {
    const auto& vals = by_class[order[b]];
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double sd = 0.0;
    for (double v : vals) sd += (v - mean) * (v - mean);
    const double se =
        vals.size() > 1 ? std::sqrt(sd / (static_cast<double>(vals.size()) - 1.0) /
                                    static_cast<double>(vals.size()))
                        : 0.0;
    const double cx = f.px(b + 0.5), half = plot_w / n_bars * 0.28;
    svg.rect(cx - half, f.py(mean), 2 * half, f.y1 - f.py(mean),
             series_palette()[b % series_palette().size()]);
    svg.line(cx, f.py(std::min(1.0, mean + se)), cx, f.py(std::max(0.0, mean - se)), "#222222",
             1.5);
    for (double v : vals)
      svg.circle(cx + half + 6, f.py(v), 2.2, "#555555");
    svg.text(cx, f.y1 + 16, order[b], 10, "middle");
  }
  svg.write(path);
}

namespace {

// Series of (generation, value) pairs -> polyline chart with legend, log y.
void write_series_chart(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::map<int, double>>>& series,
                        const std::string& y_label) {
  int lo_g = 0, hi_g = 1;
  double hi_v = 0.0;
  bool any = false;
  for (const auto& [name, pts] : series)
    for (const auto& [g, v] : pts) {
      if (!any) {
        lo_g = hi_g = g;
        any = true;
      }
      lo_g = std::min(lo_g, g);
      hi_g = std::max(hi_g, g);
      hi_v = std::max(hi_v, v);
    }
  if (!any || hi_v <= 0.0) hi_v = 1.0;
  const double floor_v = hi_v * 1e-6;

  const double x0 = 64, y0 = 20, plot_w = 440, plot_h = 260;
  SvgCanvas svg(x0 + plot_w + 170, y0 + plot_h + 56);
  Frame f{x0,      y0,          x0 + plot_w, y0 + plot_h, static_cast<double>(lo_g),
          static_cast<double>(std::max(hi_g, lo_g + 1)), floor_v, hi_v * 1.5};
  f.log_y = true;
  draw_axes(svg, f, "generation", y_label);

  int idx = 0;
  for (const auto& [name, pts] : series) {
    const auto& color = series_palette()[idx % series_palette().size()];
    std::vector<std::pair<double, double>> poly;
    for (const auto& [g, v] : pts)
      poly.emplace_back(f.px(g), f.py(std::clamp(v, floor_v, hi_v * 1.5)));
    svg.polyline(poly, color);
    svg.line(f.x1 + 12, y0 + 14 + 16 * idx, f.x1 + 30, y0 + 14 + 16 * idx, color, 2.0);
    svg.text(f.x1 + 34, y0 + 18 + 16 * idx, name, 10, "start");
    ++idx;
  }
  svg.write(path);
}

}  // namespace

void write_divergence_svg(const std::filesystem::path& path,
                          const std::vector<GenerationRecord>& records) {
  std::map<uint64_t, std::map<int, double>> per_seed;
  for (const auto& r : records) per_seed[r.seed][r.generation] = r.d_chi2;
  std::vector<std::pair<std::string, std::map<int, double>>> series;
  for (const auto& [seed, pts] : per_seed)
    series.emplace_back("seed " + std::to_string(seed), pts);
  write_series_chart(path, series, "chi2 vs data");
}

void write_bounds_svg(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& records) {
  std::map<int, std::vector<const GenerationRecord*>> per_gen;
  for (const auto& r : records) per_gen[r.generation].push_back(&r);
  auto mean_of = [&](auto&& get) {
    std::map<int, double> out;
    for (const auto& [g, rows] : per_gen) {
      double m = 0.0;
      for (const auto* r : rows) m += get(*r);
      out[g] = m / static_cast<double>(rows.size());
    }
    return out;
  };
  std::vector<std::pair<std::string, std::map<int, double>>> series;
  series.emplace_back("chi2(gen||blend)", mean_of([](const GenerationRecord& r) { return r.i_chi2; }));
  series.emplace_back("KL(gen||blend)", mean_of([](const GenerationRecord& r) { return r.i_kl; }));
  series.emplace_back("eps_hat^2 / 2", mean_of([](const GenerationRecord& r) { return 0.5 * r.eps_hat_sq; }));
  series.emplace_back("eta eps*^2 / 8", mean_of([](const GenerationRecord& r) { return 0.125 * r.eta * r.eps_star_sq; }));
  series.emplace_back("eta eps*^2 / 4", mean_of([](const GenerationRecord& r) { return 0.25 * r.eta * r.eps_star_sq; }));
  series.emplace_back("4 eps*^2", mean_of([](const GenerationRecord& r) { return 4.0 * r.eps_star_sq; }));
  write_series_chart(path, series, "divergence / bound");
}

}  // namespace collapse
