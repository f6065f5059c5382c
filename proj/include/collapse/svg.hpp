#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "collapse/gmm.hpp"
#include "collapse/ledger.hpp"
#include "collapse/observability.hpp"

namespace collapse {

/// Minimal SVG writer: fixed-size canvas, elements appended in draw order.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& extra_attrs = "");
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double width = 1.5);
  void circle(double cx, double cy, double r, const std::string& fill);
  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& anchor = "start", const std::string& fill = "#222222");
  void comment(const std::string& s);

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  double width_, height_;
  std::string body_;
};

/// Dark-to-bright ramp; unit clamped to [0, 1].
std::string heat_color(double unit);

/// Log-scale unit position of |v| within [lo, hi]; nonpositive v maps to 0.
double heat_unit(double v, double lo, double hi);

/// Color range rule shared by the SVG writer and consistency checks:
/// hi = max |cell|, lo = hi * 1e-4 (1e-8..1 fallback when all cells vanish).
std::pair<double, double> heat_range(const Mat& contrib);

/// Lower-triangular contribution matrix as a colored grid, generations on
/// both axes, log-scale color legend. Cells carry data-k / data-n attributes.
void write_heatmap_svg(const std::filesystem::path& path, const Mat& contrib);

/// Mean eta per perturbation class with across-seed whiskers.
void write_probe_svg(const std::filesystem::path& path, const std::vector<ProbeRow>& rows);

/// Divergence trajectory per seed, log y.
void write_divergence_svg(const std::filesystem::path& path,
                          const std::vector<GenerationRecord>& records);

/// Seed-averaged divergences against their bound curves, log y.
void write_bounds_svg(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& records);

}  // namespace collapse
