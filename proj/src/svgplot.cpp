#include "rnflow/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rnflow/errors.hpp"

namespace rnflow {

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Bounds {
  double lo = -1.0;
  double hi = 1.0;
};

// Expands to a slightly padded range; collapses to a unit window around the
// value when the data has no extent.
Bounds padded(double lo, double hi) {
  if (!(lo <= hi)) return Bounds{};
  if (hi - lo < 1e-12) return Bounds{lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return Bounds{lo - pad, hi + pad};
}

// Chooses a tick spacing of the form {1,2,5}*10^k giving 4..9 ticks.
double tick_step(const Bounds& b) {
  const double span = b.hi - b.lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

struct Axis {
  Bounds bounds;
  double pix_lo = 0.0;
  double pix_hi = 0.0;

  double to_pix(double v) const {
    const double u = (v - bounds.lo) / (bounds.hi - bounds.lo);
    return pix_lo + u * (pix_hi - pix_lo);
  }
};

void draw_frame(std::ostringstream& out, double x0, double y0, double x1, double y1) {
  out << "<rect x=\"" << fmt2(x0) << "\" y=\"" << fmt2(y1) << "\" width=\""
      << fmt2(x1 - x0) << "\" height=\"" << fmt2(y0 - y1)
      << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
}

void draw_x_ticks(std::ostringstream& out, const Axis& ax, double y_base) {
  const double step = tick_step(ax.bounds);
  const double first = std::ceil(ax.bounds.lo / step) * step;
  for (double v = first; v <= ax.bounds.hi + 1e-9 * step; v += step) {
    const double px = ax.to_pix(v);
    out << "<line x1=\"" << fmt2(px) << "\" y1=\"" << fmt2(y_base) << "\" x2=\""
        << fmt2(px) << "\" y2=\"" << fmt2(y_base + 5.0)
        << "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt2(px) << "\" y=\"" << fmt2(y_base + 18.0)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\""
           " fill=\"#333333\">"
        << fmtg(v + 0.0) << "</text>\n";
  }
}

void draw_y_ticks(std::ostringstream& out, const Axis& ax, double x_base) {
  const double step = tick_step(ax.bounds);
  const double first = std::ceil(ax.bounds.lo / step) * step;
  for (double v = first; v <= ax.bounds.hi + 1e-9 * step; v += step) {
    const double py = ax.to_pix(v);
    out << "<line x1=\"" << fmt2(x_base - 5.0) << "\" y1=\"" << fmt2(py)
        << "\" x2=\"" << fmt2(x_base) << "\" y2=\"" << fmt2(py)
        << "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt2(x_base - 8.0) << "\" y=\"" << fmt2(py + 4.0)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\""
           " fill=\"#333333\">"
        << fmtg(v + 0.0) << "</text>\n";
  }
}

void draw_points(std::ostringstream& out, const Tensor& pts, const Axis& x_axis,
                 const Axis& y_axis, const char* fill, const char* opacity) {
  const size_t n = pts.rows();
  for (size_t i = 0; i < n; ++i) {
    out << "<circle cx=\"" << fmt2(x_axis.to_pix(pts.at(i, 0))) << "\" cy=\""
        << fmt2(y_axis.to_pix(pts.at(i, 1))) << "\" r=\"2\" fill=\"" << fill
        << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }
}

}  // namespace

std::string scatter_svg(const Tensor& generated, const Tensor* reference) {
  if (generated.numel() > 0 && generated.cols() != 2) {
    throw ShapeError("scatter_svg: generated points must be 2-D");
  }
  if (reference != nullptr && reference->numel() > 0 && reference->cols() != 2) {
    throw ShapeError("scatter_svg: reference points must be 2-D");
  }

  const double width = 640.0;
  const double height = 640.0;
  const double margin_left = 60.0;
  const double margin_right = 20.0;
  const double margin_top = 30.0;
  const double margin_bottom = 50.0;

  double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
  bool any = false;
  auto absorb = [&](const Tensor& pts) {
    for (size_t i = 0; i < pts.rows(); ++i) {
      const double px = pts.at(i, 0);
      const double py = pts.at(i, 1);
      if (!any) {
        lo_x = hi_x = px;
        lo_y = hi_y = py;
        any = true;
      } else {
        lo_x = std::min(lo_x, px);
        hi_x = std::max(hi_x, px);
        lo_y = std::min(lo_y, py);
        hi_y = std::max(hi_y, py);
      }
    }
  };
  if (generated.numel() > 0) absorb(generated);
  if (reference != nullptr && reference->numel() > 0) absorb(*reference);

  Axis x_axis;
  Axis y_axis;
  x_axis.bounds = any ? padded(lo_x, hi_x) : Bounds{};
  y_axis.bounds = any ? padded(lo_y, hi_y) : Bounds{};
  x_axis.pix_lo = margin_left;
  x_axis.pix_hi = width - margin_right;
  // SVG y grows downward; map data-low to the bottom of the plot area.
  y_axis.pix_lo = height - margin_bottom;
  y_axis.pix_hi = margin_top;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\""
         " viewBox=\"0 0 640 640\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
  draw_frame(out, margin_left, height - margin_bottom, width - margin_right, margin_top);
  draw_x_ticks(out, x_axis, height - margin_bottom);
  draw_y_ticks(out, y_axis, margin_left);

  if (reference != nullptr && reference->numel() > 0) {
    draw_points(out, *reference, x_axis, y_axis, "#999999", "0.5");
  }
  if (generated.numel() > 0) {
    draw_points(out, generated, x_axis, y_axis, "#3366cc", "0.7");
  }

  if (reference != nullptr && reference->numel() > 0) {
    out << "<circle cx=\"" << fmt2(margin_left + 10.0) << "\" cy=\"16\" r=\"4\""
           " fill=\"#999999\" fill-opacity=\"0.5\"/>\n";
    out << "<text x=\"" << fmt2(margin_left + 20.0)
        << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\""
           " fill=\"#333333\">reference</text>\n";
    out << "<circle cx=\"" << fmt2(margin_left + 110.0) << "\" cy=\"16\" r=\"4\""
           " fill=\"#3366cc\" fill-opacity=\"0.7\"/>\n";
    out << "<text x=\"" << fmt2(margin_left + 120.0)
        << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\""
           " fill=\"#333333\">generated</text>\n";
  }

  out << "</svg>\n";
  return out.str();
}

std::string ledger_chart_svg(const std::vector<double>& per_step_magnitude,
                             const std::vector<double>& cumulative_magnitude) {
  if (per_step_magnitude.size() != cumulative_magnitude.size()) {
    throw ShapeError("ledger_chart_svg: series must have equal length");
  }

  const double width = 640.0;
  const double height = 400.0;
  const double margin_left = 70.0;
  const double margin_right = 20.0;
  const double margin_top = 30.0;
  const double margin_bottom = 50.0;

  const size_t n = per_step_magnitude.size();
  double hi = 0.0;
  for (double v : per_step_magnitude) hi = std::max(hi, v);
  for (double v : cumulative_magnitude) hi = std::max(hi, v);

  Axis x_axis;
  Axis y_axis;
  x_axis.bounds = n > 1 ? Bounds{0.0, static_cast<double>(n - 1)} : Bounds{0.0, 1.0};
  y_axis.bounds = hi > 0.0 ? padded(0.0, hi) : Bounds{0.0, 1.0};
  y_axis.bounds.lo = 0.0;
  x_axis.pix_lo = margin_left;
  x_axis.pix_hi = width - margin_right;
  y_axis.pix_lo = height - margin_bottom;
  y_axis.pix_hi = margin_top;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\""
         " viewBox=\"0 0 640 400\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
  draw_frame(out, margin_left, height - margin_bottom, width - margin_right, margin_top);
  draw_x_ticks(out, x_axis, height - margin_bottom);
  draw_y_ticks(out, y_axis, margin_left);

  auto polyline = [&](const std::vector<double>& series, const char* stroke) {
    if (series.empty()) return;
    out << "<polyline fill=\"none\" stroke=\"" << stroke
        << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < series.size(); ++i) {
      if (i > 0) out << ' ';
      out << fmt2(x_axis.to_pix(static_cast<double>(i))) << ','
          << fmt2(y_axis.to_pix(series[i]));
    }
    out << "\"/>\n";
  };
  polyline(per_step_magnitude, "#3366cc");
  polyline(cumulative_magnitude, "#cc3333");

  out << "<text x=\"" << fmt2(margin_left + 10.0)
      << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\""
         " fill=\"#3366cc\">per-step |z| dt</text>\n";
  out << "<text x=\"" << fmt2(margin_left + 130.0)
      << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\""
         " fill=\"#cc3333\">cumulative |sum z dt|</text>\n";
  out << "<text x=\"" << fmt2((margin_left + width - margin_right) / 2.0) << "\" y=\""
      << fmt2(height - 12.0)
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\""
         " fill=\"#333333\">integration step</text>\n";

  out << "</svg>\n";
  return out.str();
}

}  // namespace rnflow
