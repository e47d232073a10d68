#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpi {

/// A learning-curve panel: x in training steps, one mean +- std series for
/// the measured return, one for the critic estimate.
struct PlotSeries {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std_dev;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Scale {
  double x_min, x_max, y_min, y_max;
  static constexpr double W = 640, H = 420, ML = 62, MR = 16, MT = 34, MB = 46;
  double px(double x) const {
    return ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
  }
  double py(double y) const {
    return H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);
  }
};

inline std::string polyline(const Scale& sc, const PlotSeries& s, const char* stroke,
                            bool dashed) {
  std::string d;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    d += i == 0 ? "M" : "L";
    d += svg_num(sc.px(s.x[i])) + " " + svg_num(sc.py(s.mean[i])) + " ";
  }
  std::string out = "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + stroke +
                    "\" stroke-width=\"1.8\"";
  if (dashed) out += " stroke-dasharray=\"7 4\"";
  out += "/>\n";
  return out;
}

inline std::string band(const Scale& sc, const PlotSeries& s, const char* fill) {
  std::string d;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    d += i == 0 ? "M" : "L";
    d += svg_num(sc.px(s.x[i])) + " " + svg_num(sc.py(s.mean[i] + s.std_dev[i])) + " ";
  }
  for (std::size_t i = s.x.size(); i-- > 0;)
    d += "L" + svg_num(sc.px(s.x[i])) + " " + svg_num(sc.py(s.mean[i] - s.std_dev[i])) + " ";
  return "<path d=\"" + d + "Z\" fill=\"" + fill + "\" stroke=\"none\"/>\n";
}

}  // namespace detail

/// Writes a self-contained SVG panel: shaded +-1 std band and solid line for
/// the measured return, dashed line for the critic estimate.
inline void write_learning_curve_svg(const std::string& path, const std::string& title,
                                     const PlotSeries& returns, const PlotSeries& critic) {
  using detail::Scale;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_learning_curve_svg: cannot open " + path);

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
         "viewBox=\"0 0 640 420\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n"
      << "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";

  if (returns.x.empty()) {
    out << "<text x=\"320\" y=\"210\" text-anchor=\"middle\" fill=\"#888\">"
           "missing records</text>\n</svg>\n";
    return;
  }

  Scale sc{returns.x.front(), returns.x.back(), 0.0, 0.0};
  double y_min = 1e300, y_max = -1e300;
  auto widen = [&](const PlotSeries& s) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      y_min = std::min(y_min, s.mean[i] - s.std_dev[i]);
      y_max = std::max(y_max, s.mean[i] + s.std_dev[i]);
    }
  };
  widen(returns);
  if (!critic.x.empty()) widen(critic);
  if (y_max <= y_min) y_max = y_min + 1.0;
  double pad = 0.05 * (y_max - y_min);
  sc.y_min = y_min - pad;
  sc.y_max = y_max + pad;
  if (sc.x_max <= sc.x_min) sc.x_max = sc.x_min + 1.0;

  // axes and ticks
  out << "<line x1=\"" << Scale::ML << "\" y1=\"" << 420 - Scale::MB << "\" x2=\""
      << 640 - Scale::MR << "\" y2=\"" << 420 - Scale::MB << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << Scale::ML << "\" y1=\"" << Scale::MT << "\" x2=\"" << Scale::ML
      << "\" y2=\"" << 420 - Scale::MB << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double xv = sc.x_min + (sc.x_max - sc.x_min) * i / 5.0;
    double yv = sc.y_min + (sc.y_max - sc.y_min) * i / 5.0;
    out << "<text x=\"" << detail::svg_num(sc.px(xv)) << "\" y=\"" << 420 - Scale::MB + 16
        << "\" text-anchor=\"middle\">" << detail::svg_num(xv) << "</text>\n"
        << "<text x=\"" << Scale::ML - 6 << "\" y=\"" << detail::svg_num(sc.py(yv) + 4)
        << "\" text-anchor=\"end\">" << detail::svg_num(yv) << "</text>\n";
  }
  out << "<text x=\"" << (Scale::ML + 640 - Scale::MR) / 2 << "\" y=\"412\" "
         "text-anchor=\"middle\">training step</text>\n"
      << "<text x=\"14\" y=\"" << (Scale::MT + 420 - Scale::MB) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << (Scale::MT + 420 - Scale::MB) / 2 << ")\">discounted return</text>\n";

  out << detail::band(sc, returns, "rgba(60,120,216,0.18)");
  out << detail::polyline(sc, returns, "#3c78d8", false);
  if (!critic.x.empty()) out << detail::polyline(sc, critic, "#cc4125", true);

  out << "<line x1=\"480\" y1=\"40\" x2=\"510\" y2=\"40\" stroke=\"#3c78d8\" "
         "stroke-width=\"1.8\"/><text x=\"515\" y=\"44\">return</text>\n"
      << "<line x1=\"480\" y1=\"58\" x2=\"510\" y2=\"58\" stroke=\"#cc4125\" "
         "stroke-width=\"1.8\" stroke-dasharray=\"7 4\"/><text x=\"515\" y=\"62\">"
         "critic estimate</text>\n";
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write_learning_curve_svg: write failed for " + path);
}

}  // namespace rpi
