#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "acmg/analysis.hpp"
#include "acmg/error.hpp"

namespace acmg {

namespace {

constexpr double kWidth = 800.0;
constexpr double kMargin = 50.0;
constexpr double kPlotW = kWidth - 2 * kMargin;
constexpr double kCurveTop = 40.0;
constexpr double kCurveH = 200.0;
constexpr double kHeatTop = 300.0;
constexpr double kHeatH = 40.0;
constexpr double kHeight = 380.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
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

// White to dark blue for gate values in [0, 1].
std::string heat_color(double g) {
  const double t = std::clamp(g, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - t * (255 - 8)));
  const int gr = static_cast<int>(std::lround(255 - t * (255 - 48)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, gr, b);
  return buf;
}

double frame_x(std::size_t i, std::size_t n) {
  return n <= 1 ? kMargin + kPlotW / 2 : kMargin + kPlotW * static_cast<double>(i) / static_cast<double>(n - 1);
}

std::string polyline(const std::vector<double>& ys01, const char* cls, const char* style) {
  std::string pts;
  for (std::size_t i = 0; i < ys01.size(); ++i) {
    if (i) pts += ' ';
    pts += num(frame_x(i, ys01.size())) + "," + num(kCurveTop + kCurveH * (1.0 - ys01[i]));
  }
  return "<polyline class=\"" + std::string(cls) + "\" points=\"" + pts + "\" " + style + "/>\n";
}

}  // namespace

std::string render_trace_svg(const GateTrace& t, const PlotOptions& opts) {
  const std::size_t Ta = t.gates_a.size();
  const std::size_t Tt = t.gates_t.size();
  if (Ta == 0 && Tt == 0) throw AnalysisError("render_trace_svg: trace '" + t.sample_id + "' has no gate values");
  if (t.negative_token_flags && t.negative_token_flags->size() != Tt) {
    throw ShapeError("render_trace_svg: negative_token_flags length differs from the token count");
  }

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + num(kMargin) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">sample " +
       escape(t.sample_id) + " (label " + std::to_string(t.label) + ")</text>\n";

  // Acoustic panel.
  s += "<g class=\"acoustic\">\n";
  s += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kCurveTop) + "\" width=\"" + num(kPlotW) + "\" height=\"" +
       num(kCurveH) + "\" fill=\"none\" stroke=\"#999999\"/>\n";
  std::vector<double> energy;
  if (t.energy && Ta > 0) {
    energy = t.energy->size() == Ta ? *t.energy : resample_linear(*t.energy, Ta);
    std::vector<double> sorted = energy;
    std::sort(sorted.begin(), sorted.end());
    const auto qi = static_cast<std::size_t>(
        std::floor(std::clamp(opts.low_energy_quantile, 0.0, 1.0) * static_cast<double>(Ta - 1)));
    const double threshold = sorted[qi];
    const double half = Ta > 1 ? kPlotW / static_cast<double>(Ta - 1) / 2 : kPlotW / 2;
    for (std::size_t i = 0; i < Ta; ++i) {
      if (energy[i] > threshold) continue;
      const double x0 = std::max(kMargin, frame_x(i, Ta) - half);
      const double x1 = std::min(kMargin + kPlotW, frame_x(i, Ta) + half);
      s += "<rect class=\"low-energy\" x=\"" + num(x0) + "\" y=\"" + num(kCurveTop) + "\" width=\"" +
           num(x1 - x0) + "\" height=\"" + num(kCurveH) + "\" fill=\"#dddddd\"/>\n";
    }
    const auto [lo, hi] = std::minmax_element(energy.begin(), energy.end());
    const double span = *hi - *lo;
    std::vector<double> norm(Ta, 0.5);
    if (span > 0)
      for (std::size_t i = 0; i < Ta; ++i) norm[i] = (energy[i] - *lo) / span;
    s += polyline(norm, "energy", "fill=\"none\" stroke=\"#e07b00\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"");
  }
  if (Ta > 0) s += polyline(t.gates_a, "gate", "fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\"");
  s += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kCurveTop + kCurveH + 16) +
       "\" font-family=\"sans-serif\" font-size=\"12\">acoustic gate" + std::string(energy.empty() ? "" : " vs energy") +
       " (" + std::to_string(Ta) + " frames)</text>\n";
  s += "</g>\n";

  // Textual panel.
  s += "<g class=\"textual\">\n";
  const double cell = Tt ? kPlotW / static_cast<double>(Tt) : 0.0;
  for (std::size_t i = 0; i < Tt; ++i) {
    const bool neg = t.negative_token_flags && (*t.negative_token_flags)[i];
    s += "<rect class=\"token\" x=\"" + num(kMargin + cell * static_cast<double>(i)) + "\" y=\"" + num(kHeatTop) +
         "\" width=\"" + num(cell) + "\" height=\"" + num(kHeatH) + "\" fill=\"" + heat_color(t.gates_t[i]) + "\"" +
         (neg ? " stroke=\"#c0161b\" stroke-width=\"2\"" : " stroke=\"#ffffff\" stroke-width=\"0.5\"") + "/>\n";
  }
  s += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeatTop + kHeatH + 16) +
       "\" font-family=\"sans-serif\" font-size=\"12\">textual gate per token (" + std::to_string(Tt) +
       " tokens)</text>\n";
  s += "</g>\n</svg>\n";
  return s;
}

void export_trace_plot(const GateTrace& trace, const std::filesystem::path& path, const PlotOptions& opts) {
  write_text_file(path, render_trace_svg(trace, opts));
}

}  // namespace acmg
