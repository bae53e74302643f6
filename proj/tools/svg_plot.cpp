#include "svg_plot.hpp"

#include "mmpos/errors.hpp"
#include "mmpos/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mmpos::plot
{

namespace
{

constexpr double kWidth = 800.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 20.0;
constexpr double kTop = 20.0;
constexpr double kBottom = 60.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string num(double v)
{
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string escape(const std::string &text)
{
  std::string out;
  for (char c : text)
    switch (c)
    {
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '&': out += "&amp;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  return out;
}

// 1-2-5 tick spacing giving roughly `target` intervals over span.
double tick_step(double span, int target = 6)
{
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw)
      return m * mag;
  return 10.0 * mag;
}

struct Axis
{
  double lo = 0.0;
  double hi = 1.0;

  double to_x(double v) const { return kLeft + (v - lo) / (hi - lo) * kPlotW; }
  double to_y(double v) const { return kTop + kPlotH - (v - lo) / (hi - lo) * kPlotH; }
};

void header(std::ostringstream &svg, const std::string &title)
{
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<title>" << escape(title) << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
}

void frame(std::ostringstream &svg, const std::string &xlabel, const std::string &ylabel)
{
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW << "\" height=\"" << kPlotH
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text class=\"xlabel\" x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  svg << "<text class=\"ylabel\" x=\"20\" y=\"" << kTop + kPlotH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << kTop + kPlotH / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

void y_ticks(std::ostringstream &svg, const Axis &y)
{
  const double step = tick_step(y.hi - y.lo);
  for (double v = std::ceil(y.lo / step) * step; v <= y.hi + 1e-9 * step; v += step)
  {
    const double py = y.to_y(v);
    svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py) << "\" x2=\"" << kLeft << "\" y2=\"" << num(py)
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
}

} // namespace

std::string pdp_svg(const std::vector<PdpPoint> &bins)
{
  if (bins.empty())
    throw DomainError("PDP has no bins to plot");

  double d_max = 0.0, p_min = bins.front().power_dbm, p_max = bins.front().power_dbm;
  for (const auto &b : bins)
  {
    d_max = std::max(d_max, b.delay_ns);
    p_min = std::min(p_min, b.power_dbm);
    p_max = std::max(p_max, b.power_dbm);
  }
  Axis x{0.0, d_max > 0.0 ? d_max * 1.1 : 1.0};
  x.hi = std::ceil(x.hi / tick_step(x.hi)) * tick_step(x.hi);
  Axis y{std::floor((p_min - 10.0) / 10.0) * 10.0, std::ceil((p_max + 5.0) / 10.0) * 10.0};

  std::ostringstream svg;
  header(svg, "Power delay profile");
  frame(svg, "Delay (ns)", "Power (dBm)");
  y_ticks(svg, y);
  const double xs = tick_step(x.hi - x.lo);
  for (double v = 0.0; v <= x.hi + 1e-9 * xs; v += xs)
  {
    const double px = x.to_x(v);
    svg << "<line x1=\"" << num(px) << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << num(px) << "\" y2=\""
        << kTop + kPlotH + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(px) << "\" y=\"" << kTop + kPlotH + 20 << "\" text-anchor=\"middle\">" << num(v)
        << "</text>\n";
  }

  svg << "<g class=\"plot\" data-x-min=\"" << num(x.lo) << "\" data-x-max=\"" << num(x.hi) << "\" data-y-min=\""
      << num(y.lo) << "\" data-y-max=\"" << num(y.hi) << "\" data-plot-left=\"" << kLeft << "\" data-plot-width=\""
      << kPlotW << "\" data-plot-top=\"" << kTop << "\" data-plot-height=\"" << kPlotH << "\">\n";
  constexpr double bar_w = 3.0;
  for (const auto &b : bins)
  {
    const double cx = x.to_x(b.delay_ns);
    const double top = y.to_y(b.power_dbm);
    svg << "<rect class=\"bar\" data-delay-ns=\"" << format_double(b.delay_ns) << "\" data-power-dbm=\""
        << format_double(b.power_dbm) << "\" x=\"" << format_double(cx - bar_w / 2) << "\" y=\""
        << format_double(top) << "\" width=\"" << bar_w << "\" height=\"" << format_double(kTop + kPlotH - top)
        << "\" fill=\"steelblue\"/>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

std::string errors_svg(const std::vector<ErrorBar> &bars)
{
  if (bars.empty())
    throw DomainError("error report has no receivers to plot");

  double e_max = 0.0;
  for (const auto &b : bars)
    e_max = std::max(e_max, b.error_m);
  Axis y{0.0, e_max > 0.0 ? e_max * 1.1 : 1.0};
  y.hi = std::ceil(y.hi / tick_step(y.hi)) * tick_step(y.hi);

  std::ostringstream svg;
  header(svg, "Positioning error per receiver");
  frame(svg, "RX", "Positioning error (m)");
  y_ticks(svg, y);

  const double slot = kPlotW / static_cast<double>(bars.size());
  const double bar_w = std::max(1.0, slot * 0.6);
  svg << "<g class=\"plot\" data-y-min=\"0\" data-y-max=\"" << num(y.hi) << "\">\n";
  for (std::size_t i = 0; i < bars.size(); ++i)
  {
    const auto &b = bars[i];
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double top = y.to_y(b.error_m);
    svg << "<rect class=\"bar\" data-rx=\"" << escape(b.rx_id) << "\" data-error-m=\"" << format_double(b.error_m)
        << "\" x=\"" << num(cx - bar_w / 2) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_w)
        << "\" height=\"" << num(kTop + kPlotH - top) << "\" fill=\"" << (b.outlier ? "indianred" : "steelblue")
        << "\"/>\n";
    svg << "<text x=\"" << num(cx) << "\" y=\"" << kTop + kPlotH + 18 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << escape(b.rx_id) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

} // namespace mmpos::plot
