#pragma once

#include <string>
#include <vector>

namespace mmpos::plot
{

struct PdpPoint
{
  double delay_ns = 0.0;
  double power_dbm = 0.0;
};

struct ErrorBar
{
  std::string rx_id;
  double error_m = 0.0;
  bool outlier = false;
};

// Stem chart of power (dBm) against delay (ns). Each bar is a <rect class="bar"> carrying
// data-delay-ns / data-power-dbm; the plot group records its axis ranges and pixel extent.
std::string pdp_svg(const std::vector<PdpPoint> &bins);

// Per-receiver bar chart of positioning error (m).
std::string errors_svg(const std::vector<ErrorBar> &bars);

} // namespace mmpos::plot
