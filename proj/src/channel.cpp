#include "mmpos/channel.hpp"
#include "mmpos/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mmpos
{

void validate(const FrequencyBand &band)
{
  if (!(band.carrier_hz > 0.0) || !std::isfinite(band.carrier_hz))
    throw DomainError("carrier frequency must be positive");
  if (!(band.bandwidth_hz > 0.0) || !std::isfinite(band.bandwidth_hz))
    throw DomainError("bandwidth must be positive");
}

void validate(const CiPathLossModel &model)
{
  if (!(model.ple > 0.0) || !std::isfinite(model.ple))
    throw DomainError("path-loss exponent must be positive");
  if (!(model.carrier_hz > 0.0) || !std::isfinite(model.carrier_hz))
    throw DomainError("carrier frequency must be positive");
}

double raw_resolution(const FrequencyBand &band)
{
  validate(band);
  return kSpeedOfLight / band.bandwidth_hz;
}

double fspl_ref(double carrier_hz)
{
  if (!(carrier_hz > 0.0))
    throw DomainError("carrier frequency must be positive");
  return 20.0 * std::log10(4.0 * std::numbers::pi * CiPathLossModel::d0 * carrier_hz / kSpeedOfLight);
}

double ci_path_loss(const CiPathLossModel &model, double d)
{
  validate(model);
  if (!(d >= CiPathLossModel::d0))
    throw DomainError("CI path loss undefined below the 1 m reference distance (d = " + std::to_string(d) + " m)");
  return fspl_ref(model.carrier_hz) + 10.0 * model.ple * std::log10(d / CiPathLossModel::d0);
}

double ci_distance(const CiPathLossModel &model, double path_loss_db)
{
  validate(model);
  return CiPathLossModel::d0 * std::pow(10.0, (path_loss_db - fspl_ref(model.carrier_hz)) / (10.0 * model.ple));
}

FresnelResult fresnel_power(double incidence_angle, double eps_r)
{
  if (!(eps_r >= 1.0) || !std::isfinite(eps_r))
    throw DomainError("relative permittivity must be >= 1");
  if (!(incidence_angle >= 0.0 && incidence_angle <= std::numbers::pi / 2.0))
    throw DomainError("incidence angle must lie in [0, pi/2]");

  const double cos_i = std::cos(incidence_angle);
  const double sin_i = std::sin(incidence_angle);
  const double root = std::sqrt(std::max(0.0, eps_r - sin_i * sin_i));
  const double denom = cos_i + root;
  // eps_r == 1 at exact grazing: matched media, nothing reflects
  if (denom == 0.0)
    return {0.0, 1.0};
  const double r_perp = (cos_i - root) / denom;
  const double reflect = r_perp * r_perp;
  return {reflect, 1.0 - reflect};
}

double fraction_to_loss_db(double fraction)
{
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("power fraction must lie in [0, 1]");
  if (fraction == 0.0)
    return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(fraction);
}

} // namespace mmpos
