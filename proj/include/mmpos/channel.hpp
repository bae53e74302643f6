#pragma once

namespace mmpos
{

// Free-space propagation speed, m/s.
constexpr double kSpeedOfLight = 299792458.0;

struct FrequencyBand
{
  double carrier_hz = 28e9;
  double bandwidth_hz = 800e6;

  double bin_width() const { return 1.0 / bandwidth_hz; }
};

void validate(const FrequencyBand &band);

// Close-in free-space reference path loss model, d0 fixed at 1 m.
struct CiPathLossModel
{
  static constexpr double d0 = 1.0;
  double ple = 1.7;
  double carrier_hz = 28e9;
};

void validate(const CiPathLossModel &model);

struct FresnelResult
{
  double reflect_power_frac = 0.0;
  double transmit_power_frac = 1.0;
};

// Smallest resolvable distance difference at Nyquist sampling, c / B.
double raw_resolution(const FrequencyBand &band);

// Free-space path loss at the 1 m reference distance, dB.
double fspl_ref(double carrier_hz);

// Throws DomainError for d < d0.
double ci_path_loss(const CiPathLossModel &model, double d);

// Distance at which the CI model predicts path_loss_db; inverse of ci_path_loss.
double ci_distance(const CiPathLossModel &model, double path_loss_db);

// Perpendicular-polarization Fresnel power coefficients at a lossless dielectric interface.
// incidence_angle in [0, pi/2], eps_r >= 1.
FresnelResult fresnel_power(double incidence_angle, double eps_r);

// Power fraction to a positive dB loss. Zero fraction yields +infinity.
double fraction_to_loss_db(double fraction);

} // namespace mmpos
