#pragma once

#include "mmpos/channel.hpp"
#include "mmpos/geometry.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmpos
{

// PDP bins below this level are dropped, dBm.
constexpr double kPdpNoiseFloorDbm = -200.0;

enum class InteractionKind
{
  reflection,
  transmission
};

const char *to_string(InteractionKind kind);

enum class DetectionMode
{
  // radius = pi * L / n_rays at unfolded path length L
  unfolded_arc,
  // constant radius, TraceConfig::fixed_radius_m
  fixed_radius
};

struct TraceConfig
{
  int n_rays = 100;
  int max_interactions = 4;
  // Floor on cumulative path gain relative to TX power, dB.
  double min_path_gain_db = -180.0;
  DetectionMode detection_mode = DetectionMode::unfolded_arc;
  double fixed_radius_m = 0.1;
};

void validate(const TraceConfig &cfg);

struct Interaction
{
  InteractionKind kind = InteractionKind::reflection;
  Point2 point;
  std::string obstruction_id;
  double incidence_angle = 0.0;
  double power_loss_db = 0.0;
};

// One step of a path's interaction sequence; identifies a geometric path.
struct InteractionStep
{
  InteractionKind kind = InteractionKind::reflection;
  std::string obstruction_id;

  friend auto operator<=>(const InteractionStep &, const InteractionStep &) = default;
};

using PathKey = std::vector<InteractionStep>;

struct RayPath
{
  Point2 tx;
  Point2 rx;
  // tx, interaction points in order, rx
  std::vector<Point2> vertices;
  std::vector<Interaction> interactions;
  double total_length = 0.0;
  double delay = 0.0;
  double path_gain_db = 0.0;
  // Direction from rx toward the last vertex before it, [0, 2*pi).
  double aoa_at_rx = 0.0;
  // Direction from tx toward the first vertex after it, [0, 2*pi).
  double aod_at_tx = 0.0;
  // Distance by which the receiving launched ray missed rx; 0 for the exact LOS walk.
  double detection_miss = 0.0;

  PathKey key() const;
};

struct PdpBin
{
  long index = 0;
  // Start of the bin, index * bin_width, seconds.
  double delay = 0.0;
  double power_dbm = 0.0;
};

struct PowerDelayProfile
{
  double bin_width = 0.0;
  // Ascending by index; only bins above the noise floor.
  std::vector<PdpBin> bins;
  double peak_power_dbm = kPdpNoiseFloorDbm;
  double first_arrival_delay = 0.0;
};

struct ChannelPrediction
{
  // Sorted by delay, then path gain descending.
  std::vector<RayPath> paths;
  // Empty when no path reaches the receiver.
  std::optional<PowerDelayProfile> pdp;
  double total_rx_power_dbm = -std::numeric_limits<double>::infinity();
  double strongest_aoa = 0.0;
  double strongest_toa = 0.0;

  bool has_signal() const { return !paths.empty(); }
  const RayPath &strongest_path() const;
};

double detection_radius(double path_length, int n_rays);

// Power sum of gains (dB) as a single dB figure. Exact for a single term.
double db_power_sum(std::span<const double> gains_db);

// Brute-force 2-D trace from tx to rx. Rays are launched at 2*pi*k/n_rays and split at every
// wall into a specular reflection and a straight-through transmission, each attenuated by the
// Fresnel power coefficients. A ray is received when it passes within the detection radius of
// rx. Every received interaction sequence is then re-solved exactly by the image method, so the
// returned geometry does not carry the launch-angle quantization.
ChannelPrediction trace(const EnvironmentMap &env, const Point2 &tx, const Point2 &rx, double tx_power_dbm,
                        const FrequencyBand &band, const CiPathLossModel &model, const TraceConfig &cfg = {});

// Exact geometry for an interaction sequence, or nullopt when the sequence is not physically
// realizable (specular point off the wall, wrong side, or a leg blocked by another wall).
std::optional<RayPath> resolve_path(const EnvironmentMap &env, const Point2 &tx, const Point2 &rx,
                                    const PathKey &key, const CiPathLossModel &model);

// Throws DomainError on an empty path list.
PowerDelayProfile build_pdp(std::span<const RayPath> paths, const FrequencyBand &band, double tx_power_dbm);

} // namespace mmpos
