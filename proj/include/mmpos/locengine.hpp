#pragma once

#include "mmpos/channel.hpp"
#include "mmpos/geometry.hpp"

#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmpos
{

struct AnchorNode
{
  std::string id;
  Point2 position;
  double tx_power_dbm = 0.0;
  double carrier_hz = 28e9;

  friend bool operator==(const AnchorNode &, const AnchorNode &) = default;
};

// Throws DomainError on duplicate ids or non-finite fields.
void validate_anchors(std::span<const AnchorNode> anchors);
const AnchorNode &find_anchor(std::span<const AnchorNode> anchors, const std::string &id);

// aoa: direction from the receiver toward the anchor, measured at the receiver.
struct BearingObservation
{
  std::string anchor_id;
  double aoa = 0.0;
};

// delta_distance = |p - anchor_a| - |p - anchor_b|
struct TdoaObservation
{
  std::string anchor_a_id;
  std::string anchor_b_id;
  double delta_distance = 0.0;
};

struct RssiObservation
{
  std::string anchor_id;
  double rssi_dbm = 0.0;
};

// Anchor ids ordered nearest first.
struct DistanceRankVector
{
  std::vector<std::string> ids;

  friend bool operator==(const DistanceRankVector &, const DistanceRankVector &) = default;
  std::size_t size() const { return ids.size(); }
};

struct GridSpec
{
  double cell_size = 20.0;
  // Communication range R; each anchor's estimation rectangle is a 2R square.
  double comm_range = 200.0;
};

struct PositionEstimate
{
  Point2 point;
  std::string method;
  double residual = 0.0;
  std::vector<std::string> diagnostics;
};

class ConvergenceError : public std::runtime_error
{
public:
  ConvergenceError(const std::string &what, PositionEstimate best)
      : std::runtime_error(what), best_(std::move(best))
  {
  }
  const PositionEstimate &best_iterate() const noexcept { return best_; }

private:
  PositionEstimate best_;
};

// Least-squares intersection of the bearing lines. Each line runs through its anchor along
// aoa + pi. Minimizes the summed squared perpendicular distances via the 2x2 normal equations.
PositionEstimate aoa_least_squares(std::span<const AnchorNode> anchors,
                                   std::span<const BearingObservation> bearings);

// Sum of squared perpendicular distances from p to the bearing lines.
double bearing_objective(std::span<const AnchorNode> anchors, std::span<const BearingObservation> bearings,
                         const Point2 &p);

// Single-anchor fix from bearing plus CI-model ranging. Path loss is
// tx_power + antenna_gains_db - rssi; the receiver sits d_ML along aoa + pi from the anchor.
PositionEstimate fuse_aoa_pathloss(const AnchorNode &anchor, const BearingObservation &bearing,
                                   const RssiObservation &rssi, const CiPathLossModel &model,
                                   double antenna_gains_db = 0.0);

struct TdoaOptions
{
  std::optional<Point2> initial_guess;
  int max_iterations = 200;
};

// Damped (Levenberg-Marquardt) least squares over sum ((|p-a| - |p-b|) - k)^2.
PositionEstimate tdoa_solve(std::span<const AnchorNode> anchors, std::span<const TdoaObservation> observations,
                            const TdoaOptions &options = {});

double tdoa_objective(std::span<const AnchorNode> anchors, std::span<const TdoaObservation> observations,
                      const Point2 &p);

// Strongest RSSI first; ties by anchor id ascending.
DistanceRankVector rank_vector(std::span<const RssiObservation> observations);

// Ideal rank vector at p over the given anchors: by Euclidean distance, ties by id.
DistanceRankVector ideal_rank_vector(std::span<const AnchorNode> anchors, const Point2 &p);

// Sum of squared rank differences between two orderings of the same id set.
long rank_difference_sq(const DistanceRankVector &u, const DistanceRankVector &v);

double spearman_rho(const DistanceRankVector &u, const DistanceRankVector &v);

struct GridCell
{
  long ix = 0;
  long iy = 0;
  Point2 center;
  double rho = 0.0;
};

struct RankGridResult
{
  // Intersection of the estimation rectangles, [x0, x1] x [y0, y1].
  Point2 lower;
  Point2 upper;
  double cell_size = 0.0;
  long nx = 0;
  long ny = 0;
  // Row-major, iy outer.
  std::vector<GridCell> cells;
  // Indices into cells with maximal rho, ascending.
  std::vector<std::size_t> residence;
  double rho_max = 0.0;
  Point2 centroid;

  // Cell containing p, if p is inside the tiled area.
  std::optional<std::size_t> cell_of(const Point2 &p) const;
};

RankGridResult rank_grid_scores(std::span<const AnchorNode> anchors, const DistanceRankVector &measured,
                                const GridSpec &grid);

// Centroid of the residence area; residual = 1 - max rho.
PositionEstimate rank_grid_localize(std::span<const AnchorNode> anchors, const DistanceRankVector &measured,
                                    const GridSpec &grid);

struct FeatureSet
{
  std::optional<double> rssi_dbm;
  std::optional<double> aoa;
  std::optional<double> toa;

  bool empty() const { return !rssi_dbm && !aoa && !toa; }
};

// Per-anchor features keyed by anchor id.
using FeatureMap = std::map<std::string, FeatureSet>;

struct FingerprintRecord
{
  Point2 location;
  FeatureMap features;
};

struct FingerprintConfig
{
  double w_rssi = 1.0;
  double w_aoa = 1.0;
  double w_toa = 1.0;
  double sigma_rssi_db = 4.0;
  // Half-power beamwidth of the sweep antenna; sigma_aoa = hpbw / 2.
  double hpbw = 15.0 * std::numbers::pi / 180.0;
  // sigma_toa = 1 / bandwidth_hz
  double bandwidth_hz = 800e6;
};

// Weighted, normalized squared feature distance; nullopt when no feature dimension is shared.
std::optional<double> fingerprint_distance(const FeatureMap &a, const FeatureMap &b, const FingerprintConfig &cfg);

// Nearest database record by fingerprint_distance; ties go to the earliest record.
PositionEstimate fingerprint_localize(std::span<const FingerprintRecord> db, const FeatureMap &query,
                                      const FingerprintConfig &cfg = {});

} // namespace mmpos
