#pragma once

#include "mmpos/channel.hpp"
#include "mmpos/geometry.hpp"
#include "mmpos/locengine.hpp"
#include "mmpos/raytracer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmpos
{

struct CampaignConfig
{
  EnvironmentMap env;
  std::vector<AnchorNode> anchors;
  std::vector<Point2> rx_points;
  // Optional ids parallel to rx_points; defaults to rx001, rx002, ...
  std::vector<std::string> rx_ids;
  FrequencyBand band;
  // The exponent is used with each anchor's own carrier.
  CiPathLossModel model;
  // AoA sweep quantization, radians. 0 disables quantization.
  double aoa_step = 15.0 * std::numbers::pi / 180.0;
  double rssi_noise_sigma = 4.0;
  std::uint64_t seed = 1;
  // Anchors farther than this from a receiver are not observed.
  double comm_range = 200.0;
  TraceConfig trace;
};

// One (rx, anchor) link. Absent features are nullopt.
struct AnchorObservation
{
  std::string anchor_id;
  std::optional<double> rssi_dbm;
  std::optional<double> aoa;
  std::optional<double> toa;

  friend bool operator==(const AnchorObservation &, const AnchorObservation &) = default;
};

struct MeasurementRecord
{
  std::string rx_id;
  std::optional<Point2> true_position;
  std::vector<AnchorObservation> observations;

  friend bool operator==(const MeasurementRecord &, const MeasurementRecord &) = default;

  const AnchorObservation *find(const std::string &anchor_id) const;
};

// Rounds value to the nearest multiple of step; step <= 0 returns value unchanged.
double snap_to_step(double value, double step);

// Traces every in-range (rx, anchor) pair and records noisy RSSI, the strongest path's AoA
// snapped to aoa_step and its ToA snapped to 1/B. Deterministic for a given seed. Links with
// no received path are omitted.
std::vector<MeasurementRecord> generate_campaign(const CampaignConfig &cfg);

struct RxError
{
  std::string rx_id;
  double error = 0.0;
  bool outlier = false;
};

struct EvaluationReport
{
  // Sorted by rx_id.
  std::vector<RxError> per_rx;
  double mean_error = 0.0;
  double min_error = 0.0;
  double max_error = 0.0;
  // Errors above Q3 + 3 * IQR.
  std::vector<std::string> outliers;
  double mean_error_without_outliers = 0.0;
  double min_error_without_outliers = 0.0;
  double max_error_without_outliers = 0.0;
};

EvaluationReport evaluate(const std::map<std::string, PositionEstimate> &estimates,
                          const std::map<std::string, Point2> &truths);

std::string report_to_json(const EvaluationReport &report);
EvaluationReport report_from_json(const std::string &text);

// Observation CSV: rx_id, anchor_id, rssi_dbm, aoa_deg, toa_ns, true_x_m, true_y_m. Only rx_id and
// anchor_id columns are mandatory; empty fields mean the feature is absent. Rows are grouped by
// rx_id in order of first appearance. A row with an empty anchor_id records a receiver with no
// observed links. When anchors is non-empty, unknown anchor ids are rejected.
std::vector<MeasurementRecord> parse_observations(const std::string &text, std::span<const AnchorNode> anchors = {},
                                                  const std::string &source = "observations");
std::vector<MeasurementRecord> load_observations(const std::filesystem::path &path,
                                                 std::span<const AnchorNode> anchors = {});
void save_observations(std::span<const MeasurementRecord> records, const std::filesystem::path &path);

// Anchor CSV: id, x_m, y_m, tx_power_dbm, carrier_ghz.
std::vector<AnchorNode> load_anchors(const std::filesystem::path &path);
void save_anchors(std::span<const AnchorNode> anchors, const std::filesystem::path &path);

// Receiver point CSV: rx_id, x_m, y_m.
struct RxPoint
{
  std::string id;
  Point2 position;
};
std::vector<RxPoint> load_rx_points(const std::filesystem::path &path);

FeatureMap features_of(const MeasurementRecord &record);

// Records carrying a true position, as fingerprint database entries.
std::vector<FingerprintRecord> fingerprint_db(std::span<const MeasurementRecord> records);

} // namespace mmpos
