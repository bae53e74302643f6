#include "mmpos/dataset.hpp"
#include "mmpos/errors.hpp"
#include "mmpos/text_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mmpos
{

const AnchorObservation *MeasurementRecord::find(const std::string &anchor_id) const
{
  for (const auto &o : observations)
    if (o.anchor_id == anchor_id)
      return &o;
  return nullptr;
}

double snap_to_step(double value, double step)
{
  if (!(step > 0.0))
    return value;
  return std::round(value / step) * step;
}

std::vector<MeasurementRecord> generate_campaign(const CampaignConfig &cfg)
{
  validate(cfg.env);
  validate(cfg.band);
  validate_anchors(cfg.anchors);
  if (!(cfg.aoa_step >= 0.0) || !std::isfinite(cfg.aoa_step))
    throw DomainError("aoa_step must be non-negative");
  if (!(cfg.rssi_noise_sigma >= 0.0))
    throw DomainError("RSSI noise sigma must be non-negative");
  if (!cfg.rx_ids.empty() && cfg.rx_ids.size() != cfg.rx_points.size())
    throw DomainError("rx_ids must be empty or match rx_points");
  for (std::size_t i = 0; i < cfg.rx_points.size(); ++i)
    if (!cfg.env.contains(cfg.rx_points[i]))
      throw DomainError("rx point " + std::to_string(i) + " lies outside the map");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<MeasurementRecord> out;
  out.reserve(cfg.rx_points.size());
  for (std::size_t i = 0; i < cfg.rx_points.size(); ++i)
  {
    MeasurementRecord rec;
    if (!cfg.rx_ids.empty())
      rec.rx_id = cfg.rx_ids[i];
    else
    {
      std::ostringstream id;
      id << "rx" << std::setw(3) << std::setfill('0') << (i + 1);
      rec.rx_id = id.str();
    }
    const Point2 rx = cfg.rx_points[i];
    rec.true_position = rx;

    for (const auto &anchor : cfg.anchors)
    {
      if (distance(anchor.position, rx) > cfg.comm_range || distance(anchor.position, rx) <= kGeomTolerance)
        continue;
      const CiPathLossModel model{cfg.model.ple, anchor.carrier_hz};
      const FrequencyBand band{anchor.carrier_hz, cfg.band.bandwidth_hz};
      const ChannelPrediction pred = trace(cfg.env, anchor.position, rx, anchor.tx_power_dbm, band, model, cfg.trace);
      if (!pred.has_signal())
        continue;

      AnchorObservation obs;
      obs.anchor_id = anchor.id;
      double rssi = pred.total_rx_power_dbm;
      if (cfg.rssi_noise_sigma > 0.0)
        rssi += cfg.rssi_noise_sigma * noise(rng);
      obs.rssi_dbm = rssi;
      obs.aoa = wrap_two_pi(snap_to_step(pred.strongest_aoa, cfg.aoa_step));
      obs.toa = snap_to_step(pred.strongest_toa, cfg.band.bin_width());
      rec.observations.push_back(std::move(obs));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace
{

// Linear-interpolated quantile of sorted data.
double quantile(const std::vector<double> &sorted, double q)
{
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

EvaluationReport evaluate(const std::map<std::string, PositionEstimate> &estimates,
                          const std::map<std::string, Point2> &truths)
{
  if (estimates.empty())
    throw DomainError("no estimates to evaluate");

  EvaluationReport rep;
  std::vector<double> errors;
  for (const auto &[rx_id, est] : estimates)
  {
    const auto it = truths.find(rx_id);
    if (it == truths.end())
      throw DomainError("no true position for '" + rx_id + "'");
    const double e = distance(est.point, it->second);
    if (!std::isfinite(e))
      throw DomainError("non-finite estimate for '" + rx_id + "'");
    rep.per_rx.push_back({rx_id, e, false});
    errors.push_back(e);
  }

  std::sort(errors.begin(), errors.end());
  const double q1 = quantile(errors, 0.25);
  const double q3 = quantile(errors, 0.75);
  const double fence = q3 + 3.0 * (q3 - q1);

  double sum = 0.0, kept_sum = 0.0;
  std::size_t kept = 0;
  rep.min_error = rep.min_error_without_outliers = std::numeric_limits<double>::infinity();
  rep.max_error = rep.max_error_without_outliers = 0.0;
  // sum in sorted order so the mean does not depend on rx ordering
  for (double e : errors)
    sum += e;
  for (auto &r : rep.per_rx)
  {
    rep.min_error = std::min(rep.min_error, r.error);
    rep.max_error = std::max(rep.max_error, r.error);
    r.outlier = r.error > fence;
    if (r.outlier)
    {
      rep.outliers.push_back(r.rx_id);
      continue;
    }
    ++kept;
    rep.min_error_without_outliers = std::min(rep.min_error_without_outliers, r.error);
    rep.max_error_without_outliers = std::max(rep.max_error_without_outliers, r.error);
  }
  for (double e : errors)
    if (!(e > fence))
      kept_sum += e;

  rep.mean_error = sum / static_cast<double>(errors.size());
  rep.mean_error_without_outliers = kept_sum / static_cast<double>(kept);
  return rep;
}

std::string report_to_json(const EvaluationReport &report)
{
  nlohmann::json doc;
  doc["per_rx"] = nlohmann::json::array();
  for (const auto &r : report.per_rx)
    doc["per_rx"].push_back({{"rx_id", r.rx_id}, {"error_m", r.error}, {"outlier", r.outlier}});
  doc["mean_m"] = report.mean_error;
  doc["min_m"] = report.min_error;
  doc["max_m"] = report.max_error;
  doc["outliers"] = report.outliers;
  doc["mean_m_without_outliers"] = report.mean_error_without_outliers;
  doc["min_m_without_outliers"] = report.min_error_without_outliers;
  doc["max_m_without_outliers"] = report.max_error_without_outliers;
  return doc.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string &text)
{
  EvaluationReport rep;
  try
  {
    const auto doc = nlohmann::json::parse(text);
    for (const auto &r : doc.at("per_rx"))
      rep.per_rx.push_back({r.at("rx_id").get<std::string>(), r.at("error_m").get<double>(),
                            r.value("outlier", false)});
    rep.mean_error = doc.at("mean_m").get<double>();
    rep.min_error = doc.at("min_m").get<double>();
    rep.max_error = doc.at("max_m").get<double>();
    rep.outliers = doc.value("outliers", std::vector<std::string>{});
    rep.mean_error_without_outliers = doc.value("mean_m_without_outliers", rep.mean_error);
    rep.min_error_without_outliers = doc.value("min_m_without_outliers", rep.min_error);
    rep.max_error_without_outliers = doc.value("max_m_without_outliers", rep.max_error);
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ParseError(std::string("error report JSON: ") + e.what());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Observation files

namespace
{

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

// Unit-converted fields are written at 15 significant digits so that load followed by save
// reproduces the file exactly.
std::string opt_field(const std::optional<double> &v, double scale)
{
  if (!v)
    return {};
  if (scale == 1.0)
    return format_double(*v);
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *v * scale, std::chars_format::general, 15);
  return std::string(buf, ptr);
}

} // namespace

std::vector<MeasurementRecord> parse_observations(const std::string &text, std::span<const AnchorNode> anchors,
                                                  const std::string &source)
{
  const CsvTable table = parse_csv(text, source);
  const std::size_t c_rx = table.column("rx_id");
  const std::size_t c_anchor = table.column("anchor_id");
  const auto c_rssi = table.find_column("rssi_dbm");
  const auto c_aoa = table.find_column("aoa_deg");
  const auto c_toa = table.find_column("toa_ns");
  const auto c_tx = table.find_column("true_x_m");
  const auto c_ty = table.find_column("true_y_m");
  if (c_tx.has_value() != c_ty.has_value())
    throw ParseError(source + ": true_x_m and true_y_m must appear together", 1);

  std::vector<MeasurementRecord> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
  {
    const auto &row = table.rows[r];
    const std::size_t line = table.line_of(r);
    auto where = [&](const std::string &msg) { return source + ":" + std::to_string(line) + ": " + msg; };

    const std::string &rx_id = row[c_rx];
    if (rx_id.empty())
      throw ParseError(where("empty rx_id"), line, "rx_id");

    auto [it, inserted] = index.emplace(rx_id, out.size());
    if (inserted)
      out.push_back(MeasurementRecord{rx_id, std::nullopt, {}});
    MeasurementRecord &rec = out[it->second];

    if (c_tx)
    {
      const auto x = parse_optional_double(row[*c_tx], line, "true_x_m");
      const auto y = parse_optional_double(row[*c_ty], line, "true_y_m");
      if (x.has_value() != y.has_value())
        throw ParseError(where("true_x_m and true_y_m must both be present or both empty"), line, "true_x_m");
      if (x)
      {
        const Point2 p{*x, *y};
        if (rec.true_position && !(*rec.true_position == p))
          throw ParseError(where("conflicting true position for '" + rx_id + "'"), line, "true_x_m");
        rec.true_position = p;
      }
    }

    const std::string &anchor_id = row[c_anchor];
    if (anchor_id.empty())
      continue;
    if (!anchors.empty() &&
        std::none_of(anchors.begin(), anchors.end(), [&](const AnchorNode &a) { return a.id == anchor_id; }))
      throw ParseError(where("unknown anchor '" + anchor_id + "'"), line, "anchor_id");
    if (rec.find(anchor_id))
      throw ParseError(where("duplicate observation of anchor '" + anchor_id + "' for '" + rx_id + "'"), line,
                       "anchor_id");

    AnchorObservation obs;
    obs.anchor_id = anchor_id;
    if (c_rssi)
      obs.rssi_dbm = parse_optional_double(row[*c_rssi], line, "rssi_dbm");
    if (c_aoa)
      if (const auto deg = parse_optional_double(row[*c_aoa], line, "aoa_deg"))
        obs.aoa = wrap_two_pi(*deg * kDegToRad);
    if (c_toa)
      if (const auto ns = parse_optional_double(row[*c_toa], line, "toa_ns"))
        obs.toa = *ns * 1e-9;
    rec.observations.push_back(std::move(obs));
  }
  return out;
}

std::vector<MeasurementRecord> load_observations(const std::filesystem::path &path,
                                                 std::span<const AnchorNode> anchors)
{
  return parse_observations(read_text_file(path), anchors, path.string());
}

void save_observations(std::span<const MeasurementRecord> records, const std::filesystem::path &path)
{
  CsvWriter out(path, {"rx_id", "anchor_id", "rssi_dbm", "aoa_deg", "toa_ns", "true_x_m", "true_y_m"});
  for (const auto &rec : records)
  {
    const std::string tx = rec.true_position ? format_double(rec.true_position->x) : "";
    const std::string ty = rec.true_position ? format_double(rec.true_position->y) : "";
    if (rec.observations.empty())
      out.row({rec.rx_id, "", "", "", "", tx, ty});
    for (const auto &o : rec.observations)
      out.row({rec.rx_id, o.anchor_id, opt_field(o.rssi_dbm, 1.0), opt_field(o.aoa, kRadToDeg),
               opt_field(o.toa, 1e9), tx, ty});
  }
  out.commit();
}

std::vector<AnchorNode> load_anchors(const std::filesystem::path &path)
{
  const CsvTable table = read_csv(path);
  const std::size_t c_id = table.column("id");
  const std::size_t c_x = table.column("x_m");
  const std::size_t c_y = table.column("y_m");
  const auto c_p = table.find_column("tx_power_dbm");
  const auto c_f = table.find_column("carrier_ghz");

  std::vector<AnchorNode> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
  {
    const auto &row = table.rows[r];
    const std::size_t line = table.line_of(r);
    AnchorNode a;
    a.id = row[c_id];
    if (a.id.empty())
      throw ParseError(path.string() + ":" + std::to_string(line) + ": empty anchor id", line, "id");
    a.position = {parse_double(row[c_x], line, "x_m"), parse_double(row[c_y], line, "y_m")};
    if (c_p)
      a.tx_power_dbm = parse_double(row[*c_p], line, "tx_power_dbm");
    if (c_f)
      a.carrier_hz = parse_double(row[*c_f], line, "carrier_ghz") * 1e9;
    out.push_back(std::move(a));
  }
  validate_anchors(out);
  return out;
}

void save_anchors(std::span<const AnchorNode> anchors, const std::filesystem::path &path)
{
  validate_anchors(anchors);
  CsvWriter out(path, {"id", "x_m", "y_m", "tx_power_dbm", "carrier_ghz"});
  for (const auto &a : anchors)
    out.row({a.id, format_double(a.position.x), format_double(a.position.y), format_double(a.tx_power_dbm),
             format_double(a.carrier_hz / 1e9)});
  out.commit();
}

std::vector<RxPoint> load_rx_points(const std::filesystem::path &path)
{
  const CsvTable table = read_csv(path);
  const std::size_t c_id = table.column("rx_id");
  const std::size_t c_x = table.column("x_m");
  const std::size_t c_y = table.column("y_m");
  std::vector<RxPoint> out;
  std::set<std::string> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
  {
    const auto &row = table.rows[r];
    const std::size_t line = table.line_of(r);
    if (row[c_id].empty() || !ids.insert(row[c_id]).second)
      throw ParseError(path.string() + ":" + std::to_string(line) + ": empty or duplicate rx_id", line, "rx_id");
    out.push_back({row[c_id], {parse_double(row[c_x], line, "x_m"), parse_double(row[c_y], line, "y_m")}});
  }
  return out;
}

FeatureMap features_of(const MeasurementRecord &record)
{
  FeatureMap f;
  for (const auto &o : record.observations)
  {
    FeatureSet s{o.rssi_dbm, o.aoa, o.toa};
    if (!s.empty())
      f.emplace(o.anchor_id, s);
  }
  return f;
}

std::vector<FingerprintRecord> fingerprint_db(std::span<const MeasurementRecord> records)
{
  std::vector<FingerprintRecord> db;
  for (const auto &rec : records)
  {
    if (!rec.true_position)
      continue;
    FingerprintRecord fr{*rec.true_position, features_of(rec)};
    if (!fr.features.empty())
      db.push_back(std::move(fr));
  }
  return db;
}

} // namespace mmpos
