#include "cli.hpp"
#include "svg_plot.hpp"

#include "mmpos/channel.hpp"
#include "mmpos/dataset.hpp"
#include "mmpos/errors.hpp"
#include "mmpos/geometry.hpp"
#include "mmpos/locengine.hpp"
#include "mmpos/raytracer.hpp"
#include "mmpos/text_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>

namespace mmpos::cli
{

namespace
{

using json = nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

Point2 parse_point(const std::string &text, const std::string &flag)
{
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    throw UsageError(flag + ": expected x,y but got '" + text + "'");
  try
  {
    return {parse_double(text.substr(0, comma), 0, flag), parse_double(text.substr(comma + 1), 0, flag)};
  }
  catch (const ParseError &)
  {
    throw UsageError(flag + ": expected x,y but got '" + text + "'");
  }
}

double deg(double rad) { return rad / kDeg; }

json point_json(const Point2 &p) { return json::array({p.x, p.y}); }

json prediction_json(const ChannelPrediction &pred, const Point2 &tx, const Point2 &rx, double tx_power_dbm,
                     const FrequencyBand &band)
{
  json j;
  j["tx"] = point_json(tx);
  j["rx"] = point_json(rx);
  j["tx_power_dbm"] = tx_power_dbm;
  j["carrier_ghz"] = band.carrier_hz / 1e9;
  j["bandwidth_mhz"] = band.bandwidth_hz / 1e6;
  j["paths"] = json::array();
  for (const auto &p : pred.paths)
  {
    json jp;
    jp["vertices"] = json::array();
    for (const auto &v : p.vertices)
      jp["vertices"].push_back(point_json(v));
    jp["interactions"] = json::array();
    for (const auto &i : p.interactions)
      jp["interactions"].push_back({{"kind", to_string(i.kind)},
                                    {"obstruction_id", i.obstruction_id},
                                    {"point", point_json(i.point)},
                                    {"incidence_deg", deg(i.incidence_angle)},
                                    {"loss_db", i.power_loss_db}});
    jp["length_m"] = p.total_length;
    jp["delay_ns"] = p.delay * 1e9;
    jp["path_gain_db"] = p.path_gain_db;
    jp["aoa_deg"] = deg(p.aoa_at_rx);
    jp["aod_deg"] = deg(p.aod_at_tx);
    j["paths"].push_back(jp);
  }
  if (pred.has_signal())
  {
    j["total_rx_power_dbm"] = pred.total_rx_power_dbm;
    j["strongest_aoa_deg"] = deg(pred.strongest_aoa);
    j["strongest_toa_ns"] = pred.strongest_toa * 1e9;
  }
  else
  {
    j["total_rx_power_dbm"] = nullptr;
    j["strongest_aoa_deg"] = nullptr;
    j["strongest_toa_ns"] = nullptr;
  }
  if (pred.pdp)
  {
    json bins = json::array();
    for (const auto &b : pred.pdp->bins)
      bins.push_back({{"delay_ns", b.delay * 1e9}, {"power_dbm", b.power_dbm}});
    j["pdp"] = {{"bin_width_ns", pred.pdp->bin_width * 1e9},
                {"first_arrival_ns", pred.pdp->first_arrival_delay * 1e9},
                {"peak_power_dbm", pred.pdp->peak_power_dbm},
                {"bins", bins}};
  }
  else
    j["pdp"] = nullptr;
  return j;
}

struct TraceArgs
{
  std::string map, tx, rx, out, pdp;
  double freq_ghz = 28.0;
  double bw_mhz = 800.0;
  int rays = 100;
  int depth = 4;
  double tx_power = 0.0;
  double ple = 1.7;
};

int cmd_trace(const TraceArgs &a, std::ostream &out)
{
  const EnvironmentMap env = load_map(a.map);
  const Point2 tx = parse_point(a.tx, "--tx");
  const Point2 rx = parse_point(a.rx, "--rx");
  const FrequencyBand band{a.freq_ghz * 1e9, a.bw_mhz * 1e6};
  const CiPathLossModel model{a.ple, band.carrier_hz};
  TraceConfig cfg;
  cfg.n_rays = a.rays;
  cfg.max_interactions = a.depth;

  const ChannelPrediction pred = trace(env, tx, rx, a.tx_power, band, model, cfg);

  const std::string pdp_path = a.pdp.empty() ? std::filesystem::path(a.out).replace_extension(".pdp.csv").string()
                                             : a.pdp;
  AtomicFile js(a.out);
  js.stream() << prediction_json(pred, tx, rx, a.tx_power, band).dump(2) << '\n';
  CsvWriter pdp(pdp_path, {"delay_ns", "power_dbm"});
  if (pred.pdp)
    for (const auto &b : pred.pdp->bins)
      pdp.row({format_double(b.delay * 1e9), format_double(b.power_dbm)});
  js.commit();
  pdp.commit();

  out << pred.paths.size() << " path(s)";
  if (pred.has_signal())
    out << ", total power " << pred.total_rx_power_dbm << " dBm";
  out << '\n';
  return kOk;
}

struct SynthArgs
{
  std::string map, anchors, rx_file, out;
  std::vector<std::string> rx;
  double bw_mhz = 800.0;
  double ple = 1.7;
  double aoa_step_deg = 15.0;
  double noise_db = 4.0;
  std::uint64_t seed = 1;
  double range = 200.0;
  int rays = 100;
  int depth = 4;
};

int cmd_synth(const SynthArgs &a, std::ostream &out)
{
  CampaignConfig cfg;
  cfg.env = load_map(a.map);
  cfg.anchors = load_anchors(a.anchors);
  if (!a.rx_file.empty())
    for (const auto &p : load_rx_points(a.rx_file))
    {
      cfg.rx_ids.push_back(p.id);
      cfg.rx_points.push_back(p.position);
    }
  else
    for (const auto &s : a.rx)
      cfg.rx_points.push_back(parse_point(s, "--rx"));
  if (cfg.rx_points.empty())
    throw UsageError("no receiver points given (use --rx or --rx-file)");
  cfg.band.bandwidth_hz = a.bw_mhz * 1e6;
  cfg.model.ple = a.ple;
  cfg.aoa_step = a.aoa_step_deg * kDeg;
  cfg.rssi_noise_sigma = a.noise_db;
  cfg.seed = a.seed;
  cfg.comm_range = a.range;
  cfg.trace.n_rays = a.rays;
  cfg.trace.max_interactions = a.depth;

  const auto records = generate_campaign(cfg);
  save_observations(records, a.out);
  std::size_t links = 0;
  for (const auto &r : records)
    links += r.observations.size();
  out << records.size() << " receiver(s), " << links << " link(s)\n";
  return kOk;
}

struct LocalizeArgs
{
  std::string method, anchors, obs, db, out;
  double grid = 20.0;
  double range = 200.0;
  double ple = 1.7;
  double gains_db = 0.0;
  double hpbw_deg = 15.0;
  double bw_mhz = 800.0;
  bool skip_incomplete = false;
};

// A column counts as missing when absent from the header or empty on every row.
void require_columns(const std::string &path, const std::vector<std::string> &names)
{
  const CsvTable table = read_csv(path);
  for (const auto &name : names)
  {
    const auto col = table.find_column(name);
    const bool any = col && std::any_of(table.rows.begin(), table.rows.end(),
                                        [&](const auto &row) { return !row[*col].empty(); });
    if (!any)
      throw ParseError(path + ": missing required column '" + name + "' for this method", 1, name);
  }
}

PositionEstimate localize_one(const LocalizeArgs &a, const MeasurementRecord &rec,
                              const std::vector<AnchorNode> &anchors, const std::vector<FingerprintRecord> &db)
{
  if (a.method == "aoa")
  {
    std::vector<BearingObservation> bearings;
    for (const auto &o : rec.observations)
      if (o.aoa)
        bearings.push_back({o.anchor_id, *o.aoa});
    return aoa_least_squares(anchors, bearings);
  }
  if (a.method == "fusion")
  {
    const AnchorObservation *best = nullptr;
    for (const auto &o : rec.observations)
      if (o.aoa && o.rssi_dbm && (!best || *o.rssi_dbm > *best->rssi_dbm))
        best = &o;
    if (!best)
      throw DomainError("no anchor with both rssi_dbm and aoa_deg");
    const AnchorNode &anchor = find_anchor(anchors, best->anchor_id);
    return fuse_aoa_pathloss(anchor, {best->anchor_id, *best->aoa}, {best->anchor_id, *best->rssi_dbm},
                             CiPathLossModel{a.ple, anchor.carrier_hz}, a.gains_db);
  }
  if (a.method == "tdoa")
  {
    std::vector<const AnchorObservation *> timed;
    for (const auto &o : rec.observations)
      if (o.toa)
        timed.push_back(&o);
    std::sort(timed.begin(), timed.end(),
              [](const auto *x, const auto *y) { return x->anchor_id < y->anchor_id; });
    std::vector<TdoaObservation> pairs;
    for (std::size_t i = 1; i < timed.size(); ++i)
      pairs.push_back({timed[i]->anchor_id, timed[0]->anchor_id, kSpeedOfLight * (*timed[i]->toa - *timed[0]->toa)});
    return tdoa_solve(anchors, pairs);
  }
  if (a.method == "rank")
  {
    std::vector<RssiObservation> rssi;
    for (const auto &o : rec.observations)
      if (o.rssi_dbm)
        rssi.push_back({o.anchor_id, *o.rssi_dbm});
    return rank_grid_localize(anchors, rank_vector(rssi), GridSpec{a.grid, a.range});
  }
  FingerprintConfig cfg;
  cfg.hpbw = a.hpbw_deg * kDeg;
  cfg.bandwidth_hz = a.bw_mhz * 1e6;
  return fingerprint_localize(db, features_of(rec), cfg);
}

int cmd_localize(const LocalizeArgs &a, std::ostream &out, std::ostream &err)
{
  const std::map<std::string, std::vector<std::string>> required{{"aoa", {"aoa_deg"}},
                                                                 {"fusion", {"rssi_dbm", "aoa_deg"}},
                                                                 {"tdoa", {"toa_ns"}},
                                                                 {"rank", {"rssi_dbm"}},
                                                                 {"fingerprint", {}}};
  const auto anchors = load_anchors(a.anchors);
  require_columns(a.obs, required.at(a.method));
  auto records = load_observations(a.obs, anchors);
  std::sort(records.begin(), records.end(), [](const auto &x, const auto &y) { return x.rx_id < y.rx_id; });

  std::vector<FingerprintRecord> db;
  if (a.method == "fingerprint")
  {
    if (a.db.empty())
      throw UsageError("--method fingerprint requires --db");
    db = fingerprint_db(load_observations(a.db, anchors));
    if (db.empty())
      throw DomainError(a.db + ": fingerprint database has no records with true positions");
  }

  CsvWriter csv(a.out, {"rx_id", "x_m", "y_m", "method", "residual"});
  std::size_t written = 0, skipped = 0;
  for (const auto &rec : records)
  {
    PositionEstimate est;
    try
    {
      est = localize_one(a, rec, anchors, db);
    }
    catch (const std::exception &e)
    {
      if (!a.skip_incomplete)
        throw DomainError("rx '" + rec.rx_id + "': " + e.what());
      err << "skipping rx '" << rec.rx_id << "': " << e.what() << '\n';
      ++skipped;
      continue;
    }
    csv.row({rec.rx_id, format_double(est.point.x), format_double(est.point.y), est.method,
             format_double(est.residual)});
    ++written;
  }
  csv.commit();
  out << written << " estimate(s)";
  if (skipped)
    out << ", " << skipped << " skipped";
  out << '\n';
  return kOk;
}

std::map<std::string, PositionEstimate> load_estimates(const std::string &path)
{
  const CsvTable t = read_csv(path);
  const auto c_id = t.column("rx_id"), c_x = t.column("x_m"), c_y = t.column("y_m");
  const auto c_m = t.find_column("method"), c_r = t.find_column("residual");
  std::map<std::string, PositionEstimate> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
  {
    const auto &row = t.rows[i];
    const std::size_t line = t.line_of(i);
    PositionEstimate e;
    e.point = {parse_double(row[c_x], line, "x_m"), parse_double(row[c_y], line, "y_m")};
    if (c_m)
      e.method = row[*c_m];
    if (c_r)
      e.residual = parse_optional_double(row[*c_r], line, "residual").value_or(0.0);
    if (!out.emplace(row[c_id], e).second)
      throw ParseError(path + ": duplicate estimate for rx '" + row[c_id] + "'", line, "rx_id");
  }
  return out;
}

int cmd_eval(const std::string &est_path, const std::string &obs_path, const std::string &out_path,
             std::ostream &out)
{
  const auto estimates = load_estimates(est_path);
  std::map<std::string, Point2> truths;
  for (const auto &r : load_observations(obs_path))
    if (r.true_position)
      truths.emplace(r.rx_id, *r.true_position);
  const EvaluationReport report = evaluate(estimates, truths);
  write_text_file(out_path, report_to_json(report));
  out << report.per_rx.size() << " rx, mean " << report.mean_error << " m, min " << report.min_error << " m, max "
      << report.max_error << " m, " << report.outliers.size() << " outlier(s)\n";
  return kOk;
}

int cmd_plot(const std::string &pdp_path, const std::string &errors_path, const std::string &out_path)
{
  if (pdp_path.empty() == errors_path.empty())
    throw UsageError("plot needs exactly one of --pdp or --errors");
  std::string svg;
  if (!pdp_path.empty())
  {
    const CsvTable t = read_csv(pdp_path);
    const auto c_d = t.column("delay_ns"), c_p = t.column("power_dbm");
    std::vector<plot::PdpPoint> bins;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      bins.push_back({parse_double(t.rows[i][c_d], t.line_of(i), "delay_ns"),
                      parse_double(t.rows[i][c_p], t.line_of(i), "power_dbm")});
    if (bins.empty())
      throw DomainError(pdp_path + ": PDP is empty");
    svg = plot::pdp_svg(bins);
  }
  else
  {
    const EvaluationReport report = report_from_json(read_text_file(errors_path));
    std::vector<plot::ErrorBar> bars;
    for (const auto &e : report.per_rx)
      bars.push_back({e.rx_id, e.error, e.outlier});
    if (bars.empty())
      throw DomainError(errors_path + ": report has no receivers");
    svg = plot::errors_svg(bars);
  }
  write_text_file(out_path, svg);
  return kOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"mmWave ray tracing and positioning toolkit.\n"
               "Units: meters, GHz for --freq, MHz for --bw, degrees for angles, dB/dBm for power."};
  app.name("mmpos");
  app.require_subcommand(1, 1);

  TraceArgs ta;
  auto *trace_cmd = app.add_subcommand("trace", "Trace one tx/rx link; write prediction JSON and PDP CSV");
  trace_cmd->add_option("--map", ta.map, "Environment map JSON")->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--tx", ta.tx, "Transmitter position x,y (m)")->required();
  trace_cmd->add_option("--rx", ta.rx, "Receiver position x,y (m)")->required();
  trace_cmd->add_option("--freq", ta.freq_ghz, "Carrier frequency (GHz)")->capture_default_str();
  trace_cmd->add_option("--bw", ta.bw_mhz, "Bandwidth (MHz); sets the PDP bin width")->capture_default_str();
  trace_cmd->add_option("--rays", ta.rays, "Number of launched rays")->capture_default_str();
  trace_cmd->add_option("--depth", ta.depth, "Maximum interactions per ray")->capture_default_str();
  trace_cmd->add_option("--tx-power", ta.tx_power, "Transmit power (dBm)")->capture_default_str();
  trace_cmd->add_option("--ple", ta.ple, "Path-loss exponent")->capture_default_str();
  trace_cmd->add_option("--out", ta.out, "Prediction JSON output")->required();
  trace_cmd->add_option("--pdp", ta.pdp, "PDP CSV output (default: <out>.pdp.csv)");

  SynthArgs sa;
  auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic measurement campaign");
  synth_cmd->add_option("--map", sa.map, "Environment map JSON")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--anchors", sa.anchors, "Anchor CSV")->required()->check(CLI::ExistingFile);
  auto *rx_opt = synth_cmd->add_option("--rx", sa.rx, "Receiver position x,y (m); repeatable");
  auto *rx_file_opt =
      synth_cmd->add_option("--rx-file", sa.rx_file, "Receiver CSV (rx_id, x_m, y_m)")->check(CLI::ExistingFile);
  rx_opt->excludes(rx_file_opt);
  synth_cmd->add_option("--bw", sa.bw_mhz, "Bandwidth (MHz); ToA resolution")->capture_default_str();
  synth_cmd->add_option("--ple", sa.ple, "Path-loss exponent")->capture_default_str();
  synth_cmd->add_option("--aoa-step", sa.aoa_step_deg, "AoA quantization step (deg); 0 disables")
      ->capture_default_str();
  synth_cmd->add_option("--noise", sa.noise_db, "RSSI noise standard deviation (dB)")->capture_default_str();
  synth_cmd->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--range", sa.range, "Communication range (m)")->capture_default_str();
  synth_cmd->add_option("--rays", sa.rays, "Number of launched rays")->capture_default_str();
  synth_cmd->add_option("--depth", sa.depth, "Maximum interactions per ray")->capture_default_str();
  synth_cmd->add_option("--out", sa.out, "Observation CSV output")->required();

  LocalizeArgs la;
  auto *loc_cmd = app.add_subcommand("localize", "Estimate receiver positions from observations");
  loc_cmd->add_option("--method", la.method, "Localization method")
      ->required()
      ->check(CLI::IsMember({"aoa", "fusion", "tdoa", "rank", "fingerprint"}));
  loc_cmd->add_option("--anchors", la.anchors, "Anchor CSV")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--obs", la.obs, "Observation CSV")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--grid", la.grid, "Rank grid cell size (m)")->capture_default_str();
  loc_cmd->add_option("--range", la.range, "Rank grid communication range (m)")->capture_default_str();
  loc_cmd->add_option("--ple", la.ple, "Path-loss exponent for fusion")->capture_default_str();
  loc_cmd->add_option("--gains", la.gains_db, "Combined antenna gains for fusion (dB)")->capture_default_str();
  loc_cmd->add_option("--db", la.db, "Fingerprint database (observation CSV with truths)")
      ->check(CLI::ExistingFile);
  loc_cmd->add_option("--hpbw", la.hpbw_deg, "Fingerprint AoA beamwidth (deg)")->capture_default_str();
  loc_cmd->add_option("--bw", la.bw_mhz, "Fingerprint ToA bandwidth (MHz)")->capture_default_str();
  loc_cmd->add_flag("--skip-incomplete", la.skip_incomplete, "Skip receivers the method cannot solve");
  loc_cmd->add_option("--out", la.out, "Estimates CSV output")->required();

  std::string est_path, eval_obs, eval_out;
  auto *eval_cmd = app.add_subcommand("eval", "Score estimates against true positions");
  eval_cmd->add_option("--estimates", est_path, "Estimates CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--obs", eval_obs, "Observation CSV with true positions")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Report JSON output")->required();

  std::string plot_pdp, plot_errors, plot_out;
  auto *plot_cmd = app.add_subcommand("plot", "Render a PDP or error report as SVG");
  auto *pdp_opt = plot_cmd->add_option("--pdp", plot_pdp, "PDP CSV (delay_ns, power_dbm)")->check(CLI::ExistingFile);
  auto *err_opt = plot_cmd->add_option("--errors", plot_errors, "Report JSON")->check(CLI::ExistingFile);
  pdp_opt->excludes(err_opt);
  plot_cmd->add_option("--out", plot_out, "SVG output")->required();

  std::vector<std::string> argv_store{"mmpos"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &s : argv_store)
    argv.push_back(s.data());

  try
  {
    app.parse(static_cast<int>(argv.size()), argv.data());
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try
  {
    if (*trace_cmd)
      return cmd_trace(ta, out);
    if (*synth_cmd)
      return cmd_synth(sa, out);
    if (*loc_cmd)
      return cmd_localize(la, out, err);
    if (*eval_cmd)
      return cmd_eval(est_path, eval_obs, eval_out, out);
    return cmd_plot(plot_pdp, plot_errors, plot_out);
  }
  catch (const UsageError &e)
  {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  catch (const std::exception &e)
  {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

} // namespace mmpos::cli
