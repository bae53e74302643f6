#include "mmpos/raytracer.hpp"
#include "mmpos/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace mmpos
{

const char *to_string(InteractionKind kind)
{
  return kind == InteractionKind::reflection ? "reflection" : "transmission";
}

void validate(const TraceConfig &cfg)
{
  if (cfg.n_rays < 3)
    throw DomainError("n_rays must be at least 3");
  if (cfg.max_interactions < 0)
    throw DomainError("max_interactions must be non-negative");
  if (cfg.detection_mode == DetectionMode::fixed_radius && !(cfg.fixed_radius_m > 0.0))
    throw DomainError("fixed detection radius must be positive");
}

PathKey RayPath::key() const
{
  PathKey k;
  k.reserve(interactions.size());
  for (const auto &i : interactions)
    k.push_back({i.kind, i.obstruction_id});
  return k;
}

const RayPath &ChannelPrediction::strongest_path() const
{
  if (paths.empty())
    throw DomainError("prediction has no paths");
  return *std::max_element(paths.begin(), paths.end(), [](const RayPath &a, const RayPath &b) {
    return a.path_gain_db < b.path_gain_db;
  });
}

double detection_radius(double path_length, int n_rays)
{
  if (!(path_length > 0.0))
    throw DomainError("path length must be positive");
  if (n_rays < 1)
    throw DomainError("n_rays must be positive");
  return std::numbers::pi * path_length / static_cast<double>(n_rays);
}

double db_power_sum(std::span<const double> gains_db)
{
  if (gains_db.empty())
    return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(gains_db.begin(), gains_db.end());
  if (!std::isfinite(peak))
    return peak;
  double acc = 0.0;
  for (double g : gains_db)
    acc += std::pow(10.0, (g - peak) / 10.0);
  return peak + 10.0 * std::log10(acc);
}

namespace
{

double path_loss_clamped(const CiPathLossModel &model, double length)
{
  // the CI model is only defined from d0 outward
  return ci_path_loss(model, std::max(length, CiPathLossModel::d0));
}

// Sign of p relative to the directed wall line, 0 when within tolerance of it.
int side_of(const Segment &wall, const Point2 &p)
{
  const Point2 e = wall.b - wall.a;
  const double c = cross(e, p - wall.a) / norm(e);
  if (std::abs(c) <= kGeomTolerance)
    return 0;
  return c > 0.0 ? 1 : -1;
}

struct Branch
{
  Ray2 ray;
  double length_before = 0.0;
  double loss_db = 0.0;
  PathKey key;
};

} // namespace

std::optional<RayPath> resolve_path(const EnvironmentMap &env, const Point2 &tx, const Point2 &rx,
                                    const PathKey &key, const CiPathLossModel &model)
{
  const std::size_t n = key.size();
  std::vector<const Obstruction *> walls(n);
  for (std::size_t k = 0; k < n; ++k)
  {
    walls[k] = env.find(key[k].obstruction_id);
    if (!walls[k])
      throw DomainError("unknown obstruction '" + key[k].obstruction_id + "' in path key");
  }

  // images[k] is the source image after the first k interactions
  std::vector<Point2> images(n + 1);
  images[0] = tx;
  for (std::size_t k = 0; k < n; ++k)
    images[k + 1] = key[k].kind == InteractionKind::reflection ? mirror(images[k], walls[k]->wall) : images[k];

  std::vector<Point2> vertices(n + 2);
  vertices.front() = tx;
  vertices.back() = rx;
  constexpr double param_slack = 1e-9;
  for (std::size_t k = n; k-- > 0;)
  {
    const Point2 &next = vertices[k + 2];
    if (distance(images[k + 1], next) <= kGeomTolerance)
      return std::nullopt;
    double s = 0.0;
    const auto q = line_intersection(images[k + 1], next, walls[k]->wall, &s);
    if (!q || s < -param_slack || s > 1.0 + param_slack)
      return std::nullopt;
    vertices[k + 1] = *q;
  }

  RayPath path;
  path.tx = tx;
  path.rx = rx;
  double loss_db = 0.0;
  for (std::size_t k = 0; k < n; ++k)
  {
    const Segment &wall = walls[k]->wall;
    const Point2 &prev = vertices[k];
    const Point2 &here = vertices[k + 1];
    const Point2 &next = vertices[k + 2];
    const int s_in = side_of(wall, prev);
    const int s_out = side_of(wall, next);
    if (s_in == 0 || s_out == 0)
      return std::nullopt;
    const bool reflect = key[k].kind == InteractionKind::reflection;
    if (reflect ? s_in != s_out : s_in == s_out)
      return std::nullopt;

    const Point2 dir_in = here - prev;
    const double c = std::min(1.0, std::abs(dot(dir_in, wall.normal())) / norm(dir_in));
    const double incidence = std::acos(c);
    const FresnelResult fr = fresnel_power(incidence, walls[k]->eps_r);
    const double loss = fraction_to_loss_db(reflect ? fr.reflect_power_frac : fr.transmit_power_frac);
    if (!std::isfinite(loss))
      return std::nullopt;
    loss_db += loss;
    path.interactions.push_back({key[k].kind, here, walls[k]->id, incidence, loss});
  }

  // every leg must be free of walls other than the ones at its endpoints
  constexpr double leg_slack = 1e-7;
  for (std::size_t k = 0; k + 1 < vertices.size(); ++k)
  {
    if (distance(vertices[k], vertices[k + 1]) <= kGeomTolerance)
      return std::nullopt;
    if (!crossings(env, vertices[k], vertices[k + 1], leg_slack).empty())
      return std::nullopt;
    path.total_length += distance(vertices[k], vertices[k + 1]);
  }

  path.vertices = std::move(vertices);
  path.delay = path.total_length / kSpeedOfLight;
  path.path_gain_db = -path_loss_clamped(model, path.total_length) - loss_db;
  path.aoa_at_rx = heading(path.vertices[path.vertices.size() - 2] - rx);
  path.aod_at_tx = heading(path.vertices[1] - tx);
  return path;
}

ChannelPrediction trace(const EnvironmentMap &env, const Point2 &tx, const Point2 &rx, double tx_power_dbm,
                        const FrequencyBand &band, const CiPathLossModel &model, const TraceConfig &cfg)
{
  validate(env);
  validate(band);
  validate(model);
  validate(cfg);
  if (!env.contains(tx))
    throw DomainError("tx outside map bounds");
  if (!env.contains(rx))
    throw DomainError("rx outside map bounds");
  if (distance(tx, rx) <= kGeomTolerance)
    throw DomainError("tx and rx coincide");
  if (!std::isfinite(tx_power_dbm))
    throw DomainError("tx power must be finite");

  auto radius_at = [&](double length) {
    return cfg.detection_mode == DetectionMode::fixed_radius ? cfg.fixed_radius_m
                                                             : detection_radius(length, cfg.n_rays);
  };

  // receptions keyed by interaction sequence, keeping the smallest miss distance
  std::map<PathKey, double> received;
  auto record = [&](const PathKey &key, double miss) {
    auto [it, inserted] = received.emplace(key, miss);
    if (!inserted)
      it->second = std::min(it->second, miss);
  };

  std::vector<Branch> stack;
  for (int k = 0; k < cfg.n_rays; ++k)
  {
    const double angle = 2.0 * std::numbers::pi * k / cfg.n_rays;
    stack.push_back({Ray2::from_heading(tx, angle), 0.0, 0.0, {}});

    while (!stack.empty())
    {
      Branch br = std::move(stack.back());
      stack.pop_back();

      const auto hit = first_obstruction(br.ray, env);
      const double reach = hit ? hit->distance : 0.0;

      const Point2 to_rx = rx - br.ray.origin();
      const double along = dot(to_rx, br.ray.direction());
      if (along > kGeomTolerance && along < reach)
      {
        const double miss = std::abs(cross(br.ray.direction(), to_rx));
        if (miss <= radius_at(br.length_before + along))
          record(br.key, miss);
      }

      if (!hit || hit->boundary || static_cast<int>(br.key.size()) >= cfg.max_interactions)
        continue;

      const Obstruction &wall = *env.find(hit->obstruction_id);
      const FresnelResult fr = fresnel_power(hit->incidence_angle, wall.eps_r);
      const double length_at_hit = br.length_before + hit->distance;
      const Point2 &d = br.ray.direction();
      const Point2 n = wall.wall.normal();

      auto spawn = [&](InteractionKind kind, double fraction, const Point2 &dir) {
        const double loss = br.loss_db + fraction_to_loss_db(fraction);
        if (!std::isfinite(loss))
          return;
        if (-path_loss_clamped(model, length_at_hit) - loss < cfg.min_path_gain_db)
          return;
        Branch next{Ray2(hit->point + dir * kRelaunchOffset, dir), length_at_hit + kRelaunchOffset, loss, br.key};
        next.key.push_back({kind, wall.id});
        stack.push_back(std::move(next));
      };
      spawn(InteractionKind::transmission, fr.transmit_power_frac, d);
      spawn(InteractionKind::reflection, fr.reflect_power_frac, d - n * (2.0 * dot(d, n)));
    }
  }

  // exact LOS walk, independent of launch angles
  {
    PathKey los;
    for (const auto &c : crossings(env, tx, rx))
      los.push_back({InteractionKind::transmission, c.obstruction_id});
    if (static_cast<int>(los.size()) <= cfg.max_interactions)
      record(los, 0.0);
    else
      received.erase(los);
  }

  ChannelPrediction out;
  for (const auto &[key, miss] : received)
  {
    auto path = resolve_path(env, tx, rx, key, model);
    if (!path || path->path_gain_db < cfg.min_path_gain_db)
      continue;
    path->detection_miss = miss;
    out.paths.push_back(std::move(*path));
  }

  std::stable_sort(out.paths.begin(), out.paths.end(), [](const RayPath &a, const RayPath &b) {
    if (a.delay != b.delay)
      return a.delay < b.delay;
    return a.path_gain_db > b.path_gain_db;
  });

  if (out.paths.empty())
    return out;

  std::vector<double> gains;
  gains.reserve(out.paths.size());
  for (const auto &p : out.paths)
    gains.push_back(p.path_gain_db);
  out.total_rx_power_dbm = tx_power_dbm + db_power_sum(gains);

  const RayPath &best = out.strongest_path();
  out.strongest_aoa = best.aoa_at_rx;
  out.strongest_toa = best.delay;
  out.pdp = build_pdp(out.paths, band, tx_power_dbm);
  return out;
}

PowerDelayProfile build_pdp(std::span<const RayPath> paths, const FrequencyBand &band, double tx_power_dbm)
{
  validate(band);
  if (paths.empty())
    throw DomainError("cannot build a PDP from an empty path list");

  PowerDelayProfile pdp;
  pdp.bin_width = band.bin_width();

  std::map<long, std::vector<double>> per_bin;
  for (const auto &p : paths)
  {
    const long index = static_cast<long>(std::floor(p.delay * band.bandwidth_hz));
    per_bin[index].push_back(tx_power_dbm + p.path_gain_db);
  }

  for (const auto &[index, powers] : per_bin)
  {
    const double power = db_power_sum(powers);
    if (power < kPdpNoiseFloorDbm)
      continue;
    pdp.bins.push_back({index, static_cast<double>(index) * pdp.bin_width, power});
  }

  if (!pdp.bins.empty())
  {
    pdp.first_arrival_delay = pdp.bins.front().delay;
    pdp.peak_power_dbm = std::max_element(pdp.bins.begin(), pdp.bins.end(), [](const PdpBin &a, const PdpBin &b) {
                           return a.power_dbm < b.power_dbm;
                         })->power_dbm;
  }
  else
  {
    const auto first = std::min_element(paths.begin(), paths.end(),
                                        [](const RayPath &a, const RayPath &b) { return a.delay < b.delay; });
    pdp.first_arrival_delay = std::floor(first->delay * band.bandwidth_hz) * pdp.bin_width;
  }
  return pdp;
}

} // namespace mmpos
