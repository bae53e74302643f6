#include "mmpos/locengine.hpp"
#include "mmpos/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace mmpos
{

void validate_anchors(std::span<const AnchorNode> anchors)
{
  std::set<std::string> ids;
  for (const auto &a : anchors)
  {
    if (a.id.empty())
      throw DomainError("anchor with empty id");
    if (!ids.insert(a.id).second)
      throw DomainError("duplicate anchor id '" + a.id + "'");
    if (!a.position.finite() || !std::isfinite(a.tx_power_dbm) || !(a.carrier_hz > 0.0))
      throw DomainError("anchor '" + a.id + "' has invalid fields");
  }
}

const AnchorNode &find_anchor(std::span<const AnchorNode> anchors, const std::string &id)
{
  for (const auto &a : anchors)
    if (a.id == id)
      return a;
  throw DomainError("unknown anchor '" + id + "'");
}

// ---------------------------------------------------------------------------
// AoA least squares

namespace
{

struct Sym2
{
  double xx = 0.0, xy = 0.0, yy = 0.0;

  std::array<double, 2> eigenvalues() const
  {
    const double mean = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return {mean + r, mean - r};
  }

  Point2 solve(const Point2 &rhs) const
  {
    const double det = xx * yy - xy * xy;
    return {(yy * rhs.x - xy * rhs.y) / det, (xx * rhs.y - xy * rhs.x) / det};
  }
};

Point2 bearing_direction(const BearingObservation &b) { return unit_from_heading(b.aoa + std::numbers::pi); }

} // namespace

double bearing_objective(std::span<const AnchorNode> anchors, std::span<const BearingObservation> bearings,
                         const Point2 &p)
{
  double acc = 0.0;
  for (const auto &b : bearings)
  {
    const Point2 v = p - find_anchor(anchors, b.anchor_id).position;
    const double perp = cross(bearing_direction(b), v);
    acc += perp * perp;
  }
  return acc;
}

PositionEstimate aoa_least_squares(std::span<const AnchorNode> anchors,
                                   std::span<const BearingObservation> bearings)
{
  validate_anchors(anchors);
  std::set<std::string> distinct;
  for (const auto &b : bearings)
  {
    if (!std::isfinite(b.aoa))
      throw DomainError("bearing to '" + b.anchor_id + "' is not finite");
    find_anchor(anchors, b.anchor_id);
    distinct.insert(b.anchor_id);
  }
  if (distinct.size() < 2)
    throw DomainError("AoA least squares needs bearings to at least two distinct anchors");

  // sum (I - u u^T) p = sum (I - u u^T) a
  Sym2 m;
  Point2 rhs;
  for (const auto &b : bearings)
  {
    const Point2 u = bearing_direction(b);
    const Point2 a = find_anchor(anchors, b.anchor_id).position;
    const Sym2 proj{1.0 - u.x * u.x, -u.x * u.y, 1.0 - u.y * u.y};
    m.xx += proj.xx;
    m.xy += proj.xy;
    m.yy += proj.yy;
    rhs = rhs + Point2{proj.xx * a.x + proj.xy * a.y, proj.xy * a.x + proj.yy * a.y};
  }

  const auto ev = m.eigenvalues();
  if (!(ev[1] > ev[0] * 1e-12))
    throw DegenerateGeometryError("bearing lines are parallel; normal equations are singular");

  PositionEstimate est;
  est.method = "aoa";
  est.point = m.solve(rhs);
  est.residual = bearing_objective(anchors, bearings, est.point);
  return est;
}

// ---------------------------------------------------------------------------
// AoA + path loss fusion

PositionEstimate fuse_aoa_pathloss(const AnchorNode &anchor, const BearingObservation &bearing,
                                   const RssiObservation &rssi, const CiPathLossModel &model, double antenna_gains_db)
{
  validate(model);
  if (bearing.anchor_id != anchor.id || rssi.anchor_id != anchor.id)
    throw DomainError("fusion observations must refer to anchor '" + anchor.id + "'");
  if (!std::isfinite(bearing.aoa) || !std::isfinite(rssi.rssi_dbm) || !std::isfinite(antenna_gains_db))
    throw DomainError("fusion inputs must be finite");

  const double path_loss = anchor.tx_power_dbm + antenna_gains_db - rssi.rssi_dbm;
  const double reference = fspl_ref(model.carrier_hz);
  const double d_ml = ci_distance(model, path_loss);
  if (path_loss < reference)
  {
    std::ostringstream msg;
    msg << "path loss " << path_loss << " dB is below the free-space reference " << reference
        << " dB (implied distance " << d_ml << " m < 1 m)";
    throw DomainError(msg.str());
  }

  const double departure = bearing.aoa + std::numbers::pi;
  PositionEstimate est;
  est.method = "fusion";
  est.point = anchor.position + unit_from_heading(departure) * d_ml;
  est.residual = 0.0;
  est.diagnostics.push_back("d_ml=" + std::to_string(d_ml));
  return est;
}

// ---------------------------------------------------------------------------
// TDoA

namespace
{

struct TdoaTerm
{
  Point2 a;
  Point2 b;
  double k = 0.0;
};

Point2 unit_or_zero(const Point2 &v)
{
  const double n = norm(v);
  return n > 1e-300 ? v * (1.0 / n) : Point2{};
}

double objective(std::span<const TdoaTerm> terms, const Point2 &p)
{
  double acc = 0.0;
  for (const auto &t : terms)
  {
    const double r = distance(p, t.a) - distance(p, t.b) - t.k;
    acc += r * r;
  }
  return acc;
}

struct LmResult
{
  Point2 point;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

LmResult levenberg_marquardt(std::span<const TdoaTerm> terms, Point2 p, int max_iterations, double scale)
{
  LmResult res{p, objective(terms, p), 0, false};
  double lambda = 1e-3;
  const double f_floor = 1e-28 * scale * scale;

  for (int iter = 1; iter <= max_iterations; ++iter)
  {
    res.iterations = iter;
    if (res.objective <= f_floor)
    {
      res.converged = true;
      return res;
    }

    Sym2 jtj;
    Point2 jtr;
    for (const auto &t : terms)
    {
      const Point2 g = unit_or_zero(res.point - t.a) - unit_or_zero(res.point - t.b);
      const double r = distance(res.point, t.a) - distance(res.point, t.b) - t.k;
      jtj.xx += g.x * g.x;
      jtj.xy += g.x * g.y;
      jtj.yy += g.y * g.y;
      jtr = jtr + g * r;
    }
    if (norm(jtr) <= 1e-15 * scale)
    {
      res.converged = true;
      return res;
    }

    bool accepted = false;
    while (lambda < 1e20)
    {
      Sym2 damped = jtj;
      const double diag = std::max({jtj.xx, jtj.yy, 1e-12});
      damped.xx += lambda * diag;
      damped.yy += lambda * diag;
      const Point2 step = -damped.solve(jtr);
      const Point2 candidate = res.point + step;
      const double f = objective(terms, candidate);
      if (std::isfinite(f) && f < res.objective)
      {
        const bool tiny = norm(step) <= 1e-13 * (scale + norm(res.point));
        res.point = candidate;
        res.objective = f;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (tiny)
        {
          res.converged = true;
          return res;
        }
        break;
      }
      lambda *= 4.0;
    }
    // no descent direction left: stationary point
    if (!accepted)
    {
      res.converged = true;
      return res;
    }
  }
  return res;
}

// Rank of the anchor-pair graph: the number of independent differences.
std::size_t independent_pairs(std::span<const TdoaObservation> obs)
{
  std::map<std::string, std::string> parent;
  auto root = [&](std::string x) {
    while (parent.at(x) != x)
      x = parent.at(x);
    return x;
  };
  std::size_t rank = 0;
  for (const auto &o : obs)
  {
    parent.try_emplace(o.anchor_a_id, o.anchor_a_id);
    parent.try_emplace(o.anchor_b_id, o.anchor_b_id);
    const std::string ra = root(o.anchor_a_id);
    const std::string rb = root(o.anchor_b_id);
    if (ra != rb)
    {
      parent[ra] = rb;
      ++rank;
    }
  }
  return rank;
}

} // namespace

double tdoa_objective(std::span<const AnchorNode> anchors, std::span<const TdoaObservation> observations,
                      const Point2 &p)
{
  double acc = 0.0;
  for (const auto &o : observations)
  {
    const double r = distance(p, find_anchor(anchors, o.anchor_a_id).position) -
                     distance(p, find_anchor(anchors, o.anchor_b_id).position) - o.delta_distance;
    acc += r * r;
  }
  return acc;
}

PositionEstimate tdoa_solve(std::span<const AnchorNode> anchors, std::span<const TdoaObservation> observations,
                            const TdoaOptions &options)
{
  validate_anchors(anchors);
  std::vector<TdoaTerm> terms;
  std::vector<Point2> used;
  std::set<std::string> used_ids;
  for (const auto &o : observations)
  {
    if (o.anchor_a_id == o.anchor_b_id)
      throw DomainError("TDoA pair must use two different anchors ('" + o.anchor_a_id + "')");
    const auto &a = find_anchor(anchors, o.anchor_a_id);
    const auto &b = find_anchor(anchors, o.anchor_b_id);
    if (!std::isfinite(o.delta_distance))
      throw DomainError("TDoA distance difference must be finite");
    if (std::abs(o.delta_distance) > distance(a.position, b.position) + kGeomTolerance)
      throw DomainError("infeasible TDoA: |k| = " + std::to_string(std::abs(o.delta_distance)) +
                        " m exceeds the separation of anchors '" + a.id + "' and '" + b.id + "'");
    terms.push_back({a.position, b.position, o.delta_distance});
    for (const auto *n : {&a, &b})
      if (used_ids.insert(n->id).second)
        used.push_back(n->position);
  }
  const std::size_t rank = independent_pairs(observations);
  if (rank < 2)
    throw DomainError("insufficient observations: TDoA needs at least two independent anchor pairs");

  Point2 centroid;
  for (const auto &p : used)
    centroid = centroid + p;
  centroid = centroid * (1.0 / static_cast<double>(used.size()));
  double scale = 0.0;
  for (const auto &p : used)
    scale = std::max(scale, distance(p, centroid));
  scale = std::max(scale, 1.0);

  const Point2 start = options.initial_guess.value_or(centroid);
  if (!start.finite())
    throw DomainError("initial guess must be finite");

  const LmResult main = levenberg_marquardt(terms, start, options.max_iterations, scale);

  PositionEstimate est;
  est.method = "tdoa";
  est.point = main.point;
  est.residual = main.objective;
  est.diagnostics.push_back("iterations=" + std::to_string(main.iterations));

  if (!main.converged)
    throw ConvergenceError("TDoA solver did not converge within " + std::to_string(options.max_iterations) +
                               " iterations",
                           est);

  const double zero = 1e-16 * scale * scale;
  // Two independent pairs can leave two exact intersections of the hyperbola arms; a start
  // that stalls short of zero may sit in a local minimum. Both cases get a deterministic
  // multi-start from rings around every anchor and the centroid.
  if (rank > 2 && main.objective <= zero)
    return est;

  std::vector<LmResult> runs;
  std::vector<Point2> seeds_at = used;
  seeds_at.push_back(centroid);
  for (const auto &center : seeds_at)
    for (double radius : {0.25, 0.75, 1.5})
      for (int j = 0; j < 8; ++j)
      {
        const Point2 seed = center + unit_from_heading(j * std::numbers::pi / 4.0) * (radius * scale);
        const LmResult r = levenberg_marquardt(terms, seed, options.max_iterations, scale);
        if (r.converged)
          runs.push_back(r);
      }

  if (main.objective > zero)
  {
    const auto best = std::min_element(runs.begin(), runs.end(),
                                       [](const LmResult &l, const LmResult &r) { return l.objective < r.objective; });
    if (best != runs.end() && best->objective < main.objective * (1.0 - 1e-9))
    {
      est.point = best->point;
      est.residual = best->objective;
      est.diagnostics.push_back("restarted: initial guess converged to a local minimum");
    }
  }

  if (rank == 2)
  {
    std::vector<Point2> minima;
    if (est.residual <= zero)
      minima.push_back(est.point);
    for (const auto &r : runs)
    {
      if (r.objective > zero)
        continue;
      const bool known = std::any_of(minima.begin(), minima.end(),
                                     [&](const Point2 &m) { return distance(m, r.point) <= 1e-6 * scale; });
      if (!known)
        minima.push_back(r.point);
    }
    if (minima.size() > 1)
    {
      const auto nearest = std::min_element(minima.begin(), minima.end(), [&](const Point2 &l, const Point2 &r) {
        return distance(l, start) < distance(r, start);
      });
      est.point = *nearest;
      est.residual = objective(terms, est.point);
      est.diagnostics.push_back("ambiguous: " + std::to_string(minima.size()) +
                                " exact hyperbola intersections; returned the one nearest the initial guess");
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// RSSI rank vectors

DistanceRankVector rank_vector(std::span<const RssiObservation> observations)
{
  if (observations.empty())
    throw DomainError("rank vector needs at least one RSSI observation");
  std::set<std::string> ids;
  for (const auto &o : observations)
  {
    if (!ids.insert(o.anchor_id).second)
      throw DomainError("duplicate anchor id '" + o.anchor_id + "' in RSSI observations");
    if (!std::isfinite(o.rssi_dbm))
      throw DomainError("RSSI for '" + o.anchor_id + "' is not finite");
  }
  std::vector<RssiObservation> sorted(observations.begin(), observations.end());
  std::sort(sorted.begin(), sorted.end(), [](const RssiObservation &a, const RssiObservation &b) {
    if (a.rssi_dbm != b.rssi_dbm)
      return a.rssi_dbm > b.rssi_dbm;
    return a.anchor_id < b.anchor_id;
  });
  DistanceRankVector v;
  for (const auto &o : sorted)
    v.ids.push_back(o.anchor_id);
  return v;
}

DistanceRankVector ideal_rank_vector(std::span<const AnchorNode> anchors, const Point2 &p)
{
  std::vector<std::pair<double, const AnchorNode *>> d;
  d.reserve(anchors.size());
  for (const auto &a : anchors)
    d.emplace_back(distance(p, a.position), &a);
  std::sort(d.begin(), d.end(), [](const auto &l, const auto &r) {
    if (l.first != r.first)
      return l.first < r.first;
    return l.second->id < r.second->id;
  });
  DistanceRankVector v;
  for (const auto &[dist, a] : d)
    v.ids.push_back(a->id);
  return v;
}

long rank_difference_sq(const DistanceRankVector &u, const DistanceRankVector &v)
{
  if (u.size() != v.size())
    throw DomainError("rank vectors have different lengths");
  std::map<std::string, long> rank_u;
  for (std::size_t i = 0; i < u.ids.size(); ++i)
    if (!rank_u.emplace(u.ids[i], static_cast<long>(i)).second)
      throw DomainError("rank vector repeats anchor '" + u.ids[i] + "'");
  long acc = 0;
  std::set<std::string> seen;
  for (std::size_t j = 0; j < v.ids.size(); ++j)
  {
    const auto it = rank_u.find(v.ids[j]);
    if (it == rank_u.end())
      throw DomainError("rank vectors cover different anchors ('" + v.ids[j] + "')");
    if (!seen.insert(v.ids[j]).second)
      throw DomainError("rank vector repeats anchor '" + v.ids[j] + "'");
    const long d = it->second - static_cast<long>(j);
    acc += d * d;
  }
  return acc;
}

double spearman_rho(const DistanceRankVector &u, const DistanceRankVector &v)
{
  const long m = static_cast<long>(u.size());
  if (m < 2)
    throw DomainError("Spearman rho needs at least two ranked anchors");
  const long d2 = rank_difference_sq(u, v);
  return 1.0 - 6.0 * static_cast<double>(d2) / static_cast<double>(m * (m * m - 1));
}

std::optional<std::size_t> RankGridResult::cell_of(const Point2 &p) const
{
  if (cells.empty() || !p.finite())
    return std::nullopt;
  const long ix = static_cast<long>(std::floor((p.x - lower.x) / cell_size));
  const long iy = static_cast<long>(std::floor((p.y - lower.y) / cell_size));
  if (ix < 0 || iy < 0 || ix >= nx || iy >= ny)
    return std::nullopt;
  return static_cast<std::size_t>(iy * nx + ix);
}

RankGridResult rank_grid_scores(std::span<const AnchorNode> anchors, const DistanceRankVector &measured,
                                const GridSpec &grid)
{
  validate_anchors(anchors);
  if (!(grid.cell_size > 0.0) || !(grid.comm_range > 0.0))
    throw DomainError("grid cell size and communication range must be positive");
  if (measured.ids.empty())
    throw DomainError("measured rank vector is empty");

  std::vector<AnchorNode> ranked;
  for (const auto &id : measured.ids)
  {
    if (std::any_of(ranked.begin(), ranked.end(), [&](const AnchorNode &a) { return a.id == id; }))
      throw DomainError("measured rank vector repeats anchor '" + id + "'");
    ranked.push_back(find_anchor(anchors, id));
  }

  RankGridResult res;
  res.cell_size = grid.cell_size;
  res.lower = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  res.upper = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto &a : ranked)
  {
    res.lower.x = std::max(res.lower.x, a.position.x - grid.comm_range);
    res.lower.y = std::max(res.lower.y, a.position.y - grid.comm_range);
    res.upper.x = std::min(res.upper.x, a.position.x + grid.comm_range);
    res.upper.y = std::min(res.upper.y, a.position.y + grid.comm_range);
  }
  const double w = res.upper.x - res.lower.x;
  const double h = res.upper.y - res.lower.y;
  if (!(w > 0.0) || !(h > 0.0))
    throw CoverageError("estimation rectangles of the ranked anchors do not overlap");

  res.nx = std::max(1L, static_cast<long>(std::ceil(w / grid.cell_size - 1e-9)));
  res.ny = std::max(1L, static_cast<long>(std::ceil(h / grid.cell_size - 1e-9)));
  if (static_cast<double>(res.nx) * static_cast<double>(res.ny) > 5e7)
    throw DomainError("grid too fine for the covered area");

  const bool single = ranked.size() < 2;
  long best_d2 = std::numeric_limits<long>::max();
  res.cells.reserve(static_cast<std::size_t>(res.nx * res.ny));
  for (long iy = 0; iy < res.ny; ++iy)
    for (long ix = 0; ix < res.nx; ++ix)
    {
      GridCell c;
      c.ix = ix;
      c.iy = iy;
      c.center = {res.lower.x + (static_cast<double>(ix) + 0.5) * grid.cell_size,
                  res.lower.y + (static_cast<double>(iy) + 0.5) * grid.cell_size};
      // exact integer comparison keeps the tie set free of rounding noise
      const long d2 = single ? 0 : rank_difference_sq(ideal_rank_vector(ranked, c.center), measured);
      const auto m = static_cast<double>(ranked.size());
      c.rho = single ? 1.0 : 1.0 - 6.0 * static_cast<double>(d2) / (m * (m * m - 1.0));
      if (d2 < best_d2)
      {
        best_d2 = d2;
        res.residence.clear();
      }
      if (d2 == best_d2)
        res.residence.push_back(res.cells.size());
      res.cells.push_back(c);
    }

  res.rho_max = res.cells[res.residence.front()].rho;
  Point2 sum;
  for (std::size_t i : res.residence)
    sum = sum + res.cells[i].center;
  res.centroid = sum * (1.0 / static_cast<double>(res.residence.size()));
  return res;
}

PositionEstimate rank_grid_localize(std::span<const AnchorNode> anchors, const DistanceRankVector &measured,
                                    const GridSpec &grid)
{
  const RankGridResult res = rank_grid_scores(anchors, measured, grid);
  PositionEstimate est;
  est.method = "rank";
  est.point = res.centroid;
  est.residual = 1.0 - res.rho_max;
  est.diagnostics.push_back("residence_cells=" + std::to_string(res.residence.size()));
  est.diagnostics.push_back("rho_max=" + std::to_string(res.rho_max));
  return est;
}

// ---------------------------------------------------------------------------
// Fingerprinting

std::optional<double> fingerprint_distance(const FeatureMap &a, const FeatureMap &b, const FingerprintConfig &cfg)
{
  const double sigma_aoa = cfg.hpbw / 2.0;
  const double sigma_toa = 1.0 / cfg.bandwidth_hz;
  double acc = 0.0;
  double weight = 0.0;
  for (const auto &[id, fa] : a)
  {
    const auto it = b.find(id);
    if (it == b.end())
      continue;
    const FeatureSet &fb = it->second;
    if (fa.rssi_dbm && fb.rssi_dbm)
    {
      const double d = (*fa.rssi_dbm - *fb.rssi_dbm) / cfg.sigma_rssi_db;
      acc += cfg.w_rssi * d * d;
      weight += cfg.w_rssi;
    }
    if (fa.aoa && fb.aoa)
    {
      const double d = wrap_pi(*fa.aoa - *fb.aoa) / sigma_aoa;
      acc += cfg.w_aoa * d * d;
      weight += cfg.w_aoa;
    }
    if (fa.toa && fb.toa)
    {
      const double d = (*fa.toa - *fb.toa) / sigma_toa;
      acc += cfg.w_toa * d * d;
      weight += cfg.w_toa;
    }
  }
  if (!(weight > 0.0))
    return std::nullopt;
  return acc / weight;
}

PositionEstimate fingerprint_localize(std::span<const FingerprintRecord> db, const FeatureMap &query,
                                      const FingerprintConfig &cfg)
{
  if (db.empty())
    throw DomainError("fingerprint database is empty");
  if (!(cfg.sigma_rssi_db > 0.0) || !(cfg.hpbw > 0.0) || !(cfg.bandwidth_hz > 0.0))
    throw DomainError("fingerprint normalizers must be positive");
  if (cfg.w_rssi < 0.0 || cfg.w_aoa < 0.0 || cfg.w_toa < 0.0)
    throw DomainError("fingerprint weights must be non-negative");

  std::optional<std::size_t> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < db.size(); ++i)
  {
    const auto score = fingerprint_distance(query, db[i].features, cfg);
    if (score && (!best || *score < best_score))
    {
      best = i;
      best_score = *score;
    }
  }
  if (!best)
    throw DomainError("query shares no feature dimension with any fingerprint record");

  PositionEstimate est;
  est.method = "fingerprint";
  est.point = db[*best].location;
  est.residual = best_score;
  est.diagnostics.push_back("record=" + std::to_string(*best));
  return est;
}

} // namespace mmpos
