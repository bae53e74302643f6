#include "test_support.hpp"

#include "mmpos/channel.hpp"
#include "mmpos/errors.hpp"
#include "mmpos/raytracer.hpp"

#include <doctest.h>

#include <array>

using namespace mmpos;
using mmpos::test::Gen;
using mmpos::test::kPi;

namespace
{

const FrequencyBand kBand{28e9, 800e6};
const CiPathLossModel kModel{1.7, 28e9};

// Single-bounce geometry by the image method: mirror tx across the wall line and intersect
// the straight image->rx line with the wall. Returns the unfolded length when the specular
// point lies on the wall and both ends sit on the same side of it. With n_rays > 0 the point
// must also sit at least one launch spacing (2 pi |tx - P| / n) inside the wall ends, which is
// where a uniformly launched fan is guaranteed to land a ray whose bounce passes within the
// detection radius.
std::optional<double> image_oracle(const Point2 &tx, const Point2 &rx, const Segment &wall, int n_rays = 0)
{
  const Point2 d = wall.b - wall.a;
  const double side_tx = cross(d, tx - wall.a);
  const double side_rx = cross(d, rx - wall.a);
  if (side_tx * side_rx <= 0.0)
    return std::nullopt;
  const Point2 n{-d.y / norm(d), d.x / norm(d)};
  const Point2 image = tx - n * (2.0 * dot(tx - wall.a, n));
  // intersection of image->rx with the wall line, parameterized along the wall
  const Point2 r = rx - image;
  const double denom = cross(r, d);
  if (std::abs(denom) < 1e-15)
    return std::nullopt;
  const double s = cross(r, image - wall.a) / denom;
  const double margin =
      n_rays > 0 ? 2.0 * kPi * distance(tx, wall.a + d * s) / n_rays / norm(d) : 0.0;
  if (s < margin || s > 1.0 - margin)
    return std::nullopt;
  return distance(image, rx);
}

const RayPath *find_path(const ChannelPrediction &p, const PathKey &key)
{
  for (const auto &path : p.paths)
    if (path.key() == key)
      return &path;
  return nullptr;
}

PathKey reflect(const std::string &id) { return {{InteractionKind::reflection, id}}; }

} // namespace

TEST_CASE("detection_radius")
{
  CHECK(detection_radius(10.0, 100) == doctest::Approx(kPi * 10.0 / 100.0));
  CHECK(detection_radius(10.0, 100) == doctest::Approx(0.3142).epsilon(1e-4));
  CHECK(detection_radius(100.0, 100) == doctest::Approx(3.142).epsilon(1e-3));
  CHECK(detection_radius(10.0, 1000000) < 1e-4);
  CHECK_THROWS_AS(detection_radius(0.0, 100), DomainError);
  CHECK_THROWS_AS(detection_radius(1.0, 0), DomainError);
}

TEST_CASE("db_power_sum")
{
  const std::array<double, 1> one{-73.25};
  CHECK(db_power_sum(one) == -73.25);
  const std::array<double, 2> two{-60.0, -60.0};
  CHECK(db_power_sum(two) == doctest::Approx(-60.0 + 10.0 * std::log10(2.0)));
  const std::array<double, 3> three{-60.0, -70.0, -80.0};
  CHECK(db_power_sum(three) ==
        doctest::Approx(10.0 * std::log10(std::pow(10.0, -6.0) + std::pow(10.0, -7.0) + std::pow(10.0, -8.0))));
  CHECK(std::isinf(db_power_sum(std::span<const double>{})));
}

TEST_CASE("trace: free-space LOS on an empty map")
{
  const EnvironmentMap env{35.0, 65.5, {}};
  const auto p = trace(env, {0, 0}, {10, 0}, 0.0, kBand, kModel);
  REQUIRE(p.paths.size() == 1);
  const RayPath &los = p.paths[0];
  CHECK(los.interactions.empty());
  CHECK(los.total_length == doctest::Approx(10.0));
  CHECK(los.delay * 1e9 == doctest::Approx(33.356).epsilon(1e-4));
  CHECK(los.delay == doctest::Approx(10.0 / kSpeedOfLight));
  CHECK(los.path_gain_db == doctest::Approx(-ci_path_loss(kModel, 10.0)));
  CHECK(p.total_rx_power_dbm == doctest::Approx(-ci_path_loss(kModel, 10.0)));
  // rx sees the tx due -x, the tx launches due +x
  CHECK(los.aoa_at_rx == doctest::Approx(kPi));
  CHECK(los.aod_at_tx == doctest::Approx(0.0));
  REQUIRE(p.pdp);
  CHECK(p.pdp->bins.size() == 1);
}

TEST_CASE("trace default launches 100 rays")
{
  // the brute-force tracer launches 100 rays uniformly in azimuth
  CHECK(TraceConfig{}.n_rays == 100);
}

TEST_CASE("trace property: empty map reproduces the CI model exactly")
{
  const EnvironmentMap env{35.0, 65.5, {}};
  Gen g(31);
  for (int i = 0; i < 30; ++i)
  {
    const Point2 tx = g.point(0, 0, 35, 65.5), rx = g.point(0, 0, 35, 65.5);
    const double d = distance(tx, rx);
    if (d < 1.0)
      continue;
    const double ptx = g.uniform(-10, 30);
    const auto p = trace(env, tx, rx, ptx, kBand, kModel);
    REQUIRE(p.paths.size() == 1);
    CHECK(p.total_rx_power_dbm == ptx - ci_path_loss(kModel, d));
    CHECK(std::abs(p.strongest_toa - d / kSpeedOfLight) < kBand.bin_width());
    CHECK(p.strongest_aoa == doctest::Approx(heading(tx - rx)));
  }
}

TEST_CASE("trace: wall behind the receiver adds a reflected path")
{
  // rx 10 m from tx, perpendicular wall 5 m beyond rx: reflected path 20 m
  const EnvironmentMap env{30.0, 20.0, {{"back", {{17, 0}, {17, 20}}, 5.0}}};
  const Point2 tx{2, 10}, rx{12, 10};
  const auto p = trace(env, tx, rx, 0.0, kBand, kModel);
  REQUIRE(p.paths.size() == 2);
  CHECK(p.paths[0].total_length == doctest::Approx(10.0));
  const auto oracle = image_oracle(tx, rx, env.obstructions[0].wall);
  REQUIRE(oracle);
  CHECK(*oracle == doctest::Approx(20.0));
  const RayPath *refl = find_path(p, reflect("back"));
  REQUIRE(refl);
  CHECK(std::abs(refl->total_length - *oracle) < 1e-9);
  // normal incidence on eps_r = 5 reflects (1 - sqrt5)^2 / (1 + sqrt5)^2 of the power
  const double frac = std::pow((1 - std::sqrt(5.0)) / (1 + std::sqrt(5.0)), 2);
  CHECK(refl->path_gain_db == doctest::Approx(-ci_path_loss(kModel, 20.0) + 10 * std::log10(frac)));
  CHECK(refl->aoa_at_rx == doctest::Approx(0.0));
  REQUIRE(refl->vertices.size() == 3);
  CHECK(refl->vertices[1].x == doctest::Approx(17.0));
  CHECK(refl->vertices[1].y == doctest::Approx(10.0));
  CHECK(p.strongest_path().interactions.empty());
}

TEST_CASE("trace: max_interactions = 0 keeps only the unobstructed LOS")
{
  const EnvironmentMap env{30.0, 20.0, {{"back", {{17, 0}, {17, 20}}, 5.0}}};
  TraceConfig cfg;
  cfg.max_interactions = 0;
  const auto p = trace(env, {2, 10}, {12, 10}, 0.0, kBand, kModel, cfg);
  REQUIRE(p.paths.size() == 1);
  CHECK(p.paths[0].interactions.empty());

  // the same wall now separates tx and rx
  const auto blocked = trace(env, {2, 10}, {25, 10}, 0.0, kBand, kModel, cfg);
  CHECK_FALSE(blocked.has_signal());
  CHECK_FALSE(blocked.pdp);
  CHECK(std::isinf(blocked.total_rx_power_dbm));
}

TEST_CASE("trace: blocked LOS is attenuated by the transmission loss")
{
  const EnvironmentMap env{30.0, 20.0, {{"w", {{10, 0}, {10, 20}}, 5.0}}};
  const auto p = trace(env, {2, 10}, {20, 10}, 0.0, kBand, kModel);
  const RayPath *through = find_path(p, {{InteractionKind::transmission, "w"}});
  REQUIRE(through);
  const double t = 1.0 - std::pow((1 - std::sqrt(5.0)) / (1 + std::sqrt(5.0)), 2);
  CHECK(through->total_length == doctest::Approx(18.0));
  CHECK(through->path_gain_db == doctest::Approx(-ci_path_loss(kModel, 18.0) + 10 * std::log10(t)));
  CHECK(through->interactions[0].power_loss_db == doctest::Approx(-10 * std::log10(t)));
}

TEST_CASE("trace property: single-wall reflections match the image method")
{
  Gen g(41);
  int found = 0, valid = 0;
  for (int i = 0; i < 100; ++i)
  {
    const EnvironmentMap env{40.0, 40.0, {{"w", {g.point(5, 5, 35, 35), g.point(5, 5, 35, 35)}, g.uniform(2, 8)}}};
    if (env.obstructions[0].wall.length() < 5.0)
      continue;
    const Point2 tx = g.point(1, 1, 39, 39), rx = g.point(1, 1, 39, 39);
    if (distance(tx, rx) < 2.0)
      continue;
    const auto p = trace(env, tx, rx, 0.0, kBand, kModel);
    const auto oracle = image_oracle(tx, rx, env.obstructions[0].wall, TraceConfig{}.n_rays);
    const RayPath *r = find_path(p, reflect("w"));
    if (oracle)
    {
      ++valid;
      REQUIRE(r);
      CHECK(std::abs(r->total_length - *oracle) < 1e-6);
    }
    if (r)
    {
      ++found;
      const auto loose = image_oracle(tx, rx, env.obstructions[0].wall);
      REQUIRE(loose);
      CHECK(std::abs(r->total_length - *loose) < 1e-6);
    }
  }
  CHECK(valid > 15);
  CHECK(found >= valid);
}

TEST_CASE("trace property: path invariants")
{
  Gen g(43);
  for (int i = 0; i < 15; ++i)
  {
    EnvironmentMap env{30.0, 30.0, {}};
    for (int w = 0; w < 4; ++w)
      env.obstructions.push_back({"w" + std::to_string(w), {g.point(0, 0, 30, 30), g.point(0, 0, 30, 30)}, g.uniform(1.5, 9)});
    const Point2 tx = g.point(1, 1, 29, 29), rx = g.point(1, 1, 29, 29);
    if (distance(tx, rx) < 1.0)
      continue;
    const auto p = trace(env, tx, rx, 10.0, kBand, kModel);
    for (std::size_t k = 0; k < p.paths.size(); ++k)
    {
      const RayPath &path = p.paths[k];
      if (k > 0)
        CHECK(p.paths[k - 1].delay <= path.delay);
      CHECK(path.vertices.front() == tx);
      CHECK(path.vertices.back() == rx);
      CHECK(path.vertices.size() == path.interactions.size() + 2);
      CHECK(static_cast<int>(path.interactions.size()) <= TraceConfig{}.max_interactions);
      double len = 0.0;
      for (std::size_t v = 1; v < path.vertices.size(); ++v)
        len += distance(path.vertices[v - 1], path.vertices[v]);
      CHECK(path.total_length == doctest::Approx(len));
      CHECK(path.delay == doctest::Approx(len / kSpeedOfLight));
      CHECK(path.total_length >= distance(tx, rx) - 1e-9);
      // interactions only ever lose power
      CHECK(path.path_gain_db <= -ci_path_loss(kModel, std::max(1.0, path.total_length)) + 1e-9);
      CHECK(path.path_gain_db >= TraceConfig{}.min_path_gain_db);
      // the exact re-solve reproduces the path
      const auto again = resolve_path(env, tx, rx, path.key(), kModel);
      REQUIRE(again);
      CHECK(again->total_length == doctest::Approx(path.total_length));
    }
    if (p.has_signal())
    {
      std::vector<double> g_db;
      for (const auto &path : p.paths)
        g_db.push_back(path.path_gain_db);
      CHECK(p.total_rx_power_dbm == doctest::Approx(10.0 + db_power_sum(g_db)));
    }
  }
}

TEST_CASE("trace is deterministic")
{
  const EnvironmentMap env{30.0, 30.0, {{"a", {{5, 5}, {25, 8}}, 5.0}, {"b", {{20, 2}, {22, 28}}, 3.0}}};
  const auto p1 = trace(env, {3, 20}, {27, 15}, 0.0, kBand, kModel);
  const auto p2 = trace(env, {3, 20}, {27, 15}, 0.0, kBand, kModel);
  REQUIRE(p1.paths.size() == p2.paths.size());
  for (std::size_t i = 0; i < p1.paths.size(); ++i)
  {
    CHECK(p1.paths[i].key() == p2.paths[i].key());
    CHECK(p1.paths[i].path_gain_db == p2.paths[i].path_gain_db);
  }
}

TEST_CASE("trace: fixed detection radius mode")
{
  const EnvironmentMap env{30.0, 20.0, {{"back", {{17, 0}, {17, 20}}, 5.0}}};
  TraceConfig cfg;
  cfg.detection_mode = DetectionMode::fixed_radius;
  cfg.fixed_radius_m = 0.5;
  const auto p = trace(env, {2, 10}, {12, 10}, 0.0, kBand, kModel, cfg);
  CHECK(p.paths.size() == 2);
}

TEST_CASE("trace input validation")
{
  const EnvironmentMap env{10.0, 10.0, {}};
  CHECK_THROWS_AS(trace(env, {-1, 5}, {5, 5}, 0.0, kBand, kModel), DomainError);
  CHECK_THROWS_AS(trace(env, {5, 5}, {5, 5}, 0.0, kBand, kModel), DomainError);
  TraceConfig bad;
  bad.n_rays = 0;
  CHECK_THROWS_AS(trace(env, {1, 5}, {5, 5}, 0.0, kBand, kModel, bad), DomainError);
  bad = {};
  bad.max_interactions = -1;
  CHECK_THROWS_AS(trace(env, {1, 5}, {5, 5}, 0.0, kBand, kModel, bad), DomainError);
}

TEST_CASE("resolve_path rejects unrealizable sequences")
{
  const EnvironmentMap env{30.0, 20.0, {{"short", {{17, 0}, {17, 3}}, 5.0}, {"other", {{5, 15}, {8, 15}}, 5.0}}};
  // specular point of tx (2,10) -> rx (12,10) on x = 17 is at y = 10, off the short wall
  CHECK_FALSE(resolve_path(env, {2, 10}, {12, 10}, reflect("short"), kModel));
  CHECK_THROWS_AS(resolve_path(env, {2, 10}, {12, 10}, reflect("nope"), kModel), DomainError);
  const auto los = resolve_path(env, {2, 10}, {12, 10}, {}, kModel);
  REQUIRE(los);
  CHECK(los->total_length == doctest::Approx(10.0));
}

TEST_CASE("build_pdp")
{
  auto make = [](double delay, double gain) {
    RayPath p;
    p.delay = delay;
    p.total_length = delay * kSpeedOfLight;
    p.path_gain_db = gain;
    return p;
  };

  SUBCASE("single path")
  {
    const std::vector<RayPath> paths{make(20e-9, -60.0)};
    const auto pdp = build_pdp(paths, kBand, 0.0);
    REQUIRE(pdp.bins.size() == 1);
    CHECK(pdp.bins[0].power_dbm == -60.0);
    CHECK(pdp.bins[0].index == 16);
    CHECK(pdp.bins[0].delay == doctest::Approx(20e-9));
    CHECK(pdp.peak_power_dbm == -60.0);
  }

  SUBCASE("two equal paths in one bin add 3.01 dB")
  {
    const std::vector<RayPath> paths{make(20.1e-9, -60.0), make(20.2e-9, -60.0)};
    const auto pdp = build_pdp(paths, kBand, 0.0);
    REQUIRE(pdp.bins.size() == 1);
    CHECK(pdp.bins[0].power_dbm == doctest::Approx(-60.0 + 3.0103).epsilon(1e-4));
  }

  SUBCASE("paths more than a bin apart land in distinct bins")
  {
    // rx 10 m from tx, wall 5 m behind it: the 10 m of extra length is 33 ns = 26.7 bins
    const EnvironmentMap env{30.0, 20.0, {{"back", {{17, 0}, {17, 20}}, 5.0}}};
    const auto p = trace(env, {2, 10}, {12, 10}, 0.0, kBand, kModel);
    REQUIRE(p.pdp);
    REQUIRE(p.pdp->bins.size() == 2);
    const double excess = p.pdp->bins[1].delay - p.pdp->bins[0].delay;
    CHECK(std::abs(excess - 10.0 / kSpeedOfLight) <= kBand.bin_width());
    CHECK(p.pdp->first_arrival_delay == p.pdp->bins[0].delay);
  }

  SUBCASE("bins below the noise floor are dropped")
  {
    const std::vector<RayPath> paths{make(5e-9, -250.0)};
    const auto pdp = build_pdp(paths, kBand, 0.0);
    CHECK(pdp.bins.empty());
    CHECK(pdp.first_arrival_delay == doctest::Approx(5e-9));
  }

  CHECK_THROWS_AS(build_pdp(std::vector<RayPath>{}, kBand, 0.0), DomainError);
}

TEST_CASE("build_pdp property: bin power equals the linear sum of its paths")
{
  Gen g(47);
  for (int trial = 0; trial < 100; ++trial)
  {
    std::vector<RayPath> paths;
    const int n = static_cast<int>(g.integer(1, 12));
    for (int i = 0; i < n; ++i)
    {
      RayPath p;
      p.delay = g.uniform(0, 50e-9);
      p.path_gain_db = g.uniform(-120, -50);
      paths.push_back(p);
    }
    const double tx = g.uniform(-10, 30);
    const auto pdp = build_pdp(paths, kBand, tx);
    double total_mw = 0.0;
    for (const auto &b : pdp.bins)
    {
      double mw = 0.0;
      for (const auto &p : paths)
        if (static_cast<long>(std::floor(p.delay * kBand.bandwidth_hz)) == b.index)
          mw += std::pow(10.0, (tx + p.path_gain_db) / 10.0);
      CHECK(b.power_dbm == doctest::Approx(10.0 * std::log10(mw)).epsilon(1e-12));
      total_mw += std::pow(10.0, b.power_dbm / 10.0);
    }
    double expect_mw = 0.0;
    for (const auto &p : paths)
      expect_mw += std::pow(10.0, (tx + p.path_gain_db) / 10.0);
    CHECK(total_mw == doctest::Approx(expect_mw).epsilon(1e-10));
  }
}
