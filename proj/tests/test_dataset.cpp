#include "test_support.hpp"

#include "mmpos/channel.hpp"
#include "mmpos/dataset.hpp"
#include "mmpos/errors.hpp"
#include "mmpos/text_io.hpp"

#include <doctest.h>

#include <fstream>

using namespace mmpos;
using mmpos::test::Gen;
using mmpos::test::kDeg;
using mmpos::test::kPi;

namespace
{

CampaignConfig empty_office()
{
  CampaignConfig cfg;
  cfg.env = {35.0, 65.5, {}};
  cfg.anchors = {{"A", {2, 2}, 10, 28e9}, {"B", {33, 5}, 10, 73e9}, {"C", {17, 63}, 10, 28e9}};
  cfg.rx_points = {{10, 10}, {20, 30}, {5, 50}, {30, 60}};
  cfg.aoa_step = 0.0;
  cfg.rssi_noise_sigma = 0.0;
  return cfg;
}

// Three lossy walls hide anchor (5, 5) from rx (4, 25); a near-metallic wall at x = 15 offers
// a clean single bounce.
EnvironmentMap blocked_scene()
{
  EnvironmentMap env{30.0, 30.0, {}};
  for (int k = 0; k < 3; ++k)
    env.obstructions.push_back({"block" + std::to_string(k), {{0, 14.0 + k}, {12, 14.0 + k}}, 80.0});
  env.obstructions.push_back({"mirror", {{15, 0}, {15, 30}}, 1000.0});
  return env;
}

std::string read_all(const std::filesystem::path &p)
{
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Type-7 quantile written from the definition h = (n - 1) q.
double quantile7(std::vector<double> v, double q)
{
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const double lo = std::floor(h);
  const double hi = std::min(lo + 1, static_cast<double>(v.size()) - 1);
  return v[static_cast<std::size_t>(lo)] + (h - lo) * (v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)]);
}

PositionEstimate at(double x, double y) { return {{x, y}, "test", 0.0, {}}; }

} // namespace

TEST_CASE("snap_to_step")
{
  CHECK(snap_to_step(16.0, 15.0) == 15.0);
  CHECK(snap_to_step(23.0, 15.0) == 30.0);
  CHECK(snap_to_step(1.2345, 0.0) == 1.2345);
  CHECK(snap_to_step(-7.0, 15.0) == -0.0);
  Gen g(1);
  for (int i = 0; i < 500; ++i)
  {
    const double step = g.uniform(0.01, 10.0), v = g.uniform(-100, 100);
    const double s = snap_to_step(v, step);
    CHECK(std::abs(s - v) <= step / 2 + 1e-12);
    CHECK(std::abs(std::remainder(s, step)) < 1e-9 * std::max(1.0, std::abs(s)));
  }
}

TEST_CASE("generate_campaign: noise-free empty map reproduces geometry and the CI model")
{
  const auto cfg = empty_office();
  const auto recs = generate_campaign(cfg);
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].rx_id == "rx001");
  CHECK(recs[3].rx_id == "rx004");
  for (std::size_t i = 0; i < recs.size(); ++i)
  {
    REQUIRE(recs[i].true_position);
    CHECK(*recs[i].true_position == cfg.rx_points[i]);
    CHECK(recs[i].observations.size() == 3);
    for (const auto &o : recs[i].observations)
    {
      const AnchorNode &a = find_anchor(cfg.anchors, o.anchor_id);
      const double d = distance(a.position, cfg.rx_points[i]);
      CHECK(*o.rssi_dbm == a.tx_power_dbm - ci_path_loss({cfg.model.ple, a.carrier_hz}, d));
      CHECK(*o.aoa == doctest::Approx(heading(a.position - cfg.rx_points[i])));
      CHECK(std::abs(*o.toa - d / kSpeedOfLight) <= cfg.band.bin_width() / 2 + 1e-18);
    }
  }
}

TEST_CASE("generate_campaign is deterministic per seed")
{
  auto cfg = empty_office();
  cfg.rssi_noise_sigma = 4.0;
  cfg.aoa_step = 15.0 * kDeg;
  CHECK(generate_campaign(cfg) == generate_campaign(cfg));
  auto other = cfg;
  other.seed = 2;
  CHECK_FALSE(generate_campaign(cfg) == generate_campaign(other));
  for (const auto &r : generate_campaign(cfg))
    for (const auto &o : r.observations)
      CHECK(std::abs(std::remainder(*o.aoa, 15.0 * kDeg)) < 1e-9);
}

TEST_CASE("generate_campaign respects the communication range and custom ids")
{
  auto cfg = empty_office();
  cfg.comm_range = 20.0;
  cfg.rx_ids = {"p", "q", "r", "s"};
  const auto recs = generate_campaign(cfg);
  CHECK(recs[0].rx_id == "p");
  // (10, 10) is 11.3 m from A only
  REQUIRE(recs[0].observations.size() == 1);
  CHECK(recs[0].observations[0].anchor_id == "A");
  // (20, 30) is out of range of everything and keeps an empty record
  CHECK(recs[1].observations.empty());
}

TEST_CASE("generate_campaign: blocked LOS reports the reflected arrival angle")
{
  CampaignConfig cfg;
  cfg.env = blocked_scene();
  cfg.anchors = {{"A", {5, 5}, 10, 28e9}};
  cfg.rx_points = {{4, 25}};
  cfg.aoa_step = 0.0;
  cfg.rssi_noise_sigma = 0.0;
  const auto recs = generate_campaign(cfg);
  REQUIRE(recs[0].observations.size() == 1);
  const double aoa = *recs[0].observations[0].aoa;

  // image of the anchor across x = 15 is (25, 5); the bounce lies where image -> rx meets the wall
  const Point2 image{25, 5}, rx{4, 25};
  const double s = (15.0 - image.x) / (rx.x - image.x);
  const Point2 bounce = image + (rx - image) * s;
  CHECK(aoa == doctest::Approx(heading(bounce - rx)));
  const double direct = heading(Point2{5, 5} - rx);
  CHECK(std::abs(wrap_pi(aoa - direct)) > 30.0 * kDeg);
}

TEST_CASE("evaluate")
{
  SUBCASE("perfect estimates")
  {
    const auto rep = evaluate({{"a", at(1, 2)}, {"b", at(3, 4)}}, {{"a", {1, 2}}, {"b", {3, 4}}});
    CHECK(rep.mean_error == 0.0);
    CHECK(rep.max_error == 0.0);
    CHECK(rep.outliers.empty());
  }

  SUBCASE("3-4-5 offset")
  {
    const auto rep = evaluate({{"a", at(3, 4)}, {"b", at(0, 0)}}, {{"a", {0, 0}}, {"b", {0, 0}}});
    CHECK(rep.per_rx[0].rx_id == "a");
    CHECK(rep.per_rx[0].error == 5.0);
    CHECK(rep.per_rx[1].error == 0.0);
  }

  SUBCASE("16 cm to 3.25 m spread")
  {
    const auto rep = evaluate({{"a", at(0.16, 0)}, {"b", at(1.0, 0)}, {"c", at(3.25, 0)}},
                              {{"a", {0, 0}}, {"b", {0, 0}}, {"c", {0, 0}}});
    CHECK(rep.min_error == doctest::Approx(0.16));
    CHECK(rep.max_error == doctest::Approx(3.25));
    CHECK(rep.mean_error == doctest::Approx(4.41 / 3.0));
    CHECK(rep.mean_error == doctest::Approx(1.47).epsilon(1e-3));
  }

  SUBCASE("far outlier")
  {
    std::map<std::string, PositionEstimate> est;
    std::map<std::string, Point2> truth;
    for (int i = 0; i < 7; ++i)
    {
      est["n" + std::to_string(i)] = at(1.0 + 0.1 * i, 0);
      truth["n" + std::to_string(i)] = {0, 0};
    }
    est["z"] = at(40, 0);
    truth["z"] = {0, 0};
    const auto rep = evaluate(est, truth);
    REQUIRE(rep.outliers.size() == 1);
    CHECK(rep.outliers[0] == "z");
    CHECK(rep.per_rx.back().outlier);
    CHECK(rep.max_error_without_outliers == doctest::Approx(1.6));
    CHECK(rep.mean_error_without_outliers == doctest::Approx(1.3));
    CHECK(rep.max_error == 40.0);
  }

  CHECK_THROWS_AS(evaluate({{"a", at(0, 0)}}, {}), DomainError);
  CHECK_THROWS_AS(evaluate({}, {{"a", {0, 0}}}), DomainError);
}

TEST_CASE("evaluate property: outlier fence matches a type-7 quartile oracle")
{
  Gen g(3);
  for (int trial = 0; trial < 200; ++trial)
  {
    const int n = static_cast<int>(g.integer(1, 30));
    std::map<std::string, PositionEstimate> est;
    std::map<std::string, Point2> truth;
    std::vector<double> errs;
    for (int i = 0; i < n; ++i)
    {
      const double e = g.coin() && g.coin() ? g.uniform(0, 100) : g.uniform(0, 3);
      const std::string id = "r" + std::to_string(i);
      est[id] = at(e, 0);
      truth[id] = {0, 0};
      errs.push_back(e);
    }
    const auto rep = evaluate(est, truth);
    const double q1 = quantile7(errs, 0.25), q3 = quantile7(errs, 0.75);
    std::size_t expected = 0;
    double sum = 0;
    for (double e : errs)
    {
      expected += e > q3 + 3 * (q3 - q1) ? 1 : 0;
      sum += e;
    }
    CHECK(rep.outliers.size() == expected);
    CHECK(rep.mean_error == doctest::Approx(sum / n));
    CHECK(rep.min_error == *std::min_element(errs.begin(), errs.end()));
    CHECK(rep.max_error == *std::max_element(errs.begin(), errs.end()));
    CHECK(rep.min_error_without_outliers >= rep.min_error);
    CHECK(rep.max_error_without_outliers <= rep.max_error);
  }
}

TEST_CASE("report JSON round trip")
{
  const auto rep = evaluate({{"a", at(0.16, 0)}, {"b", at(1.0, 0)}, {"c", at(3.25, 0)}},
                            {{"a", {0, 0}}, {"b", {0, 0}}, {"c", {0, 0}}});
  const auto back = report_from_json(report_to_json(rep));
  CHECK(back.per_rx.size() == 3);
  CHECK(back.per_rx[2].error == rep.per_rx[2].error);
  CHECK(back.mean_error == rep.mean_error);
  CHECK(back.outliers == rep.outliers);
  const std::string json = report_to_json(rep);
  for (const char *key : {"per_rx", "mean_m", "min_m", "max_m", "outliers"})
    CHECK(json.find(key) != std::string::npos);
  CHECK_THROWS_AS(report_from_json("{"), ParseError);
  CHECK_THROWS_AS(report_from_json("{}"), ParseError);
}

TEST_CASE("observation CSV")
{
  mmpos::test::TempDir dir("obs");
  const auto cfg = empty_office();

  SUBCASE("header only is an empty campaign")
  {
    CHECK(parse_observations("rx_id,anchor_id,rssi_dbm,aoa_deg,toa_ns,true_x_m,true_y_m\n").empty());
  }

  SUBCASE("save then load reproduces a generated campaign")
  {
    auto noisy = cfg;
    noisy.rssi_noise_sigma = 4.0;
    noisy.aoa_step = 15.0 * kDeg;
    noisy.comm_range = 40.0;
    const auto recs = generate_campaign(noisy);
    save_observations(recs, dir / "obs.csv");
    const auto back = load_observations(dir / "obs.csv", cfg.anchors);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i)
    {
      CHECK(back[i].rx_id == recs[i].rx_id);
      CHECK(back[i].true_position == recs[i].true_position);
      REQUIRE(back[i].observations.size() == recs[i].observations.size());
      for (std::size_t k = 0; k < recs[i].observations.size(); ++k)
      {
        const auto &x = recs[i].observations[k], &y = back[i].observations[k];
        CHECK(x.anchor_id == y.anchor_id);
        CHECK(*x.rssi_dbm == *y.rssi_dbm);
        CHECK(*y.aoa == doctest::Approx(*x.aoa).epsilon(1e-12));
        CHECK(*y.toa == doctest::Approx(*x.toa).epsilon(1e-12));
      }
    }
    // a second save is byte-identical
    save_observations(back, dir / "obs2.csv");
    CHECK(read_all(dir / "obs.csv") == read_all(dir / "obs2.csv"));
  }

  SUBCASE("unknown anchor is named")
  {
    const std::string text = "rx_id,anchor_id,rssi_dbm\nrx1,A,-60\nrx1,GHOST,-70\n";
    CHECK_THROWS_WITH_AS(parse_observations(text, cfg.anchors), doctest::Contains("GHOST"), ParseError);
  }

  SUBCASE("optional columns and empty fields")
  {
    const auto recs = parse_observations("rx_id,anchor_id,aoa_deg\nr1,A,90\nr1,B,\nr2,,\n", cfg.anchors);
    REQUIRE(recs.size() == 2);
    CHECK(*recs[0].observations[0].aoa == doctest::Approx(kPi / 2));
    CHECK_FALSE(recs[0].observations[1].aoa);
    CHECK_FALSE(recs[0].observations[1].rssi_dbm);
    CHECK(recs[1].observations.empty());
    CHECK_FALSE(recs[1].true_position);
  }

  SUBCASE("malformed input")
  {
    CHECK_THROWS_AS(parse_observations("rx_id,rssi_dbm\nr1,-60\n"), ParseError);
    CHECK_THROWS_AS(parse_observations("rx_id,anchor_id,rssi_dbm\nr1,A,loud\n"), ParseError);
    CHECK_THROWS_AS(parse_observations("rx_id,anchor_id,rssi_dbm\nr1,A,-60\nr1,A,-61\n"), ParseError);
    CHECK_THROWS_AS(
        parse_observations("rx_id,anchor_id,true_x_m,true_y_m\nr1,A,1,1\nr1,B,2,2\n"), ParseError);
    try
    {
      parse_observations("rx_id,anchor_id,rssi_dbm\nr1,A,-60\nr1,B,x\n");
    }
    catch (const ParseError &e)
    {
      CHECK(e.line() == 3);
      CHECK(e.field() == "rssi_dbm");
    }
  }
}

TEST_CASE("anchor and receiver CSV")
{
  mmpos::test::TempDir dir("anchors");
  const auto anchors = empty_office().anchors;
  save_anchors(anchors, dir / "a.csv");
  CHECK(load_anchors(dir / "a.csv") == anchors);

  std::ofstream(dir / "rx.csv") << "rx_id,x_m,y_m\np1,1.5,2\np2,3,4\n";
  const auto rx = load_rx_points(dir / "rx.csv");
  REQUIRE(rx.size() == 2);
  CHECK(rx[0].id == "p1");
  CHECK(rx[0].position == Point2{1.5, 2});

  std::ofstream(dir / "dup.csv") << "id,x_m,y_m,tx_power_dbm,carrier_ghz\nA,0,0,0,28\nA,1,1,0,28\n";
  CHECK_THROWS_AS(load_anchors(dir / "dup.csv"), DomainError);
}

TEST_CASE("fingerprint database from a campaign")
{
  const auto recs = generate_campaign(empty_office());
  const auto db = fingerprint_db(recs);
  REQUIRE(db.size() == recs.size());
  CHECK(db[1].location == Point2{20, 30});
  const auto f = features_of(recs[1]);
  CHECK(f.size() == 3);
  CHECK(f.at("B").rssi_dbm == recs[1].find("B")->rssi_dbm);
  const auto est = fingerprint_localize(db, f);
  CHECK(est.point == Point2{20, 30});
}
