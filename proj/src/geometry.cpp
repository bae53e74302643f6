#include "mmpos/geometry.hpp"
#include "mmpos/errors.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mmpos
{

double heading(const Point2 &v) { return wrap_two_pi(std::atan2(v.y, v.x)); }

double wrap_two_pi(double angle)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle, two_pi);
  if (w < 0.0)
    w += two_pi;
  // fmod of a tiny negative value can round back up to exactly 2*pi
  if (w >= two_pi)
    w = 0.0;
  return w;
}

double wrap_pi(double angle)
{
  double w = wrap_two_pi(angle);
  if (w > std::numbers::pi)
    w -= 2.0 * std::numbers::pi;
  return w;
}

Point2 Segment::normal() const
{
  const Point2 e = b - a;
  const double len = norm(e);
  return {-e.y / len, e.x / len};
}

bool EnvironmentMap::contains(const Point2 &p) const
{
  return p.finite() && p.x >= -kGeomTolerance && p.x <= width + kGeomTolerance && p.y >= -kGeomTolerance &&
         p.y <= height + kGeomTolerance;
}

const Obstruction *EnvironmentMap::find(const std::string &id) const
{
  for (const auto &o : obstructions)
    if (o.id == id)
      return &o;
  return nullptr;
}

void validate(const EnvironmentMap &env)
{
  if (!(std::isfinite(env.width) && env.width > 0.0) || !(std::isfinite(env.height) && env.height > 0.0))
    throw DomainError("map width and height must be positive and finite");

  std::set<std::string> ids;
  for (const auto &o : env.obstructions)
  {
    if (o.id.empty())
      throw DomainError("obstruction with empty id");
    if (!ids.insert(o.id).second)
      throw DomainError("duplicate obstruction id '" + o.id + "'");
    if (!(o.eps_r >= 1.0) || !std::isfinite(o.eps_r))
      throw DomainError("obstruction '" + o.id + "': eps_r must be >= 1");
    if (!o.wall.a.finite() || !o.wall.b.finite())
      throw DomainError("obstruction '" + o.id + "': non-finite coordinates");
    if (o.wall.a == o.wall.b)
      throw DomainError("obstruction '" + o.id + "': zero-length wall");
    if (!env.contains(o.wall.a) || !env.contains(o.wall.b))
      throw DomainError("obstruction '" + o.id + "': endpoint outside map bounds");
  }
}

Ray2::Ray2(Point2 origin, Point2 direction) : origin_(origin)
{
  const double len = norm(direction);
  if (!origin.finite() || !std::isfinite(len) || len == 0.0)
    throw DomainError("ray needs a finite origin and a nonzero finite direction");
  direction_ = direction * (1.0 / len);
}

Ray2 Ray2::from_heading(Point2 origin, double angle) { return Ray2(origin, unit_from_heading(angle)); }

std::optional<SegmentHit> ray_segment_intersect(const Ray2 &ray, const Segment &seg)
{
  const Point2 &d = ray.direction();
  const Point2 e = seg.b - seg.a;
  const double denom = cross(d, e);
  // parallel or collinear: no transversal crossing
  if (std::abs(denom) <= 1e-15 * norm(e))
    return std::nullopt;

  const Point2 w = seg.a - ray.origin();
  const double t = cross(w, e) / denom;
  const double s = cross(w, d) / denom;
  if (!(t > kGeomTolerance))
    return std::nullopt;
  constexpr double param_slack = 1e-12;
  if (s < -param_slack || s > 1.0 + param_slack)
    return std::nullopt;

  SegmentHit hit;
  hit.segment_param = std::clamp(s, 0.0, 1.0);
  hit.distance = t;
  hit.point = ray.at(t);
  const double c = std::min(1.0, std::abs(dot(d, seg.normal())));
  hit.incidence_angle = std::acos(c);
  return hit;
}

namespace
{

std::array<Obstruction, 4> boundary_walls(const EnvironmentMap &env)
{
  const Point2 p00{0.0, 0.0}, p10{env.width, 0.0}, p11{env.width, env.height}, p01{0.0, env.height};
  return {Obstruction{"", {p00, p10}, 1.0}, Obstruction{"", {p10, p11}, 1.0}, Obstruction{"", {p11, p01}, 1.0},
          Obstruction{"", {p01, p00}, 1.0}};
}

} // namespace

std::optional<ObstructionHit> first_obstruction(const Ray2 &ray, const EnvironmentMap &env)
{
  std::optional<ObstructionHit> best;
  constexpr double tie = 1e-12;

  auto consider = [&](const Obstruction &o, bool is_boundary) {
    const auto hit = ray_segment_intersect(ray, o.wall);
    if (!hit)
      return;
    if (best)
    {
      if (hit->distance > best->distance + tie)
        return;
      if (hit->distance >= best->distance - tie)
      {
        // tie: walls beat the boundary, then lowest id
        if (is_boundary)
          return;
        if (!best->boundary && o.id >= best->obstruction_id)
          return;
      }
    }
    best = ObstructionHit{o.id, is_boundary, hit->point, hit->distance, hit->incidence_angle};
  };

  for (const auto &o : env.obstructions)
    consider(o, false);
  for (const auto &o : boundary_walls(env))
    consider(o, true);
  return best;
}

std::vector<ObstructionHit> crossings(const EnvironmentMap &env, const Point2 &from, const Point2 &to,
                                      double tolerance)
{
  std::vector<ObstructionHit> out;
  const double len = distance(from, to);
  if (len <= tolerance)
    return out;
  const Ray2 ray(from, to - from);
  for (const auto &o : env.obstructions)
  {
    const auto hit = ray_segment_intersect(ray, o.wall);
    if (hit && hit->distance > tolerance && hit->distance < len - tolerance)
      out.push_back({o.id, false, hit->point, hit->distance, hit->incidence_angle});
  }
  std::sort(out.begin(), out.end(), [](const ObstructionHit &l, const ObstructionHit &r) {
    if (l.distance != r.distance)
      return l.distance < r.distance;
    return l.obstruction_id < r.obstruction_id;
  });
  return out;
}

Point2 mirror(const Point2 &p, const Segment &seg)
{
  const Point2 n = seg.normal();
  const double dist = dot(p - seg.a, n);
  return p - n * (2.0 * dist);
}

std::optional<Point2> line_intersection(const Point2 &p, const Point2 &q, const Segment &seg, double *segment_param)
{
  const Point2 d = q - p;
  const Point2 e = seg.b - seg.a;
  const double denom = cross(d, e);
  if (std::abs(denom) <= 1e-15 * norm(d) * norm(e))
    return std::nullopt;
  const Point2 w = seg.a - p;
  const double t = cross(w, e) / denom;
  if (segment_param)
    *segment_param = cross(w, d) / denom;
  return p + d * t;
}

// ---------------------------------------------------------------------------
// JSON map files

namespace
{

using nlohmann::json;

double number_field(const json &obj, const char *key, const std::string &where)
{
  const auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError(where + ": missing field '" + key + "'", 0, key);
  if (!it->is_number())
    throw ParseError(where + ": field '" + key + "' must be a number", 0, key);
  return it->get<double>();
}

std::size_t line_of_offset(const std::string &text, std::size_t byte)
{
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

} // namespace

EnvironmentMap parse_map(const std::string &json_text)
{
  json doc;
  try
  {
    doc = json::parse(json_text);
  }
  catch (const json::parse_error &e)
  {
    const std::size_t line = line_of_offset(json_text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("map JSON syntax error at line " + std::to_string(line) + ": " + e.what(), line);
  }
  if (!doc.is_object())
    throw ParseError("map JSON: top level must be an object");

  EnvironmentMap env;
  env.width = number_field(doc, "width_m", "map");
  env.height = number_field(doc, "height_m", "map");

  if (doc.contains("walls"))
  {
    const json &walls = doc.at("walls");
    if (!walls.is_array())
      throw ParseError("map: field 'walls' must be an array", 0, "walls");
    for (std::size_t i = 0; i < walls.size(); ++i)
    {
      const json &w = walls[i];
      const std::string where = "walls[" + std::to_string(i) + "]";
      if (!w.is_object())
        throw ParseError(where + ": must be an object", 0, where);
      const auto id = w.find("id");
      if (id == w.end() || !id->is_string())
        throw ParseError(where + ": field 'id' must be a string", 0, where + ".id");
      Obstruction o;
      o.id = id->get<std::string>();
      o.wall.a = {number_field(w, "x1", where), number_field(w, "y1", where)};
      o.wall.b = {number_field(w, "x2", where), number_field(w, "y2", where)};
      o.eps_r = number_field(w, "eps_r", where);
      env.obstructions.push_back(std::move(o));
    }
  }
  validate(env);
  return env;
}

std::string dump_map(const EnvironmentMap &env)
{
  json doc;
  doc["width_m"] = env.width;
  doc["height_m"] = env.height;
  doc["walls"] = json::array();
  for (const auto &o : env.obstructions)
    doc["walls"].push_back({{"id", o.id},
                            {"x1", o.wall.a.x},
                            {"y1", o.wall.a.y},
                            {"x2", o.wall.b.x},
                            {"y2", o.wall.b.y},
                            {"eps_r", o.eps_r}});
  return doc.dump(2) + "\n";
}

EnvironmentMap load_map(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open map file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

void save_map(const EnvironmentMap &env, const std::filesystem::path &path)
{
  validate(env);
  std::ofstream out(path);
  if (!out)
    throw ParseError("cannot write map file " + path.string());
  out << dump_map(env);
  if (!out)
    throw ParseError("write failed for " + path.string());
}

} // namespace mmpos
