#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmpos
{

// Geometric tolerance for "strictly ahead" tests, in meters.
constexpr double kGeomTolerance = 1e-9;
// Offset applied to rays re-launched from an interaction point.
constexpr double kRelaunchOffset = 1e-6;

struct Point2
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2 &, const Point2 &) = default;

  Point2 operator+(const Point2 &o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2 &o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  Point2 operator-() const { return {-x, -y}; }

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline Point2 operator*(double s, const Point2 &p) { return p * s; }
inline double dot(const Point2 &a, const Point2 &b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Point2 &a, const Point2 &b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Point2 &a) { return std::hypot(a.x, a.y); }
inline double distance(const Point2 &a, const Point2 &b) { return norm(a - b); }

// Heading of v in [0, 2*pi).
double heading(const Point2 &v);
// Wraps an angle into [0, 2*pi).
double wrap_two_pi(double angle);
// Wraps an angle into (-pi, pi].
double wrap_pi(double angle);
inline Point2 unit_from_heading(double angle) { return {std::cos(angle), std::sin(angle)}; }

struct Segment
{
  Point2 a;
  Point2 b;

  friend bool operator==(const Segment &, const Segment &) = default;

  double length() const { return distance(a, b); }
  // Unit normal (left of a->b).
  Point2 normal() const;
};

struct Obstruction
{
  std::string id;
  Segment wall;
  double eps_r = 5.0;

  friend bool operator==(const Obstruction &, const Obstruction &) = default;
};

struct EnvironmentMap
{
  double width = 0.0;
  double height = 0.0;
  std::vector<Obstruction> obstructions;

  friend bool operator==(const EnvironmentMap &, const EnvironmentMap &) = default;

  bool contains(const Point2 &p) const;
  const Obstruction *find(const std::string &id) const;
};

// Throws DomainError naming the offending obstruction when an invariant fails.
void validate(const EnvironmentMap &env);

class Ray2
{
public:
  // direction is normalized; throws DomainError on a zero or non-finite vector.
  Ray2(Point2 origin, Point2 direction);
  static Ray2 from_heading(Point2 origin, double angle);

  const Point2 &origin() const { return origin_; }
  const Point2 &direction() const { return direction_; }
  Point2 at(double t) const { return origin_ + direction_ * t; }

private:
  Point2 origin_;
  Point2 direction_;
};

struct SegmentHit
{
  Point2 point;
  double distance = 0.0;
  // Angle between the ray and the wall normal, in [0, pi/2].
  double incidence_angle = 0.0;
  // Parameter of the hit along the segment, in [0, 1].
  double segment_param = 0.0;
};

std::optional<SegmentHit> ray_segment_intersect(const Ray2 &ray, const Segment &seg);

struct ObstructionHit
{
  // Empty when the ray reaches the map boundary.
  std::string obstruction_id;
  bool boundary = false;
  Point2 point;
  double distance = 0.0;
  double incidence_angle = 0.0;
};

// Nearest obstruction (or boundary) hit. Ties at equal distance go to the lowest
// obstruction id; walls win ties against the boundary.
std::optional<ObstructionHit> first_obstruction(const Ray2 &ray, const EnvironmentMap &env);

// All wall crossings strictly inside the open segment from -> to, sorted by distance.
std::vector<ObstructionHit> crossings(const EnvironmentMap &env, const Point2 &from, const Point2 &to,
                                      double tolerance = kGeomTolerance);

// Mirror image of p across the infinite line through seg.
Point2 mirror(const Point2 &p, const Segment &seg);

// Intersection of the infinite lines (p, q) and seg. nullopt if parallel.
std::optional<Point2> line_intersection(const Point2 &p, const Point2 &q, const Segment &seg,
                                        double *segment_param = nullptr);

EnvironmentMap parse_map(const std::string &json_text);
std::string dump_map(const EnvironmentMap &env);
EnvironmentMap load_map(const std::filesystem::path &path);
void save_map(const EnvironmentMap &env, const std::filesystem::path &path);

} // namespace mmpos
