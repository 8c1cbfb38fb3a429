#include "core/scissors.hpp"

#include <cmath>

#include "core/error.hpp"

namespace papercut {

ScissorGeometry ScissorGeometry::from_config(const ConfigMap& cfg) {
  ScissorGeometry g;
  g.blade_length = cfg.get_double("scissor.blade_length");
  g.blade_offset = cfg.get_double("scissor.blade_offset");
  g.half_thickness = cfg.get_double("scissor.blade_half_thickness");
  g.max_open_angle = cfg.get_double("scissor.max_open_angle");
  return g;
}

Scissors::Scissors(const ScissorGeometry& geom) : geom_(geom) {
  if (geom_.blade_length <= 0 || geom_.blade_offset <= 0 || geom_.half_thickness <= 0) {
    fail(ErrorCode::InvalidArgument, "scissor lengths must be positive");
  }
  if (geom_.max_open_angle <= 0 || geom_.max_open_angle >= M_PI) {
    fail(ErrorCode::InvalidArgument, "max open angle must lie in (0, pi)");
  }
}

void Scissors::set_pose(const ScissorPose& pose) {
  const Mat3 rtr = pose.rotation.transpose() * pose.rotation;
  if ((rtr - Mat3::Identity()).norm() > 1e-6 ||
      std::abs(pose.rotation.determinant() - 1.0) > 1e-6) {
    fail(ErrorCode::InvalidArgument, "pose rotation must be a proper rotation matrix");
  }
  if (pose.open_angle < 0 || pose.open_angle > geom_.max_open_angle + 1e-12) {
    fail(ErrorCode::Domain, "open angle outside [0, max_open_angle]");
  }
  pose_ = pose;
}

void Scissors::set_open_angle(double phi) {
  if (phi < 0 || phi > geom_.max_open_angle + 1e-12) {
    fail(ErrorCode::Domain, "open angle outside [0, max_open_angle]");
  }
  pose_.open_angle = phi;
}

double Scissors::angle_to_distance(double phi) const {
  if (phi <= 0 || phi > geom_.max_open_angle + 1e-12) {
    fail(ErrorCode::Domain, "angle_to_distance: angle outside (0, max_open_angle]");
  }
  const double d = geom_.blade_offset / std::tan(0.5 * phi);
  return std::min(d, geom_.blade_length);
}

double Scissors::distance_to_angle(double d) const {
  if (d <= 0 || d > geom_.blade_length + 1e-12) {
    fail(ErrorCode::Domain, "distance_to_angle: distance outside (0, blade_length]");
  }
  const double phi = 2.0 * std::atan(geom_.blade_offset / d);
  if (phi > geom_.max_open_angle + 1e-12) {
    fail(ErrorCode::Domain, "distance_to_angle: distance requires opening past the maximum");
  }
  return phi;
}

BladeFrame Scissors::blade_frame() const {
  const double d = cut_point_distance();  // validates phi > 0
  BladeFrame f;
  f.cut_point = pose_.rotation * Vec3(d, 0, 0) + pose_.translation;
  f.cut_dir = pose_.rotation.col(0);
  f.plane_norm = pose_.rotation.col(2);
  return f;
}

std::array<Scissors::Capsule, 2> Scissors::body_capsules() const {
  const double h = 0.5 * pose_.open_angle;
  const double c = std::cos(h), s = std::sin(h);
  std::array<Capsule, 2> caps;
  // Lower blade (edge line through y = -b) rides above the plane, upper below.
  caps[0].a = Vec3(0, -geom_.blade_offset, geom_.half_thickness);
  caps[0].b = caps[0].a + geom_.blade_length * Vec3(c, s, 0);
  caps[0].radius = geom_.half_thickness;
  caps[1].a = Vec3(0, geom_.blade_offset, -geom_.half_thickness);
  caps[1].b = caps[1].a + geom_.blade_length * Vec3(c, -s, 0);
  caps[1].radius = geom_.half_thickness;
  return caps;
}

std::array<Scissors::Capsule, 2> Scissors::world_capsules() const {
  auto caps = body_capsules();
  for (auto& cap : caps) {
    cap.a = pose_.rotation * cap.a + pose_.translation;
    cap.b = pose_.rotation * cap.b + pose_.translation;
  }
  return caps;
}

double Scissors::capsule_sdf(const Capsule& cap, const Vec3& p) {
  return point_segment_distance(p, cap.a, cap.b) - cap.radius;
}

Vec3 Scissors::capsule_sdf_normal(const Capsule& cap, const Vec3& p, const Vec3& fallback) {
  const double t = closest_point_segment(p, cap.a, cap.b);
  const Vec3 diff = p - (cap.a + t * (cap.b - cap.a));
  const double dist = diff.norm();
  return dist > 1e-12 ? Vec3(diff / dist) : fallback;
}

double Scissors::sdf(const Vec3& p) const {
  const auto caps = world_capsules();
  return std::min(capsule_sdf(caps[0], p), capsule_sdf(caps[1], p));
}

Vec3 Scissors::sdf_gradient(const Vec3& p) const {
  const auto caps = world_capsules();
  const int i = capsule_sdf(caps[0], p) <= capsule_sdf(caps[1], p) ? 0 : 1;
  // On the axis itself the direction is undefined; push along the plane
  // normal so penalty forces still separate sheet and blade.
  return capsule_sdf_normal(caps[i], p, pose_.rotation.col(2));
}

Vec3 Scissors::blade_point_previous(int index, const Vec3& p, const ScissorPose& prev) const {
  const double sign = index == 0 ? 1.0 : -1.0;
  const Vec3 anchor(0, -sign * geom_.blade_offset, sign * geom_.half_thickness);
  const Vec3 local = pose_.rotation.transpose() * (p - pose_.translation) - anchor;
  const double dh = 0.5 * sign * (prev.open_angle - pose_.open_angle);
  const double c = std::cos(dh), s = std::sin(dh);
  const Vec3 swung(c * local.x() - s * local.y(), s * local.x() + c * local.y(), local.z());
  return prev.rotation * (anchor + swung) + prev.translation;
}

}  // namespace papercut
