#pragma once

#include <array>

#include "core/config.hpp"
#include "core/geometry.hpp"

namespace papercut {

// Blade pair modeled in a body frame: pivot at the origin, blades opening
// symmetrically about the +x axis within the x-y plane. Each blade edge line
// passes through (0, -+b, 0) with direction x rotated by +-phi/2 about z, so
// the two edges cross the x axis at distance d = b / tan(phi/2) from the
// pivot: the cutting point. Closing the scissors (phi shrinking) moves the
// cutting point outward along the blades.
struct ScissorGeometry {
  double blade_length = 0.08;
  double blade_offset = 0.001;       // pivot-to-edge-line offset b
  double half_thickness = 0.00075;   // capsule radius
  double max_open_angle = 0.5235987755982988;

  static ScissorGeometry from_config(const ConfigMap& cfg);
};

struct ScissorPose {
  Mat3 rotation = Mat3::Identity();  // body -> world
  Vec3 translation = Vec3::Zero();   // pivot position in world
  double open_angle = 0;             // phi >= 0, radians
};

// Cutting frame at the current pose: point, advance direction, plane normal.
struct BladeFrame {
  Vec3 cut_point;
  Vec3 cut_dir;
  Vec3 plane_norm;
};

class Scissors {
 public:
  struct Capsule {
    Vec3 a, b;
    double radius = 0;
  };

  Scissors() = default;
  explicit Scissors(const ScissorGeometry& geom);

  const ScissorGeometry& geometry() const { return geom_; }
  const ScissorPose& pose() const { return pose_; }
  void set_pose(const ScissorPose& pose);
  double open_angle() const { return pose_.open_angle; }
  void set_open_angle(double phi);

  // d = b / tan(phi/2), clamped to the blade length. Closed scissors have no
  // cutting point: phi must be positive.
  double angle_to_distance(double phi) const;
  // phi = 2 atan(b / d) for d in (0, blade_length]; rejects distances that
  // would require opening beyond the maximum angle.
  double distance_to_angle(double d) const;
  double cut_point_distance() const { return angle_to_distance(pose_.open_angle); }

  BladeFrame blade_frame() const;

  // Blade capsule axes sit at z = +-half_thickness so both capsule surfaces
  // are tangent to the cutting plane z = 0; a sheet resting in that plane is
  // pinched between them instead of impaled.
  std::array<Capsule, 2> body_capsules() const;
  std::array<Capsule, 2> world_capsules() const;

  // Signed distance from a world point to the nearest blade surface
  // (negative inside) and its gradient.
  double sdf(const Vec3& p) const;
  Vec3 sdf_gradient(const Vec3& p) const;

  // Per-blade queries: each capsule is its own rigid body, so contact and
  // friction treat the blades separately.
  static double capsule_sdf(const Capsule& cap, const Vec3& p);
  // Unit outward normal at p; `fallback` covers points on the capsule axis
  // where the direction is undefined.
  static Vec3 capsule_sdf_normal(const Capsule& cap, const Vec3& p, const Vec3& fallback);
  // Where the surface point now at world `p` on blade `index` (0 lower,
  // 1 upper) was under `prev`: each blade pivots about its fixed anchor as
  // the opening angle changes and otherwise follows the rigid pose.
  Vec3 blade_point_previous(int index, const Vec3& p, const ScissorPose& prev) const;

 private:
  ScissorGeometry geom_;
  ScissorPose pose_;
};

}  // namespace papercut
