#include "core/actions.hpp"

#include <Eigen/Geometry>

#include <cmath>

#include "core/error.hpp"
#include "core/geometry.hpp"

namespace papercut {

std::vector<Vec2> discretize_curve(const CurveSpec& spec, double basic_length) {
  if (basic_length <= 0) {
    fail(ErrorCode::InvalidArgument, "basic length must be positive");
  }
  const auto poly = spec.target_polyline(512);
  const auto table = arc_length_table(poly);
  const double total = table.back();
  if (total <= 0) fail(ErrorCode::Degenerate, "target curve has zero length");
  const int segments = std::max(1, int(std::ceil(total / basic_length - 1e-9)));
  return resample_polyline(poly, segments + 1);
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(theta, axis_angle / theta).toRotationMatrix();
}

Vec3 rotation_between(const Vec3& from, const Vec3& to) {
  const Vec3 cr = from.cross(to);
  const double s = cr.norm();
  const double c = from.dot(to);
  const double theta = std::atan2(s, c);
  if (s > 1e-12) return theta * (cr / s);
  if (c > 0) return Vec3::Zero();
  // Antiparallel: any perpendicular axis works; prefer one out of the
  // from-z plane, falling back when `from` is itself near z.
  Vec3 axis = from.cross(Vec3(0, 0, 1));
  if (axis.norm() < 1e-9) axis = from.cross(Vec3(1, 0, 0));
  return theta * axis.normalized();
}

CutAction oracle_next_action(const BladeFrame& frame, const Vec3& s_k, const Vec3& s_k1,
                             double remaining_travel) {
  CutAction a;
  a.push = (s_k - frame.cut_point).dot(frame.cut_dir);
  const Vec3 p_after = frame.cut_point + a.push * frame.cut_dir;
  const Vec3 to_next = s_k1 - p_after;
  const double dist = to_next.norm();
  if (dist < 1e-15) {
    fail(ErrorCode::Degenerate, "oracle: coincident waypoints");
  }
  a.rotation = rotation_between(frame.cut_dir, to_next / dist);
  a.close = std::min(dist, std::max(0.0, remaining_travel));
  return a;
}

bool perturb_rotation(CutAction& action, Rng& rng, double prob, double max_angle) {
  if (rng.uniform() >= prob) return false;
  const Vec3 axis = rng.unit_vector();
  const double angle = rng.uniform(0.0, max_angle);
  const Mat3 r = rodrigues(angle * axis) * rodrigues(action.rotation);
  const Eigen::AngleAxisd aa(r);
  action.rotation = aa.angle() * aa.axis();
  return true;
}

int open_substeps() { return 4; }
int push_substeps(double push) {
  return std::max(1, int(std::ceil(std::abs(push) / 0.005 - 1e-9)));
}
int rotate_substeps(double angle) {
  // 2 degrees per substep: the blade tip rides ~76 mm from the rotation
  // center, so this keeps its lateral sweep below ~3 mm per simulator step,
  // comparable to the push quantum.
  return std::max(1, int(std::ceil(std::abs(angle) / (2.0 * M_PI / 180.0) - 1e-9)));
}
int close_substeps(double close) {
  return std::max(1, int(std::ceil(std::abs(close) / 0.001 - 1e-9)));
}

ActionExecutor::ActionExecutor(PaperMesh& mesh, Scissors& scissors, ShellSim* sim,
                               double fracture_tolerance)
    : mesh_(mesh), scissors_(scissors), sim_(sim), fracture_tol_(fracture_tolerance) {
  if (fracture_tol_ <= 0) {
    fail(ErrorCode::InvalidArgument, "fracture tolerance must be positive");
  }
}

ExecStats ActionExecutor::open_blades() {
  ExecStats st;
  const double target = scissors_.geometry().max_open_angle;
  const double start = scissors_.open_angle();
  const int n = open_substeps();
  for (int k = 1; k <= n; ++k) {
    const ScissorPose prev = scissors_.pose();
    scissors_.set_open_angle(start + (target - start) * double(k) / n);
    ++st.substeps;
    if (sim_) {
      const auto stats = sim_->step(&scissors_, &prev);
      if (!stats.converged) ++st.non_converged;
    }
  }
  return st;
}

ExecStats ActionExecutor::push(double distance) {
  ExecStats st;
  if (distance == 0) return st;
  const int n = push_substeps(distance);
  const Vec3 dir = scissors_.pose().rotation.col(0);
  for (int k = 0; k < n; ++k) {
    const ScissorPose prev = scissors_.pose();
    ScissorPose pose = prev;
    pose.translation += (distance / n) * dir;
    scissors_.set_pose(pose);
    ++st.substeps;
    if (sim_) {
      const auto stats = sim_->step(&scissors_, &prev);
      if (!stats.converged) ++st.non_converged;
    }
  }
  return st;
}

ExecStats ActionExecutor::rotate(const Vec3& axis_angle) {
  ExecStats st;
  const double theta = axis_angle.norm();
  if (theta < 1e-15) return st;
  const Vec3 axis = axis_angle / theta;
  const int n = rotate_substeps(theta);
  const Vec3 pivot = scissors_.blade_frame().cut_point;
  const Mat3 dq = rodrigues((theta / n) * axis);
  for (int k = 0; k < n; ++k) {
    const ScissorPose prev = scissors_.pose();
    ScissorPose pose = prev;
    pose.rotation = dq * prev.rotation;
    pose.translation = dq * (prev.translation - pivot) + pivot;
    scissors_.set_pose(pose);
    ++st.substeps;
    if (sim_) {
      const auto stats = sim_->step(&scissors_, &prev);
      if (!stats.converged) ++st.non_converged;
    }
  }
  return st;
}

ExecStats ActionExecutor::close(double advance) {
  ExecStats st;
  if (advance <= 0) return st;
  const double d0 = scissors_.cut_point_distance();
  const double d1 = std::min(d0 + advance, scissors_.geometry().blade_length);
  if (d1 <= d0) return st;
  const int n = close_substeps(d1 - d0);
  Vec3 prev_cut_point = scissors_.blade_frame().cut_point;
  for (int k = 1; k <= n; ++k) {
    const ScissorPose prev = scissors_.pose();
    const double dk = d0 + (d1 - d0) * double(k) / n;
    scissors_.set_open_angle(scissors_.distance_to_angle(dk));
    ++st.substeps;
    if (sim_) {
      const auto stats = sim_->step(&scissors_, &prev);
      if (!stats.converged) ++st.non_converged;
    }
    // Fracture the sheet along the sweep of the cutting point, anchored at
    // the crack tip's current (deformed) position when one exists.
    const Vec3 cut_point = scissors_.blade_frame().cut_point;
    Vec3 anchor = prev_cut_point;
    const int tip = mesh_.crack_tip();
    if (tip >= 0) anchor = mesh_.vertices()[tip].position;
    st.new_vertices += mesh_.apply_cut_segment(anchor, cut_point, fracture_tol_);
    prev_cut_point = cut_point;
  }
  return st;
}

ExecStats ActionExecutor::execute(const CutAction& action) {
  ExecStats total;
  auto acc = [&](const ExecStats& s) {
    total.substeps += s.substeps;
    total.non_converged += s.non_converged;
    total.new_vertices += s.new_vertices;
  };
  acc(open_blades());
  acc(push(action.push));
  acc(rotate(action.rotation));
  acc(close(action.close));
  return total;
}

}  // namespace papercut
