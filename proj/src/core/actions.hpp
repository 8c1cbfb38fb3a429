#pragma once

#include <vector>

#include "core/paper_mesh.hpp"
#include "core/rng.hpp"
#include "core/scissors.hpp"
#include "core/shell_sim.hpp"
#include "core/tracks.hpp"

namespace papercut {

// One cut primitive: advance the cutting point by `push` along the current
// direction, reorient by the axis-angle `rotation` about the cutting point,
// then close the blades so the cutting point travels `close` further.
// Execution inserts a blade-opening phase before the push.
struct CutAction {
  double push = 0;              // m
  Vec3 rotation = Vec3::Zero();  // axis-angle, rad
  double close = 0;             // m, cutting-point advance while closing
};

// Rest-plane waypoints along the target curve, one chord per cut primitive:
// ceil(arc_length / basic_length) segments of equal arc length.
std::vector<Vec2> discretize_curve(const CurveSpec& spec, double basic_length);

// Greedy primitive that brings the cutting point to s_k and aims it at s_k1
// (world positions): push to the perpendicular foot of s_k, rotate the cut
// direction onto s_k1, close by the remaining distance. `remaining_travel`
// caps the close advance at the blade length.
CutAction oracle_next_action(const BladeFrame& frame, const Vec3& s_k, const Vec3& s_k1,
                             double remaining_travel);

// Axis-angle of rotating unit vector `from` onto unit vector `to`; the
// antiparallel case falls back to a perpendicular axis.
Vec3 rotation_between(const Vec3& from, const Vec3& to);
Mat3 rodrigues(const Vec3& axis_angle);

// With probability `prob`, composes a uniformly random extra rotation of
// angle U[0, max_angle) onto the action's rotation. Returns whether the
// perturbation fired.
bool perturb_rotation(CutAction& action, Rng& rng, double prob, double max_angle);

// Substep schedule for each phase.
int open_substeps();
int push_substeps(double push);
int rotate_substeps(double angle);
int close_substeps(double close);

struct ExecStats {
  int substeps = 0;
  int non_converged = 0;
  int new_vertices = 0;
};

// Drives scissors and sheet through one full open-push-rotate-close cycle.
// With a null simulator the sheet stays static (kinematic mode); fracture is
// applied either way during the close phase, anchored at the crack tip.
class ActionExecutor {
 public:
  ActionExecutor(PaperMesh& mesh, Scissors& scissors, ShellSim* sim,
                 double fracture_tolerance);

  ExecStats execute(const CutAction& action);

  // Individual phases (execute() runs them in order).
  ExecStats open_blades();
  ExecStats push(double distance);
  ExecStats rotate(const Vec3& axis_angle);
  ExecStats close(double advance);

 private:
  PaperMesh& mesh_;
  Scissors& scissors_;
  ShellSim* sim_;
  double fracture_tol_;
};

}  // namespace papercut
