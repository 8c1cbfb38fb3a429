#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <vector>

#include "core/config.hpp"
#include "core/paper_mesh.hpp"
#include "core/scissors.hpp"

namespace papercut {

struct ShellParams {
  double youngs_modulus = 3e9;   // Pa
  double poisson_ratio = 0.3;
  double thickness = 1e-4;       // m
  double areal_density = 0.075;  // kg/m^2
  Vec3 gravity = Vec3(0, -9.81, 0);
  double bending_stiffness = -1;  // < 0: derive E h^3 / (12 (1 - nu^2))
  double contact_stiffness = 1e5;  // cubic penalty coefficient
  double contact_margin = 1e-3;    // m
  double friction = 0.3;
  double step_size = 0.005;  // s
  int max_newton_iterations = 50;
  double gradient_tolerance = 1e-6;  // N, infinity norm

  static ShellParams from_config(const ConfigMap& cfg);

  // Plane-stress Lame coefficients.
  double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
  double lambda() const {
    return youngs_modulus * poisson_ratio / (1.0 - poisson_ratio * poisson_ratio);
  }
  double bend_k() const {
    if (bending_stiffness >= 0) return bending_stiffness;
    return youngs_modulus * thickness * thickness * thickness /
           (12.0 * (1.0 - poisson_ratio * poisson_ratio));
  }
};

struct StepStats {
  int newton_iterations = 0;
  double residual = 0;  // final gradient infinity norm, N
  bool converged = false;
};

// Elastic thin sheet over a PaperMesh: constant-strain membrane triangles
// (corotational, rest state taken from UV), quadratic hinge bending on
// interior edges, cubic blade-contact penalty, implicit Euler stepping with
// projected-Newton solves, and a Coulomb friction velocity filter.
// The mesh owns positions; the simulator owns velocities and rest data.
class ShellSim {
 public:
  ShellSim(PaperMesh& mesh, const ShellParams& params);

  // Refresh elements, hinges, masses, and per-vertex velocities after the
  // mesh has been remeshed. New vertices inherit the weighted velocity of
  // their parents from the mesh birth log. Called automatically by step()
  // when the vertex or triangle count has changed.
  void rebuild_structure();

  // One implicit Euler step. `scissors` enables blade contact; `prev_pose`
  // (the blade pose at the previous step) enables friction against the
  // moving blade, otherwise the blade is treated as static.
  StepStats step(const Scissors* scissors = nullptr,
                 const ScissorPose* prev_pose = nullptr);

  const ShellParams& params() const { return params_; }
  PaperMesh& mesh() { return mesh_; }

  const std::vector<Vec3>& velocities() const { return vel_; }
  void set_velocity(int vertex, const Vec3& v);
  void zero_velocities();
  double vertex_mass(int vertex) const { return mass_[vertex]; }
  double total_mass() const;

  size_t hinge_count() const { return hinges_.size(); }

  // Static potential terms at arbitrary stacked positions (x, y, z per
  // vertex), exposed for direct verification against numerical derivatives.
  Eigen::VectorXd stacked_positions() const;
  void set_positions(const Eigen::VectorXd& x);
  double elastic_energy(const Eigen::VectorXd& x) const;
  void elastic_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  double contact_energy(const Eigen::VectorXd& x, const Scissors& sc) const;
  void contact_gradient(const Eigen::VectorXd& x, const Scissors& sc,
                        Eigen::VectorXd& grad) const;

 private:
  struct Membrane {
    std::array<int, 3> v;
    Eigen::Matrix2d dm_inv;
    double rest_area = 0;  // rest-plane area
  };
  struct Hinge {
    std::array<int, 4> v;  // edge (0,1), wings 2 and 3
    double coeff = 0;      // bend_k * rest_edge^2 / mean rest area
  };

  void assemble_hessian(const Eigen::VectorXd& x, const Scissors* sc);
  double objective(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                   const Scissors* sc) const;
  void objective_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                          const Scissors* sc, Eigen::VectorXd& grad) const;
  void apply_friction(const Scissors& sc, const ScissorPose* prev_pose,
                      const Eigen::VectorXd& x);
  void build_pattern();

  PaperMesh& mesh_;
  ShellParams params_;

  std::vector<Membrane> membranes_;
  std::vector<Hinge> hinges_;
  std::vector<double> mass_;
  std::vector<Vec3> vel_;
  std::vector<int> free_index_;  // vertex -> reduced slot, -1 when pinned
  std::vector<int> free_verts_;
  size_t births_seen_ = 0;
  size_t seen_vertex_count_ = 0;
  size_t seen_triangle_count_ = 0;

  Eigen::SparseMatrix<double> hess_;
  std::vector<std::array<int, 81>> membrane_offsets_;  // into hess_ values
  std::vector<std::array<int, 144>> hinge_offsets_;
  std::vector<std::array<int, 9>> vertex_offsets_;     // 3x3 diagonal blocks
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
  bool pattern_ready_ = false;
};

}  // namespace papercut
