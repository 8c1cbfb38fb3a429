#include "core/shell_sim.hpp"

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace papercut {

namespace {

// Below this dihedral angle the Gauss-Newton hinge Hessian matches the exact
// one to roundoff, so the dual-number pass and eigensolve are skipped.
constexpr double kFlatHinge = 1e-6;
constexpr double kLineSearchMin = 1e-8;
constexpr double kLineSearchMax = 64.0;
constexpr double kArmijo = 1e-4;

// Forward-mode scalar carrying one directional derivative.
struct Dual {
  double v = 0, d = 0;
  Dual() = default;
  Dual(double value) : v(value) {}
  Dual(double value, double deriv) : v(value), d(deriv) {}
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
inline double sqrt_s(double a) { return std::sqrt(a); }
inline Dual sqrt_s(Dual a) {
  const double r = std::sqrt(a.v);
  return {r, r > 0 ? a.d / (2 * r) : 0.0};
}
inline double atan2_s(double y, double x) { return std::atan2(y, x); }
inline Dual atan2_s(Dual y, Dual x) {
  return {std::atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / (x.v * x.v + y.v * y.v)};
}

template <typename S>
struct TV3 {
  S x{}, y{}, z{};
};
template <typename S>
inline TV3<S> sub(const TV3<S>& a, const TV3<S>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <typename S>
inline TV3<S> add(const TV3<S>& a, const TV3<S>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <typename S>
inline TV3<S> cross3(const TV3<S>& a, const TV3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <typename S>
inline S dot3(const TV3<S>& a, const TV3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <typename S>
inline TV3<S> scl(S s, const TV3<S>& a) {
  return {s * a.x, s * a.y, s * a.z};
}

// Dihedral angle of the hinge (edge p0-p1, wings p2 and p3) and its exact
// position gradient. Templated so a dual-seeded pass yields Hessian rows.
template <typename S>
S dihedral_angle_gradient(const TV3<S> p[4], TV3<S> grad[4]) {
  const TV3<S> e = sub(p[1], p[0]);
  const S l = sqrt_s(dot3(e, e));
  const TV3<S> eh = scl(S(1.0) / l, e);
  const TV3<S> nA = cross3(sub(p[1], p[0]), sub(p[2], p[0]));
  const TV3<S> nB = cross3(sub(p[0], p[1]), sub(p[3], p[1]));
  const S lA = sqrt_s(dot3(nA, nA));
  const S lB = sqrt_s(dot3(nB, nB));
  const S invA = S(1.0) / lA;
  const S invB = S(1.0) / lB;
  const TV3<S> nAh = scl(invA, nA);
  const TV3<S> nBh = scl(invB, nB);
  const S c = dot3(nAh, nBh);
  const S s = dot3(cross3(nAh, nBh), eh);
  const S theta = atan2_s(s, c);
  // d(theta) = d(nA_hat) . mA + d(nB_hat) . mB with mA = nA_hat x e_hat and
  // mB = e_hat x nB_hat; both are already perpendicular to their normal, so
  // the normalization projector drops out.
  const TV3<S> mA = cross3(nAh, eh);
  const TV3<S> mB = cross3(eh, nBh);
  grad[2] = scl(S(0.0) - l * invA * invA, nA);
  grad[3] = scl(S(0.0) - l * invB * invB, nB);
  grad[0] = add(scl(invA, cross3(sub(p[1], p[2]), mA)),
                scl(invB, cross3(sub(p[3], p[1]), mB)));
  grad[1] = add(scl(invA, cross3(sub(p[2], p[0]), mA)),
                scl(invB, cross3(sub(p[0], p[3]), mB)));
  return theta;
}

double dihedral_with_gradient(const Vec3 xp[4], Vec3 grad[4]) {
  TV3<double> p[4], g[4];
  for (int i = 0; i < 4; ++i) p[i] = {xp[i].x(), xp[i].y(), xp[i].z()};
  const double theta = dihedral_angle_gradient(p, g);
  for (int i = 0; i < 4; ++i) grad[i] = Vec3(g[i].x, g[i].y, g[i].z);
  return theta;
}

void dihedral_hessian(const Vec3 xp[4], Eigen::Matrix<double, 12, 12>& ht) {
  for (int k = 0; k < 12; ++k) {
    TV3<Dual> p[4], g[4];
    for (int i = 0; i < 4; ++i) {
      p[i].x = Dual(xp[i].x(), k == 3 * i + 0 ? 1.0 : 0.0);
      p[i].y = Dual(xp[i].y(), k == 3 * i + 1 ? 1.0 : 0.0);
      p[i].z = Dual(xp[i].z(), k == 3 * i + 2 ? 1.0 : 0.0);
    }
    dihedral_angle_gradient(p, g);
    for (int j = 0; j < 4; ++j) {
      ht(k, 3 * j + 0) = g[j].x.d;
      ht(k, 3 * j + 1) = g[j].y.d;
      ht(k, 3 * j + 2) = g[j].z.d;
    }
  }
  ht = (0.5 * (ht + ht.transpose())).eval();
}

bool hinge_degenerate(const Vec3 xp[4]) {
  const Vec3 nA = (xp[1] - xp[0]).cross(xp[2] - xp[0]);
  const Vec3 nB = (xp[0] - xp[1]).cross(xp[3] - xp[1]);
  return (xp[1] - xp[0]).squaredNorm() < 1e-24 || nA.squaredNorm() < 1e-28 ||
         nB.squaredNorm() < 1e-28;
}

Eigen::Matrix<double, 3, 2> deformation_gradient(const Eigen::VectorXd& x,
                                                 const std::array<int, 3>& v,
                                                 const Eigen::Matrix2d& dm_inv) {
  Eigen::Matrix<double, 3, 2> ds;
  ds.col(0) = x.segment<3>(3 * v[1]) - x.segment<3>(3 * v[0]);
  ds.col(1) = x.segment<3>(3 * v[2]) - x.segment<3>(3 * v[0]);
  return ds * dm_inv;
}

// Principal stretches without a full SVD (for energy-only evaluations).
void principal_stretches(const Eigen::Matrix<double, 3, 2>& f, double& s1, double& s2) {
  const double a = f.col(0).squaredNorm();
  const double c = f.col(1).squaredNorm();
  const double b = f.col(0).dot(f.col(1));
  const double mid = 0.5 * (a + c);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  s1 = std::sqrt(std::max(0.0, mid + disc));
  s2 = std::sqrt(std::max(0.0, mid - disc));
}

double membrane_psi(double s1, double s2, double mu, double lam) {
  const double e1 = s1 - 1.0, e2 = s2 - 1.0;
  return mu * (e1 * e1 + e2 * e2) + 0.5 * lam * (e1 + e2) * (e1 + e2);
}

// Thin SVD with det(V) = +1 and a right-handed U.
void membrane_svd(const Eigen::Matrix<double, 3, 2>& f, Eigen::Matrix3d& u,
                  Eigen::Vector2d& sig, Eigen::Matrix2d& v) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(
      f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  u = svd.matrixU();
  v = svd.matrixV();
  sig = svd.singularValues();
  if (v.determinant() < 0) {
    v.col(1) *= -1.0;
    u.col(1) *= -1.0;
  }
  if (u.determinant() < 0) u.col(2) *= -1.0;
}

// Spreads a 3x2 direction in deformation-gradient space to the 9 element
// dofs through the constant map F = Ds * dm_inv.
Eigen::Matrix<double, 9, 1> mode_to_dofs(const Eigen::Matrix<double, 3, 2>& m,
                                         const Eigen::Matrix2d& dm_inv) {
  const Eigen::Matrix<double, 3, 2> y = m * dm_inv.transpose();
  Eigen::Matrix<double, 9, 1> p;
  p.segment<3>(0) = -(y.col(0) + y.col(1));
  p.segment<3>(3) = y.col(0);
  p.segment<3>(6) = y.col(1);
  return p;
}

}  // namespace

ShellParams ShellParams::from_config(const ConfigMap& cfg) {
  ShellParams p;
  p.youngs_modulus = cfg.get_double("shell.youngs_modulus");
  p.poisson_ratio = cfg.get_double("shell.poisson_ratio");
  p.thickness = cfg.get_double("shell.thickness");
  p.areal_density = cfg.get_double("shell.areal_density");
  const auto g = cfg.get_doubles("shell.gravity", 3);
  p.gravity = Vec3(g[0], g[1], g[2]);
  p.bending_stiffness =
      cfg.has("shell.bending_stiffness") ? cfg.get_double("shell.bending_stiffness") : -1.0;
  p.contact_stiffness = cfg.get_double("shell.contact_stiffness");
  p.contact_margin = cfg.get_double("shell.contact_margin");
  p.friction = cfg.get_double("shell.friction");
  p.step_size = cfg.get_double("sim.step_size");
  p.max_newton_iterations = cfg.get_int("sim.max_newton_iterations");
  p.gradient_tolerance = cfg.get_double("sim.gradient_tolerance");
  if (p.youngs_modulus <= 0 || p.thickness <= 0 || p.areal_density <= 0 ||
      p.step_size <= 0 || p.poisson_ratio < 0 || p.poisson_ratio >= 0.5) {
    fail(ErrorCode::InvalidArgument, "shell parameters out of range");
  }
  return p;
}

ShellSim::ShellSim(PaperMesh& mesh, const ShellParams& params)
    : mesh_(mesh), params_(params) {
  rebuild_structure();
}

void ShellSim::rebuild_structure() {
  const auto& verts = mesh_.vertices();
  const auto& tris = mesh_.triangles();

  membranes_.clear();
  membranes_.reserve(tris.size());
  for (const auto& t : tris) {
    Membrane m;
    m.v = t;
    Eigen::Matrix2d dm;
    dm.col(0) = verts[t[1]].uv - verts[t[0]].uv;
    dm.col(1) = verts[t[2]].uv - verts[t[0]].uv;
    const double det = dm.determinant();
    if (det <= 0) fail(ErrorCode::Degenerate, "membrane with non-positive rest area");
    m.dm_inv = dm.inverse();
    m.rest_area = 0.5 * det;
    membranes_.push_back(m);
  }

  hinges_.clear();
  const double kb = params_.bend_k();
  for (const auto& e : mesh_.edges()) {
    if (e.tri_count != 2) continue;
    Hinge h;
    h.v[0] = e.a;
    h.v[1] = e.b;
    for (int k = 0; k < 2; ++k) {
      const auto& t = tris[e.tris[k]];
      for (int j = 0; j < 3; ++j) {
        if (t[j] != e.a && t[j] != e.b) h.v[2 + k] = t[j];
      }
    }
    const double rest_len = (verts[e.b].uv - verts[e.a].uv).norm();
    double rest_area = 0;
    for (int k = 0; k < 2; ++k) {
      const auto& t = tris[e.tris[k]];
      rest_area += 0.5 * std::abs(triangle_area2(verts[t[0]].uv, verts[t[1]].uv,
                                                 verts[t[2]].uv));
    }
    h.coeff = kb * rest_len * rest_len / (rest_area / 3.0);
    hinges_.push_back(h);
  }

  mass_.assign(verts.size(), 0.0);
  for (const auto& m : membranes_) {
    for (int k = 0; k < 3; ++k) {
      mass_[m.v[k]] += params_.areal_density * m.rest_area / 3.0;
    }
  }

  const auto& births = mesh_.birth_log();
  if (vel_.size() > verts.size() || births_seen_ > births.size()) {
    vel_.clear();
    births_seen_ = 0;
  }
  vel_.resize(verts.size(), Vec3::Zero());
  for (; births_seen_ < births.size(); ++births_seen_) {
    const auto& b = births[births_seen_];
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      if (b.parents[k] >= 0) v += b.weights[k] * vel_[b.parents[k]];
    }
    if (b.vertex >= 0 && size_t(b.vertex) < vel_.size()) vel_[b.vertex] = v;
  }

  free_index_.assign(verts.size(), -1);
  free_verts_.clear();
  for (size_t v = 0; v < verts.size(); ++v) {
    if (!mesh_.is_fixed(int(v))) {
      free_index_[v] = int(free_verts_.size());
      free_verts_.push_back(int(v));
    } else {
      vel_[v] = Vec3::Zero();
    }
  }

  seen_vertex_count_ = verts.size();
  seen_triangle_count_ = tris.size();
  pattern_ready_ = false;
}

void ShellSim::set_velocity(int vertex, const Vec3& v) {
  if (vertex < 0 || size_t(vertex) >= vel_.size()) {
    fail(ErrorCode::InvalidArgument, "set_velocity: vertex out of range");
  }
  vel_[vertex] = mesh_.is_fixed(vertex) ? Vec3(Vec3::Zero()) : v;
}

void ShellSim::zero_velocities() {
  for (auto& v : vel_) v = Vec3::Zero();
}

double ShellSim::total_mass() const {
  double m = 0;
  for (double v : mass_) m += v;
  return m;
}

Eigen::VectorXd ShellSim::stacked_positions() const {
  const auto& verts = mesh_.vertices();
  Eigen::VectorXd x(3 * verts.size());
  for (size_t v = 0; v < verts.size(); ++v) x.segment<3>(3 * v) = verts[v].position;
  return x;
}

void ShellSim::set_positions(const Eigen::VectorXd& x) {
  auto& verts = mesh_.vertices();
  if (size_t(x.size()) != 3 * verts.size()) {
    fail(ErrorCode::InvalidArgument, "set_positions: size mismatch");
  }
  for (size_t v = 0; v < verts.size(); ++v) verts[v].position = x.segment<3>(3 * v);
}

double ShellSim::elastic_energy(const Eigen::VectorXd& x) const {
  const double mu = params_.mu(), lam = params_.lambda(), h = params_.thickness;
  double e = 0;
  for (const auto& m : membranes_) {
    const auto f = deformation_gradient(x, m.v, m.dm_inv);
    double s1, s2;
    principal_stretches(f, s1, s2);
    e += membrane_psi(s1, s2, mu, lam) * m.rest_area * h;
  }
  for (const auto& hg : hinges_) {
    Vec3 p[4];
    for (int k = 0; k < 4; ++k) p[k] = x.segment<3>(3 * hg.v[k]);
    if (hinge_degenerate(p)) continue;
    Vec3 g[4];
    const double theta = dihedral_with_gradient(p, g);
    e += hg.coeff * theta * theta;
  }
  return e;
}

void ShellSim::elastic_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  const double mu = params_.mu(), lam = params_.lambda(), h = params_.thickness;
  grad.setZero(x.size());
  for (const auto& m : membranes_) {
    const auto f = deformation_gradient(x, m.v, m.dm_inv);
    Eigen::Matrix3d u;
    Eigen::Vector2d sig;
    Eigen::Matrix2d v;
    membrane_svd(f, u, sig, v);
    const double sum = sig[0] + sig[1] - 2.0;
    Eigen::Vector2d g;
    g[0] = 2.0 * mu * (sig[0] - 1.0) + lam * sum;
    g[1] = 2.0 * mu * (sig[1] - 1.0) + lam * sum;
    const Eigen::Matrix<double, 3, 2> p =
        u.leftCols<2>() * g.asDiagonal() * v.transpose();
    const Eigen::Matrix<double, 3, 2> y = p * m.dm_inv.transpose();
    const double scale = m.rest_area * h;
    grad.segment<3>(3 * m.v[0]) -= scale * (y.col(0) + y.col(1));
    grad.segment<3>(3 * m.v[1]) += scale * y.col(0);
    grad.segment<3>(3 * m.v[2]) += scale * y.col(1);
  }
  for (const auto& hg : hinges_) {
    Vec3 p[4];
    for (int k = 0; k < 4; ++k) p[k] = x.segment<3>(3 * hg.v[k]);
    if (hinge_degenerate(p)) continue;
    Vec3 g[4];
    const double theta = dihedral_with_gradient(p, g);
    for (int k = 0; k < 4; ++k) {
      grad.segment<3>(3 * hg.v[k]) += 2.0 * hg.coeff * theta * g[k];
    }
  }
}

// Each blade accumulates its own penalty: the summed per-capsule energy is
// smooth between the blades where the sheet passes, while a union distance
// field would kink exactly there and stall the Newton solve.
double ShellSim::contact_energy(const Eigen::VectorXd& x, const Scissors& sc) const {
  const double k = params_.contact_stiffness, margin = params_.contact_margin;
  const auto caps = sc.world_capsules();
  double e = 0;
  for (size_t v = 0; v < mesh_.vertex_count(); ++v) {
    const Vec3 p = x.segment<3>(3 * v);
    for (const auto& cap : caps) {
      const double d = Scissors::capsule_sdf(cap, p);
      if (d < margin) {
        const double pen = margin - d;
        e += k * pen * pen * pen;
      }
    }
  }
  return e;
}

void ShellSim::contact_gradient(const Eigen::VectorXd& x, const Scissors& sc,
                                Eigen::VectorXd& grad) const {
  const double k = params_.contact_stiffness, margin = params_.contact_margin;
  const auto caps = sc.world_capsules();
  const Vec3 fallback = sc.pose().rotation.col(2);
  grad.setZero(x.size());
  for (size_t v = 0; v < mesh_.vertex_count(); ++v) {
    const Vec3 p = x.segment<3>(3 * v);
    for (const auto& cap : caps) {
      const double d = Scissors::capsule_sdf(cap, p);
      if (d < margin) {
        const double pen = margin - d;
        grad.segment<3>(3 * v) +=
            -3.0 * k * pen * pen * Scissors::capsule_sdf_normal(cap, p, fallback);
      }
    }
  }
}

double ShellSim::objective(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                           const Scissors* sc) const {
  const double h = params_.step_size;
  double phi = elastic_energy(x);
  if (sc) phi += contact_energy(x, *sc);
  for (int v : free_verts_) {
    const Vec3 dx = x.segment<3>(3 * v) - xhat.segment<3>(3 * v);
    phi += 0.5 * mass_[v] / (h * h) * dx.squaredNorm();
    phi -= mass_[v] * params_.gravity.dot(x.segment<3>(3 * v));
  }
  return phi;
}

void ShellSim::objective_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                                  const Scissors* sc, Eigen::VectorXd& grad) const {
  elastic_gradient(x, grad);
  if (sc) {
    const double k = params_.contact_stiffness, margin = params_.contact_margin;
    const auto caps = sc->world_capsules();
    const Vec3 fallback = sc->pose().rotation.col(2);
    for (size_t v = 0; v < mesh_.vertex_count(); ++v) {
      const Vec3 p = x.segment<3>(3 * v);
      for (const auto& cap : caps) {
        const double d = Scissors::capsule_sdf(cap, p);
        if (d < margin) {
          const double pen = margin - d;
          grad.segment<3>(3 * v) +=
              -3.0 * k * pen * pen * Scissors::capsule_sdf_normal(cap, p, fallback);
        }
      }
    }
  }
  const double h = params_.step_size;
  for (int v : free_verts_) {
    grad.segment<3>(3 * v) +=
        mass_[v] / (h * h) * (x.segment<3>(3 * v) - xhat.segment<3>(3 * v));
    grad.segment<3>(3 * v) -= mass_[v] * params_.gravity;
  }
}

void ShellSim::build_pattern() {
  const int nf = int(free_verts_.size());
  const int dim = 3 * nf;
  std::vector<Eigen::Triplet<double>> trips;
  auto dof = [&](int vert, int comp) {
    const int fi = free_index_[vert];
    return fi < 0 ? -1 : 3 * fi + comp;
  };
  auto add_block = [&](const std::vector<int>& vs) {
    for (int a : vs) {
      for (int b : vs) {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            const int i = dof(a, r), j = dof(b, c);
            if (i >= 0 && j >= 0) trips.emplace_back(i, j, 0.0);
          }
        }
      }
    }
  };
  for (const auto& m : membranes_) add_block({m.v[0], m.v[1], m.v[2]});
  for (const auto& h : hinges_) add_block({h.v[0], h.v[1], h.v[2], h.v[3]});
  for (int v : free_verts_) add_block({v});
  hess_.resize(dim, dim);
  hess_.setFromTriplets(trips.begin(), trips.end());
  hess_.makeCompressed();

  auto find_offset = [&](int row, int col) {
    const int start = hess_.outerIndexPtr()[col];
    const int end = hess_.outerIndexPtr()[col + 1];
    const int* inner = hess_.innerIndexPtr();
    const int* it = std::lower_bound(inner + start, inner + end, row);
    if (it == inner + end || *it != row) {
      fail(ErrorCode::Internal, "hessian pattern missing an expected entry");
    }
    return int(it - inner);
  };

  membrane_offsets_.assign(membranes_.size(), {});
  for (size_t e = 0; e < membranes_.size(); ++e) {
    const auto& m = membranes_[e];
    for (int a = 0; a < 9; ++a) {
      for (int b = 0; b < 9; ++b) {
        const int i = dof(m.v[a / 3], a % 3), j = dof(m.v[b / 3], b % 3);
        membrane_offsets_[e][a * 9 + b] = (i >= 0 && j >= 0) ? find_offset(i, j) : -1;
      }
    }
  }
  hinge_offsets_.assign(hinges_.size(), {});
  for (size_t e = 0; e < hinges_.size(); ++e) {
    const auto& h = hinges_[e];
    for (int a = 0; a < 12; ++a) {
      for (int b = 0; b < 12; ++b) {
        const int i = dof(h.v[a / 3], a % 3), j = dof(h.v[b / 3], b % 3);
        hinge_offsets_[e][a * 12 + b] = (i >= 0 && j >= 0) ? find_offset(i, j) : -1;
      }
    }
  }
  vertex_offsets_.assign(mesh_.vertex_count(), {-1, -1, -1, -1, -1, -1, -1, -1, -1});
  for (int v : free_verts_) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        vertex_offsets_[v][r * 3 + c] = find_offset(dof(v, r), dof(v, c));
      }
    }
  }

  solver_.analyzePattern(hess_);
  pattern_ready_ = true;
}

void ShellSim::assemble_hessian(const Eigen::VectorXd& x, const Scissors* sc) {
  if (!pattern_ready_) build_pattern();
  double* vals = hess_.valuePtr();
  std::fill(vals, vals + hess_.nonZeros(), 0.0);

  const double mu = params_.mu(), lam = params_.lambda(), th = params_.thickness;
  const double h = params_.step_size;

  for (int v : free_verts_) {
    const double m = mass_[v] / (h * h);
    const auto& off = vertex_offsets_[v];
    vals[off[0]] += m;
    vals[off[4]] += m;
    vals[off[8]] += m;
  }

  for (size_t e = 0; e < membranes_.size(); ++e) {
    const auto& m = membranes_[e];
    const auto f = deformation_gradient(x, m.v, m.dm_inv);
    Eigen::Matrix3d u;
    Eigen::Vector2d sig;
    Eigen::Matrix2d v;
    membrane_svd(f, u, sig, v);
    const double s1 = sig[0], s2 = sig[1];
    const double sum = s1 + s2 - 2.0;
    const double g1 = 2.0 * mu * (s1 - 1.0) + lam * sum;
    const double g2 = 2.0 * mu * (s2 - 1.0) + lam * sum;
    const Vec3 u1 = u.col(0), u2 = u.col(1), u3 = u.col(2);
    const Eigen::Vector2d v1 = v.col(0), v2 = v.col(1);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

    // Orthonormal eigenmatrices of the energy Hessian in F-space and their
    // eigenvalues; negative ones are clamped to keep Newton descending.
    Eigen::Matrix<double, 3, 2> modes[6];
    double evs[6];
    modes[0] = inv_sqrt2 * (u1 * v1.transpose() + u2 * v2.transpose());
    evs[0] = 2.0 * mu + 2.0 * lam;
    modes[1] = inv_sqrt2 * (u1 * v1.transpose() - u2 * v2.transpose());
    evs[1] = 2.0 * mu;
    modes[2] = inv_sqrt2 * (u1 * v2.transpose() + u2 * v1.transpose());
    evs[2] = 2.0 * mu;
    modes[3] = inv_sqrt2 * (u1 * v2.transpose() - u2 * v1.transpose());
    evs[3] = (g1 + g2) / std::max(s1 + s2, 1e-12);
    modes[4] = u3 * v1.transpose();
    evs[4] = g1 / std::max(s1, 1e-12);
    modes[5] = u3 * v2.transpose();
    evs[5] = g2 / std::max(s2, 1e-12);

    Eigen::Matrix<double, 9, 9> he = Eigen::Matrix<double, 9, 9>::Zero();
    const double scale = m.rest_area * th;
    for (int k = 0; k < 6; ++k) {
      const double ev = std::max(0.0, evs[k]);
      if (ev == 0.0) continue;
      const auto p = mode_to_dofs(modes[k], m.dm_inv);
      he.noalias() += (scale * ev) * (p * p.transpose());
    }
    const auto& off = membrane_offsets_[e];
    for (int a = 0; a < 9; ++a) {
      for (int b = 0; b < 9; ++b) {
        const int o = off[a * 9 + b];
        if (o >= 0) vals[o] += he(a, b);
      }
    }
  }

  for (size_t e = 0; e < hinges_.size(); ++e) {
    const auto& hg = hinges_[e];
    Vec3 p[4];
    for (int k = 0; k < 4; ++k) p[k] = x.segment<3>(3 * hg.v[k]);
    if (hinge_degenerate(p)) continue;
    Vec3 g[4];
    const double theta = dihedral_with_gradient(p, g);
    Eigen::Matrix<double, 12, 1> gt;
    for (int k = 0; k < 4; ++k) gt.segment<3>(3 * k) = g[k];
    Eigen::Matrix<double, 12, 12> he;
    if (std::abs(theta) < kFlatHinge) {
      he.noalias() = (2.0 * hg.coeff) * (gt * gt.transpose());
    } else {
      Eigen::Matrix<double, 12, 12> ht;
      dihedral_hessian(p, ht);
      he = 2.0 * hg.coeff * (gt * gt.transpose() + theta * ht);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> es(he);
      const auto& q = es.eigenvectors();
      Eigen::Matrix<double, 12, 1> lp = es.eigenvalues().cwiseMax(0.0);
      he.noalias() = q * lp.asDiagonal() * q.transpose();
    }
    const auto& off = hinge_offsets_[e];
    for (int a = 0; a < 12; ++a) {
      for (int b = 0; b < 12; ++b) {
        const int o = off[a * 12 + b];
        if (o >= 0) vals[o] += he(a, b);
      }
    }
  }

  if (sc) {
    const double k = params_.contact_stiffness, margin = params_.contact_margin;
    const auto caps = sc->world_capsules();
    const Vec3 fallback = sc->pose().rotation.col(2);
    for (int v : free_verts_) {
      const Vec3 pos = x.segment<3>(3 * v);
      const auto& off = vertex_offsets_[v];
      for (const auto& cap : caps) {
        const double d = Scissors::capsule_sdf(cap, pos);
        if (d >= margin) continue;
        const Vec3 n = Scissors::capsule_sdf_normal(cap, pos, fallback);
        const double w = 6.0 * k * (margin - d);
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            vals[off[r * 3 + c]] += w * n[r] * n[c];
          }
        }
      }
    }
  }
}

StepStats ShellSim::step(const Scissors* scissors, const ScissorPose* prev_pose) {
  if (mesh_.vertex_count() != seen_vertex_count_ ||
      mesh_.triangle_count() != seen_triangle_count_) {
    rebuild_structure();
  }
  StepStats st;
  const double h = params_.step_size;
  const int nf = int(free_verts_.size());
  if (nf == 0) {
    st.converged = true;
    return st;
  }

  Eigen::VectorXd x = stacked_positions();
  const Eigen::VectorXd x0 = x;
  Eigen::VectorXd xhat = x;
  for (int v : free_verts_) xhat.segment<3>(3 * v) += h * vel_[v];

  Eigen::VectorXd grad_full(x.size()), g_red(3 * nf), dx(3 * nf);
  Eigen::VectorXd x_cand = x, x_acc = x;

  const bool trace = std::getenv("PAPERCUT_NEWTON_TRACE") != nullptr;
  const bool timing = std::getenv("PAPERCUT_NEWTON_TIME") != nullptr;
  static double tt_grad = 0, tt_asm = 0, tt_fact = 0, tt_solve = 0, tt_ls = 0;
  static long tt_iters = 0, tt_steps = 0;
  auto now = [] { return std::chrono::steady_clock::now(); };
  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  auto tg0 = now();
  int last_worst = 0;
  for (int iter = 0;; ++iter) {
    tg0 = now();
    objective_gradient(x, xhat, scissors, grad_full);
    if (timing) tt_grad += secs(tg0, now());
    for (int k = 0; k < nf; ++k) {
      g_red.segment<3>(3 * k) = grad_full.segment<3>(3 * free_verts_[k]);
    }
    st.residual = g_red.cwiseAbs().maxCoeff(&last_worst);
    const int worst = last_worst;
    if (trace) {
      const int wv = free_verts_[worst / 3];
      std::fprintf(stderr, "  newton %2d res=%.3e worst v%d.%c pos=(%.5f,%.5f,%.5f)\n", iter,
                   st.residual, wv, "xyz"[worst % 3], x[3 * wv], x[3 * wv + 1], x[3 * wv + 2]);
    }
    if (st.residual <= params_.gradient_tolerance) {
      st.converged = true;
      break;
    }
    if (iter >= params_.max_newton_iterations) break;

    assemble_hessian(x, scissors);
    solver_.factorize(hess_);
    if (solver_.info() != Eigen::Success) break;
    dx = solver_.solve(-g_red);
    if (solver_.info() != Eigen::Success) break;

    const double phi0 = objective(x, xhat, scissors);
    const double slope = g_red.dot(dx);
    auto eval_candidate = [&](double a) {
      for (int k = 0; k < nf; ++k) {
        x_cand.segment<3>(3 * free_verts_[k]) =
            x.segment<3>(3 * free_verts_[k]) + a * dx.segment<3>(3 * k);
      }
      return objective(x_cand, xhat, scissors);
    };
    double alpha = 1.0;
    bool accepted = false;
    double phi = 0;
    while (alpha >= kLineSearchMin) {
      phi = eval_candidate(alpha);
      if (phi <= phi0 + kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (accepted && alpha == 1.0) {
      // Soft modes the convexified model overestimates want a longer step:
      // keep doubling while the energy strictly improves and still satisfies
      // the sufficient-decrease bound.
      x_acc = x_cand;
      for (double a2 = 2.0; a2 <= kLineSearchMax; a2 *= 2.0) {
        const double p2 = eval_candidate(a2);
        if (p2 < phi && p2 <= phi0 + kArmijo * a2 * slope) {
          phi = p2;
          alpha = a2;
          x_acc.swap(x_cand);
        } else {
          break;
        }
      }
      x_cand.swap(x_acc);
    }
    if (trace) {
      std::fprintf(stderr, "            alpha=%g slope=%.3e accepted=%d\n", alpha, slope,
                   int(accepted));
    }
    if (!accepted) break;
    x = x_cand;
    st.newton_iterations = iter + 1;
  }

  if (trace && !st.converged) {
    const int wv = free_verts_[last_worst / 3];
    const int wc = last_worst % 3;
    const double eps = 1e-7;
    Eigen::VectorXd xp = x, xm = x, gp(x.size()), gm(x.size());
    xp[3 * wv + wc] += eps;
    xm[3 * wv + wc] -= eps;
    objective_gradient(xp, xhat, scissors, gp);
    objective_gradient(xm, xhat, scissors, gm);
    const double h_true = (gp[3 * wv + wc] - gm[3 * wv + wc]) / (2 * eps);
    elastic_gradient(xp, gp);
    elastic_gradient(xm, gm);
    const double h_el = (gp[3 * wv + wc] - gm[3 * wv + wc]) / (2 * eps);
    assemble_hessian(x, scissors);
    const double h_used = hess_.coeff(last_worst, last_worst);
    std::fprintf(stderr,
                 "  STALL v%d.%c  H_used=%.4e H_true=%.4e (elastic=%.4e mass=%.4e)\n", wv,
                 "xyz"[wc], h_used, h_true, h_el, mass_[wv] / (h * h));
    if (scissors) {
      const auto caps = scissors->world_capsules();
      const Vec3 p = x.segment<3>(3 * wv);
      for (int b = 0; b < 2; ++b) {
        const Vec3 ab = caps[b].b - caps[b].a;
        const double t =
            std::clamp((p - caps[b].a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        std::fprintf(stderr, "        blade%d d=%.5e t=%.4f\n", b,
                     Scissors::capsule_sdf(caps[b], p), t);
      }
    }
    for (size_t t = 0; t < mesh_.triangle_count(); ++t) {
      const auto& tri = mesh_.triangles()[t];
      if (tri[0] != wv && tri[1] != wv && tri[2] != wv) continue;
      const Vec2 a = mesh_.vertices()[tri[0]].uv, bb = mesh_.vertices()[tri[1]].uv,
                 c = mesh_.vertices()[tri[2]].uv;
      const double area = 0.5 * std::abs((bb - a).x() * (c - a).y() - (bb - a).y() * (c - a).x());
      const double lmax = std::max({(bb - a).norm(), (c - bb).norm(), (a - c).norm()});
      std::fprintf(stderr, "        tri %zu (%d,%d,%d) uv_area=%.3e min_h=%.3e\n", t, tri[0],
                   tri[1], tri[2], area, lmax > 0 ? 2.0 * area / lmax : 0.0);
    }
  }

  set_positions(x);
  for (int v : free_verts_) {
    vel_[v] = (x.segment<3>(3 * v) - x0.segment<3>(3 * v)) / h;
  }
  if (scissors) apply_friction(*scissors, prev_pose, x);
  return st;
}

void ShellSim::apply_friction(const Scissors& sc, const ScissorPose* prev_pose,
                              const Eigen::VectorXd& x) {
  const double mu_f = params_.friction;
  if (mu_f <= 0) return;
  const double k = params_.contact_stiffness, margin = params_.contact_margin;
  const double h = params_.step_size;
  const auto caps = sc.world_capsules();
  const Vec3 fallback = sc.pose().rotation.col(2);
  for (int v : free_verts_) {
    const Vec3 p = x.segment<3>(3 * v);
    for (int blade = 0; blade < 2; ++blade) {
      const double d = Scissors::capsule_sdf(caps[blade], p);
      if (d >= margin) continue;
      const double pen = margin - d;
      const double jn = 3.0 * k * pen * pen * h;  // normal impulse over the step
      const Vec3 n = Scissors::capsule_sdf_normal(caps[blade], p, fallback);

      Vec3 v_blade = Vec3::Zero();
      if (prev_pose) {
        v_blade = (p - sc.blade_point_previous(blade, p, *prev_pose)) / h;
      }
      const Vec3 v_rel = vel_[v] - v_blade;
      const Vec3 v_t = v_rel - n * v_rel.dot(n);
      const double vt_norm = v_t.norm();
      if (vt_norm < 1e-15) continue;
      if (mass_[v] * vt_norm <= mu_f * jn) {
        vel_[v] -= v_t;  // stick: kill relative tangential motion w.r.t. this blade
      } else {
        vel_[v] -= (mu_f * jn / mass_[v]) * (v_t / vt_norm);
      }
    }
  }
}

}  // namespace papercut
