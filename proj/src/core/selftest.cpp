#include "core/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "core/actions.hpp"
#include "core/error.hpp"
#include "core/mesh_io.hpp"
#include "core/paper_mesh.hpp"
#include "core/perception.hpp"
#include "core/pipeline.hpp"
#include "core/rng.hpp"
#include "core/scissors.hpp"
#include "core/shell_sim.hpp"
#include "core/tracks.hpp"

namespace papercut {

namespace {

struct Suite {
  bool verbose = true;
  int failures = 0;

  void check(const char* name, const std::function<bool()>& body) {
    bool ok = false;
    std::string detail;
    try {
      ok = body();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    if (ok) {
      if (verbose) std::printf("ok   - %s\n", name);
    } else {
      ++failures;
      std::printf("FAIL - %s%s%s\n", name, detail.empty() ? "" : ": ", detail.c_str());
    }
  }
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Central finite difference along every coordinate against the analytic
// gradient.
bool gradient_matches(const std::function<double(const Eigen::VectorXd&)>& energy,
                      const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& grad,
                      const Eigen::VectorXd& x, double probe, double rel_tol) {
  Eigen::VectorXd g;
  grad(x, g);
  double worst = 0, scale = 1e-12;
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + probe;
    const double ep = energy(xp);
    xp[i] = x[i] - probe;
    const double em = energy(xp);
    xp[i] = x[i];
    const double fd = (ep - em) / (2 * probe);
    worst = std::max(worst, std::abs(fd - g[i]));
    scale = std::max(scale, std::abs(fd));
  }
  return worst <= rel_tol * std::max(1.0, scale);
}

}  // namespace

int run_selftest(bool verbose) {
  Suite s;
  s.verbose = verbose;

  s.check("rng determinism and derivation stability", [] {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
      if (a.next_u64() != b.next_u64()) return false;
    }
    if (derive_seed(7, 1) == derive_seed(7, 2)) return false;
    return derive_seed(7, 1) == derive_seed(7, 1);
  });

  s.check("track generation deterministic and classified", [] {
    const CurveSpec t1 = gen_track(TrackKind::Easy, 0.21, 0.297, 99);
    const CurveSpec t2 = gen_track(TrackKind::Easy, 0.21, 0.297, 99);
    if (t1.serialize() != t2.serialize()) return false;
    if (classify_curvature(t1.curves[0]) != TrackKind::Easy) return false;
    const CurveSpec m = gen_track(TrackKind::Middle, 0.21, 0.297, 99);
    return classify_curvature(m.curves[0]) == TrackKind::Middle;
  });

  s.check("chamfer identity, symmetry, and recall monotonicity", [] {
    const CurveSpec t = gen_track(TrackKind::Easy, 0.21, 0.297, 3);
    const auto poly = t.target_polyline(128);
    const CurveSpec u = gen_track(TrackKind::Easy, 0.21, 0.297, 4);
    const auto poly2 = u.target_polyline(128);
    if (!near(chamfer_mm(poly, poly, 256), 0.0, 1e-9)) return false;
    if (!near(chamfer_mm(poly, poly2, 256), chamfer_mm(poly2, poly, 256), 1e-12)) return false;
    const std::vector<double> vals = {0.5, 1.0, 2.0, 4.5, 6.0};
    return recall_at(vals, 5.0) >= recall_at(vals, 1.5);
  });

  s.check("pattern overlap is 1 on identical rings", [] {
    const CurveSpec h = gen_track(TrackKind::Hard, 0.21, 0.297, 11);
    const auto ring = h.pattern_ring(128);
    return near(polygon_iou(ring, ring), 1.0, 1e-12);
  });

  s.check("mesh cut conserves area and splits a full-width cut in two", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.1, 0.08, 0.02);
    mesh.validate();
    const double area0 = mesh.total_uv_area();
    mesh.apply_cut_segment(Vec3(-0.01, 0.041, 0), Vec3(0.055, 0.043, 0));
    mesh.apply_cut_segment(Vec3(0.055, 0.043, 0), Vec3(0.11, 0.039, 0));
    mesh.validate();
    if (!near(mesh.total_uv_area(), area0, 1e-9 * area0)) return false;
    return mesh.connected_components() == 2;
  });

  s.check("mesh serialization round-trips byte for byte", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.06, 0.05, 0.02);
    mesh.apply_cut_segment(Vec3(-0.005, 0.024, 0), Vec3(0.03, 0.026, 0));
    const std::string one = serialize_mesh(mesh);
    PaperMesh back = parse_mesh(one);
    return serialize_mesh(back) == one;
  });

  s.check("scissor opening-distance round trip", [] {
    Scissors sc{ScissorGeometry{}};
    for (double phi : {0.05, 0.2, 0.45, 0.5235987755982988}) {
      const double d = sc.angle_to_distance(phi);
      if (!near(sc.distance_to_angle(d), phi, 1e-12)) return false;
    }
    ScissorPose pose;
    pose.open_angle = 0.3;
    sc.set_pose(pose);
    const BladeFrame f = sc.blade_frame();
    return near(f.cut_dir.norm(), 1.0, 1e-12) && near(f.plane_norm.norm(), 1.0, 1e-12) &&
           near(f.cut_dir.dot(f.plane_norm), 0.0, 1e-12);
  });

  s.check("elastic gradient matches finite differences", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.04, 0.03, 0.01);
    ShellParams params;
    params.youngs_modulus = 1e6;  // soft sheet keeps FD differences well-scaled
    ShellSim sim(mesh, params);
    Rng rng(5);
    Eigen::VectorXd x = sim.stacked_positions();
    for (int i = 0; i < x.size(); ++i) x[i] += rng.uniform(-1e-3, 1e-3);
    return gradient_matches([&](const Eigen::VectorXd& q) { return sim.elastic_energy(q); },
                            [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
                              sim.elastic_gradient(q, g);
                            },
                            x, 1e-6, 1e-4);
  });

  s.check("contact gradient matches finite differences", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.04, 0.03, 0.01);
    ShellParams params;
    ShellSim sim(mesh, params);
    Scissors sc{ScissorGeometry{}};
    ScissorPose pose;
    pose.translation = Vec3(0.02, 0.015, 0.0004);
    pose.open_angle = 0.3;
    sc.set_pose(pose);
    Rng rng(6);
    Eigen::VectorXd x = sim.stacked_positions();
    for (int i = 0; i < x.size(); ++i) x[i] += rng.uniform(-1e-4, 1e-4);
    return gradient_matches([&](const Eigen::VectorXd& q) { return sim.contact_energy(q, sc); },
                            [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
                              sim.contact_gradient(q, sc, g);
                            },
                            x, 1e-7, 1e-4);
  });

  s.check("free fall follows the closed-form ballistic step", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.04, 0.03, 0.01);
    mesh.set_fixed({});
    ShellParams params;
    params.youngs_modulus = 1e3;  // nearly force-free sheet
    params.bending_stiffness = 0;
    ShellSim sim(mesh, params);
    const Eigen::VectorXd x0 = sim.stacked_positions();
    sim.step();
    const Eigen::VectorXd x1 = sim.stacked_positions();
    const double h = params.step_size;
    double worst = 0;
    for (int v = 0; v < int(mesh.vertex_count()); ++v) {
      const Vec3 expect = Vec3(x0.segment<3>(3 * v)) + h * h * params.gravity;
      worst = std::max(worst, (Vec3(x1.segment<3>(3 * v)) - expect).norm());
    }
    return worst < 1e-9;
  });

  s.check("axis alignment math", [] {
    const Mat3 r = rodrigues(Vec3(0, 0, M_PI / 2));
    if ((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() > 1e-12) return false;
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
      const Vec3 a = rng.unit_vector();
      const Vec3 b = rng.unit_vector();
      const Vec3 rot = rotation_between(a, b);
      if ((rodrigues(rot) * a - b).norm() > 1e-9) return false;
    }
    return true;
  });

  s.check("observation identity configuration and frame round trip", [] {
    PaperMesh mesh = PaperMesh::build_rect(0.06, 0.05, 0.01);
    CameraModel cam;
    cam.width = 96;
    cam.height = 96;
    cam.fx = cam.fy = 120;
    cam.cx = cam.cy = 48;
    cam.position = Vec3(0.03, 0.025, 0.3);
    const DepthImage img = render_depth(cam, mesh, nullptr);
    Rng rng(3);
    const LabeledCloud cloud = mimic_artifact(img, cam, Vec3(0, 0, 1), 1, 0.0, rng);
    size_t finite = 0;
    double worst = 0;
    for (size_t i = 0; i < img.depth.size(); ++i) {
      if (std::isfinite(img.depth[i])) ++finite;
    }
    if (cloud.points.size() != finite || finite == 0) return false;
    for (const Vec3& p : cloud.points) worst = std::max(worst, std::abs(p.z()));
    if (worst > 1e-6) return false;

    Rng rng2(4);
    ObservationFrame fr = crop_and_sample(cloud, Vec3(0.03, 0.025, 0), 0.015, 64,
                                          {Vec2(0, 0.025), Vec2(0.06, 0.025)}, 0.001, rng2);
    fr.frame_index = 5;
    const std::string path = "selftest_frame.pcfr";
    write_frame(fr, path);
    const ObservationFrame back = read_frame(path);
    std::remove(path.c_str());
    if (back.points.size() != fr.points.size() || back.frame_index != 5) return false;
    for (size_t i = 0; i < fr.points.size(); ++i) {
      if (back.points[i] != fr.points[i] || back.labels[i] != fr.labels[i] ||
          back.on_curve[i] != fr.on_curve[i]) {
        return false;
      }
    }
    return true;
  });

  s.check("parameter randomization honors ranges and zero widths", [] {
    ShellParams base;
    const RandomizedParams fixed =
        randomize_params(base, {1.0, 1.0}, {base.areal_density, base.areal_density},
                         {base.youngs_modulus, base.youngs_modulus}, 77);
    if (fixed.size_scale != 1.0 || fixed.shell.areal_density != base.areal_density ||
        fixed.shell.youngs_modulus != base.youngs_modulus) {
      return false;
    }
    for (uint64_t seed = 0; seed < 50; ++seed) {
      const RandomizedParams r =
          randomize_params(base, {0.8, 1.2}, {0.05, 0.09}, {1e9, 5e9}, seed);
      if (r.size_scale < 0.8 || r.size_scale > 1.2) return false;
      if (r.shell.areal_density < 0.05 || r.shell.areal_density > 0.09) return false;
      if (r.shell.youngs_modulus < 1e9 || r.shell.youngs_modulus > 5e9) return false;
    }
    return true;
  });

  s.check("miniature episode keeps phase discipline and coherent metrics", [] {
    PipelineConfig cfg;
    cfg.paper_width = 0.12;
    cfg.paper_height = 0.09;
    cfg.edge_length = 0.01;
    cfg.basic_length = 0.03;
    cfg.settle_steps = 3;
    cfg.observations = false;
    cfg.perturb_prob = 0.0;
    const CurveSpec curve = gen_track(TrackKind::Easy, cfg.paper_width, cfg.paper_height, 21);
    const Trajectory traj = run_episode(curve, cfg, 1234);
    if (traj.status != "ok") return false;
    static const char* cycle[4] = {"open", "push", "rotate", "close"};
    for (size_t i = 0; i < traj.steps.size(); ++i) {
      if (traj.steps[i].phase != cycle[i % 4]) return false;
    }
    if (traj.steps.size() % 4 != 0 || traj.steps.empty()) return false;
    const double again = chamfer_mm(traj.final_cut, traj.curve.target_polyline(512), 512);
    return traj.metrics.chamfer_mm == again;
  });

  if (verbose) {
    std::printf("%s: %d failure%s\n", s.failures == 0 ? "PASS" : "FAIL", s.failures,
                s.failures == 1 ? "" : "s");
  }
  return s.failures;
}

}  // namespace papercut
