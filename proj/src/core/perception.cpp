#include "core/perception.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "core/error.hpp"
#include "core/geometry.hpp"
#include "core/mesh_io.hpp"

namespace papercut {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr uint32_t kFrameVersion = 1;
constexpr uint8_t kFlagPadded = 1;
constexpr uint8_t kFlagWorldFrame = 2;

// Fixed blade tessellation: segments around the capsule axis and latitude
// bands per hemispherical end cap.
constexpr int kCapsuleRingSegments = 24;
constexpr int kCapsuleCapBands = 6;

struct RasterVertex {
  double sx = 0, sy = 0, depth = 0;
  Vec2 uv = Vec2::Zero();
  bool has_uv = false;
};

RasterVertex project_vertex(const CameraModel& cam, const Vec3& world,
                            const Vec2& uv, bool has_uv) {
  RasterVertex rv;
  const Vec3 c = cam.world_to_camera(world);
  rv.depth = -c.z();
  if (rv.depth > 0) {
    rv.sx = cam.cx + cam.fx * c.x() / rv.depth;
    rv.sy = cam.cy - cam.fy * c.y() / rv.depth;
  }
  rv.uv = uv;
  rv.has_uv = has_uv;
  return rv;
}

double screen_edge(const RasterVertex& u, const RasterVertex& v, double px, double py) {
  return (v.sx - u.sx) * (py - u.sy) - (v.sy - u.sy) * (px - u.sx);
}

// Perspective-correct z-buffered fill. Triangles with any vertex outside the
// depth range are dropped whole; no clipping.
void raster_triangle(DepthImage& img, const CameraModel& cam, const RasterVertex& a,
                     const RasterVertex& b, const RasterVertex& c, uint8_t label) {
  for (const RasterVertex* v : {&a, &b, &c}) {
    if (!(v->depth >= cam.near_plane && v->depth <= cam.far_plane)) return;
  }
  const double area = (b.sx - a.sx) * (c.sy - a.sy) - (b.sy - a.sy) * (c.sx - a.sx);
  if (std::abs(area) < 1e-12) return;
  const double min_x = std::min({a.sx, b.sx, c.sx});
  const double max_x = std::max({a.sx, b.sx, c.sx});
  const double min_y = std::min({a.sy, b.sy, c.sy});
  const double max_y = std::max({a.sy, b.sy, c.sy});
  const int x0 = std::max(0, int(std::floor(min_x)));
  const int x1 = std::min(img.width - 1, int(std::ceil(max_x)));
  const int y0 = std::max(0, int(std::floor(min_y)));
  const int y1 = std::min(img.height - 1, int(std::ceil(max_y)));
  const bool carry_uv = a.has_uv && b.has_uv && c.has_uv;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double w0 = screen_edge(b, c, px, py) / area;
      const double w1 = screen_edge(c, a, px, py) / area;
      const double w2 = screen_edge(a, b, px, py) / area;
      if (w0 < 0 || w1 < 0 || w2 < 0) continue;
      const double inv_d = w0 / a.depth + w1 / b.depth + w2 / c.depth;
      if (inv_d <= 0) continue;
      const double d = 1.0 / inv_d;
      if (d < cam.near_plane || d > cam.far_plane) continue;
      const size_t i = img.idx(x, y);
      if (d >= img.depth[i]) continue;
      img.depth[i] = d;
      img.label[i] = label;
      if (carry_uv) {
        img.uv[i] = (w0 * a.uv / a.depth + w1 * b.uv / b.depth + w2 * c.uv / c.depth) * d;
        img.has_uv[i] = 1;
      } else {
        img.uv[i] = Vec2::Zero();
        img.has_uv[i] = 0;
      }
    }
  }
}

// Capsule surface mesh: a ring ladder from one cap pole to the other. Pole
// rings have radius zero; the resulting zero-area triangles are rejected by
// the rasterizer's area test.
void append_capsule_triangles(std::vector<Vec3>& out, const Vec3& pa, const Vec3& pb,
                              double radius) {
  Vec3 w = pb - pa;
  const double len = w.norm();
  w = len > 1e-12 ? Vec3(w / len) : Vec3(0, 0, 1);
  Vec3 u = std::abs(w.z()) < 0.9 ? Vec3(w.cross(Vec3(0, 0, 1)).normalized())
                                 : Vec3(w.cross(Vec3(1, 0, 0)).normalized());
  const Vec3 v = w.cross(u);

  struct Ring {
    Vec3 center;
    double radius;
  };
  std::vector<Ring> rings;
  rings.reserve(2 * kCapsuleCapBands + 2);
  for (int j = kCapsuleCapBands; j >= 0; --j) {
    const double phi = 0.5 * M_PI * j / kCapsuleCapBands;
    rings.push_back({pa - radius * std::sin(phi) * w, radius * std::cos(phi)});
  }
  for (int j = 0; j <= kCapsuleCapBands; ++j) {
    const double phi = 0.5 * M_PI * j / kCapsuleCapBands;
    rings.push_back({pb + radius * std::sin(phi) * w, radius * std::cos(phi)});
  }

  auto ring_point = [&](const Ring& r, int k) {
    const double t = 2.0 * M_PI * k / kCapsuleRingSegments;
    return Vec3(r.center + r.radius * (std::cos(t) * u + std::sin(t) * v));
  };
  for (size_t j = 0; j + 1 < rings.size(); ++j) {
    for (int k = 0; k < kCapsuleRingSegments; ++k) {
      const int k1 = (k + 1) % kCapsuleRingSegments;
      const Vec3 p00 = ring_point(rings[j], k);
      const Vec3 p01 = ring_point(rings[j], k1);
      const Vec3 p10 = ring_point(rings[j + 1], k);
      const Vec3 p11 = ring_point(rings[j + 1], k1);
      out.insert(out.end(), {p00, p10, p11});
      out.insert(out.end(), {p00, p11, p01});
    }
  }
}

void append_u8(std::string& buf, uint8_t v) { buf.push_back(char(v)); }

void append_u32(std::string& buf, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void append_f64(std::string& buf, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}

struct ByteReader {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) {
      fail(ErrorCode::Parse, "truncated frame file: " + path);
    }
  }
  uint8_t u8() {
    need(1);
    return uint8_t(buf[pos++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
};

}  // namespace

CameraModel CameraModel::from_config(const ConfigMap& cfg) {
  CameraModel cam;
  cam.width = int(cfg.get_double("camera.image_width"));
  cam.height = int(cfg.get_double("camera.image_height"));
  cam.fx = cfg.get_double("camera.fx");
  cam.fy = cfg.get_double("camera.fy");
  cam.cx = cfg.get_double("camera.cx");
  cam.cy = cfg.get_double("camera.cy");
  cam.near_plane = cfg.get_double("camera.near");
  cam.far_plane = cfg.get_double("camera.far");
  if (cam.width <= 0 || cam.height <= 0) {
    fail(ErrorCode::InvalidArgument, "camera image size must be positive");
  }
  if (cam.fx <= 0 || cam.fy <= 0) {
    fail(ErrorCode::InvalidArgument, "camera focal lengths must be positive");
  }
  if (!(cam.near_plane > 0) || !(cam.far_plane > cam.near_plane)) {
    fail(ErrorCode::InvalidArgument, "camera depth range must satisfy 0 < near < far");
  }
  const auto pos = cfg.get_doubles("camera.position", 3);
  const auto tgt = cfg.get_doubles("camera.target", 3);
  const auto up_cfg = cfg.get_doubles("camera.up", 3);
  cam.position = Vec3(pos[0], pos[1], pos[2]);
  const Vec3 target(tgt[0], tgt[1], tgt[2]);
  const Vec3 up_hint(up_cfg[0], up_cfg[1], up_cfg[2]);
  Vec3 back = cam.position - target;
  if (back.norm() < 1e-12) {
    fail(ErrorCode::InvalidArgument, "camera position and target coincide");
  }
  back.normalize();
  Vec3 right = up_hint.cross(back);
  if (right.norm() < 1e-12) {
    fail(ErrorCode::InvalidArgument, "camera up direction parallel to view axis");
  }
  right.normalize();
  const Vec3 up = back.cross(right);
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = up;
  cam.rotation.col(2) = back;
  return cam;
}

DepthImage render_depth(const CameraModel& cam, const PaperMesh& mesh,
                        const Scissors* scissors) {
  DepthImage img;
  img.width = cam.width;
  img.height = cam.height;
  const size_t n = size_t(cam.width) * cam.height;
  img.depth.assign(n, kInf);
  img.label.assign(n, uint8_t(PixelLabel::Background));
  img.uv.assign(n, Vec2::Zero());
  img.has_uv.assign(n, 0);

  const auto& verts = mesh.vertices();
  for (const auto& tri : mesh.triangles()) {
    const RasterVertex a = project_vertex(cam, verts[tri[0]].position, verts[tri[0]].uv, true);
    const RasterVertex b = project_vertex(cam, verts[tri[1]].position, verts[tri[1]].uv, true);
    const RasterVertex c = project_vertex(cam, verts[tri[2]].position, verts[tri[2]].uv, true);
    raster_triangle(img, cam, a, b, c, uint8_t(PixelLabel::Paper));
  }

  if (scissors) {
    std::vector<Vec3> tris;
    for (const auto& cap : scissors->world_capsules()) {
      append_capsule_triangles(tris, cap.a, cap.b, cap.radius);
    }
    for (size_t i = 0; i + 2 < tris.size(); i += 3) {
      const RasterVertex a = project_vertex(cam, tris[i], Vec2::Zero(), false);
      const RasterVertex b = project_vertex(cam, tris[i + 1], Vec2::Zero(), false);
      const RasterVertex c = project_vertex(cam, tris[i + 2], Vec2::Zero(), false);
      raster_triangle(img, cam, a, b, c, uint8_t(PixelLabel::Blade));
    }
  }
  return img;
}

LabeledCloud mimic_artifact(const DepthImage& img, const CameraModel& cam,
                            const Vec3& sheet_normal, int pool_size,
                            double noise_amp, Rng& rng) {
  if (pool_size < 1) {
    fail(ErrorCode::InvalidArgument, "pool size must be at least 1");
  }
  if (noise_amp < 0) {
    fail(ErrorCode::InvalidArgument, "noise amplitude must be non-negative");
  }
  const Vec3 n_hat = sheet_normal.norm() > 1e-12 ? Vec3(sheet_normal.normalized())
                                                 : Vec3(0, 0, 1);
  LabeledCloud cloud;
  const int lo = -(pool_size - 1) / 2;
  const int hi = pool_size / 2;
  std::vector<size_t> blade_points;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Window statistics: the farthest finite depth stands in for background
      // entries so depth bleeds outward across silhouette edges, the way a
      // wide-support depth sensor smears object boundaries.
      double max_finite = -kInf;
      int in_bounds = 0;
      bool any_blade = false;
      double best_paper_depth = -kInf;
      Vec2 fill_uv = Vec2::Zero();
      bool fill_has_uv = false;
      for (int dy = lo; dy <= hi; ++dy) {
        for (int dx = lo; dx <= hi; ++dx) {
          const int wx = x + dx, wy = y + dy;
          if (wx < 0 || wx >= img.width || wy < 0 || wy >= img.height) continue;
          ++in_bounds;
          const size_t wi = img.idx(wx, wy);
          const double d = img.depth[wi];
          if (!std::isfinite(d)) continue;
          max_finite = std::max(max_finite, d);
          if (img.label[wi] == uint8_t(PixelLabel::Blade)) any_blade = true;
          if (img.label[wi] == uint8_t(PixelLabel::Paper) && img.has_uv[wi] &&
              d > best_paper_depth) {
            best_paper_depth = d;
            fill_uv = img.uv[wi];
            fill_has_uv = true;
          }
        }
      }
      if (!(max_finite > -kInf)) continue;  // all-background window stays empty

      double sum = 0;
      for (int dy = lo; dy <= hi; ++dy) {
        for (int dx = lo; dx <= hi; ++dx) {
          const int wx = x + dx, wy = y + dy;
          if (wx < 0 || wx >= img.width || wy < 0 || wy >= img.height) continue;
          const double d = img.depth[img.idx(wx, wy)];
          sum += std::isfinite(d) ? d : max_finite;
        }
      }
      const double depth = sum / in_bounds;

      const size_t i = img.idx(x, y);
      uint8_t label;
      Vec2 uv = Vec2::Zero();
      bool has_uv = false;
      if (std::isfinite(img.depth[i])) {
        label = img.label[i];
        uv = img.uv[i];
        has_uv = img.has_uv[i] != 0;
      } else {
        // Filled-in edge pixel: blade wins over paper, UV borrowed from the
        // farthest paper pixel in the window (the one whose depth dominates
        // the fill value).
        label = any_blade ? uint8_t(PixelLabel::Blade) : uint8_t(PixelLabel::Paper);
        if (label == uint8_t(PixelLabel::Paper) && fill_has_uv) {
          uv = fill_uv;
          has_uv = true;
        }
      }

      const double cam_x = (x + 0.5 - cam.cx) * depth / cam.fx;
      const double cam_y = (cam.cy - (y + 0.5)) * depth / cam.fy;
      const Vec3 p = cam.camera_to_world(Vec3(cam_x, cam_y, -depth));
      if (label == uint8_t(PixelLabel::Blade)) blade_points.push_back(cloud.points.size());
      cloud.points.push_back(p);
      cloud.labels.push_back(label);
      cloud.uv.push_back(uv);
      cloud.has_uv.push_back(has_uv ? 1 : 0);
    }
  }

  // One noise draw per blade point in row-major order, even at zero
  // amplitude, so the draw sequence does not depend on the amplitude.
  for (size_t i : blade_points) {
    const double a = rng.uniform(-noise_amp, noise_amp);
    cloud.points[i] += a * n_hat;
  }
  return cloud;
}

ObservationFrame crop_and_sample(const LabeledCloud& cloud, const Vec3& center,
                                 double half_extent, int count,
                                 const std::vector<Vec2>& curve_uv, double mask_width,
                                 Rng& rng) {
  if (count < 1) {
    fail(ErrorCode::InvalidArgument, "sample count must be at least 1");
  }
  if (half_extent <= 0) {
    fail(ErrorCode::InvalidArgument, "crop half-extent must be positive");
  }
  std::vector<size_t> kept;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    if ((cloud.points[i] - center).cwiseAbs().maxCoeff() <= half_extent) {
      kept.push_back(i);
    }
  }
  if (kept.empty()) {
    fail(ErrorCode::EmptyCrop, "no cloud points inside the crop cube");
  }

  const size_t m = kept.size();
  std::vector<size_t> order;
  if (size_t(count) >= m) {
    order = kept;
  } else {
    // Farthest-point sampling seeded at the point nearest the crop center
    // keeps the subset spread out deterministically. Ties take the lowest
    // index.
    size_t start = 0;
    double best = kInf;
    for (size_t j = 0; j < m; ++j) {
      const double d = (cloud.points[kept[j]] - center).squaredNorm();
      if (d < best) {
        best = d;
        start = j;
      }
    }
    std::vector<double> min_d(m, kInf);
    order.reserve(count);
    size_t cur = start;
    order.push_back(kept[cur]);
    for (int s = 1; s < count; ++s) {
      size_t far_j = 0;
      double far_d = -1;
      for (size_t j = 0; j < m; ++j) {
        const double d = (cloud.points[kept[j]] - cloud.points[kept[cur]]).squaredNorm();
        if (d < min_d[j]) min_d[j] = d;
        if (min_d[j] > far_d) {
          far_d = min_d[j];
          far_j = j;
        }
      }
      cur = far_j;
      order.push_back(kept[cur]);
    }
  }

  ObservationFrame frame;
  frame.padded = order.size() < size_t(count);
  while (order.size() < size_t(count)) {
    order.push_back(kept[rng.index(m)]);
  }
  frame.points.reserve(order.size());
  frame.labels.reserve(order.size());
  frame.on_curve.reserve(order.size());
  for (size_t i : order) {
    frame.points.push_back(cloud.points[i]);
    frame.labels.push_back(cloud.labels[i]);
    const bool on = cloud.labels[i] == uint8_t(PixelLabel::Paper) && cloud.has_uv[i] &&
                    !curve_uv.empty() &&
                    point_polyline_distance(cloud.uv[i], curve_uv) <= mask_width;
    frame.on_curve.push_back(on ? 1 : 0);
  }
  return frame;
}

void write_frame(const ObservationFrame& frame, const std::string& path) {
  std::string buf;
  buf.reserve(17 + 26 * frame.points.size());
  buf.append("PCFR", 4);
  append_u32(buf, kFrameVersion);
  append_u32(buf, uint32_t(frame.points.size()));
  append_u32(buf, frame.frame_index);
  uint8_t flags = kFlagWorldFrame;
  if (frame.padded) flags |= kFlagPadded;
  append_u8(buf, flags);
  for (size_t i = 0; i < frame.points.size(); ++i) {
    append_f64(buf, frame.points[i].x());
    append_f64(buf, frame.points[i].y());
    append_f64(buf, frame.points[i].z());
    append_u8(buf, frame.labels[i]);
    append_u8(buf, frame.on_curve[i]);
  }
  write_text_file(path, buf);
}

ObservationFrame read_frame(const std::string& path) {
  const std::string buf = read_text_file(path);
  ByteReader r{buf, path};
  r.need(4);
  if (buf.compare(0, 4, "PCFR") != 0) {
    fail(ErrorCode::Parse, "bad frame magic in " + path);
  }
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kFrameVersion) {
    fail(ErrorCode::Parse, "unsupported frame version in " + path);
  }
  const uint32_t count = r.u32();
  ObservationFrame frame;
  frame.frame_index = r.u32();
  const uint8_t flags = r.u8();
  frame.padded = (flags & kFlagPadded) != 0;
  frame.points.reserve(count);
  frame.labels.reserve(count);
  frame.on_curve.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const double x = r.f64();
    const double y = r.f64();
    const double z = r.f64();
    frame.points.emplace_back(x, y, z);
    frame.labels.push_back(r.u8());
    frame.on_curve.push_back(r.u8());
  }
  if (r.pos != buf.size()) {
    fail(ErrorCode::Parse, "trailing bytes in frame file " + path);
  }
  return frame;
}

}  // namespace papercut
