#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/paper_mesh.hpp"
#include "core/rng.hpp"
#include "core/scissors.hpp"

namespace papercut {

enum class PixelLabel : uint8_t { Background = 0, Paper = 1, Blade = 2 };

// Pinhole camera with a look-at pose. Depth is planar: distance along the
// view axis, not along the per-pixel ray.
struct CameraModel {
  int width = 640, height = 480;
  double fx = 600, fy = 600, cx = 320, cy = 240;
  double near_plane = 0.05, far_plane = 2.0;
  Vec3 position = Vec3(0, 0, 0.5);
  Mat3 rotation = Mat3::Identity();  // columns: right, up, back (camera z)

  static CameraModel from_config(const ConfigMap& cfg);

  Vec3 world_to_camera(const Vec3& p) const { return rotation.transpose() * (p - position); }
  Vec3 camera_to_world(const Vec3& c) const { return rotation * c + position; }
};

// Labeled depth image; background pixels hold +infinity. Paper pixels carry
// the rest-plane (UV) coordinate of the surface point for mask queries.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<double> depth;
  std::vector<uint8_t> label;
  std::vector<Vec2> uv;        // valid where has_uv is set (paper pixels)
  std::vector<uint8_t> has_uv;

  size_t idx(int x, int y) const { return size_t(y) * width + x; }
};

// Z-buffer render of the sheet triangles plus the blade surface, the latter
// tessellated from the capsule geometry at a fixed resolution so the same
// rasterizer handles both.
DepthImage render_depth(const CameraModel& cam, const PaperMesh& mesh,
                        const Scissors* scissors);

// Unprojected pixels with their source labels.
struct LabeledCloud {
  std::vector<Vec3> points;  // world
  std::vector<uint8_t> labels;
  std::vector<Vec2> uv;
  std::vector<uint8_t> has_uv;
};

// Sensor-artifact mimicry plus unprojection. Depth is average-pooled over
// pool_size x pool_size windows; a window containing any surface treats its
// background pixels as holding the window's farthest finite depth (smooth
// foreground-to-background edges), while all-background windows stay empty.
// Filled-in pixels label blade over paper. After unprojection, blade points
// get additive uniform noise in [-noise_amp, noise_amp] along sheet_normal,
// one draw per blade point in row-major order.
LabeledCloud mimic_artifact(const DepthImage& img, const CameraModel& cam,
                            const Vec3& sheet_normal, int pool_size,
                            double noise_amp, Rng& rng);

struct ObservationFrame {
  std::vector<Vec3> points;       // world frame
  std::vector<uint8_t> labels;    // PixelLabel values (blade flags)
  std::vector<uint8_t> on_curve;  // 1 when the point's UV lies on the curve
  uint32_t frame_index = 0;
  bool padded = false;  // fewer crop points than requested
};

// Keeps cloud points inside the axis-aligned cube of half-extent
// `half_extent` around `center`, marks paper points whose UV lies within
// `mask_width` of the curve polyline, and farthest-point-samples exactly
// `count` points, starting from the point nearest the crop center (seeded
// resample-with-replacement pads short crops, flagged). Errors with
// EmptyCrop when nothing survives the crop.
ObservationFrame crop_and_sample(const LabeledCloud& cloud, const Vec3& center,
                                 double half_extent, int count,
                                 const std::vector<Vec2>& curve_uv, double mask_width,
                                 Rng& rng);

// Binary frame: magic "PCFR", u32 version, u32 count, u32 frame_index,
// u8 flags (bit0 padded, bit1 world frame), then per point 3 x f64 position
// + u8 label + u8 on_curve. Little-endian throughout.
void write_frame(const ObservationFrame& frame, const std::string& path);
ObservationFrame read_frame(const std::string& path);

}  // namespace papercut
