#pragma once

#include <array>
#include <string>
#include <vector>

#include "core/geometry.hpp"

namespace papercut {

enum class TrackKind { Easy, Middle, Hard };

const char* track_kind_name(TrackKind kind);
TrackKind track_kind_from_name(const std::string& name);

// Cubic Bezier in paper UV coordinates (meters). Control u-coordinates are
// strictly increasing for generated tracks.
struct BezierCurve {
  std::array<Vec2, 4> control;

  Vec2 eval(double t) const;
  // Dense polyline with n+1 points at uniform parameter spacing.
  std::vector<Vec2> polyline(int n = 256) const;
  double arc_length(int n = 2048) const;
};

// A target pattern: one curve for Easy/Middle, two mirror-image component
// curves (joined at both endpoints on the symmetry axis) for Hard.
struct CurveSpec {
  TrackKind kind = TrackKind::Easy;
  std::vector<BezierCurve> curves;
  bool mirrored = false;

  std::string serialize() const;
  static CurveSpec parse(const std::string& text);
  static CurveSpec parse_file(const std::string& path);
  void save(const std::string& path) const;

  // Dense target polyline of the first component curve.
  std::vector<Vec2> target_polyline(int n = 256) const;
  // Closed pattern ring (Hard only): first curve joined with the reversed
  // second curve, first point repeated at the end.
  std::vector<Vec2> pattern_ring(int n = 256) const;
};

// Rejection-samples control points under the chord-gradient constraints.
// Throws Generation after 10000 failed attempts.
CurveSpec gen_track(TrackKind kind, double paper_width, double paper_height,
                    uint64_t seed);

// Easy vs Middle from the sign pattern of consecutive chord-gradient
// differences; throws Degenerate when a difference is exactly zero.
TrackKind classify_curvature(const BezierCurve& curve);

// Symmetric mean distance (millimeters) between two polylines given in
// meters: each is resampled to `samples` arc-length-uniform points and every
// sample measures distance to the nearest segment of the other polyline.
double chamfer_mm(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                  int samples = 512);

// Fraction of per-trial chamfer values at or below tau_mm.
double recall_at(const std::vector<double>& chamfer_values_mm, double tau_mm);

// Area IoU of two simple closed polygons (meters) by rasterizing cell
// centers on a shared grid.
double polygon_iou(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                   double cell = 0.0005);

struct TrialMetrics {
  std::string id;
  double chamfer_mm = 0;
  bool has_iou = false;
  double iou = 0;
};

struct MetricReport {
  double chamfer_mm_median = 0;
  double recall_at_1_5 = 0;
  double recall_at_5_0 = 0;
  bool has_iou = false;
  double iou_mean = 0;
  std::vector<TrialMetrics> trials;

  static MetricReport from_trials(std::vector<TrialMetrics> trials);
  std::string to_table(const std::string& method_name = "oracle") const;
};

double median(std::vector<double> values);

}  // namespace papercut
