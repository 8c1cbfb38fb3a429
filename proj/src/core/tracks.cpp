#include "core/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace papercut {

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int count) {
  if (pts.empty() || count <= 0) return {};
  if (pts.size() == 1) return std::vector<Vec2>(count, pts[0]);
  const auto acc = arc_length_table(pts);
  const double total = acc.back();
  std::vector<Vec2> out;
  out.reserve(count);
  if (total <= 0) return std::vector<Vec2>(count, pts[0]);
  size_t seg = 0;
  for (int i = 0; i < count; ++i) {
    const double s = total * (count == 1 ? 0.0 : double(i) / (count - 1));
    while (seg + 2 < pts.size() && acc[seg + 1] < s) ++seg;
    const double len = acc[seg + 1] - acc[seg];
    const double t = len > 0 ? (s - acc[seg]) / len : 0.0;
    out.push_back(pts[seg] + t * (pts[seg + 1] - pts[seg]));
  }
  return out;
}

double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& poly) {
  if (poly.empty()) return std::numeric_limits<double>::infinity();
  if (poly.size() == 1) return (p - poly[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < poly.size(); ++i) {
    best = std::min(best, point_segment_distance2(p, poly[i], poly[i + 1]));
  }
  return best;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  size_t n = poly.size();
  if (n >= 2 && (poly.front() - poly.back()).norm() < 1e-15) --n;
  if (n < 3) return false;
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

const char* track_kind_name(TrackKind kind) {
  switch (kind) {
    case TrackKind::Easy: return "easy";
    case TrackKind::Middle: return "middle";
    case TrackKind::Hard: return "hard";
  }
  return "easy";
}

TrackKind track_kind_from_name(const std::string& name) {
  if (name == "easy") return TrackKind::Easy;
  if (name == "middle") return TrackKind::Middle;
  if (name == "hard") return TrackKind::Hard;
  fail(ErrorCode::InvalidArgument, "unknown track kind '" + name + "'");
}

Vec2 BezierCurve::eval(double t) const {
  const double u = 1.0 - t;
  return u * u * u * control[0] + 3 * u * u * t * control[1] +
         3 * u * t * t * control[2] + t * t * t * control[3];
}

std::vector<Vec2> BezierCurve::polyline(int n) const {
  std::vector<Vec2> out;
  out.reserve(n + 1);
  for (int i = 0; i <= n; ++i) out.push_back(eval(double(i) / n));
  return out;
}

double BezierCurve::arc_length(int n) const {
  double total = 0;
  Vec2 prev = eval(0);
  for (int i = 1; i <= n; ++i) {
    Vec2 p = eval(double(i) / n);
    total += (p - prev).norm();
    prev = p;
  }
  return total;
}

namespace {

std::string format_doubles(const double* v, int n) {
  std::ostringstream out;
  char buf[64];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out << (i ? " " : "") << buf;
  }
  return out.str();
}

}  // namespace

std::string CurveSpec::serialize() const {
  std::ostringstream out;
  out << "track " << track_kind_name(kind) << "\n";
  for (const auto& c : curves) {
    double flat[8];
    for (int i = 0; i < 4; ++i) {
      flat[2 * i] = c.control[i].x();
      flat[2 * i + 1] = c.control[i].y();
    }
    out << "control " << format_doubles(flat, 8) << "\n";
  }
  if (mirrored) out << "mirrored 1\n";
  return out.str();
}

CurveSpec CurveSpec::parse(const std::string& text) {
  CurveSpec spec;
  spec.curves.clear();
  std::istringstream in(text);
  std::string line;
  bool have_track = false;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "track") {
      std::string name;
      if (!(ls >> name)) fail(ErrorCode::Parse, "curve record: missing track kind");
      spec.kind = track_kind_from_name(name);
      have_track = true;
    } else if (tag == "control") {
      double flat[8];
      for (double& v : flat) {
        if (!(ls >> v)) fail(ErrorCode::Parse, "curve record: control line needs 8 values");
      }
      BezierCurve c;
      for (int i = 0; i < 4; ++i) c.control[i] = Vec2(flat[2 * i], flat[2 * i + 1]);
      spec.curves.push_back(c);
    } else if (tag == "mirrored") {
      int flag = 0;
      ls >> flag;
      spec.mirrored = flag != 0;
    } else {
      fail(ErrorCode::Parse, "curve record: unknown tag '" + tag + "'");
    }
  }
  if (!have_track || spec.curves.empty()) {
    fail(ErrorCode::Parse, "curve record: incomplete (needs track and control lines)");
  }
  if (spec.kind == TrackKind::Hard && spec.curves.size() != 2) {
    fail(ErrorCode::Parse, "curve record: hard tracks need two control lines");
  }
  return spec;
}

CurveSpec CurveSpec::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open curve file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void CurveSpec::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write curve file '" + path + "'");
  out << serialize();
}

std::vector<Vec2> CurveSpec::target_polyline(int n) const {
  return curves.at(0).polyline(n);
}

std::vector<Vec2> CurveSpec::pattern_ring(int n) const {
  if (kind != TrackKind::Hard || curves.size() != 2) {
    fail(ErrorCode::InvalidArgument, "pattern ring is defined for hard tracks only");
  }
  std::vector<Vec2> ring = curves[0].polyline(n);
  std::vector<Vec2> back = curves[1].polyline(n);
  for (auto it = back.rbegin(); it != back.rend(); ++it) ring.push_back(*it);
  ring.push_back(ring.front());
  return ring;
}

namespace {

constexpr int kMaxAttempts = 10000;

struct Gradients {
  double g1, g2, g3;
};

Gradients chord_gradients(const BezierCurve& c) {
  Gradients g;
  const double du1 = c.control[1].x() - c.control[0].x();
  const double du2 = c.control[2].x() - c.control[1].x();
  const double du3 = c.control[3].x() - c.control[2].x();
  if (du1 <= 0 || du2 <= 0 || du3 <= 0) {
    fail(ErrorCode::InvalidArgument, "curve control u-coordinates must be increasing");
  }
  g.g1 = (c.control[1].y() - c.control[0].y()) / du1;
  g.g2 = (c.control[2].y() - c.control[1].y()) / du2;
  g.g3 = (c.control[3].y() - c.control[2].y()) / du3;
  return g;
}

bool v_range_ok(const BezierCurve& c, double paper_height, double margin) {
  auto pts = c.polyline(128);
  for (const auto& p : pts) {
    if (p.y() < margin || p.y() > paper_height - margin) return false;
  }
  return true;
}

BezierCurve make_curve(double w, const double u[4], const double v[4]) {
  BezierCurve c;
  (void)w;
  for (int i = 0; i < 4; ++i) c.control[i] = Vec2(u[i], v[i]);
  return c;
}

}  // namespace

CurveSpec gen_track(TrackKind kind, double paper_width, double paper_height,
                    uint64_t seed) {
  if (paper_width <= 0 || paper_height <= 0) {
    fail(ErrorCode::InvalidArgument, "paper dimensions must be positive");
  }
  const double g1_max = std::tan(40.0 * M_PI / 180.0);
  const double g2_max = std::tan(50.0 * M_PI / 180.0);
  const double g3_max = std::tan(60.0 * M_PI / 180.0);
  const double margin = std::min(0.010, 0.1 * paper_height);
  const double v_lo = 0.2 * paper_height, v_hi = 0.8 * paper_height;
  const double du = paper_width / 3.0;
  const double u[4] = {0.0, du, 2 * du, paper_width};
  Rng rng(derive_seed(seed, 0x7261636b));

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    if (kind == TrackKind::Hard) {
      const double v_axis = rng.uniform(0.35 * paper_height, 0.65 * paper_height);
      const double g1 = rng.uniform(-g1_max, g1_max);
      const double g2 = rng.uniform(-g2_max, g2_max);
      const double g3 = -(g1 + g2);
      if (std::abs(g3) > g3_max) continue;
      const double d1 = g2 - g1, d2 = g3 - g2;
      if (d1 == 0 || d2 == 0 || (d1 > 0) != (d2 > 0)) continue;
      double v[4] = {v_axis, v_axis + g1 * du, v_axis + (g1 + g2) * du, v_axis};
      bool control_ok = true;
      for (double vi : v) {
        if (vi < v_lo || vi > v_hi) control_ok = false;
      }
      if (!control_ok) continue;
      BezierCurve c1 = make_curve(paper_width, u, v);
      if (!v_range_ok(c1, paper_height, margin)) continue;
      // One-sided relative to the axis, with a usable amplitude, so the
      // mirrored composition is a simple closed ring.
      auto pts = c1.polyline(128);
      double lo = 1e300, hi = -1e300;
      for (const auto& p : pts) {
        lo = std::min(lo, p.y());
        hi = std::max(hi, p.y());
      }
      const double amp_min = std::min(0.010, 0.05 * paper_height);
      const bool above = lo >= v_axis - 1e-12 && hi - v_axis >= amp_min;
      const bool below = hi <= v_axis + 1e-12 && v_axis - lo >= amp_min;
      if (!above && !below) continue;
      BezierCurve c2 = c1;
      for (auto& p : c2.control) p.y() = 2 * v_axis - p.y();
      if (!v_range_ok(c2, paper_height, margin)) continue;
      CurveSpec spec;
      spec.kind = kind;
      spec.curves = {c1, c2};
      spec.mirrored = true;
      return spec;
    }

    const double v0 = rng.uniform(v_lo, v_hi);
    const double g1 = rng.uniform(-g1_max, g1_max);
    const double g2 = rng.uniform(-g2_max, g2_max);
    const double g3 = rng.uniform(-g3_max, g3_max);
    const double d1 = g2 - g1, d2 = g3 - g2;
    if (d1 == 0 || d2 == 0) continue;
    const bool consistent = (d1 > 0) == (d2 > 0);
    if (kind == TrackKind::Easy && !consistent) continue;
    if (kind == TrackKind::Middle && consistent) continue;
    double v[4] = {v0, v0 + g1 * du, v0 + (g1 + g2) * du, v0 + (g1 + g2 + g3) * du};
    bool control_ok = true;
    for (double vi : v) {
      if (vi < v_lo || vi > v_hi) control_ok = false;
    }
    if (!control_ok) continue;
    BezierCurve c = make_curve(paper_width, u, v);
    if (!v_range_ok(c, paper_height, margin)) continue;
    CurveSpec spec;
    spec.kind = kind;
    spec.curves = {c};
    return spec;
  }
  fail(ErrorCode::Generation, "track generation failed after 10000 attempts");
}

TrackKind classify_curvature(const BezierCurve& curve) {
  const Gradients g = chord_gradients(curve);
  const double d1 = g.g2 - g.g1, d2 = g.g3 - g.g2;
  if (d1 == 0 || d2 == 0) {
    fail(ErrorCode::Degenerate, "curvature classification: zero gradient difference");
  }
  return (d1 > 0) == (d2 > 0) ? TrackKind::Easy : TrackKind::Middle;
}

double chamfer_mm(const std::vector<Vec2>& a, const std::vector<Vec2>& b, int samples) {
  if (a.size() < 2 || b.size() < 2) {
    fail(ErrorCode::Degenerate, "chamfer: polylines need at least 2 points");
  }
  if (arc_length_table(a).back() <= 0 || arc_length_table(b).back() <= 0) {
    fail(ErrorCode::Degenerate, "chamfer: zero-length polyline");
  }
  if (samples < 1) fail(ErrorCode::InvalidArgument, "chamfer: samples must be positive");
  const auto sa = resample_polyline(a, samples);
  const auto sb = resample_polyline(b, samples);
  double total = 0;
  for (const auto& p : sa) total += point_polyline_distance(p, b);
  for (const auto& p : sb) total += point_polyline_distance(p, a);
  return 1000.0 * total / double(sa.size() + sb.size());
}

double recall_at(const std::vector<double>& chamfer_values_mm, double tau_mm) {
  if (chamfer_values_mm.empty()) {
    fail(ErrorCode::InvalidArgument, "recall: empty trial list");
  }
  size_t hit = 0;
  for (double v : chamfer_values_mm) {
    if (v <= tau_mm) ++hit;
  }
  return double(hit) / double(chamfer_values_mm.size());
}

double polygon_iou(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double cell) {
  if (cell <= 0) fail(ErrorCode::InvalidArgument, "iou: cell size must be positive");
  for (const auto* poly : {&a, &b}) {
    if (poly->size() < 4 || ((*poly).front() - (*poly).back()).norm() > 1e-12) {
      fail(ErrorCode::InvalidArgument, "iou: polygon must be closed (first == last)");
    }
  }
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  for (const auto* poly : {&a, &b}) {
    for (const auto& p : *poly) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const int nx = std::max(1, int(std::ceil((hi.x() - lo.x()) / cell)));
  const int ny = std::max(1, int(std::ceil((hi.y() - lo.y()) / cell)));
  long inter = 0, uni = 0;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const Vec2 p = lo + Vec2((ix + 0.5) * cell, (iy + 0.5) * cell);
      const bool in_a = point_in_polygon(p, a);
      const bool in_b = point_in_polygon(p, b);
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  }
  if (uni == 0) fail(ErrorCode::Degenerate, "iou: polygons cover no grid cells");
  return double(inter) / double(uni);
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "median of empty list");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricReport MetricReport::from_trials(std::vector<TrialMetrics> trials) {
  if (trials.empty()) fail(ErrorCode::InvalidArgument, "metric report needs trials");
  MetricReport r;
  std::vector<double> chamfers;
  double iou_sum = 0;
  int iou_count = 0;
  for (const auto& t : trials) {
    chamfers.push_back(t.chamfer_mm);
    if (t.has_iou) {
      iou_sum += t.iou;
      ++iou_count;
    }
  }
  r.chamfer_mm_median = median(chamfers);
  r.recall_at_1_5 = recall_at(chamfers, 1.5);
  r.recall_at_5_0 = recall_at(chamfers, 5.0);
  r.has_iou = iou_count > 0;
  r.iou_mean = iou_count > 0 ? iou_sum / iou_count : 0.0;
  r.trials = std::move(trials);
  return r;
}

std::string MetricReport::to_table(const std::string& method_name) const {
  std::ostringstream out;
  char buf[256];
  out << "method\tchamfer_mm\trecall@1.5\trecall@5.0\tmiou\n";
  std::snprintf(buf, sizeof buf, "%s\t%.3f\t%.3f\t%.3f\t", method_name.c_str(),
                chamfer_mm_median, recall_at_1_5, recall_at_5_0);
  out << buf;
  if (has_iou) {
    std::snprintf(buf, sizeof buf, "%.3f", iou_mean);
    out << buf;
  } else {
    out << "-";
  }
  out << "\n\ntrial\tchamfer_mm\tiou\n";
  for (const auto& t : trials) {
    std::snprintf(buf, sizeof buf, "%s\t%.3f\t", t.id.c_str(), t.chamfer_mm);
    out << buf;
    if (t.has_iou) {
      std::snprintf(buf, sizeof buf, "%.3f", t.iou);
      out << buf;
    } else {
      out << "-";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace papercut
