#include "core/paper_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <set>

#include "core/error.hpp"

namespace papercut {

namespace {

constexpr double kSnapUv = 1e-6;        // meters, in the rest plane
constexpr double kDegenerateArea = 1e-12;  // m^2, rest-plane triangle area

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

PaperMesh PaperMesh::build_rect(double width, double height, double target_edge) {
  if (width <= 0 || height <= 0 || target_edge <= 0) {
    fail(ErrorCode::InvalidArgument, "paper dimensions and edge length must be positive");
  }
  const int nx = std::max(1, int(std::ceil(width / target_edge - 1e-9)));
  const int ny = std::max(1, int(std::ceil(height / target_edge - 1e-9)));
  PaperMesh mesh;
  mesh.verts_.reserve(size_t(nx + 1) * (ny + 1));
  for (int iy = 0; iy <= ny; ++iy) {
    for (int ix = 0; ix <= nx; ++ix) {
      MeshVertex v;
      const double x = width * double(ix) / nx;
      const double y = height * double(iy) / ny;
      v.position = Vec3(x, y, 0.0);
      v.uv = Vec2(x, y);
      mesh.verts_.push_back(v);
    }
  }
  auto vid = [&](int ix, int iy) { return iy * (nx + 1) + ix; };
  mesh.tris_.reserve(size_t(nx) * ny * 2);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int i00 = vid(ix, iy), i10 = vid(ix + 1, iy);
      const int i01 = vid(ix, iy + 1), i11 = vid(ix + 1, iy + 1);
      mesh.tris_.push_back({i00, i10, i11});
      mesh.tris_.push_back({i00, i11, i01});
    }
  }
  for (int ix = 0; ix <= nx; ++ix) mesh.fixed_.push_back(vid(ix, ny));
  mesh.mark_dirty();
  return mesh;
}

void PaperMesh::set_fixed(const std::vector<int>& fixed) {
  fixed_ = fixed;
  std::sort(fixed_.begin(), fixed_.end());
  fixed_.erase(std::unique(fixed_.begin(), fixed_.end()), fixed_.end());
  for (int v : fixed_) {
    if (v < 0 || size_t(v) >= verts_.size()) {
      fail(ErrorCode::InvalidArgument, "fixed vertex id out of range");
    }
  }
}

bool PaperMesh::is_fixed(int v) const {
  return std::binary_search(fixed_.begin(), fixed_.end(), v);
}

void PaperMesh::rebuild_edges() const {
  edges_.clear();
  edge_lookup_.clear();
  for (size_t t = 0; t < tris_.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      int a = tris_[t][k], b = tris_[t][(k + 1) % 3];
      if (a > b) std::swap(a, b);
      auto key = std::make_pair(a, b);
      auto it = edge_lookup_.find(key);
      if (it == edge_lookup_.end()) {
        MeshEdge e;
        e.a = a;
        e.b = b;
        e.tris[0] = int(t);
        e.tri_count = 1;
        edge_lookup_[key] = int(edges_.size());
        edges_.push_back(e);
      } else {
        MeshEdge& e = edges_[it->second];
        if (e.tri_count < 2) e.tris[e.tri_count] = int(t);
        ++e.tri_count;
      }
    }
  }
  edges_dirty_ = false;
}

const std::vector<MeshEdge>& PaperMesh::edges() const {
  if (edges_dirty_) rebuild_edges();
  return edges_;
}

int PaperMesh::edge_index(int a, int b) const {
  if (edges_dirty_) rebuild_edges();
  if (a > b) std::swap(a, b);
  auto it = edge_lookup_.find({a, b});
  return it == edge_lookup_.end() ? -1 : it->second;
}

std::vector<IntersectionPoint> PaperMesh::detect_cut_intersections(
    const Vec3& seg_start, const Vec3& seg_end, double tolerance) const {
  if (tolerance <= 0) fail(ErrorCode::InvalidArgument, "detection tolerance must be positive");
  std::vector<IntersectionPoint> hits;
  if (tris_.empty()) return hits;
  edges();  // refresh adjacency used below

  // Locate a world-space point on the deformed surface: closest triangle,
  // barycentric coordinates, and the rest-plane image of that point.
  struct Location {
    int tri = -1;
    Eigen::Vector3d bary = Eigen::Vector3d::Zero();
    Vec2 uv = Vec2::Zero();
    double dist = 1e300;
    double lift = 1e300;  // distance normal to the located triangle's plane
  };
  auto locate = [&](const Vec3& p) {
    Location loc;
    for (size_t t = 0; t < tris_.size(); ++t) {
      const auto& tv = tris_[t];
      const Eigen::Vector3d bary = closest_point_triangle_bary(
          p, verts_[tv[0]].position, verts_[tv[1]].position, verts_[tv[2]].position);
      const Vec3 q = bary[0] * verts_[tv[0]].position + bary[1] * verts_[tv[1]].position +
                     bary[2] * verts_[tv[2]].position;
      const double d = (q - p).norm();
      if (d < loc.dist) {
        loc.dist = d;
        loc.tri = int(t);
        loc.bary = bary;
      }
    }
    if (loc.tri >= 0) {
      const auto& tv = tris_[loc.tri];
      loc.uv = loc.bary[0] * verts_[tv[0]].uv + loc.bary[1] * verts_[tv[1]].uv +
               loc.bary[2] * verts_[tv[2]].uv;
      const Vec3 q = loc.bary[0] * verts_[tv[0]].position +
                     loc.bary[1] * verts_[tv[1]].position +
                     loc.bary[2] * verts_[tv[2]].position;
      const Vec3 n = (verts_[tv[1]].position - verts_[tv[0]].position)
                         .cross(verts_[tv[2]].position - verts_[tv[0]].position);
      const double nn = n.norm();
      loc.lift = nn > 1e-18 ? std::abs((p - q).dot(n / nn)) : loc.dist;
    }
    return loc;
  };

  const Location loc_a = locate(seg_start);
  const Location loc_b = locate(seg_end);
  if (loc_a.tri < 0 || loc_b.tri < 0) return hits;
  // The sweep rides the sheet: a segment lifted off the surface cuts nothing.
  // Overhanging an open boundary in-plane is not a lift; such an endpoint
  // projects onto the boundary and the cut legitimately enters there.
  if (loc_a.lift > tolerance && loc_b.lift > tolerance) return hits;

  const Vec2 uv_a = loc_a.uv;
  const Vec2 uv_b = loc_b.uv;
  const Vec2 seg = uv_b - uv_a;
  const double seg_len = seg.norm();
  const double snap = std::max(kSnapUv, tolerance);
  const Vec2 line_dir = seg_len > 0 ? Vec2(seg / seg_len) : Vec2(1, 0);

  // A vertex this close to the sweep line, within the swept span, captures the
  // cut: routing through it is what keeps every triangle the cut borders at
  // least one snap radius tall.
  auto captures = [&](int v) {
    const Vec2 w = verts_[v].uv - uv_a;
    if (std::abs(w.x() * line_dir.y() - w.y() * line_dir.x()) >= snap) return false;
    const double s = w.dot(line_dir);
    return s >= 0.0 && s <= seg_len;
  };

  // Classify a rest-plane point inside a triangle, snapping first to a nearby
  // corner and then to a nearby edge so later splits never leave slivers.
  auto classify = [&](int tri, const Vec2& uv, double key) {
    IntersectionPoint p;
    p.order_key = key;
    const auto& tv = tris_[tri];
    for (int k = 0; k < 3; ++k) {
      if ((uv - verts_[tv[k]].uv).norm() < snap) {
        p.host = IntersectionPoint::Host::Vertex;
        p.vertex = tv[k];
        return p;
      }
    }
    int best_cap = -1;
    double best_cap_d = 1e300;
    for (int k = 0; k < 3; ++k) {
      const double d = (uv - verts_[tv[k]].uv).norm();
      if (captures(tv[k]) && d < best_cap_d) {
        best_cap = tv[k];
        best_cap_d = d;
      }
    }
    if (best_cap >= 0) {
      p.host = IntersectionPoint::Host::Vertex;
      p.vertex = best_cap;
      return p;
    }
    int best_edge = -1;
    double best_edge_d = snap;
    for (int k = 0; k < 3; ++k) {
      const double d =
          point_segment_distance2(uv, verts_[tv[k]].uv, verts_[tv[(k + 1) % 3]].uv);
      if (d < best_edge_d) {
        best_edge = k;
        best_edge_d = d;
      }
    }
    if (best_edge >= 0) {
      const int a = tv[best_edge], b = tv[(best_edge + 1) % 3];
      const Vec2& ua = verts_[a].uv;
      const Vec2& ub = verts_[b].uv;
      p.host = IntersectionPoint::Host::Edge;
      p.edge_a = a;
      p.edge_b = b;
      const double den = (ub - ua).squaredNorm();
      p.edge_t = den > 0 ? std::clamp((uv - ua).dot(ub - ua) / den, 0.0, 1.0) : 0.0;
      return p;
    }
    p.host = IntersectionPoint::Host::Triangle;
    p.triangle = tri;
    p.bary = barycentric2(uv, verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    return p;
  };

  auto emit = [&](IntersectionPoint p) {
    if (p.host == IntersectionPoint::Host::Vertex) {
      // Snapping can alias nearby crossings to one vertex; a straight sweep
      // never legitimately revisits a vertex, so drop any repeat in the batch.
      for (const auto& q : hits) {
        if (q.host == IntersectionPoint::Host::Vertex && q.vertex == p.vertex) return;
      }
    } else if (p.host == IntersectionPoint::Host::Edge) {
      if (p.edge_a > p.edge_b) {
        std::swap(p.edge_a, p.edge_b);
        p.edge_t = 1.0 - p.edge_t;
      }
      // A straight sweep meets an edge once; a second same-edge point within
      // the snap radius is the same event seen twice (a terminal landing just
      // past a crossing) and would split the edge into a sliver.
      const double elen = (verts_[p.edge_b].uv - verts_[p.edge_a].uv).norm();
      for (const auto& q : hits) {
        if (q.host == IntersectionPoint::Host::Edge && q.edge_a == p.edge_a &&
            q.edge_b == p.edge_b && std::abs(q.edge_t - p.edge_t) * elen < snap) {
          return;
        }
      }
    }
    hits.push_back(p);
  };

  if (seg_len < kSnapUv) {
    if (loc_b.lift <= tolerance) emit(classify(loc_b.tri, uv_b, 1.0));
    return hits;
  }
  const Vec2 dir = seg / seg_len;

  // March the straight rest-plane segment across the triangulation. Crossing
  // hosts come from the walked triangle's own edges, so consecutive hits
  // always live on adjacent triangles regardless of how the sheet is
  // deformed, and hopping an open slit resumes cleanly on the far lip.
  const double s_eps = 1e-10;
  const double probe_step = 8.0 * kSnapUv;
  auto tri_contains = [&](int tri, const Vec2& p) {
    const auto& tv = tris_[tri];
    const double area = triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    if (std::abs(area) < kDegenerateArea) return false;
    return barycentric2(p, verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv).minCoeff() >=
           -1e-6;
  };
  auto locate_probe = [&](const Vec2& p) {
    for (size_t t = 0; t < tris_.size(); ++t) {
      if (tri_contains(int(t), p)) return int(t);
    }
    return -1;
  };

  IntersectionPoint start = classify(loc_a.tri, uv_a, 0.0);
  if (loc_a.lift <= tolerance) emit(start);

  int cur_tri = -1;
  double cur_s = 0.0;
  int entry_edge_a = -1, entry_edge_b = -1;
  {
    const Vec2 probe = uv_a + probe_step * dir;
    if (start.host == IntersectionPoint::Host::Vertex) {
      for (size_t t = 0; t < tris_.size() && cur_tri < 0; ++t) {
        const auto& tv = tris_[t];
        if ((tv[0] == start.vertex || tv[1] == start.vertex || tv[2] == start.vertex) &&
            tri_contains(int(t), probe)) {
          cur_tri = int(t);
        }
      }
    } else if (start.host == IntersectionPoint::Host::Edge) {
      const int ei = edge_index(start.edge_a, start.edge_b);
      if (ei >= 0) {
        const MeshEdge& e = edges()[ei];
        for (int k = 0; k < e.tri_count && k < 2; ++k) {
          if (tri_contains(e.tris[k], probe)) cur_tri = e.tris[k];
        }
      }
    } else {
      cur_tri = loc_a.tri;
    }
    if (cur_tri < 0) cur_tri = locate_probe(probe);
    if (cur_tri < 0) return hits;
  }

  const size_t max_iters = 4 * tris_.size() + 32;
  for (size_t iter = 0; iter < max_iters; ++iter) {
    // Earliest forward crossing of the sweep line with this triangle's edges.
    const auto& tv = tris_[cur_tri];
    int best_a = -1, best_b = -1;
    double best_s = 2.0, best_t = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int a = tv[k], b = tv[(k + 1) % 3];
      if ((a == entry_edge_a && b == entry_edge_b) || (a == entry_edge_b && b == entry_edge_a)) {
        continue;
      }
      const Vec2& ua = verts_[a].uv;
      const Vec2& ub = verts_[b].uv;
      const Vec2 e = ub - ua;
      const double den = dir.x() * e.y() - dir.y() * e.x();
      if (std::abs(den) < 1e-14) continue;
      const Vec2 w = ua - uv_a;
      const double s = (w.x() * e.y() - w.y() * e.x()) / den / seg_len;
      const double t = (w.x() * dir.y() - w.y() * dir.x()) / den;
      if (t < -1e-9 || t > 1.0 + 1e-9) continue;
      if (s <= cur_s + s_eps) continue;
      if (s < best_s) {
        best_s = s;
        best_t = std::clamp(t, 0.0, 1.0);
        best_a = a;
        best_b = b;
      }
    }

    if (tri_contains(cur_tri, uv_b) && (best_a < 0 || best_s >= 1.0 - s_eps)) {
      if (loc_b.lift <= tolerance) emit(classify(cur_tri, uv_b, 1.0));
      return hits;
    }
    if (best_a < 0 || best_s > 1.0 + 1e-9) {
      // No usable forward crossing: try to resume just past the current line
      // position, otherwise the sweep has left the material.
      const Vec2 probe = uv_a + (cur_s * seg_len + probe_step) * dir;
      const int resumed = locate_probe(probe);
      if (resumed < 0 || resumed == cur_tri) return hits;
      cur_tri = resumed;
      entry_edge_a = entry_edge_b = -1;
      continue;
    }

    const Vec2 uv_x = uv_a + best_s * seg_len * dir;
    IntersectionPoint hit;
    hit.order_key = best_s;
    // An endpoint that captures the sweep line takes the hit even when the
    // crossing point itself is not near it. Prefer the nearer one.
    const bool snap_a = captures(best_a);
    const bool snap_b = captures(best_b);
    if (snap_a || snap_b) {
      hit.host = IntersectionPoint::Host::Vertex;
      if (snap_a && snap_b) {
        hit.vertex = (uv_x - verts_[best_a].uv).norm() <= (uv_x - verts_[best_b].uv).norm()
                         ? best_a
                         : best_b;
      } else {
        hit.vertex = snap_a ? best_a : best_b;
      }
    } else if ((uv_x - verts_[best_a].uv).norm() < snap) {
      hit.host = IntersectionPoint::Host::Vertex;
      hit.vertex = best_a;
    } else if ((uv_x - verts_[best_b].uv).norm() < snap) {
      hit.host = IntersectionPoint::Host::Vertex;
      hit.vertex = best_b;
    } else {
      hit.host = IntersectionPoint::Host::Edge;
      hit.edge_a = best_a;
      hit.edge_b = best_b;
      hit.edge_t = best_t;
    }
    emit(hit);
    cur_s = best_s;

    // Advance across the crossed edge; a snapped emission does not change the
    // geometric walk.
    int next_tri = -1;
    const int ei = edge_index(best_a, best_b);
    if (ei >= 0) {
      const MeshEdge& e = edges()[ei];
      for (int k = 0; k < e.tri_count && k < 2; ++k) {
        if (e.tris[k] != cur_tri) next_tri = e.tris[k];
      }
    }
    entry_edge_a = best_a;
    entry_edge_b = best_b;
    if (next_tri < 0) {
      // Walked out through a boundary or slit lip: resume on whatever
      // material lies just past the exit, if any. The crossed edge stays
      // excluded; a coincident far lip has different vertex ids and is still
      // picked up as the next crossing.
      const Vec2 probe = uv_x + probe_step * dir;
      next_tri = locate_probe(probe);
      if (next_tri < 0) return hits;
      cur_s = best_s - 2.0 * s_eps;
    }
    cur_tri = next_tri;
  }
  fail(ErrorCode::Internal, "cut walk did not terminate");
  return hits;
}

std::vector<int> PaperMesh::insert_vertices(const std::vector<IntersectionPoint>& points) {
  if (!pending_.empty()) {
    fail(ErrorCode::Topology, "insert_vertices: previous batch not yet connected");
  }
  edge_splits_.clear();
  tri_children_.clear();
  const auto& es = edges();  // also refreshes the lookup used below

  std::vector<int> ids;
  ids.reserve(points.size());
  // Pending vertices per edge, for same-edge proximity snapping.
  std::map<std::pair<int, int>, std::vector<std::pair<double, int>>> edge_pending;

  for (const auto& p : points) {
    switch (p.host) {
      case IntersectionPoint::Host::Vertex: {
        if (p.vertex < 0 || size_t(p.vertex) >= verts_.size()) {
          fail(ErrorCode::Topology, "insert_vertices: vertex host out of range");
        }
        ids.push_back(p.vertex);
        PendingInsert pi;
        pi.vertex = p.vertex;
        pi.point = p;
        pending_.push_back(pi);
        break;
      }
      case IntersectionPoint::Host::Edge: {
        const int ei = edge_index(p.edge_a, p.edge_b);
        if (ei < 0) fail(ErrorCode::Topology, "insert_vertices: stale edge host");
        const MeshEdge& e = es[ei];
        double t = p.edge_a < p.edge_b ? p.edge_t : 1.0 - p.edge_t;
        const int a = std::min(p.edge_a, p.edge_b), b = std::max(p.edge_a, p.edge_b);
        const double uv_len = (verts_[b].uv - verts_[a].uv).norm();

        int snapped = -1;
        if (t * uv_len < kSnapUv) snapped = a;
        if ((1.0 - t) * uv_len < kSnapUv) snapped = b;
        for (int k = 0; k < e.tri_count && snapped < 0 && k < 2; ++k) {
          const auto& tv = tris_[e.tris[k]];
          const double area = std::abs(
              triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv));
          if (t * area < kDegenerateArea) snapped = a;
          if ((1.0 - t) * area < kDegenerateArea) snapped = b;
        }
        auto& bucket = edge_pending[{a, b}];
        for (const auto& [tp, vp] : bucket) {
          if (snapped >= 0) break;
          if (std::abs(t - tp) * uv_len < kSnapUv) snapped = vp;
        }
        if (snapped >= 0) {
          ids.push_back(snapped);
          PendingInsert pi;
          pi.vertex = snapped;
          pi.point.host = IntersectionPoint::Host::Vertex;
          pi.point.vertex = snapped;
          pi.point.order_key = p.order_key;
          pending_.push_back(pi);
          break;
        }

        MeshVertex nv;
        nv.position = (1.0 - t) * verts_[a].position + t * verts_[b].position;
        nv.uv = (1.0 - t) * verts_[a].uv + t * verts_[b].uv;
        const int vid = int(verts_.size());
        verts_.push_back(nv);
        VertexBirth birth;
        birth.vertex = vid;
        birth.parents = {a, b, -1};
        birth.weights = {1.0 - t, t, 0.0};
        births_.push_back(birth);
        if (is_fixed(a) && is_fixed(b)) {
          fixed_.push_back(vid);
          std::sort(fixed_.begin(), fixed_.end());
        }
        bucket.push_back({t, vid});
        ids.push_back(vid);
        PendingInsert pi;
        pi.vertex = vid;
        pi.point = p;
        pi.point.edge_a = a;
        pi.point.edge_b = b;
        pi.point.edge_t = t;
        pending_.push_back(pi);
        break;
      }
      case IntersectionPoint::Host::Triangle: {
        if (p.triangle < 0 || size_t(p.triangle) >= tris_.size()) {
          fail(ErrorCode::Topology, "insert_vertices: stale triangle host");
        }
        const auto& tv = tris_[p.triangle];
        const double area = std::abs(
            triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv));
        int snapped = -1;
        for (int k = 0; k < 3; ++k) {
          if (p.bary[k] * area < kDegenerateArea) {
            // Closest corner wins; each sliver weight pins its opposite corner.
            int heaviest = 0;
            for (int j = 1; j < 3; ++j) {
              if (p.bary[j] > p.bary[heaviest]) heaviest = j;
            }
            snapped = tv[heaviest];
            break;
          }
        }
        if (snapped >= 0) {
          ids.push_back(snapped);
          PendingInsert pi;
          pi.vertex = snapped;
          pi.point.host = IntersectionPoint::Host::Vertex;
          pi.point.vertex = snapped;
          pi.point.order_key = p.order_key;
          pending_.push_back(pi);
          break;
        }
        MeshVertex nv;
        nv.position = p.bary[0] * verts_[tv[0]].position +
                      p.bary[1] * verts_[tv[1]].position +
                      p.bary[2] * verts_[tv[2]].position;
        nv.uv = p.bary[0] * verts_[tv[0]].uv + p.bary[1] * verts_[tv[1]].uv +
                p.bary[2] * verts_[tv[2]].uv;
        const int vid = int(verts_.size());
        verts_.push_back(nv);
        VertexBirth birth;
        birth.vertex = vid;
        birth.parents = {tv[0], tv[1], tv[2]};
        birth.weights = {p.bary[0], p.bary[1], p.bary[2]};
        births_.push_back(birth);
        ids.push_back(vid);
        PendingInsert pi;
        pi.vertex = vid;
        pi.point = p;
        pending_.push_back(pi);
        break;
      }
    }
  }
  return ids;
}

int PaperMesh::resolve_edge_host(int a, int b, double t, double& t_out) const {
  auto it = edge_splits_.find({a, b});
  if (it == edge_splits_.end()) {
    t_out = t;
    const int ei = edge_index(a, b);
    if (ei < 0) fail(ErrorCode::Topology, "connect_edges: stale edge host");
    return ei;
  }
  const EdgeSplit& sp = it->second;
  if (t <= sp.t) {
    int x = a, y = sp.mid;
    double tt = sp.t > 0 ? t / sp.t : 0.0;
    if (x > y) {
      std::swap(x, y);
      tt = 1.0 - tt;
    }
    return resolve_edge_host(x, y, tt, t_out);
  }
  int x = sp.mid, y = b;
  double tt = (t - sp.t) / (1.0 - sp.t);
  if (x > y) {
    std::swap(x, y);
    tt = 1.0 - tt;
  }
  return resolve_edge_host(x, y, tt, t_out);
}

int PaperMesh::resolve_triangle_host(int tri, const Vec2& uv) const {
  std::vector<int> candidates;
  auto it = tri_children_.find(tri);
  if (it == tri_children_.end()) {
    candidates.push_back(tri);
  } else {
    candidates = it->second;
  }
  int best = -1;
  double best_score = -1e300;
  for (int c : candidates) {
    const auto& tv = tris_[c];
    const Eigen::Vector3d bary =
        barycentric2(uv, verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    const double score = bary.minCoeff();
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  if (best < 0) fail(ErrorCode::Topology, "connect_edges: stale triangle host");
  return best;
}

void PaperMesh::split_edge_topology(int a, int b, int mid) {
  const int ei = edge_index(a, b);
  if (ei < 0) fail(ErrorCode::Topology, "connect_edges: edge vanished during batch");
  const MeshEdge e = edges_[ei];
  for (int k = 0; k < e.tri_count && k < 2; ++k) {
    const int t = e.tris[k];
    const auto tv = tris_[t];
    int pos = -1;
    for (int j = 0; j < 3; ++j) {
      if ((tv[j] == a && tv[(j + 1) % 3] == b) || (tv[j] == b && tv[(j + 1) % 3] == a)) {
        pos = j;
        break;
      }
    }
    if (pos < 0) fail(ErrorCode::Internal, "edge-triangle incidence out of sync");
    const int u = tv[pos], v = tv[(pos + 1) % 3], w = tv[(pos + 2) % 3];
    // (u,v,w) -> (u,mid,w) + (mid,v,w); orientation preserved.
    const std::array<int, 3> child0 = {u, mid, w};
    const std::array<int, 3> child1 = {mid, v, w};
    for (const auto& child : {child0, child1}) {
      const double area = triangle_area2(verts_[child[0]].uv, verts_[child[1]].uv,
                                         verts_[child[2]].uv);
      if (std::abs(area) < kDegenerateArea) {
        fail(ErrorCode::Degenerate, "connect_edges: split would create a degenerate triangle");
      }
    }
    tris_[t] = child0;
    const int appended = int(tris_.size());
    tris_.push_back(child1);
    bool noted = false;
    for (auto& [orig, list] : tri_children_) {
      if (std::find(list.begin(), list.end(), t) != list.end()) {
        list.push_back(appended);
        noted = true;
      }
    }
    if (!noted) tri_children_[t] = {t, appended};
  }
  mark_dirty();
}

void PaperMesh::split_triangle_topology(int tri, int mid) {
  const auto tv = tris_[tri];
  const std::array<int, 3> child0 = {tv[0], tv[1], mid};
  const std::array<int, 3> child1 = {tv[1], tv[2], mid};
  const std::array<int, 3> child2 = {tv[2], tv[0], mid};
  for (const auto& child : {child0, child1, child2}) {
    const double area = triangle_area2(verts_[child[0]].uv, verts_[child[1]].uv,
                                       verts_[child[2]].uv);
    if (std::abs(area) < kDegenerateArea) {
      fail(ErrorCode::Degenerate, "connect_edges: split would create a degenerate triangle");
    }
  }
  tris_[tri] = child0;
  const int a1 = int(tris_.size());
  tris_.push_back(child1);
  const int a2 = int(tris_.size());
  tris_.push_back(child2);
  bool noted = false;
  for (auto& [orig, list] : tri_children_) {
    if (std::find(list.begin(), list.end(), tri) != list.end()) {
      list.push_back(a1);
      list.push_back(a2);
      noted = true;
    }
  }
  if (!noted) tri_children_[tri] = {tri, a1, a2};
  mark_dirty();
}

void PaperMesh::connect_edges(const std::vector<int>& new_vertices) {
  std::set<int> expected(new_vertices.begin(), new_vertices.end());
  for (const auto& pi : pending_) {
    if (!expected.count(pi.vertex)) {
      fail(ErrorCode::Topology, "connect_edges: vertex list does not match pending batch");
    }
  }
  for (const auto& pi : pending_) {
    const IntersectionPoint& p = pi.point;
    if (p.host == IntersectionPoint::Host::Vertex) continue;
    if (p.host == IntersectionPoint::Host::Edge) {
      double t_local = 0;
      const int ei = resolve_edge_host(p.edge_a, p.edge_b, p.edge_t, t_local);
      const MeshEdge e = edges()[ei];
      split_edge_topology(e.a, e.b, pi.vertex);
      // Record in canonical (a < b) orientation of the edge just split.
      edge_splits_[{e.a, e.b}] = {pi.vertex, t_local};
    } else {
      const int tri = resolve_triangle_host(p.triangle, verts_[pi.vertex].uv);
      split_triangle_topology(tri, pi.vertex);
    }
  }
  pending_.clear();
}

void PaperMesh::split_cut_edges(const std::vector<int>& cut_vertex_ids, int crack_tip) {
  if (cut_vertex_ids.empty()) return;
  for (int v : cut_vertex_ids) {
    if (v < 0 || size_t(v) >= verts_.size()) {
      fail(ErrorCode::InvalidArgument, "split_cut_edges: vertex id out of range");
    }
  }
  if (crack_tip >= 0 && crack_tip != cut_vertex_ids.back()) {
    fail(ErrorCode::InvalidArgument, "split_cut_edges: crack tip must end the path");
  }

  // Canonical unordered pairs along the path; mirrors are added as vertices
  // get duplicated so later fan computations see both copies as cut.
  std::set<std::pair<int, int>> cut_pairs;
  for (size_t i = 0; i + 1 < cut_vertex_ids.size(); ++i) {
    int a = cut_vertex_ids[i], b = cut_vertex_ids[i + 1];
    if (a == b) fail(ErrorCode::InvalidArgument, "split_cut_edges: repeated path vertex");
    if (edge_index(a, b) < 0) {
      char msg[160];
      std::snprintf(msg, sizeof(msg),
                    "split_cut_edges: path vertices %d at (%.5f,%.5f) and %d at (%.5f,%.5f) "
                    "share no edge",
                    a, verts_[a].uv.x(), verts_[a].uv.y(), b, verts_[b].uv.x(),
                    verts_[b].uv.y());
      fail(ErrorCode::Topology, msg);
    }
    if (a > b) std::swap(a, b);
    cut_pairs.insert({a, b});
  }

  for (size_t i = 0; i < cut_vertex_ids.size(); ++i) {
    const int v = cut_vertex_ids[i];
    if (v == crack_tip) continue;

    std::vector<int> fan;
    for (size_t t = 0; t < tris_.size(); ++t) {
      const auto& tv = tris_[t];
      if (tv[0] == v || tv[1] == v || tv[2] == v) fan.push_back(int(t));
    }
    if (fan.empty()) continue;

    // Union fan triangles across non-cut edges incident to v.
    std::map<int, int> local;  // tri id -> local index
    for (size_t k = 0; k < fan.size(); ++k) local[fan[k]] = int(k);
    Dsu dsu(int(fan.size()));
    std::map<int, std::vector<int>> across;  // other vertex -> local tris
    for (size_t k = 0; k < fan.size(); ++k) {
      const auto& tv = tris_[fan[k]];
      for (int j = 0; j < 3; ++j) {
        if (tv[j] == v) continue;
        across[tv[j]].push_back(int(k));
      }
    }
    for (const auto& [x, tris_at] : across) {
      int a = std::min(v, x), b = std::max(v, x);
      if (cut_pairs.count({a, b})) continue;
      for (size_t k = 1; k < tris_at.size(); ++k) dsu.unite(tris_at[0], tris_at[k]);
    }
    std::map<int, std::vector<int>> comps;  // root -> local tris
    for (size_t k = 0; k < fan.size(); ++k) comps[dsu.find(int(k))].push_back(int(k));
    if (comps.size() < 2) continue;

    // Local cut direction in the rest plane.
    Vec2 dir(1, 0);
    {
      const Vec2 vp = verts_[v].uv;
      Vec2 a = vp, b = vp;
      if (i > 0) a = verts_[cut_vertex_ids[i - 1]].uv;
      if (i + 1 < cut_vertex_ids.size()) b = verts_[cut_vertex_ids[i + 1]].uv;
      if ((b - a).norm() > 1e-15) {
        dir = (b - a).normalized();
      } else if ((b - vp).norm() > 1e-15) {
        dir = (b - vp).normalized();
      }
    }
    const Vec2 perp = rot90(dir);

    // Components ordered by their smallest triangle id; ties on the cut line
    // count as the positive side.
    std::vector<std::vector<int>> ordered;
    for (auto& [root, list] : comps) {
      std::vector<int> tris_global;
      for (int k : list) tris_global.push_back(fan[k]);
      std::sort(tris_global.begin(), tris_global.end());
      ordered.push_back(tris_global);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& x, const auto& y) { return x[0] < y[0]; });

    int keeper = -1;
    for (size_t c = 0; c < ordered.size() && keeper < 0; ++c) {
      const auto& tv = tris_[ordered[c][0]];
      const Vec2 centroid = (verts_[tv[0]].uv + verts_[tv[1]].uv + verts_[tv[2]].uv) / 3.0;
      if ((centroid - verts_[v].uv).dot(perp) >= -1e-12) keeper = int(c);
    }
    if (keeper < 0) keeper = 0;

    for (size_t c = 0; c < ordered.size(); ++c) {
      if (int(c) == keeper) continue;
      const int dup = int(verts_.size());
      verts_.push_back(verts_[v]);
      VertexBirth birth;
      birth.vertex = dup;
      birth.parents = {v, -1, -1};
      birth.weights = {1.0, 0.0, 0.0};
      births_.push_back(birth);
      if (is_fixed(v)) {
        fixed_.push_back(dup);
        std::sort(fixed_.begin(), fixed_.end());
      }
      for (int t : ordered[c]) {
        for (int j = 0; j < 3; ++j) {
          if (tris_[t][j] == v) tris_[t][j] = dup;
        }
      }
      std::vector<std::pair<int, int>> mirrored;
      for (const auto& pr : cut_pairs) {
        if (pr.first == v) mirrored.push_back({std::min(dup, pr.second), std::max(dup, pr.second)});
        if (pr.second == v) mirrored.push_back({std::min(dup, pr.first), std::max(dup, pr.first)});
      }
      for (const auto& pr : mirrored) cut_pairs.insert(pr);
      mark_dirty();
    }
  }

  // Chain bookkeeping: continue the active chain when the path starts at its
  // tip, otherwise begin a new chain.
  if (active_chain_.empty()) {
    active_chain_ = cut_vertex_ids;
  } else if (cut_vertex_ids.front() == active_chain_.back()) {
    active_chain_.insert(active_chain_.end(), cut_vertex_ids.begin() + 1,
                         cut_vertex_ids.end());
  } else {
    finished_chains_.push_back(active_chain_);
    active_chain_ = cut_vertex_ids;
  }
}

int PaperMesh::apply_cut_segment(const Vec3& seg_start, const Vec3& seg_end,
                                 double tolerance) {
  const size_t verts_before = verts_.size();
  const auto points = detect_cut_intersections(seg_start, seg_end, tolerance);
  if (std::getenv("PAPERCUT_CUT_TRACE") != nullptr) {
    std::fprintf(stderr, "CUT (%.6f,%.6f,%.6f)->(%.6f,%.6f,%.6f) tol=%g hits=%zu\n",
                 seg_start.x(), seg_start.y(), seg_start.z(), seg_end.x(), seg_end.y(),
                 seg_end.z(), tolerance, points.size());
    for (const auto& p : points) {
      if (p.host == IntersectionPoint::Host::Vertex) {
        std::fprintf(stderr, "  s=%.5f V %d uv=(%.6f,%.6f)\n", p.order_key, p.vertex,
                     verts_[p.vertex].uv.x(), verts_[p.vertex].uv.y());
      } else if (p.host == IntersectionPoint::Host::Edge) {
        std::fprintf(stderr, "  s=%.5f E (%d,%d) t=%.5f\n", p.order_key, p.edge_a, p.edge_b,
                     p.edge_t);
      } else {
        std::fprintf(stderr, "  s=%.5f T %d bary=(%.4f,%.4f,%.4f)\n", p.order_key, p.triangle,
                     p.bary.x(), p.bary.y(), p.bary.z());
      }
    }
  }
  if (points.empty()) return 0;
  const auto ids = insert_vertices(points);
  connect_edges(ids);

  std::vector<int> chain;
  const int tip_before = crack_tip();
  if (tip_before >= 0) chain.push_back(tip_before);
  for (int id : ids) {
    if (chain.empty() || chain.back() != id) chain.push_back(id);
  }
  if (chain.size() < 2) return int(verts_.size() - verts_before);

  // The sweep can hop across an open slit or a gap: the fracture ends on one
  // lip and restarts on the coincident far lip, so the vertex sequence splits
  // into edge-connected runs and each run is opened separately.
  size_t run_start = 0;
  for (size_t i = 0; i < chain.size(); ++i) {
    const bool last_of_run = (i + 1 == chain.size()) || edge_index(chain[i], chain[i + 1]) < 0;
    if (!last_of_run) continue;
    if (i + 1 - run_start >= 2) {
      std::vector<int> run(chain.begin() + run_start, chain.begin() + i + 1);
      // A run ending on the open boundary has fully exited the sheet: no tip.
      const int last = run.back();
      bool on_boundary = false;
      for (const auto& e : edges()) {
        if (e.tri_count == 1 && (e.a == last || e.b == last)) {
          on_boundary = true;
          break;
        }
      }
      split_cut_edges(run, on_boundary ? -1 : last);
    }
    run_start = i + 1;
  }
  return int(verts_.size() - verts_before);
}

std::vector<Vec2> PaperMesh::cut_polyline() const {
  // All fracture runs in creation order; runs that end where the next begins
  // (a slit hop duplicates the junction vertex) join without repetition.
  std::vector<Vec2> out;
  auto append = [&](const std::vector<int>& chain) {
    for (int v : chain) {
      const Vec2& uv = verts_[v].uv;
      if (out.empty() || (out.back() - uv).norm() > 0.0) out.push_back(uv);
    }
  };
  for (const auto& chain : finished_chains_) append(chain);
  append(active_chain_);
  return out;
}

double PaperMesh::total_uv_area() const {
  double area = 0;
  for (const auto& tv : tris_) {
    area += std::abs(triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv));
  }
  return area;
}

size_t PaperMesh::boundary_edge_count() const {
  size_t n = 0;
  for (const auto& e : edges()) {
    if (e.tri_count == 1) ++n;
  }
  return n;
}

int PaperMesh::connected_components() const {
  if (verts_.empty()) return 0;
  Dsu dsu(int(verts_.size()));
  for (const auto& tv : tris_) {
    dsu.unite(tv[0], tv[1]);
    dsu.unite(tv[1], tv[2]);
  }
  std::set<int> roots;
  for (const auto& tv : tris_) {
    for (int k = 0; k < 3; ++k) roots.insert(dsu.find(tv[k]));
  }
  return int(roots.size());
}

void PaperMesh::validate() const {
  for (const auto& tv : tris_) {
    for (int k = 0; k < 3; ++k) {
      if (tv[k] < 0 || size_t(tv[k]) >= verts_.size()) {
        fail(ErrorCode::Topology, "validate: triangle vertex out of range");
      }
    }
    if (tv[0] == tv[1] || tv[1] == tv[2] || tv[0] == tv[2]) {
      fail(ErrorCode::Topology, "validate: triangle repeats a vertex");
    }
    const double area = triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    if (area <= 0) {
      fail(ErrorCode::Degenerate, "validate: non-positive rest-plane triangle area");
    }
  }
  for (const auto& e : edges()) {
    if (e.tri_count < 1 || e.tri_count > 2) {
      fail(ErrorCode::Topology, "validate: edge with bad incidence count");
    }
    if (e.tri_count == 2) {
      // Opposite winding across a shared edge keeps the sheet orientable.
      int dir[2] = {0, 0};
      for (int k = 0; k < 2; ++k) {
        const auto& tv = tris_[e.tris[k]];
        for (int j = 0; j < 3; ++j) {
          if (tv[j] == e.a && tv[(j + 1) % 3] == e.b) dir[k] = 1;
          if (tv[j] == e.b && tv[(j + 1) % 3] == e.a) dir[k] = -1;
        }
      }
      if (dir[0] * dir[1] != -1) {
        fail(ErrorCode::Topology, "validate: inconsistent winding across an edge");
      }
    }
  }
  for (int v : fixed_) {
    if (v < 0 || size_t(v) >= verts_.size()) {
      fail(ErrorCode::Topology, "validate: fixed vertex out of range");
    }
  }
}

bool PaperMesh::locate_uv(const Vec2& uv, int& tri, Eigen::Vector3d& bary) const {
  int best = -1;
  double best_score = -1e300;
  Eigen::Vector3d best_bary = Eigen::Vector3d::Zero();
  for (size_t t = 0; t < tris_.size(); ++t) {
    const auto& tv = tris_[t];
    const double area = triangle_area2(verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    if (std::abs(area) < kDegenerateArea) continue;
    const Eigen::Vector3d b =
        barycentric2(uv, verts_[tv[0]].uv, verts_[tv[1]].uv, verts_[tv[2]].uv);
    const double score = b.minCoeff();
    if (score > best_score) {
      best_score = score;
      best = int(t);
      best_bary = b;
    }
  }
  if (best < 0) return false;
  if (best_score < 0) {
    // Slightly outside the winner: accept only within 1 micron of its rim.
    const auto& tv = tris_[best];
    double d = 1e300;
    for (int k = 0; k < 3; ++k) {
      d = std::min(d, point_segment_distance2(uv, verts_[tv[k]].uv,
                                              verts_[tv[(k + 1) % 3]].uv));
    }
    if (d > kSnapUv) return false;
  }
  tri = best;
  bary = best_bary;
  return true;
}

Vec3 PaperMesh::position_at_uv(const Vec2& uv) const {
  int tri = -1;
  Eigen::Vector3d bary;
  if (!locate_uv(uv, tri, bary)) {
    fail(ErrorCode::InvalidArgument, "position_at_uv: point lies outside the sheet");
  }
  const auto& tv = tris_[tri];
  return bary[0] * verts_[tv[0]].position + bary[1] * verts_[tv[1]].position +
         bary[2] * verts_[tv[2]].position;
}

std::map<std::string, std::vector<int>> PaperMesh::groups() const {
  std::map<std::string, std::vector<int>> g;
  g["fixed"] = fixed_;
  if (!active_chain_.empty()) g["cut_chain"] = active_chain_;
  for (size_t i = 0; i < finished_chains_.size(); ++i) {
    g["cut_chain_done_" + std::to_string(i)] = finished_chains_[i];
  }
  return g;
}

void PaperMesh::restore(std::vector<MeshVertex> verts,
                        std::vector<std::array<int, 3>> tris,
                        std::map<std::string, std::vector<int>> groups) {
  verts_ = std::move(verts);
  tris_ = std::move(tris);
  fixed_.clear();
  active_chain_.clear();
  finished_chains_.clear();
  births_.clear();
  pending_.clear();
  edge_splits_.clear();
  tri_children_.clear();
  for (auto& [name, list] : groups) {
    if (name == "fixed") {
      set_fixed(list);
    } else if (name == "cut_chain") {
      active_chain_ = list;
    } else if (name.rfind("cut_chain_done_", 0) == 0) {
      finished_chains_.push_back(list);
    }
  }
  mark_dirty();
}

}  // namespace papercut
