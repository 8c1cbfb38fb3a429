#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/geometry.hpp"

namespace papercut {

struct MeshVertex {
  Vec3 position;
  Vec2 uv;
};

// Where a detected cut point lives on the mesh. Existing-vertex hits carry
// the vertex id; edge hits carry the endpoint pair plus the parameter from
// `a` to `b`; triangle hits carry barycentric weights.
struct IntersectionPoint {
  enum class Host { Vertex, Edge, Triangle };
  Host host = Host::Edge;
  double order_key = 0;  // parameter along the probe segment
  int vertex = -1;
  int edge_a = -1, edge_b = -1;
  double edge_t = 0;
  int triangle = -1;
  Eigen::Vector3d bary = Eigen::Vector3d::Zero();
};

// One record per vertex added after construction; parents carry
// interpolation weights (a duplicate has a single parent with weight 1).
// Consumers (the simulator) use these to extend per-vertex state.
struct VertexBirth {
  int vertex = -1;
  std::array<int, 3> parents = {-1, -1, -1};
  std::array<double, 3> weights = {0, 0, 0};
};

struct MeshEdge {
  int a = -1, b = -1;  // a < b
  std::array<int, 2> tris = {-1, -1};
  int tri_count = 0;
};

class PaperMesh {
 public:
  // Structured triangulation of a rectangle spanning [0,w] x [0,h] at z = 0.
  // UV equals the initial in-plane position; the top row (v = h) is fixed.
  static PaperMesh build_rect(double width, double height, double target_edge);

  size_t vertex_count() const { return verts_.size(); }
  size_t triangle_count() const { return tris_.size(); }
  const std::vector<MeshVertex>& vertices() const { return verts_; }
  std::vector<MeshVertex>& vertices() { return verts_; }
  const std::vector<std::array<int, 3>>& triangles() const { return tris_; }
  const std::vector<int>& fixed_vertices() const { return fixed_; }
  void set_fixed(const std::vector<int>& fixed);
  bool is_fixed(int v) const;

  const std::vector<MeshEdge>& edges() const;

  std::vector<IntersectionPoint> detect_cut_intersections(const Vec3& seg_start,
                                                          const Vec3& seg_end,
                                                          double tolerance = 1e-4) const;

  // Adds one vertex per point (existing-vertex hits return the existing id)
  // with interpolated position and UV; topology is untouched until
  // connect_edges consumes the pending records. Returns ids in input order.
  std::vector<int> insert_vertices(const std::vector<IntersectionPoint>& points);

  // Splits host elements for every pending inserted vertex, in insertion
  // order: edge-hosted vertices split each incident triangle in two,
  // triangle-hosted vertices split their triangle in three.
  void connect_edges(const std::vector<int>& new_vertices);

  // Topologically opens the mesh along the ordered cut path. Every path
  // vertex whose triangle fan is separated by the path (plus any existing
  // boundary) is duplicated, except the crack tip. The fan on the negative
  // side of the local cut direction moves to the duplicate.
  void split_cut_edges(const std::vector<int>& cut_vertex_ids, int crack_tip);

  // detect -> insert -> connect -> split, extending the active cut chain.
  // Returns the number of cut path vertices appended.
  int apply_cut_segment(const Vec3& seg_start, const Vec3& seg_end,
                        double tolerance = 1e-4);

  const std::vector<int>& cut_chain() const { return active_chain_; }
  int crack_tip() const { return active_chain_.empty() ? -1 : active_chain_.back(); }
  std::vector<Vec2> cut_polyline() const;

  const std::vector<VertexBirth>& birth_log() const { return births_; }

  double total_uv_area() const;
  size_t boundary_edge_count() const;
  int connected_components() const;
  // Manifoldness, orientation consistency, index ranges; throws on failure.
  void validate() const;

  // Locates the triangle whose barycentric interior contains the UV point
  // (most interior wins; ties to the lowest triangle id). Returns false when
  // the point lies outside every triangle by more than 1e-6.
  bool locate_uv(const Vec2& uv, int& tri, Eigen::Vector3d& bary) const;
  Vec3 position_at_uv(const Vec2& uv) const;

  // Serialization hooks (mesh_io).
  std::map<std::string, std::vector<int>> groups() const;
  void restore(std::vector<MeshVertex> verts, std::vector<std::array<int, 3>> tris,
               std::map<std::string, std::vector<int>> groups);

 private:
  struct PendingInsert {
    int vertex = -1;
    IntersectionPoint point;
  };

  void mark_dirty() { edges_dirty_ = true; }
  void rebuild_edges() const;
  int edge_index(int a, int b) const;  // -1 when absent
  void split_edge_topology(int a, int b, int mid);
  void split_triangle_topology(int tri, int mid);
  int resolve_edge_host(int a, int b, double t, double& t_out) const;
  int resolve_triangle_host(int tri, const Vec2& uv) const;

  std::vector<MeshVertex> verts_;
  std::vector<std::array<int, 3>> tris_;
  std::vector<int> fixed_;
  std::vector<VertexBirth> births_;
  std::vector<PendingInsert> pending_;
  std::vector<int> active_chain_;
  std::vector<std::vector<int>> finished_chains_;

  // Per-batch host re-resolution bookkeeping (original element -> pieces).
  struct EdgeSplit {
    int mid = -1;
    double t = 0;
  };
  std::map<std::pair<int, int>, EdgeSplit> edge_splits_;
  std::map<int, std::vector<int>> tri_children_;

  mutable std::vector<MeshEdge> edges_;
  mutable std::map<std::pair<int, int>, int> edge_lookup_;
  mutable bool edges_dirty_ = true;
};

}  // namespace papercut
