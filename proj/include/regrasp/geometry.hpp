#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "regrasp/types.hpp"

namespace regrasp {

// Result of a nearest-surface query against a TriangleMeshObject.
// `vertex_index` is the mesh vertex closest to the query point (used for
// contact-map correspondences). `sign_valid` is false when the mesh is not
// watertight; the sign then comes from the pseudonormal test, best effort.
struct SurfaceQueryResult {
  Vec3 closest_point = Vec3::Zero();
  double distance = 0.0;
  double signed_distance = 0.0;
  Vec3 normal = Vec3::UnitZ();
  int vertex_index = -1;
  bool sign_valid = true;
};

struct MeshStats {
  std::size_t vertex_count = 0;
  std::size_t triangle_count = 0;
  std::size_t degenerate_dropped = 0;
  std::size_t unreferenced_pruned = 0;
  bool watertight = false;
  Vec3 bbox_min = Vec3::Zero();
  Vec3 bbox_max = Vec3::Zero();
};

namespace detail {

// Closest point on triangle (a,b,c) to p. Region codes: 0 face interior,
// 1/2/3 vertices a/b/c, 4 edge ab, 5 edge bc, 6 edge ca.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                      const Vec3& b, const Vec3& c,
                                      int* region = nullptr) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;

  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    if (region) *region = 1;
    return a;
  }

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    if (region) *region = 2;
    return b;
  }

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    if (region) *region = 4;
    const double v = d1 / (d1 - d3);
    return a + v * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    if (region) *region = 3;
    return c;
  }

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    if (region) *region = 6;
    const double w = d2 / (d2 - d6);
    return a + w * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    if (region) *region = 5;
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  if (region) *region = 0;
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return a + ab * v + ac * w;
}

// Moller-Trumbore. Returns true on hit with t > t_min; both sides count.
inline bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                         const Vec3& b, const Vec3& c, double t_min,
                         double* t_out) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return false;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= t_min) return false;
  if (t_out) *t_out = t;
  return true;
}

inline double aabb_distance_sq(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double v = p[k];
    if (v < lo[k]) d2 += (lo[k] - v) * (lo[k] - v);
    if (v > hi[k]) d2 += (v - hi[k]) * (v - hi[k]);
  }
  return d2;
}

inline bool ray_aabb(const Vec3& origin, const Vec3& inv_dir, const Vec3& lo,
                     const Vec3& hi) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    double ta = (lo[k] - origin[k]) * inv_dir[k];
    double tb = (hi[k] - origin[k]) * inv_dir[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace detail

// Watertight triangle mesh with an axis-aligned BVH (median split, leaf <= 4
// triangles) for nearest-point and ray-parity queries. Immutable after
// construction; all queries are const and safe to call concurrently.
class TriangleMeshObject {
 public:
  struct Triangle {
    std::array<int, 3> v;
  };

  TriangleMeshObject() = default;

  // Builds a mesh from raw data: drops degenerate triangles, prunes
  // unreferenced vertices, computes angle-weighted vertex normals, the
  // watertightness flag and the BVH.
  static TriangleMeshObject from_data(std::vector<Vec3> vertices,
                                      std::vector<std::array<int, 3>> tris) {
    TriangleMeshObject m;
    if (vertices.empty() || tris.empty())
      throw std::runtime_error("mesh: empty mesh");

    for (const auto& t : tris) {
      for (int k = 0; k < 3; ++k) {
        if (t[k] < 0 || t[k] >= static_cast<int>(vertices.size()))
          throw std::runtime_error("mesh: triangle index out of range");
      }
    }

    // Drop zero-area triangles.
    std::vector<std::array<int, 3>> kept;
    kept.reserve(tris.size());
    for (const auto& t : tris) {
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
        ++m.degenerate_dropped_;
        continue;
      }
      const Vec3 n = (vertices[t[1]] - vertices[t[0]])
                         .cross(vertices[t[2]] - vertices[t[0]]);
      if (n.norm() < 1e-14) {
        ++m.degenerate_dropped_;
        continue;
      }
      kept.push_back(t);
    }
    if (kept.empty()) throw std::runtime_error("mesh: no valid triangles");

    // Prune unreferenced vertices and remap indices.
    std::vector<int> remap(vertices.size(), -1);
    for (const auto& t : kept)
      for (int k = 0; k < 3; ++k) remap[t[k]] = 0;
    int next = 0;
    for (std::size_t i = 0; i < remap.size(); ++i) {
      if (remap[i] == 0)
        remap[i] = next++;
      else
        ++m.unreferenced_pruned_;
    }
    m.vertices_.resize(next);
    for (std::size_t i = 0; i < vertices.size(); ++i)
      if (remap[i] >= 0) m.vertices_[remap[i]] = vertices[i];
    m.triangles_.reserve(kept.size());
    for (const auto& t : kept)
      m.triangles_.push_back({{remap[t[0]], remap[t[1]], remap[t[2]]}});

    m.finalize();
    return m;
  }

  // OBJ loader, v/f records only. Faces must be triangles; materials,
  // textures and groups are ignored.
  static TriangleMeshObject load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("mesh: cannot open " + path.string());
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string tag;
      if (!(ls >> tag)) continue;
      if (tag == "v") {
        Vec3 v;
        if (!(ls >> v.x() >> v.y() >> v.z()))
          throw std::runtime_error("mesh: bad vertex at line " +
                                   std::to_string(lineno));
        verts.push_back(v);
      } else if (tag == "f") {
        std::vector<int> idx;
        std::string tok;
        while (ls >> tok) {
          // "i", "i/j", "i//k", "i/j/k" -- only the vertex index matters.
          const std::size_t slash = tok.find('/');
          const std::string head = tok.substr(0, slash);
          int i = 0;
          try {
            i = std::stoi(head);
          } catch (...) {
            throw std::runtime_error("mesh: bad face token at line " +
                                     std::to_string(lineno));
          }
          if (i < 0) i = static_cast<int>(verts.size()) + i + 1;
          if (i <= 0 || i > static_cast<int>(verts.size()))
            throw std::runtime_error("mesh: face index out of range at line " +
                                     std::to_string(lineno));
          idx.push_back(i - 1);
        }
        if (idx.size() != 3)
          throw std::runtime_error("mesh: non-triangle face at line " +
                                   std::to_string(lineno));
        tris.push_back({{idx[0], idx[1], idx[2]}});
      }
      // anything else (vn, vt, o, g, s, usemtl, mtllib, #) is skipped
    }
    if (verts.empty() || tris.empty())
      throw std::runtime_error("mesh: empty mesh in " + path.string());
    return from_data(std::move(verts), std::move(tris));
  }

  // Uniform scaling about the origin. Normals are unchanged.
  TriangleMeshObject scaled(double s) const {
    if (!(s > 0.0)) throw std::invalid_argument("mesh: scale must be > 0");
    TriangleMeshObject m = *this;
    for (auto& v : m.vertices_) v *= s;
    m.bbox_min_ = bbox_min_ * s;
    m.bbox_max_ = bbox_max_ * s;
    m.rebuild_bvh();
    return m;
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Vec3>& vertex_normals() const { return vertex_normals_; }
  bool watertight() const { return watertight_; }
  std::size_t degenerate_dropped() const { return degenerate_dropped_; }

  MeshStats stats() const {
    MeshStats st;
    st.vertex_count = vertices_.size();
    st.triangle_count = triangles_.size();
    st.degenerate_dropped = degenerate_dropped_;
    st.unreferenced_pruned = unreferenced_pruned_;
    st.watertight = watertight_;
    st.bbox_min = bbox_min_;
    st.bbox_max = bbox_max_;
    return st;
  }

  std::string stats_report() const {
    const MeshStats st = stats();
    std::ostringstream os;
    os << "vertices: " << st.vertex_count << "\n"
       << "triangles: " << st.triangle_count << "\n"
       << "degenerate dropped: " << st.degenerate_dropped << "\n"
       << "unreferenced pruned: " << st.unreferenced_pruned << "\n"
       << "watertight: " << (st.watertight ? "yes" : "no") << "\n"
       << "bbox min: " << st.bbox_min.transpose() << "\n"
       << "bbox max: " << st.bbox_max.transpose() << "\n";
    return os.str();
  }

  // Closest surface point, distance, sign and nearest mesh vertex.
  SurfaceQueryResult nearest_point(const Vec3& p) const {
    SurfaceQueryResult res;
    double best_tri_d2 = std::numeric_limits<double>::infinity();
    double best_vert_d2 = std::numeric_limits<double>::infinity();
    int best_tri = -1;
    int best_region = 0;
    Vec3 best_cp = Vec3::Zero();

    // Best-first traversal; prune on the vertex bound (it dominates the
    // surface bound, so one traversal serves both searches).
    std::array<int, 128> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      if (detail::aabb_distance_sq(p, node.lo, node.hi) > best_vert_d2)
        continue;
      if (node.count > 0) {
        const bool tri_eligible =
            detail::aabb_distance_sq(p, node.lo, node.hi) <= best_tri_d2;
        for (int i = 0; i < node.count; ++i) {
          const int ti = tri_order_[node.first + i];
          const auto& t = triangles_[ti];
          for (int k = 0; k < 3; ++k) {
            const double vd2 = (vertices_[t.v[k]] - p).squaredNorm();
            if (vd2 < best_vert_d2 ||
                (vd2 == best_vert_d2 && t.v[k] < res.vertex_index)) {
              best_vert_d2 = vd2;
              res.vertex_index = t.v[k];
            }
          }
          if (!tri_eligible) continue;
          int region = 0;
          const Vec3 cp = detail::closest_point_on_triangle(
              p, vertices_[t.v[0]], vertices_[t.v[1]], vertices_[t.v[2]],
              &region);
          const double d2 = (cp - p).squaredNorm();
          if (d2 < best_tri_d2) {
            best_tri_d2 = d2;
            best_tri = ti;
            best_region = region;
            best_cp = cp;
          }
        }
      } else {
        // Push the nearer child last so it pops first.
        const Node& l = nodes_[node.left];
        const Node& r = nodes_[node.right];
        const double dl = detail::aabb_distance_sq(p, l.lo, l.hi);
        const double dr = detail::aabb_distance_sq(p, r.lo, r.hi);
        if (dl < dr) {
          stack[sp++] = node.right;
          stack[sp++] = node.left;
        } else {
          stack[sp++] = node.left;
          stack[sp++] = node.right;
        }
      }
    }

    res.closest_point = best_cp;
    res.distance = std::sqrt(best_tri_d2);
    res.normal = feature_pseudonormal(best_tri, best_region);

    if (res.distance < 1e-12) {
      res.signed_distance = 0.0;
      res.sign_valid = watertight_;
      return res;
    }
    if (watertight_) {
      res.signed_distance = inside_by_parity(p) ? -res.distance : res.distance;
      res.sign_valid = true;
    } else {
      const double side = (p - best_cp).dot(res.normal);
      res.signed_distance = side < 0.0 ? -res.distance : res.distance;
      res.sign_valid = false;
    }
    return res;
  }

  double signed_distance(const Vec3& p) const {
    return nearest_point(p).signed_distance;
  }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int first = 0, count = 0;  // leaf when count > 0
  };

  void finalize() {
    bbox_min_ = Vec3::Constant(std::numeric_limits<double>::infinity());
    bbox_max_ = -bbox_min_;
    for (const auto& v : vertices_) {
      bbox_min_ = bbox_min_.cwiseMin(v);
      bbox_max_ = bbox_max_.cwiseMax(v);
    }
    compute_normals_and_adjacency();
    rebuild_bvh();
  }

  void compute_normals_and_adjacency() {
    face_normals_.resize(triangles_.size());
    vertex_normals_.assign(vertices_.size(), Vec3::Zero());
    edge_faces_.clear();
    watertight_ = true;
    for (std::size_t ti = 0; ti < triangles_.size(); ++ti) {
      const auto& t = triangles_[ti];
      const Vec3& a = vertices_[t.v[0]];
      const Vec3& b = vertices_[t.v[1]];
      const Vec3& c = vertices_[t.v[2]];
      Vec3 n = (b - a).cross(c - a);
      const double len = n.norm();
      face_normals_[ti] = n / len;
      // angle-weighted accumulation
      for (int k = 0; k < 3; ++k) {
        const Vec3& p0 = vertices_[t.v[k]];
        const Vec3& p1 = vertices_[t.v[(k + 1) % 3]];
        const Vec3& p2 = vertices_[t.v[(k + 2) % 3]];
        const Vec3 e1 = (p1 - p0).normalized();
        const Vec3 e2 = (p2 - p0).normalized();
        const double ang =
            std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
        vertex_normals_[t.v[k]] += ang * face_normals_[ti];
      }
      for (int k = 0; k < 3; ++k) {
        const std::uint64_t key =
            detail::edge_key(t.v[k], t.v[(k + 1) % 3]);
        auto& faces = edge_faces_[key];
        faces.push_back(static_cast<int>(ti));
      }
    }
    for (auto& n : vertex_normals_) {
      const double len = n.norm();
      if (len > 1e-14) n /= len;
    }
    for (const auto& [key, faces] : edge_faces_) {
      if (faces.size() != 2) {
        watertight_ = false;
        break;
      }
    }
  }

  Vec3 feature_pseudonormal(int tri, int region) const {
    if (tri < 0) return Vec3::UnitZ();
    const auto& t = triangles_[tri];
    switch (region) {
      case 0:
        return face_normals_[tri];
      case 1:
      case 2:
      case 3:
        return vertex_normals_[t.v[region - 1]];
      default: {
        const int k = region - 4;  // 4->edge(0,1), 5->edge(1,2), 6->edge(2,0)
        const int a = t.v[k % 3];
        const int b = t.v[(k + 1) % 3];
        auto it = edge_faces_.find(detail::edge_key(a, b));
        Vec3 n = Vec3::Zero();
        if (it != edge_faces_.end())
          for (int fi : it->second) n += face_normals_[fi];
        const double len = n.norm();
        return len > 1e-14 ? Vec3(n / len) : face_normals_[tri];
      }
    }
  }

  // Parity vote over three fixed oblique ray directions.
  bool inside_by_parity(const Vec3& p) const {
    static const std::array<Vec3, 3> dirs = {
        Vec3(0.537653240498312, 0.112146724558869, 0.835680394347162)
            .normalized(),
        Vec3(-0.258819045102521, 0.896308290296233, -0.360420846108437)
            .normalized(),
        Vec3(0.707106781186548, -0.316227766016838, 0.632455532033676)
            .normalized()};
    int votes = 0;
    for (const auto& d : dirs)
      if (count_ray_hits(p, d) % 2 == 1) ++votes;
    return votes >= 2;
  }

  int count_ray_hits(const Vec3& origin, const Vec3& dir) const {
    Vec3 inv;
    for (int k = 0; k < 3; ++k)
      inv[k] = dir[k] != 0.0 ? 1.0 / dir[k]
                             : std::numeric_limits<double>::infinity();
    int hits = 0;
    std::array<int, 128> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      if (!detail::ray_aabb(origin, inv, node.lo, node.hi)) continue;
      if (node.count > 0) {
        for (int i = 0; i < node.count; ++i) {
          const auto& t = triangles_[tri_order_[node.first + i]];
          double tt = 0.0;
          if (detail::ray_triangle(origin, dir, vertices_[t.v[0]],
                                   vertices_[t.v[1]], vertices_[t.v[2]],
                                   1e-12, &tt))
            ++hits;
        }
      } else {
        stack[sp++] = node.left;
        stack[sp++] = node.right;
      }
    }
    return hits;
  }

  void rebuild_bvh() {
    nodes_.clear();
    tri_order_.resize(triangles_.size());
    std::iota(tri_order_.begin(), tri_order_.end(), 0);
    centroids_.resize(triangles_.size());
    for (std::size_t i = 0; i < triangles_.size(); ++i) {
      const auto& t = triangles_[i];
      centroids_[i] =
          (vertices_[t.v[0]] + vertices_[t.v[1]] + vertices_[t.v[2]]) / 3.0;
    }
    nodes_.reserve(2 * triangles_.size());
    build_node(0, static_cast<int>(triangles_.size()));
    centroids_.clear();
    centroids_.shrink_to_fit();
  }

  int build_node(int first, int count) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    Vec3 clo = lo, chi = hi;
    for (int i = first; i < first + count; ++i) {
      const auto& t = triangles_[tri_order_[i]];
      for (int k = 0; k < 3; ++k) {
        lo = lo.cwiseMin(vertices_[t.v[k]]);
        hi = hi.cwiseMax(vertices_[t.v[k]]);
      }
      clo = clo.cwiseMin(centroids_[tri_order_[i]]);
      chi = chi.cwiseMax(centroids_[tri_order_[i]]);
    }
    nodes_[idx].lo = lo;
    nodes_[idx].hi = hi;
    if (count <= 4) {
      nodes_[idx].first = first;
      nodes_[idx].count = count;
      return idx;
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const int mid = first + count / 2;
    std::nth_element(tri_order_.begin() + first, tri_order_.begin() + mid,
                     tri_order_.begin() + first + count,
                     [&](int a, int b) {
                       const double ca = centroids_[a][axis];
                       const double cb = centroids_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const int l = build_node(first, mid - first);
    const int r = build_node(mid, first + count - mid);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> vertex_normals_;
  std::vector<Vec3> face_normals_;
  std::unordered_map<std::uint64_t, std::vector<int>> edge_faces_;
  std::vector<Node> nodes_;
  std::vector<int> tri_order_;
  std::vector<Vec3> centroids_;
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Zero();
  bool watertight_ = false;
  std::size_t degenerate_dropped_ = 0;
  std::size_t unreferenced_pruned_ = 0;
};

inline TriangleMeshObject load_mesh(const std::filesystem::path& path) {
  return TriangleMeshObject::load_obj(path);
}

inline TriangleMeshObject scale_mesh(const TriangleMeshObject& mesh,
                                     double s) {
  return mesh.scaled(s);
}

inline SurfaceQueryResult nearest_point(const TriangleMeshObject& mesh,
                                        const Vec3& p) {
  return mesh.nearest_point(p);
}

inline double signed_distance(const TriangleMeshObject& mesh, const Vec3& p) {
  return mesh.signed_distance(p);
}

}  // namespace regrasp
