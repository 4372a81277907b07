#pragma once

// Brute-force reference computations for the test suites. These intentionally
// avoid the library's query paths (no BVH, no region-based closest-point) so
// they can serve as independent oracles.

#include <algorithm>
#include <limits>
#include <vector>

#include "regrasp/geometry.hpp"
#include "regrasp/types.hpp"

namespace oracles {

using regrasp::Vec3;

// Candidate-enumeration point-to-triangle distance: plane projection (if the
// foot lies inside by barycentric test), clamped edge projections, vertices.
inline double point_triangle_distance(const Vec3& p, const Vec3& a,
                                      const Vec3& b, const Vec3& c) {
  double best = std::min({(p - a).norm(), (p - b).norm(), (p - c).norm()});
  const Vec3 verts[3] = {a, b, c};
  for (int k = 0; k < 3; ++k) {
    const Vec3& u = verts[k];
    const Vec3& v = verts[(k + 1) % 3];
    const Vec3 e = v - u;
    const double len2 = e.squaredNorm();
    if (len2 <= 0.0) continue;
    const double t = std::clamp((p - u).dot(e) / len2, 0.0, 1.0);
    best = std::min(best, (u + t * e - p).norm());
  }
  const Vec3 n = (b - a).cross(c - a);
  const double n2 = n.squaredNorm();
  if (n2 > 0.0) {
    const Vec3 q = p - n * ((p - a).dot(n) / n2);
    // barycentric coordinates of q
    const Vec3 v0 = b - a, v1 = c - a, v2 = q - a;
    const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
    const double d20 = v2.dot(v0), d21 = v2.dot(v1);
    const double denom = d00 * d11 - d01 * d01;
    if (denom > 0.0) {
      const double bv = (d11 * d20 - d01 * d21) / denom;
      const double bw = (d00 * d21 - d01 * d20) / denom;
      const double bu = 1.0 - bv - bw;
      if (bu >= -1e-12 && bv >= -1e-12 && bw >= -1e-12)
        best = std::min(best, (q - p).norm());
    }
  }
  return best;
}

// Loop over every triangle; no acceleration structure.
inline double mesh_distance(const regrasp::TriangleMeshObject& mesh,
                            const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles()) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices()[t.v[0]],
                                                  mesh.vertices()[t.v[1]],
                                                  mesh.vertices()[t.v[2]]));
  }
  return best;
}

inline int nearest_vertex(const regrasp::TriangleMeshObject& mesh,
                          const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  int idx = -1;
  for (std::size_t i = 0; i < mesh.vertices().size(); ++i) {
    const double d = (mesh.vertices()[i] - p).norm();
    if (d < best) {
      best = d;
      idx = static_cast<int>(i);
    }
  }
  return idx;
}

// Literal-mode Chamfer: per-frame single minimum over all cross pairs.
inline double chamfer_literal(const std::vector<std::vector<Vec3>>& ref,
                              const std::vector<std::vector<Vec3>>& gen) {
  double acc = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : ref[t])
      for (const auto& q : gen[t]) best = std::min(best, (p - q).norm());
    acc += best;
  }
  return acc / static_cast<double>(ref.size());
}

// Bidirectional: average of the two mean-nearest-neighbor sums per frame.
inline double chamfer_bidirectional(const std::vector<std::vector<Vec3>>& ref,
                                    const std::vector<std::vector<Vec3>>& gen) {
  double acc = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    double fwd = 0.0;
    for (const auto& p : ref[t]) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : gen[t]) best = std::min(best, (p - q).norm());
      fwd += best;
    }
    fwd /= static_cast<double>(ref[t].size());
    double bwd = 0.0;
    for (const auto& q : gen[t]) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : ref[t]) best = std::min(best, (p - q).norm());
      bwd += best;
    }
    bwd /= static_cast<double>(gen[t].size());
    acc += 0.5 * (fwd + bwd);
  }
  return acc / static_cast<double>(ref.size());
}

}  // namespace oracles
