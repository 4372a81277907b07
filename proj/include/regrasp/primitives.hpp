#pragma once

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "regrasp/geometry.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

// Axis-aligned box mesh (12 triangles, outward orientation).
inline TriangleMeshObject make_box_mesh(const Vec3& half_extents,
                                        const Vec3& center = Vec3::Zero()) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.push_back(center + Vec3((i & 1) ? half_extents.x() : -half_extents.x(),
                              (i & 2) ? half_extents.y() : -half_extents.y(),
                              (i & 4) ? half_extents.z() : -half_extents.z()));
  }
  const std::vector<std::array<int, 3>> f = {
      {0, 2, 1}, {1, 2, 3},  // z-
      {4, 5, 6}, {5, 7, 6},  // z+
      {0, 1, 4}, {1, 5, 4},  // y-
      {2, 6, 3}, {3, 6, 7},  // y+
      {0, 4, 2}, {2, 4, 6},  // x-
      {1, 3, 5}, {3, 7, 5},  // x+
  };
  return TriangleMeshObject::from_data(std::move(v), f);
}

// Icosphere by recursive midpoint subdivision of an icosahedron.
inline TriangleMeshObject make_icosphere_mesh(double radius, int subdivisions,
                                              const Vec3& center = Vec3::Zero()) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Vec3 m = (verts[a] + verts[b]).normalized();
    verts.push_back(m);
    const int idx = static_cast<int>(verts.size()) - 1;
    midpoint.emplace(key, idx);
    return idx;
  };

  for (int s = 0; s < subdivisions; ++s) {
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  for (auto& v : verts) v = center + radius * v;
  return TriangleMeshObject::from_data(std::move(verts), faces);
}

}  // namespace regrasp
