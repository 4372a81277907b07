// Loads an OBJ mesh and answers nearest-point / signed-distance queries from
// the command line. Handy for poking at the geometry layer:
//
//   ./mesh_queries data/icosphere.obj 0.05 0 0

#include <cstdio>
#include <cstdlib>

#include "regrasp/geometry.hpp"

int main(int argc, char** argv) {
  if (argc != 5) {
    std::fprintf(stderr, "usage: %s mesh.obj x y z\n", argv[0]);
    return 1;
  }
  const auto mesh = regrasp::load_mesh(argv[1]);
  std::printf("%s", mesh.stats_report().c_str());

  const regrasp::Vec3 p(std::atof(argv[2]), std::atof(argv[3]),
                        std::atof(argv[4]));
  const auto res = mesh.nearest_point(p);
  std::printf("query point      %g %g %g\n", p.x(), p.y(), p.z());
  std::printf("closest point    %g %g %g\n", res.closest_point.x(),
              res.closest_point.y(), res.closest_point.z());
  std::printf("distance         %g\n", res.distance);
  std::printf("signed distance  %g%s\n", res.signed_distance,
              res.sign_valid ? "" : " (sign unreliable: mesh not watertight)");
  std::printf("surface normal   %g %g %g\n", res.normal.x(), res.normal.y(),
              res.normal.z());
  std::printf("nearest vertex   #%d\n", res.vertex_index);
  return 0;
}
