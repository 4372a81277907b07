#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace regrasp {

using Vec3 = Eigen::Vector3d;
using Transform = Eigen::Isometry3d;

// One hand configuration: 6 root DoF (translation xyz [m] + rotation xyz
// Euler [rad]) followed by the articulated joint values.
using JointVector = Eigen::VectorXd;

inline constexpr int kRootDof = 6;
inline constexpr int kStandardDof = 28;
inline constexpr int kStandardKeypoints = 13;
inline constexpr int kNumFingers = 5;

enum class Finger : int {
  Thumb = 0,
  Index = 1,
  Middle = 2,
  Ring = 3,
  Pinky = 4,
  Palm = 5,
};

inline constexpr std::array<Finger, kNumFingers> kFingerOrder = {
    Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky};

inline const char* to_string(Finger f) {
  switch (f) {
    case Finger::Thumb: return "thumb";
    case Finger::Index: return "index";
    case Finger::Middle: return "middle";
    case Finger::Ring: return "ring";
    case Finger::Pinky: return "pinky";
    case Finger::Palm: return "palm";
  }
  return "?";
}

inline std::optional<Finger> finger_from_string(std::string_view s) {
  if (s == "thumb") return Finger::Thumb;
  if (s == "index") return Finger::Index;
  if (s == "middle") return Finger::Middle;
  if (s == "ring") return Finger::Ring;
  if (s == "pinky") return Finger::Pinky;
  if (s == "palm") return Finger::Palm;
  return std::nullopt;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.allFinite();
}

// FNV-1a, used for config/input digests in output file headers and manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string digest_hex(std::uint64_t h) {
  static const char* hexd = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hexd[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace regrasp
