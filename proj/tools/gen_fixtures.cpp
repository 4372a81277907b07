// Regenerates the bundled fixtures under data/. The outputs are committed;
// rerun this tool only when the fixture design changes.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "regrasp/hand_model.hpp"
#include "regrasp/primitives.hpp"
#include "regrasp/trajectory_io.hpp"
#include "regrasp/types.hpp"

using json = nlohmann::ordered_json;
using regrasp::Vec3;

namespace {

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json joint(const std::string& name, const std::string& parent,
           const Vec3& axis, const std::string& kind, double lo, double hi,
           double rest = 0.0) {
  return json{{"name", name},   {"parent_link", parent}, {"axis", vec(axis)},
              {"kind", kind},   {"limits", {lo, hi}},    {"rest", rest}};
}

json link(const std::string& name, const std::string& parent_joint,
          const Vec3& translation, const std::string& finger) {
  json l{{"name", name}, {"translation", vec(translation)}, {"finger", finger}};
  if (!parent_joint.empty()) l["parent_joint"] = parent_joint;
  return l;
}

json sample(const Vec3& p, const Vec3& n) {
  return json{{"point", vec(p)}, {"normal", vec(n)}};
}

// Ring of points on a cylinder of radius r around the local x axis.
void add_ring(json& samples, double x, double r, int count, double theta0,
              double theta1) {
  for (int i = 0; i < count; ++i) {
    const double th =
        count == 1 ? theta0 : theta0 + (theta1 - theta0) * i / (count - 1);
    const Vec3 n(0.0, std::cos(th), std::sin(th));
    samples.push_back(sample(Vec3(x, r * std::cos(th), r * std::sin(th)), n));
  }
}

// Fingertip cap: one ring at 45 degrees latitude plus the apex.
void add_cap(json& samples, double tip_x, double r) {
  const Vec3 c(tip_x - r, 0.0, 0.0);
  const double lat = std::numbers::pi / 4.0;
  for (int i = 0; i < 8; ++i) {
    const double th = 2.0 * std::numbers::pi * i / 8.0;
    const Vec3 dir(std::cos(lat), std::sin(lat) * std::cos(th),
                   std::sin(lat) * std::sin(th));
    samples.push_back(sample(c + r * dir, dir));
  }
  samples.push_back(sample(c + r * Vec3::UnitX(), Vec3::UnitX()));
}

struct FingerDims {
  std::string tag;
  std::string finger;
  Vec3 base;
  bool rotated;  // thumb frame is rotated +90 deg about z
  double prox, mid, dist;
};

json make_synth3_chain() {
  const double kRadius = 0.0045;
  const double kPi = std::numbers::pi;

  json joints = json::array();
  json links = json::array();
  json keypoints = json::array();

  // Tree root and the 6-DoF dummy block.
  links.push_back(link("base", "", Vec3::Zero(), "palm"));
  const char* dummy_names[6] = {"root_tx", "root_ty", "root_tz",
                                "root_rx", "root_ry", "root_rz"};
  const Vec3 axes[6] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(),
                        Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  std::string parent = "base";
  for (int i = 0; i < 6; ++i) {
    const bool trans = i < 3;
    joints.push_back(joint(dummy_names[i], parent, axes[i],
                           trans ? "prismatic" : "revolute",
                           trans ? -0.6 : -kPi, trans ? 0.6 : kPi));
    const std::string child = i == 5 ? "palm" : "carrier_" + std::to_string(i);
    links.push_back(link(child, dummy_names[i], Vec3::Zero(), "palm"));
    parent = child;
  }

  // Palm samples: palmar face grid plus a few on the back.
  {
    json& palm = links.back();
    json samples = json::array();
    for (int ix = 0; ix < 4; ++ix)
      for (int iy = 0; iy < 3; ++iy)
        samples.push_back(sample(Vec3(0.012 + 0.018 * ix,
                                      -0.024 + 0.024 * iy, -0.012),
                                 Vec3(0, 0, -1)));
    for (int ix = 0; ix < 4; ++ix)
      samples.push_back(
          sample(Vec3(0.012 + 0.018 * ix, 0.0, 0.012), Vec3(0, 0, 1)));
    palm["samples"] = samples;
  }

  const std::vector<FingerDims> fingers = {
      {"th", "thumb", Vec3(0.030, 0.038, 0.0), true, 0.030, 0.024, 0.020},
      {"ix", "index", Vec3(0.080, 0.020, 0.0), false, 0.032, 0.026, 0.022},
      {"md", "middle", Vec3(0.080, -0.020, 0.0), false, 0.034, 0.028, 0.023},
  };

  for (const auto& f : fingers) {
    const std::string kn = f.tag + "_knuckle";
    const std::string prox = f.tag + "_prox";
    const std::string mid = f.tag + "_mid";
    const std::string dist = f.tag + "_dist";

    joints.push_back(joint(f.tag + "_ab", "palm", Vec3::UnitZ(), "revolute",
                           f.rotated ? -0.6 : -0.35, f.rotated ? 0.6 : 0.35));
    json knuckle = link(kn, f.tag + "_ab", f.base, f.finger);
    if (f.rotated)
      knuckle["rotation"] = {std::cos(kPi / 4), 0.0, 0.0, std::sin(kPi / 4)};
    links.push_back(knuckle);

    joints.push_back(
        joint(f.tag + "_mcp", kn, Vec3::UnitY(), "revolute", -0.2, 1.6));
    {
      json l = link(prox, f.tag + "_mcp", Vec3::Zero(), f.finger);
      json samples = json::array();
      add_ring(samples, 0.006, kRadius, 5, -kPi, 0.0);
      add_ring(samples, f.prox - 0.006, kRadius, 5, -kPi, 0.0);
      l["samples"] = samples;
      links.push_back(l);
    }

    joints.push_back(
        joint(f.tag + "_pip", prox, Vec3::UnitY(), "revolute", -0.2, 1.6));
    {
      json l = link(mid, f.tag + "_pip", Vec3(f.prox, 0, 0), f.finger);
      json samples = json::array();
      add_ring(samples, 0.005, kRadius, 5, -kPi, 0.0);
      add_ring(samples, f.mid - 0.005, kRadius, 5, -kPi, 0.0);
      l["samples"] = samples;
      links.push_back(l);
    }

    joints.push_back(
        joint(f.tag + "_dip", mid, Vec3::UnitY(), "revolute", -0.2, 1.6));
    {
      json l = link(dist, f.tag + "_dip", Vec3(f.mid, 0, 0), f.finger);
      l["fingertip"] = vec(Vec3(f.dist - 0.003, 0.0, -kRadius));
      json samples = json::array();
      for (int rx = 0; rx < 3; ++rx)
        add_ring(samples, 0.004 + rx * (f.dist - 0.009) / 2.0, kRadius, 8,
                 -kPi, kPi * 3.0 / 4.0);
      add_cap(samples, f.dist, kRadius);
      l["samples"] = samples;
      links.push_back(l);
    }
  }

  // Padding joints to reach the 28-DoF layout; locked at zero.
  parent = "palm";
  for (int i = 0; i < 10; ++i) {
    const std::string jn = "pad_" + std::to_string(i);
    const std::string ln = "pad_l" + std::to_string(i);
    joints.push_back(joint(jn, parent, Vec3::UnitZ(), "revolute", 0.0, 0.0));
    links.push_back(link(ln, jn, Vec3::Zero(), "palm"));
    parent = ln;
  }

  auto kp = [&](const std::string& l, const Vec3& off) {
    keypoints.push_back(json{{"link", l}, {"offset", vec(off)}});
  };
  kp("palm", Vec3(0, 0, 0));
  kp("palm", Vec3(0, 0.035, 0));
  kp("palm", Vec3(0, -0.035, 0));
  kp("palm", Vec3(0.080, 0, 0));
  kp("th_dist", Vec3(0.017, 0, -kRadius));
  kp("ix_dist", Vec3(0.019, 0, -kRadius));
  kp("md_dist", Vec3(0.020, 0, -kRadius));
  kp("th_mid", Vec3(0.012, 0, -kRadius));
  kp("ix_mid", Vec3(0.013, 0, -kRadius));
  kp("md_mid", Vec3(0.014, 0, -kRadius));
  kp("th_prox", Vec3(0.015, 0, 0));
  kp("ix_prox", Vec3(0.016, 0, 0));
  kp("md_prox", Vec3(0.017, 0, 0));

  return json{{"name", "synth3"},
              {"joints", joints},
              {"links", links},
              {"keypoints", keypoints}};
}

void write_icosphere_obj(const std::filesystem::path& path, double radius,
                         int subdiv) {
  const auto mesh = regrasp::make_icosphere_mesh(radius, subdiv);
  std::ofstream out(path);
  out << "# icosphere radius " << radius << " subdiv " << subdiv << "\n";
  char buf[128];
  for (const auto& v : mesh.vertices()) {
    std::snprintf(buf, sizeof(buf), "v %.9f %.9f %.9f\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles())
    out << "f " << t.v[0] + 1 << " " << t.v[1] + 1 << " " << t.v[2] + 1
        << "\n";
}

// --- demo trajectory --------------------------------------------------------
//
// A 160-frame grasp of the (scaled) sphere: descend, close the fingers, hold.
// The hand is placed by trilateration: at the hold flexion the root is moved
// so all three fingertip markers sit `r - depth` from the sphere center at
// the origin, giving a three-finger contact with a few millimetres of pad
// penetration and a clear palm. The written keypoints are divided by the
// ingestion scale so the pipeline's 10/9 brings them back.

struct DemoPath {
  std::vector<regrasp::JointVector> truth;
  std::vector<double> timestamps;
};

regrasp::JointVector demo_pose(const regrasp::KinematicChain& chain,
                               const regrasp::Vec3& root, double flex) {
  using regrasp::Finger;
  regrasp::JointVector q = regrasp::JointVector::Zero(chain.dof());
  q.head<3>() = root;
  for (Finger f : {Finger::Thumb, Finger::Index, Finger::Middle}) {
    const auto& d = chain.finger_dof_indices(f);
    q[d[1]] = 0.9 * flex;
    q[d[2]] = 0.63 * flex;
    q[d[3]] = 0.45 * flex;
  }
  return q;
}

double deepest_penetration(const regrasp::KinematicChain& chain,
                           const regrasp::TriangleMeshObject& mesh,
                           const regrasp::JointVector& q) {
  double pen = -1e9;
  for (const auto& s : chain.surface_points(q))
    pen = std::max(pen, -mesh.signed_distance(s.point));
  return pen;
}

// The grasped sphere's size and position follow from the hand: the three
// fingertip markers at the hold flexion define a circumcircle; the sphere
// center sits `plane_drop` below that plane and the radius is chosen so each
// marker ends `marker_depth` inside the surface. Returns the effective
// (post-scaling) sphere radius.
double solve_demo_sphere(const regrasp::KinematicChain& chain,
                         double marker_depth, double plane_drop,
                         regrasp::Vec3* root_hold) {
  using regrasp::Finger;
  using regrasp::Vec3;

  const regrasp::JointVector local = demo_pose(chain, Vec3::Zero(), 1.0);
  const auto world = chain.forward_kinematics(local);
  const std::array<Vec3, 3> tips = {
      chain.fingertip_position(world, Finger::Thumb),
      chain.fingertip_position(world, Finger::Index),
      chain.fingertip_position(world, Finger::Middle)};

  // circumcenter of the tip triangle, in plane coordinates
  const Vec3 u = tips[1] - tips[0];
  const Vec3 v = tips[2] - tips[0];
  const Vec3 e1 = u.normalized();
  const Vec3 e2 = (v - v.dot(e1) * e1).normalized();
  const double bx = u.norm();
  const double cx = v.dot(e1);
  const double cy = v.dot(e2);
  const double px = 0.5 * bx;
  const double py = (cx * cx + cy * cy - cx * bx) / (2.0 * cy);
  const Vec3 circumcenter = tips[0] + px * e1 + py * e2;
  const double circumradius = (circumcenter - tips[0]).norm();

  Vec3 n = e1.cross(e2);
  if (n.z() > 0) n = -n;  // away from the palm, which sits above the tips
  const Vec3 center = circumcenter + plane_drop * n;
  const double d_target =
      std::sqrt(circumradius * circumradius + plane_drop * plane_drop);
  *root_hold = -center;  // sphere center lands at the origin
  return d_target + marker_depth;
}

DemoPath make_demo_path(const regrasp::KinematicChain& chain,
                        const regrasp::Vec3& root_hold) {
  DemoPath path;
  const double dt = 1.0 / 30.0;
  auto ease = [](double s) {
    return 0.5 * (1.0 - std::cos(std::numbers::pi * s));
  };
  for (int t = 0; t < 180; ++t) {
    regrasp::Vec3 root = root_hold;
    double flex = 1.0;
    if (t < 40) {
      root.z() += 0.08 * (1.0 - ease(t / 39.0));
      flex = 0.15;
    } else if (t < 120) {
      flex = 0.15 + 0.85 * ease((t - 40) / 79.0);
    }
    path.truth.push_back(demo_pose(chain, root, flex));
    path.timestamps.push_back(t * dt);
  }
  return path;
}

// --- noisy contact fixture ---------------------------------------------------
//
// 200 frames, three fingers. Frames 0..139 move smoothly with strictly
// positive acceleration and sub-limit speed (the imputation gate opens
// there); from frame 140 the fingertip sweeps at 2 m/s, beyond the velocity
// gate, so the gate is closed. Single-frame distance flips are injected in
// both regions; only the open-gate ones are removable.

void write_noisy_contact_fixture(const std::filesystem::path& path) {
  const int frames = 200;
  const double dt = 1.0 / 30.0;
  std::mt19937 rng(2027);

  std::ofstream out(path);
  out << "# regrasp contact-fixture v1\n";
  out << "# fingers thumb index middle\n";
  out << "# columns t (d x y z) per finger\n";

  const double omega = 2.0 * std::numbers::pi * 0.5;
  const double amp = 0.01;
  const double accel = 0.12;
  const double fast = 2.0;  // [m/s] past the default v_max
  const double t_stop = 139 * dt;

  // per finger: distance profile phases and flip frames
  struct FingerPlan {
    double base_far, base_near;
    int contact_from, contact_to;  // frames in contact (moving region)
    std::vector<int> flips;
  };
  std::vector<FingerPlan> plans = {
      {0.008, 0.001, 20, 139, {}},
      {0.009, 0.0012, 35, 139, {}},
      {0.0085, 0.0011, 50, 139, {}},
  };
  std::uniform_int_distribution<int> moving_flip(60, 130);
  std::uniform_int_distribution<int> still_flip(146, 195);
  for (auto& plan : plans) {
    std::vector<int> picked;
    while (picked.size() < 10) {
      const int f = moving_flip(rng);
      bool ok = f > plan.contact_from + 2;
      for (int p : picked) ok = ok && std::abs(p - f) > 2;
      if (ok) picked.push_back(f);
    }
    while (picked.size() < 14) {
      const int f = still_flip(rng);
      bool ok = true;
      for (int p : picked) ok = ok && std::abs(p - f) > 2;
      if (ok) picked.push_back(f);
    }
    plan.flips = picked;
  }

  char buf[64];
  for (int t = 0; t < frames; ++t) {
    const double tt = t * dt;
    const double tm = std::min(tt, t_stop);
    out << regrasp::fmt_double(tt);
    for (std::size_t f = 0; f < plans.size(); ++f) {
      const auto& plan = plans[f];
      // smooth sub-limit motion, then a fast sweep past the velocity gate
      double x = amp * std::sin(omega * tm) + 0.5 * accel * tm * tm +
                 0.05 * static_cast<double>(f);
      if (tt > t_stop) x += fast * (tt - t_stop);
      double d = (t >= plan.contact_from && t <= plan.contact_to)
                     ? plan.base_near
                     : plan.base_far;
      if (t > 139) d = plan.base_near;  // fast region stays in contact
      for (int flip : plan.flips)
        if (flip == t) d = d < 0.004 ? 0.007 : 0.001;  // cross both thresholds
      std::snprintf(buf, sizeof(buf), " %.9f %.9f %.9f %.9f", d, x,
                    0.04 * static_cast<double>(f), 0.0);
      out << buf;
    }
    out << "\n";
  }
}

json make_demo_config() {
  return json{
      {"chain", "synth3_chain.json"},
      {"mesh", "icosphere.obj"},
      {"human_trajectory", "demo_human.traj"},
      {"output_dir", "../out/demo"},
      {"scale", 10.0 / 9.0},
      {"seed", 7},
      {"jobs", 2},
      {"retarget",
       {{"alpha", 0.05},
        {"lambda", 0.1},
        {"gamma", 0.5},
        {"window", 4},
        {"dt", 1.0 / 30.0},
        {"budget", 2000},
        {"polish_iters", 60}}},
      {"contact",
       {{"dis_min", 0.001},
        {"dis_max", 0.008},
        {"delta_contact_map", 0.002},
        {"beta1", -5.0}}},
      {"refine",
       {{"w_pen", 100.0},
        {"w_align", 0.0},
        {"w_spen", 10.0},
        {"w_joints", 0.3},
        {"delta_spen", 0.002},
        {"max_iters_per_finger", 80},
        {"outer_rounds", 2}}},
      {"metrics", {{"cd_mode", "bidirectional"}, {"kl_bins", 50}}},
  };
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(out_dir);

  {
    std::ofstream out(out_dir / "synth3_chain.json");
    out << make_synth3_chain().dump(2) << "\n";
  }
  const auto chain = regrasp::load_chain(out_dir / "synth3_chain.json");
  std::cout << "synth3: " << chain.dof() << " dof, "
            << chain.keypoint_count() << " keypoints, "
            << chain.surface_sample_count() << " surface samples\n";

  const double scale = 10.0 / 9.0;
  regrasp::Vec3 root_hold;
  const double radius_eff = solve_demo_sphere(chain, 0.0025, 0.022, &root_hold);
  // Authored at 9/10 of the effective size; the pipeline's 10/9 ingestion
  // scale brings it back.
  write_icosphere_obj(out_dir / "icosphere.obj", radius_eff / scale, 4);
  std::cout << "icosphere: effective radius " << radius_eff << " m\n";

  const auto mesh =
      regrasp::load_mesh(out_dir / "icosphere.obj").scaled(scale);
  const DemoPath demo = make_demo_path(chain, root_hold);
  std::vector<regrasp::HumanFrame> human;
  for (std::size_t t = 0; t < demo.truth.size(); ++t) {
    regrasp::HumanFrame f;
    f.timestamp = demo.timestamps[t];
    for (const auto& kp : chain.keypoints(demo.truth[t]))
      f.keypoints.push_back(kp / scale);
    human.push_back(std::move(f));
  }
  regrasp::write_human_trajectory(out_dir / "demo_human.traj", human);
  std::cout << "demo trajectory: " << human.size() << " frames, hold depth "
            << deepest_penetration(chain, mesh, demo.truth.back()) << " m\n";

  write_noisy_contact_fixture(out_dir / "noisy_contact.trace");

  {
    std::ofstream out(out_dir / "demo_config.json");
    out << make_demo_config().dump(2) << "\n";
  }
  return 0;
}
