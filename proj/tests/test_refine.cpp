#include <catch2/catch.hpp>

#include <random>

#include "regrasp/primitives.hpp"
#include "regrasp/refine.hpp"

using namespace regrasp;

namespace {

const std::filesystem::path kDataDir = REGRASP_DATA_DIR;

const KinematicChain& synth3() {
  static const KinematicChain chain =
      load_chain(kDataDir / "synth3_chain.json");
  return chain;
}

// one-link chain carrying controlled surface samples
KinematicChain probe_chain(const std::vector<SurfaceSample>& samples,
                           Finger finger = Finger::Thumb) {
  std::vector<JointSpec> joints = {
      {"j", "base", Vec3::UnitZ(), JointKind::Revolute, -1.0, 1.0, 0.0}};
  std::vector<LinkFrame> links(2);
  links[0].name = "base";
  links[1].name = "probe";
  links[1].parent_joint = "j";
  links[1].finger = finger;
  links[1].samples = samples;
  ChainLoadOptions opts;
  opts.allow_nonstandard = true;
  opts.expected_dof = 1;
  opts.expected_keypoints = 0;
  return KinematicChain::from_parts(joints, links, {}, opts);
}

JointVector grasp_pose(const KinematicChain& chain, double mcp, double pip,
                       double dip) {
  JointVector q = JointVector::Zero(chain.dof());
  for (Finger f : {Finger::Thumb, Finger::Index, Finger::Middle}) {
    const auto& d = chain.finger_dof_indices(f);
    q[d[1]] = mcp;
    q[d[2]] = pip;
    q[d[3]] = dip;
  }
  return q;
}

}  // namespace

TEST_CASE("e_dis: hand-computed and brute-force values", "[refine]") {
  const auto& chain = synth3();
  const JointVector q = JointVector::Zero(chain.dof());
  const auto world = chain.forward_kinematics(q);
  const auto thumb = chain.surface_points(world, Finger::Thumb);

  std::vector<ContactTarget> targets;
  for (int i = 0; i < 4; ++i) {
    ContactTarget t;
    t.hand_point = thumb[i].global_index;
    t.anchor = thumb[i].point;
    targets.push_back(t);
  }
  CHECK(e_dis(chain, q, targets) == 0.0);
  CHECK(e_dis(chain, q, {}) == 0.0);

  targets[0].anchor += Vec3(0.0, 0.0, 0.002);
  CHECK(e_dis(chain, q, targets) == Approx(4e-6).epsilon(1e-9));

  // random anchors match an independent loop
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& t : targets) t.anchor = Vec3(u(rng), u(rng), u(rng));
  double expect = 0.0;
  for (const auto& t : targets) {
    for (const auto& s : thumb)
      if (s.global_index == t.hand_point)
        expect += (s.point - t.anchor).squaredNorm();
  }
  CHECK(e_dis(chain, q, targets) == Approx(expect).epsilon(1e-12));
}

TEST_CASE("e_pen: hinge on signed distance", "[refine]") {
  RefineConfig cfg;

  // hand far from the object
  const auto& chain = synth3();
  const auto far_mesh = make_box_mesh(Vec3(0.01, 0.01, 0.01), Vec3(0, 0, 5.0));
  CHECK(e_pen(chain, JointVector::Zero(chain.dof()), far_mesh, cfg) == 0.0);

  // single sample 3 mm inside a cube, clearance 0 -> 9e-6
  const auto probe = probe_chain({{Vec3::Zero(), Vec3::UnitZ()}});
  const auto cube = make_box_mesh(Vec3(0.003, 0.003, 0.003));
  JointVector q0 = JointVector::Zero(1);
  CHECK(e_pen(probe, q0, cube, cfg) == Approx(9e-6).epsilon(1e-9));

  // posed hand intersecting the sphere equals the brute-force per-point sum
  const auto sphere = make_icosphere_mesh(0.04, 2, Vec3(0.10, 0.0, -0.045));
  const JointVector q = grasp_pose(chain, 0.9, 0.6, 0.4);
  double expect = 0.0;
  for (const auto& s : chain.surface_points(q)) {
    const double hinge =
        std::max(0.0, cfg.pen_clearance - sphere.signed_distance(s.point));
    expect += hinge * hinge;
  }
  REQUIRE(expect > 0.0);  // the fixture must actually intersect
  CHECK(e_pen(chain, q, sphere, cfg) == Approx(expect).epsilon(1e-12));
}

TEST_CASE("e_align: facing convention and literal mode", "[refine]") {
  const auto probe = probe_chain({{Vec3::Zero(), Vec3::UnitZ()}});
  const JointVector q = JointVector::Zero(1);
  ContactTarget t;
  t.hand_point = 0;

  // flush contact: hand normal up, object normal down -> zero energy
  t.object_normal = -Vec3::UnitZ();
  CHECK(e_align(probe, q, {t}) == Approx(0.0).margin(1e-12));

  t.object_normal = Vec3::UnitX();
  CHECK(e_align(probe, q, {t}) == Approx(1.0).margin(1e-12));

  t.object_normal = Vec3::UnitZ();
  CHECK(e_align(probe, q, {t}) == Approx(4.0).margin(1e-12));

  // literal mode keeps the printed sign
  CHECK(e_align(probe, q, {t}, true) == Approx(0.0).margin(1e-12));
}

TEST_CASE("e_spen: pair distances under the threshold", "[refine]") {
  RefineConfig cfg;
  cfg.delta_spen = 0.002;

  // synth3 at rest: fingers spread, no pairs under 2 mm
  const auto& chain = synth3();
  CHECK(e_spen(chain, JointVector::Zero(chain.dof()), Finger::Index, cfg) ==
        0.0);

  // two samples 1 mm apart on different fingers -> linear hinge 1e-3
  std::vector<JointSpec> joints = {
      {"j1", "base", Vec3::UnitZ(), JointKind::Revolute, -1, 1, 0},
      {"j2", "base", Vec3::UnitZ(), JointKind::Revolute, -1, 1, 0}};
  std::vector<LinkFrame> links(3);
  links[0].name = "base";
  links[1].name = "a";
  links[1].parent_joint = "j1";
  links[1].finger = Finger::Thumb;
  links[1].samples = {{Vec3::Zero(), Vec3::UnitZ()}};
  links[2].name = "b";
  links[2].parent_joint = "j2";
  links[2].finger = Finger::Index;
  links[2].samples = {{Vec3(0.001, 0, 0), Vec3::UnitZ()}};
  ChainLoadOptions opts;
  opts.allow_nonstandard = true;
  opts.expected_dof = 2;
  opts.expected_keypoints = 0;
  const auto pair = KinematicChain::from_parts(joints, links, {}, opts);
  CHECK(e_spen(pair, JointVector::Zero(2), Finger::Thumb, cfg) ==
        Approx(1e-3).epsilon(1e-9));

  // crossed index/middle matches the brute-force double loop
  JointVector crossed = JointVector::Zero(chain.dof());
  crossed[chain.finger_dof_indices(Finger::Index)[0]] = -0.35;
  crossed[chain.finger_dof_indices(Finger::Middle)[0]] = 0.35;
  const auto own = chain.surface_points(crossed, Finger::Index);
  const auto all = chain.surface_points(crossed);
  double expect = 0.0;
  for (const auto& p : own)
    for (const auto& o : all) {
      if (o.finger == Finger::Index) continue;
      expect += std::max(cfg.delta_spen - (p.point - o.point).norm(), 0.0);
    }
  REQUIRE(expect > 0.0);
  CHECK(e_spen(chain, crossed, Finger::Index, cfg) ==
        Approx(expect).epsilon(1e-12));
}

TEST_CASE("e_joints: articulated deviation only", "[refine]") {
  const auto& chain = synth3();
  JointVector q = JointVector::Zero(chain.dof());
  const JointVector q0 = q;
  CHECK(e_joints(q, q0, chain.root_dof()) == 0.0);

  q[7] += 0.1;
  CHECK(e_joints(q, q0, chain.root_dof()) == Approx(0.01).epsilon(1e-12));

  // root motion is excluded
  q[0] += 5.0;
  q[4] += 1.0;
  CHECK(e_joints(q, q0, chain.root_dof()) == Approx(0.01).epsilon(1e-12));

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  JointVector qa(chain.dof()), qb(chain.dof());
  for (int i = 0; i < chain.dof(); ++i) {
    qa[i] = u(rng);
    qb[i] = u(rng);
  }
  double expect = 0.0;
  for (int i = chain.root_dof(); i < chain.dof(); ++i)
    expect += (qa[i] - qb[i]) * (qa[i] - qb[i]);
  CHECK(e_joints(qa, qb, chain.root_dof()) == Approx(expect).epsilon(1e-12));

  CHECK_THROWS(e_joints(JointVector::Zero(3), JointVector::Zero(4)));
}

TEST_CASE("optimize_finger: stationary at an optimum", "[refine]") {
  const auto& chain = synth3();
  const JointVector q = JointVector::Zero(chain.dof());
  const auto world = chain.forward_kinematics(q);
  const auto mesh = make_box_mesh(Vec3(0.01, 0.01, 0.01), Vec3(0, 0, 5.0));

  std::vector<ContactTarget> targets;
  for (const auto& s : chain.surface_points(world, Finger::Thumb)) {
    ContactTarget t;
    t.hand_point = s.global_index;
    t.anchor = s.point;
    t.object_normal = -s.normal;  // flush under the facing convention
    targets.push_back(t);
    if (targets.size() == 6) break;
  }
  RefineConfig cfg;
  const JointVector out =
      optimize_finger(chain, q, Finger::Thumb, targets, mesh, cfg, q);
  CHECK((out - q).norm() == 0.0);
}

TEST_CASE("optimize_finger: descends E_dis and masks other DoF", "[refine]") {
  const auto& chain = synth3();
  const JointVector q = JointVector::Zero(chain.dof());
  const auto world = chain.forward_kinematics(q);
  const auto mesh = make_box_mesh(Vec3(0.01, 0.01, 0.01), Vec3(0, 0, 5.0));

  std::vector<ContactTarget> targets;
  for (const auto& s : chain.surface_points(world, Finger::Thumb)) {
    ContactTarget t;
    t.hand_point = s.global_index;
    t.anchor = s.point + Vec3(0, 0, -0.005);  // anchors 5 mm away
    t.object_normal = -s.normal;
    targets.push_back(t);
    if (targets.size() == 8) break;
  }
  RefineConfig cfg;
  std::vector<double> trace;
  const JointVector out =
      optimize_finger(chain, q, Finger::Thumb, targets, mesh, cfg, q, &trace);

  CHECK(e_dis(chain, out, targets) < e_dis(chain, q, targets));

  // monotone accepted energies
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1]);

  // every non-thumb DoF is bitwise unchanged
  const auto& dofs = chain.finger_dof_indices(Finger::Thumb);
  for (int i = 0; i < chain.dof(); ++i) {
    if (std::find(dofs.begin(), dofs.end(), i) != dofs.end()) continue;
    CHECK(out[i] == q[i]);
  }

  // joint limits respected
  for (int i : dofs) {
    CHECK(out[i] >= chain.joints()[i].lower);
    CHECK(out[i] <= chain.joints()[i].upper);
  }

  // empty targets: caller-skip semantics, pose returned untouched
  const JointVector same =
      optimize_finger(chain, q, Finger::Ring, {}, mesh, cfg, q);
  CHECK((same - q).norm() == 0.0);
}

TEST_CASE("optimize_finger: resolves self-penetration", "[refine]") {
  const auto& chain = synth3();
  const auto mesh = make_box_mesh(Vec3(0.01, 0.01, 0.01), Vec3(0, 0, 5.0));

  JointVector crossed = JointVector::Zero(chain.dof());
  crossed[chain.finger_dof_indices(Finger::Index)[0]] = -0.2;
  crossed[chain.finger_dof_indices(Finger::Middle)[0]] = 0.35;

  RefineConfig cfg;
  REQUIRE(e_spen(chain, crossed, Finger::Index, cfg) > 1e-4);

  // anchor the index pads back at their uncrossed positions
  JointVector rest = JointVector::Zero(chain.dof());
  const auto rest_world = chain.forward_kinematics(rest);
  std::vector<ContactTarget> targets;
  for (const auto& s : chain.surface_points(rest_world, Finger::Index)) {
    ContactTarget t;
    t.hand_point = s.global_index;
    t.anchor = s.point;
    t.object_normal = -s.normal;
    targets.push_back(t);
  }
  const JointVector out = optimize_finger(chain, crossed, Finger::Index,
                                          targets, mesh, cfg, crossed);
  CHECK(e_spen(chain, out, Finger::Index, cfg) <
        e_spen(chain, crossed, Finger::Index, cfg));
  CHECK(e_spen(chain, out, Finger::Index, cfg) < 1e-12);
}

TEST_CASE("finger_term_gradient: matches finite differences of the public "
          "terms",
          "[refine]") {
  const auto& chain = synth3();
  const auto sphere = make_icosphere_mesh(0.04, 2, Vec3(0.10, 0.0, -0.042));
  RefineConfig cfg;
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> u(-0.05, 0.05);

  for (int trial = 0; trial < 5; ++trial) {
    JointVector q = grasp_pose(chain, 0.8, 0.5, 0.3);
    for (int i = chain.root_dof(); i < chain.dof(); ++i) q[i] += u(rng);
    q = chain.clamp(q);
    const JointVector q_init = JointVector::Zero(chain.dof());

    const Finger finger = Finger::Middle;
    const auto world = chain.forward_kinematics(q);
    std::vector<ContactTarget> targets;
    for (const auto& s : chain.surface_points(world, finger)) {
      const auto res = sphere.nearest_point(s.point);
      if (res.distance < 0.006) {
        ContactTarget t;
        t.hand_point = s.global_index;
        t.anchor = sphere.vertices()[res.vertex_index];
        t.object_normal = sphere.vertex_normals()[res.vertex_index];
        targets.push_back(t);
      }
    }
    REQUIRE(!targets.empty());

    const auto& dofs = chain.finger_dof_indices(finger);
    const double h = 1e-5;
    auto public_term = [&](const JointVector& qq, EnergyTerm term) {
      switch (term) {
        case EnergyTerm::Dis: return e_dis(chain, qq, targets);
        case EnergyTerm::Pen: return e_pen(chain, qq, sphere, cfg);
        case EnergyTerm::Align:
          return e_align(chain, qq, targets, cfg.literal_align);
        case EnergyTerm::Spen: return e_spen(chain, qq, finger, cfg);
        case EnergyTerm::Joints:
          return e_joints(qq, q_init, chain.root_dof());
      }
      return 0.0;
    };

    for (EnergyTerm term : {EnergyTerm::Dis, EnergyTerm::Pen,
                            EnergyTerm::Align, EnergyTerm::Spen,
                            EnergyTerm::Joints}) {
      const Eigen::VectorXd got = finger_term_gradient(
          chain, q, finger, term, targets, sphere, q_init, cfg, h);
      Eigen::VectorXd expect(dofs.size());
      for (std::size_t k = 0; k < dofs.size(); ++k) {
        JointVector qp = q, qm = q;
        qp[dofs[k]] += h;
        qm[dofs[k]] -= h;
        expect[k] =
            (public_term(qp, term) - public_term(qm, term)) / (2.0 * h);
      }
      const double scale = std::max(expect.cwiseAbs().maxCoeff(), 1e-6);
      INFO("term " << static_cast<int>(term));
      CHECK((got - expect).cwiseAbs().maxCoeff() / scale < 1e-4);
    }
  }
}

TEST_CASE("sequential_refine: passthrough, descent, ordering", "[refine]") {
  const auto& chain = synth3();
  RefineConfig cfg;
  cfg.max_iters_per_finger = 60;

  // posed grasp: sphere placed against the flexed middle and index tips
  const JointVector q = grasp_pose(chain, 0.9, 0.6, 0.4);
  const auto world = chain.forward_kinematics(q);
  const Vec3 tip = chain.fingertip_position(world, Finger::Middle);
  const double radius = 0.04;
  const auto sphere =
      make_icosphere_mesh(radius, 3, tip + Vec3(0, 0, -(radius - 0.003)));

  ContactConfig ccfg;
  ccfg.dis_min = 0.004;
  ccfg.dis_max = 0.007;
  ccfg.delta_contact_map = 0.004;
  const std::vector<JointVector> seq = {JointVector::Zero(chain.dof()), q};
  const auto traces = build_traces(chain, seq, sphere);
  ContactTimeline timeline;
  timeline.states = dual_threshold(traces, ccfg);
  for (std::size_t t = 0; t < seq.size(); ++t)
    timeline.maps.push_back(
        build_contact_map(chain, seq[t], sphere, timeline.states[t], ccfg));
  REQUIRE(timeline.states[1][static_cast<int>(Finger::Middle)]);
  REQUIRE(!timeline.maps[1].fingers[static_cast<int>(Finger::Middle)].empty());

  RefineReport report;
  const auto refined =
      sequential_refine(chain, seq, timeline, sphere, cfg, &report);

  // frame 0 has no contacts: bitwise identical
  CHECK((refined[0] - seq[0]).norm() == 0.0);
  CHECK_FALSE(report[0].touched);

  // frame 1: monotone traces, penetration reduced
  REQUIRE(report[1].touched);
  for (const auto& rec : report[1].fingers) {
    REQUIRE(rec.trace.size() >= 1);
    for (std::size_t i = 1; i < rec.trace.size(); ++i)
      CHECK(rec.trace[i] <= rec.trace[i - 1]);
    CHECK(rec.after.total(cfg.weights) <= rec.before.total(cfg.weights));
  }
  CHECK(e_pen(chain, refined[1], sphere, cfg) <
        e_pen(chain, q, sphere, cfg));

  // fingers without contact are never modified
  for (Finger f : {Finger::Thumb, Finger::Ring, Finger::Pinky}) {
    if (timeline.states[1][static_cast<int>(f)]) continue;
    for (int d : chain.finger_dof_indices(f)) CHECK(refined[1][d] == q[d]);
  }

  // reversed finger order: a different but still monotone result
  RefineConfig rev = cfg;
  rev.finger_order = {Finger::Pinky, Finger::Ring, Finger::Middle,
                      Finger::Index, Finger::Thumb};
  RefineReport rev_report;
  const auto refined_rev =
      sequential_refine(chain, seq, timeline, sphere, rev, &rev_report);
  for (const auto& rec : rev_report[1].fingers)
    for (std::size_t i = 1; i < rec.trace.size(); ++i)
      CHECK(rec.trace[i] <= rec.trace[i - 1]);

  // timeline size mismatch
  ContactTimeline broken = timeline;
  broken.states.pop_back();
  CHECK_THROWS(sequential_refine(chain, seq, broken, sphere, cfg));
}
