#include <catch2/catch.hpp>

#include <random>

#include "regrasp/contact.hpp"
#include "regrasp/primitives.hpp"

using namespace regrasp;

namespace {

const std::filesystem::path kDataDir = REGRASP_DATA_DIR;

HandTraces single_finger_trace(const std::vector<double>& distances) {
  HandTraces traces;
  traces[0].valid = true;
  traces[0].distances = distances;
  traces[0].positions.assign(distances.size(), Vec3::Zero());
  return traces;
}

// Independent statement of the dual-threshold rule, kept deliberately
// separate from the library implementation.
std::vector<bool> hysteresis_oracle(const std::vector<double>& d, double lo,
                                    double hi) {
  std::vector<bool> out;
  bool prev = false;
  for (double v : d) {
    bool s;
    if (v < lo)
      s = true;
    else if (v > hi)
      s = false;
    else
      s = prev;
    out.push_back(s);
    prev = s;
  }
  return out;
}

}  // namespace

TEST_CASE("dual_threshold: hand-traced cases", "[contact]") {
  ContactConfig cfg;
  cfg.dis_min = 0.002;
  cfg.dis_max = 0.005;

  const auto states =
      dual_threshold(single_finger_trace({0.001, 0.003, 0.006}), cfg);
  REQUIRE(states.size() == 3);
  CHECK(states[0][0]);
  CHECK(states[1][0]);  // dead band holds the previous state
  CHECK_FALSE(states[2][0]);

  const auto all_far =
      dual_threshold(single_finger_trace({0.01, 0.02, 0.007}), cfg);
  for (const auto& s : all_far) CHECK_FALSE(s[0]);

  const auto all_near =
      dual_threshold(single_finger_trace({0.001, 0.0005, 0.0019}), cfg);
  for (const auto& s : all_near) CHECK(s[0]);

  // first frame inside the dead band starts out of contact
  const auto dead =
      dual_threshold(single_finger_trace({0.003, 0.004, 0.003}), cfg);
  for (const auto& s : dead) CHECK_FALSE(s[0]);

  // fingers without a fingertip marker never contact
  CHECK_FALSE(dual_threshold(single_finger_trace({0.001}), cfg)[0][3]);
}

TEST_CASE("dual_threshold: exhaustive 3-frame automaton", "[contact]") {
  ContactConfig cfg;
  cfg.dis_min = 0.002;
  cfg.dis_max = 0.005;
  const double levels[3] = {0.001, 0.003, 0.006};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        const std::vector<double> trace = {levels[a], levels[b], levels[c]};
        const auto got = dual_threshold(single_finger_trace(trace), cfg);
        const auto expect = hysteresis_oracle(trace, cfg.dis_min, cfg.dis_max);
        for (int t = 0; t < 3; ++t) {
          INFO("trace " << a << b << c << " frame " << t);
          CHECK(got[t][0] == expect[t]);
        }
      }
}

TEST_CASE("dual_threshold: monotone under the dead-band ceiling",
          "[contact]") {
  ContactConfig cfg;
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> u(0.0, cfg.dis_max - 1e-9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> trace(30);
    for (auto& d : trace) d = u(rng);
    const auto states = dual_threshold(single_finger_trace(trace), cfg);
    for (std::size_t t = 1; t < states.size(); ++t) {
      if (states[t - 1][0]) CHECK(states[t][0]);  // never true -> false
    }
  }
}

TEST_CASE("velocity_displacement: nominal constants and arithmetic",
          "[contact]") {
  CHECK(velocity_displacement(0.8, 0.8, 1.0 / 30.0) ==
        Approx(0.8 / 30.0).epsilon(1e-12));
  CHECK(velocity_displacement(0.0, 0.0, 0.5) == 0.0);
  CHECK(velocity_displacement(0.4, 1.2, 0.1) == Approx(0.08).epsilon(1e-12));
  CHECK_THROWS(velocity_displacement(0.1, 0.1, 0.0));
}

TEST_CASE("interpolate_contact: truth table at default constants",
          "[contact]") {
  ContactConfig cfg;  // alpha_v=0.6, v_f=0.8, f_c=30, tau_c=0.7
  CHECK(interpolate_contact(true, true, cfg));
  CHECK_FALSE(interpolate_contact(true, false, cfg));
  CHECK_FALSE(interpolate_contact(false, true, cfg));
  CHECK_FALSE(interpolate_contact(false, false, cfg));
}

TEST_CASE("fit_spline: exact cubic recovery", "[contact]") {
  const Vec3 a0(0.1, -0.2, 0.05), a1(1.0, 0.3, -0.4), a2(-2.0, 0.8, 0.1),
      a3(0.5, -1.0, 2.0);
  std::vector<Vec3> pos;
  std::vector<double> ts;
  for (int i = 0; i < 5; ++i) {
    const double u = 0.2 + i * 0.033;
    const double s = u - 0.2;
    pos.push_back(a0 + s * a1 + s * s * a2 + s * s * s * a3);
    ts.push_back(u);
  }
  const auto fit = fit_spline(pos, ts);
  CHECK(fit.residual() < 1e-10);
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(fit.coeff(axis, 0) == Approx(a0[axis]).margin(1e-9));
    CHECK(fit.coeff(axis, 1) == Approx(a1[axis]).margin(1e-7));
    CHECK(fit.coeff(axis, 2) == Approx(a2[axis]).margin(1e-6));
    CHECK(fit.coeff(axis, 3) == Approx(a3[axis]).margin(1e-5));
  }

  // constant positions -> vanishing higher coefficients
  const auto flat =
      fit_spline(std::vector<Vec3>(5, Vec3(0.3, 0.1, -0.2)), ts);
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(flat.coeff(axis, 1) == Approx(0.0).margin(1e-9));
    CHECK(flat.coeff(axis, 2) == Approx(0.0).margin(1e-9));
    CHECK(flat.coeff(axis, 3) == Approx(0.0).margin(1e-9));
  }

  std::vector<double> dup = ts;
  dup[3] = dup[2];
  CHECK_THROWS(fit_spline(pos, dup));
}

TEST_CASE("fit_spline: sine acceleration within 5% at the window center",
          "[contact]") {
  const double omega = 2.0 * M_PI;
  const double dt = 1.0 / 30.0;
  std::vector<Vec3> pos;
  std::vector<double> ts;
  for (int i = -2; i <= 2; ++i) {
    const double t = 0.4 + i * dt;
    pos.push_back(Vec3(std::sin(omega * t), 0.0, 0.0));
    ts.push_back(t);
  }
  const auto fit = fit_spline(pos, ts);
  const double got = fit.acceleration(0.4).x();
  const double analytic = -omega * omega * std::sin(omega * 0.4);
  CHECK(got == Approx(analytic).epsilon(0.05));
}

TEST_CASE("contact_probability: sigmoid cases", "[contact]") {
  CHECK(contact_probability(Vec3(1, 2, 3), Vec3(1, 2, 3), 5.0) ==
        Approx(0.5).margin(1e-12));
  CHECK(contact_probability(Vec3(100, 0, 0), Vec3::Zero(), 5.0) <
        1e-12);
  const Vec3 unit(1.0, 0.0, 0.0);
  CHECK(contact_probability(unit, Vec3::Zero(), 2.0) ==
        Approx(0.11920292202211755).margin(1e-9));
  // literal mode sums components as printed
  CHECK(contact_probability(Vec3(0.5, -0.5, 0.0), Vec3::Zero(), 2.0, true) ==
        Approx(0.5).margin(1e-12));
}

namespace {

struct ImputeFixture {
  std::vector<ContactState> raw;
  HandTraces traces;
  ObjectMotion obj;
  std::vector<double> ts;
};

ImputeFixture make_fixture(int frames, bool moving, double speed_scale = 1.0) {
  ImputeFixture fx;
  fx.traces[0].valid = true;
  const double dt = 1.0 / 30.0;
  for (int t = 0; t < frames; ++t) {
    fx.ts.push_back(t * dt);
    ContactState s{};
    s[0] = true;
    fx.raw.push_back(s);
    // quadratic path: nonzero acceleration when moving
    const double x = moving ? speed_scale * 0.5 * 0.8 * (t * dt) * (t * dt)
                            : 0.25;
    fx.traces[0].positions.push_back(Vec3(x, 0.0, 0.0));
    fx.traces[0].distances.push_back(0.001);
  }
  return fx;
}

}  // namespace

TEST_CASE("impute_states: stationary fingertip keeps raw states",
          "[contact]") {
  ContactConfig cfg;
  auto fx = make_fixture(7, false);
  fx.raw[3][0] = false;  // single-frame flicker
  const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg);
  // zero acceleration difference: P_c = 0.5, gate closed, flicker survives
  CHECK_FALSE(out[3][0]);
  for (int t = 0; t < 7; ++t) CHECK(out[t][0] == fx.raw[t][0]);
}

TEST_CASE("impute_states: open gate removes a flicker", "[contact]") {
  ContactConfig cfg;
  cfg.beta1 = -5.0;  // accelerating contact reads as likely
  auto fx = make_fixture(7, true);
  fx.raw[3][0] = false;
  ImputeDiagnostics diag;
  const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg, &diag);
  CHECK(diag.gate_open[3][0]);
  CHECK(out[3][0]);  // interpolate_contact(1, 1) = 1
  CHECK(diag.changed == 1);
}

TEST_CASE("impute_states: velocity gate preserves raw", "[contact]") {
  ContactConfig cfg;
  cfg.beta1 = -5.0;
  // speed grows as 0.8 * speed_scale * t; by mid-window it exceeds v_max
  auto fx = make_fixture(9, true, 40.0);
  fx.raw[5][0] = false;
  ImputeDiagnostics diag;
  const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg, &diag);
  CHECK(diag.speed[5][0] >= cfg.v_max);
  CHECK_FALSE(diag.gate_open[5][0]);
  CHECK_FALSE(out[5][0]);
}

TEST_CASE("impute_states: constant sequence is a fixed point", "[contact]") {
  ContactConfig cfg;
  cfg.beta1 = -5.0;
  for (bool level : {false, true}) {
    auto fx = make_fixture(8, true);
    for (auto& s : fx.raw) s[0] = level;
    const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg);
    for (int t = 0; t < 8; ++t) CHECK(out[t][0] == level);
  }
}

TEST_CASE("impute_states: co-moving object closes the gate", "[contact]") {
  ContactConfig cfg;
  cfg.beta1 = -5.0;
  auto fx = make_fixture(7, true);
  fx.raw[3][0] = false;

  // object follows the hand exactly: acceleration difference is zero,
  // P_c = 0.5 which is not > 0.5, so the raw flicker survives
  fx.obj.positions = fx.traces[0].positions;
  ImputeDiagnostics diag;
  const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg, &diag);
  CHECK(diag.probability[3][0] == Approx(0.5).margin(1e-9));
  CHECK_FALSE(diag.gate_open[3][0]);
  CHECK_FALSE(out[3][0]);

  // a static object against an accelerating hand opens it
  fx.obj.positions.clear();
  const auto out2 = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg);
  CHECK(out2[3][0]);
}

TEST_CASE("impute_states: short sequences pass through", "[contact]") {
  ContactConfig cfg;
  auto fx = make_fixture(4, true);
  fx.raw[2][0] = false;
  const auto out = impute_states(fx.raw, fx.traces, fx.obj, fx.ts, cfg);
  for (int t = 0; t < 4; ++t) CHECK(out[t][0] == fx.raw[t][0]);
}

TEST_CASE("build_contact_map: thumb touching the sphere", "[contact]") {
  const auto chain = load_chain(kDataDir / "synth3_chain.json");
  const auto sphere =
      make_icosphere_mesh(0.04, 3, Vec3(0.030, 0.105, -0.0485));

  ContactConfig cfg;
  const JointVector q = JointVector::Zero(chain.dof());

  ContactState none{};
  const auto empty_map = build_contact_map(chain, q, sphere, none, cfg);
  for (const auto& pairs : empty_map.fingers) CHECK(pairs.empty());

  ContactState state{};
  state[0] = state[1] = state[2] = true;  // thumb, index, middle
  const auto map = build_contact_map(chain, q, sphere, state, cfg);
  CHECK(map.fingers[0].size() >= 1);   // thumb pad sits ~4 mm away
  CHECK(map.fingers[1].empty());       // index is far
  CHECK(map.fingers[2].empty());
  for (const auto& pair : map.fingers[0]) {
    CHECK(pair.distance <= cfg.delta_contact_map);
    CHECK(pair.vertex >= 0);
    CHECK(pair.vertex < static_cast<int>(sphere.vertices().size()));
    CHECK(pair.hand_point >= 0);
    CHECK(pair.hand_point < chain.surface_sample_count());
  }
}

TEST_CASE("build_traces: distances are unsigned and per-finger validity",
          "[contact]") {
  const auto chain = load_chain(kDataDir / "synth3_chain.json");
  const auto sphere = make_icosphere_mesh(0.04, 2, Vec3(0.0, 0.0, -0.08));
  std::vector<JointVector> seq(3, JointVector::Zero(chain.dof()));
  const auto traces = build_traces(chain, seq, sphere);
  CHECK(traces[0].valid);
  CHECK(traces[1].valid);
  CHECK(traces[2].valid);
  CHECK_FALSE(traces[3].valid);
  CHECK_FALSE(traces[4].valid);
  for (int f = 0; f < 3; ++f) {
    REQUIRE(traces[f].positions.size() == 3);
    for (double d : traces[f].distances) CHECK(d >= 0.0);
  }
}
