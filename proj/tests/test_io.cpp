#include <catch2/catch.hpp>

#include <random>

#include "regrasp/trajectory_io.hpp"
#include "support/tempdir.hpp"

using namespace regrasp;

TEST_CASE("sequence files: bit-exact round trip", "[io]") {
  testsupport::TempDir tmp;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);

  GraspSequence seq;
  seq.provenance = GraspSequence::Provenance::Refined;
  seq.config_digest = "00ff00ff00ff00ff";
  for (int t = 0; t < 5; ++t) {
    seq.timestamps.push_back(t / 30.0);
    JointVector q(28);
    for (int i = 0; i < 28; ++i) q[i] = u(rng);
    seq.poses.push_back(q);
    seq.objectives.push_back(u(rng));
  }
  std::vector<EnergyMetadataLine> energies(2);
  energies[0].frame = 3;
  energies[0].finger = Finger::Thumb;
  energies[0].after = {1e-6, 2e-7, 0.5, 0.0, 1e-3};
  energies[0].total_before = 0.125;
  energies[0].total_after = 0.0625;
  energies[1].frame = 4;
  energies[1].finger = Finger::Middle;

  const auto path = tmp.path() / "seq.qtraj";
  write_sequence(path, seq, energies);

  std::vector<EnergyMetadataLine> read_energies;
  const GraspSequence back = read_sequence(path, &read_energies);
  CHECK(back.provenance == GraspSequence::Provenance::Refined);
  CHECK(back.config_digest == seq.config_digest);
  REQUIRE(back.poses.size() == seq.poses.size());
  for (std::size_t t = 0; t < seq.poses.size(); ++t) {
    CHECK(back.timestamps[t] == seq.timestamps[t]);
    CHECK((back.poses[t] - seq.poses[t]).norm() == 0.0);
    CHECK(back.objectives[t] == seq.objectives[t]);
  }
  REQUIRE(read_energies.size() == 2);
  CHECK(read_energies[0].frame == 3);
  CHECK(read_energies[0].finger == Finger::Thumb);
  CHECK(read_energies[0].after.align == 0.5);
  CHECK(read_energies[0].total_after == 0.0625);
}

TEST_CASE("sequence files: malformed records name the line", "[io]") {
  testsupport::TempDir tmp;
  const auto path = tmp.write("bad.qtraj",
                              "# regrasp joint-trajectory v1\n"
                              "0.0 1.0 2.0 0.5\n"
                              "0.033 1.0 oops 0.5\n");
  CHECK_THROWS_WITH(read_sequence(path), Catch::Contains(":3"));

  const auto short_line = tmp.write("short.qtraj",
                                    "# regrasp joint-trajectory v1\n"
                                    "0.0 1.0 2.0 0.5\n"
                                    "0.033 1.0 0.5\n");
  CHECK_THROWS_WITH(read_sequence(short_line), Catch::Contains(":3"));

  CHECK_THROWS(read_sequence(tmp.write("empty.qtraj", "# header only\n")));
}

TEST_CASE("human trajectory: round trip and validation", "[io]") {
  testsupport::TempDir tmp;
  std::vector<HumanFrame> frames(3);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    frames[t].timestamp = t / 30.0;
    for (int i = 0; i < 13; ++i)
      frames[t].keypoints.emplace_back(u(rng), u(rng), u(rng));
  }
  const auto path = tmp.path() / "human.traj";
  write_human_trajectory(path, frames);
  const auto back = read_human_trajectory(path);
  REQUIRE(back.size() == 3);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 13; ++i)
      CHECK((back[t].keypoints[i] - frames[t].keypoints[i]).norm() == 0.0);

  CHECK_THROWS_WITH(
      read_human_trajectory(tmp.write("short.traj", "0.0 1 2 3\n")),
      Catch::Contains("expected 40 fields"));

  // non-increasing timestamps rejected
  std::vector<HumanFrame> bad = frames;
  bad[2].timestamp = bad[1].timestamp;
  const auto bad_path = tmp.path() / "bad.traj";
  write_human_trajectory(bad_path, bad);
  CHECK_THROWS_WITH(read_human_trajectory(bad_path),
                    Catch::Contains("increasing"));
}

TEST_CASE("contact timeline: round trip and corruption", "[io]") {
  testsupport::TempDir tmp;
  ContactTimeline timeline;
  std::vector<double> ts;
  for (int t = 0; t < 4; ++t) {
    ts.push_back(t / 30.0);
    ContactState st{};
    st[0] = t >= 2;
    ContactMap map;
    if (t >= 2)
      map.fingers[0] = {{12, 345, 0.0012}, {13, 340, 0.0034}};
    timeline.states.push_back(st);
    timeline.maps.push_back(map);
  }
  const auto path = tmp.path() / "c.timeline";
  write_contact_timeline(path, timeline, ts, "abcdabcdabcdabcd");

  std::vector<double> ts_back;
  std::string digest;
  const auto back = read_contact_timeline(path, &ts_back, &digest);
  CHECK(digest == "abcdabcdabcdabcd");
  REQUIRE(back.states.size() == 4);
  CHECK(back.states[2][0]);
  CHECK_FALSE(back.states[1][0]);
  REQUIRE(back.maps[2].fingers[0].size() == 2);
  CHECK(back.maps[2].fingers[0][1].hand_point == 13);
  CHECK(back.maps[2].fingers[0][1].vertex == 340);
  CHECK(back.maps[2].fingers[0][1].distance == 0.0034);
  for (int t = 0; t < 4; ++t) CHECK(ts_back[t] == ts[t]);

  const auto corrupt = tmp.write("corrupt.timeline",
                                 "# regrasp contact-timeline v1\n"
                                 "0 0.0 0 0 0 0 0 0\n"
                                 "1 0.033 1 0 0 0 0 1 thumb:banana\n");
  CHECK_THROWS_WITH(read_contact_timeline(corrupt), Catch::Contains(":3"));

  const auto gap = tmp.write("gap.timeline",
                             "# regrasp contact-timeline v1\n"
                             "0 0.0 0 0 0 0 0 0\n"
                             "2 0.066 0 0 0 0 0 0\n");
  CHECK_THROWS_WITH(read_contact_timeline(gap), Catch::Contains("consecutive"));
}

TEST_CASE("file digests are content digests", "[io]") {
  testsupport::TempDir tmp;
  const auto a = tmp.write("a.txt", "hello regrasp\n");
  const auto b = tmp.write("b.txt", "hello regrasp\n");
  const auto c = tmp.write("c.txt", "hello regrasp!\n");
  CHECK(file_digest(a) == file_digest(b));
  CHECK(file_digest(a) != file_digest(c));
  CHECK(file_digest(a).size() == 16);
}
