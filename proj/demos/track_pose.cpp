// Minimal library walkthrough: pose the bundled hand, synthesize the human
// keypoints it produces, then recover the pose with the global search and
// report the keypoint error.

#include <cstdio>
#include <random>

#include "regrasp/retarget.hpp"

using namespace regrasp;

int main(int argc, char** argv) {
  const char* chain_path = argc > 1 ? argv[1] : "data/synth3_chain.json";
  const auto chain = load_chain(chain_path);
  std::printf("chain '%s': %d dof, %d keypoints\n", chain.name().c_str(),
              chain.dof(), chain.keypoint_count());

  // an arbitrary reachable pose
  JointVector target = chain.rest_pose();
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (Finger f : {Finger::Thumb, Finger::Index, Finger::Middle})
    for (int d : chain.finger_dof_indices(f))
      target[d] = chain.joints()[d].lower +
                  u(rng) * (chain.joints()[d].upper - chain.joints()[d].lower);
  target[2] = 0.04;

  HumanFrame frame;
  frame.timestamp = 0.0;
  frame.keypoints = chain.keypoints(target);

  RetargetConfig cfg;
  cfg.seed = 42;
  cfg.search_budget = 3000;
  const auto solved = retarget_sequence(chain, {frame}, cfg);

  const auto got = chain.keypoints(solved[0]);
  double err = 0.0;
  for (int i = 0; i < chain.keypoint_count(); ++i)
    err += (got[i] - frame.keypoints[i]).norm();
  std::printf("mean keypoint error after retargeting: %.3f mm\n",
              1000.0 * err / chain.keypoint_count());
  return 0;
}
