#pragma once

#include <cstdint>

#include "gaitmm/silhouette.hpp"

namespace gaitmm {

// Procedural articulated walker: torso, head, two two-segment legs and two arms driven by
// sinusoidal joint angles. Lengths are in units of standing body height.
struct WalkerSpec {
  std::uint64_t subject_seed = 0;
  double thigh = 0.25;
  double shin = 0.25;
  double torso = 0.30;
  double head_radius = 0.06;
  double upper_arm = 0.17;
  double forearm = 0.16;
  double shoulder_width = 0.22;
  double hip_width = 0.15;
  double torso_depth = 0.13;
  double limb_radius = 0.032;
  double stride_frequency = 1.0 / 15.0;  // gait cycles per frame
  double stride_amplitude = 0.4;         // hip swing, radians
  double knee_amplitude = 0.7;
  double arm_amplitude = 0.35;
  double sway_amplitude = 0.015;
  double lean = 0.05;
  bool bag = false;
  bool coat = false;

  // Identity parameters drawn deterministically from the subject seed.
  static WalkerSpec for_subject(std::uint64_t subject_seed);
  WalkerSpec with_condition(Condition c) const;
};

struct RenderOptions {
  int height = 128;
  int width = 88;
  double pixels_per_unit = 96.0;
};

// Renders a binary (0/255) silhouette sequence seen from view_deg (90 = side view, 0 = frontal).
// phase_seed sets the starting phase and small per-recording speed/amplitude jitter. Deterministic.
SilhouetteSequence generate_walker_sequence(const WalkerSpec& spec, int view_deg, int num_frames,
                                            std::uint64_t phase_seed, const RenderOptions& render = {});

}  // namespace gaitmm
