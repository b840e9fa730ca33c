#include "gaitmm/walker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gaitmm/error.hpp"
#include "gaitmm/rng.hpp"

namespace gaitmm {

WalkerSpec WalkerSpec::for_subject(std::uint64_t subject_seed) {
  Rng rng(mix_seed(subject_seed, 0x5761'6c6b'6572ULL));
  WalkerSpec s;
  s.subject_seed = subject_seed;
  s.stride_frequency = 1.0 / rng.uniform(11.0, 19.0);
  s.thigh = rng.uniform(0.22, 0.28);
  s.shin = rng.uniform(0.22, 0.28);
  s.torso = rng.uniform(0.27, 0.34);
  s.head_radius = rng.uniform(0.05, 0.07);
  s.upper_arm = rng.uniform(0.15, 0.20);
  s.forearm = rng.uniform(0.14, 0.19);
  s.shoulder_width = rng.uniform(0.18, 0.26);
  s.hip_width = rng.uniform(0.12, 0.18);
  s.torso_depth = rng.uniform(0.10, 0.16);
  s.limb_radius = rng.uniform(0.026, 0.040);
  s.stride_amplitude = rng.uniform(0.30, 0.50);
  s.knee_amplitude = rng.uniform(0.50, 0.90);
  s.arm_amplitude = rng.uniform(0.20, 0.50);
  s.sway_amplitude = rng.uniform(0.005, 0.030);
  s.lean = rng.uniform(-0.05, 0.15);
  return s;
}

WalkerSpec WalkerSpec::with_condition(Condition c) const {
  WalkerSpec s = *this;
  s.bag = c == Condition::kBG;
  s.coat = c == Condition::kCL;
  return s;
}

namespace {

struct Vec3 {
  double x, y, z;  // x: walking direction, y: up, z: lateral
};

struct Point2 {
  double u, v;  // u: image right, v: up (body units)
};

class Canvas {
 public:
  Canvas(FrameStack& stack, int t, const RenderOptions& r) : frame_(stack.frame(t)), opt_(r) {}

  // Filled capsule around segment a-b, radius r (all in body units).
  void capsule(Point2 a, Point2 b, double r) { tapered(a, b, r, r, true); }

  // Quad-like band around a-b whose half-width varies linearly from ra to rb; rounded ends optional.
  void tapered(Point2 a, Point2 b, double ra, double rb, bool round_ends) {
    const double rmax = std::max(ra, rb);
    const auto [c0, r0, c1, r1] = bounds(std::min(a.u, b.u) - rmax, std::max(a.v, b.v) + rmax,
                                         std::max(a.u, b.u) + rmax, std::min(a.v, b.v) - rmax);
    const double du = b.u - a.u, dv = b.v - a.v;
    const double len2 = du * du + dv * dv;
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        const Point2 p = to_body(col, row);
        double t = len2 > 0.0 ? ((p.u - a.u) * du + (p.v - a.v) * dv) / len2 : 0.0;
        if (!round_ends && (t < 0.0 || t > 1.0)) continue;
        t = std::clamp(t, 0.0, 1.0);
        const double qu = a.u + t * du - p.u, qv = a.v + t * dv - p.v;
        const double r = ra + (rb - ra) * t;
        if (qu * qu + qv * qv <= r * r) set(col, row);
      }
    }
  }

  void ellipse(Point2 c, double ru, double rv) {
    const auto [c0, r0, c1, r1] = bounds(c.u - ru, c.v + rv, c.u + ru, c.v - rv);
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        const Point2 p = to_body(col, row);
        const double a = (p.u - c.u) / ru, b = (p.v - c.v) / rv;
        if (a * a + b * b <= 1.0) set(col, row);
      }
    }
  }

 private:
  struct Box {
    int c0, r0, c1, r1;
  };

  // Ground (v = 0) sits at 92% of the canvas height; u = 0 at the horizontal centre.
  Point2 to_body(int col, int row) const {
    return {(col + 0.5 - opt_.width / 2.0) / opt_.pixels_per_unit,
            (opt_.height * 0.92 - (row + 0.5)) / opt_.pixels_per_unit};
  }
  Box bounds(double u0, double v0, double u1, double v1) const {
    const double ppu = opt_.pixels_per_unit;
    Box b{static_cast<int>(std::floor(u0 * ppu + opt_.width / 2.0)) - 1,
          static_cast<int>(std::floor(opt_.height * 0.92 - v0 * ppu)) - 1,
          static_cast<int>(std::ceil(u1 * ppu + opt_.width / 2.0)) + 1,
          static_cast<int>(std::ceil(opt_.height * 0.92 - v1 * ppu)) + 1};
    b.c0 = std::max(b.c0, 0);
    b.r0 = std::max(b.r0, 0);
    b.c1 = std::min(b.c1, opt_.width - 1);
    b.r1 = std::min(b.r1, opt_.height - 1);
    return b;
  }
  void set(int col, int row) { frame_[static_cast<std::size_t>(row) * opt_.width + col] = 255; }

  std::span<std::uint8_t> frame_;
  RenderOptions opt_;
};

}  // namespace

SilhouetteSequence generate_walker_sequence(const WalkerSpec& spec, int view_deg, int num_frames,
                                            std::uint64_t phase_seed, const RenderOptions& render) {
  if (num_frames < 1) fail(ErrorKind::kParameter, "generate_walker_sequence: num_frames must be >= 1");
  if (render.height < 8 || render.width < 8 || !(render.pixels_per_unit > 0.0)) {
    fail(ErrorKind::kParameter, "generate_walker_sequence: invalid render options");
  }
  constexpr double kPi = std::numbers::pi;
  Rng rng(mix_seed(phase_seed, 0x7068'6173'65ULL));
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);
  const double freq = spec.stride_frequency * rng.uniform(0.98, 1.02);
  const double amp = spec.stride_amplitude * rng.uniform(0.95, 1.05);

  const double theta = view_deg * kPi / 180.0;
  const double su = std::sin(theta), cu = std::cos(theta);
  auto project = [&](const Vec3& p) { return Point2{p.x * su + p.z * cu, p.y}; };
  // Half extent along u of a horizontal ellipse with semi-axes (depth along x, width along z).
  auto half_extent = [&](double depth, double width) { return std::hypot(depth * su, width * cu); };

  SilhouetteSequence seq;
  seq.view_deg = view_deg;
  seq.frames = FrameStack(num_frames, render.height, render.width);
  const double leg = spec.thigh + spec.shin;
  for (int t = 0; t < num_frames; ++t) {
    Canvas canvas(seq.frames, t, render);
    const double phi = phase0 + 2.0 * kPi * freq * t;
    const double bob = 0.015 * std::cos(2.0 * phi);
    const double sway = spec.sway_amplitude * std::sin(phi);
    const double hip_y = leg * 0.97 + bob;
    const Vec3 hip{0.0, hip_y, sway};
    const Vec3 neck{spec.lean * spec.torso, hip_y + spec.torso, sway * 1.5};

    for (int side = 0; side < 2; ++side) {
      const double sgn = side == 0 ? 1.0 : -1.0;
      const double leg_phase = phi + side * kPi;
      const double hip_angle = amp * std::sin(leg_phase);
      const double knee_flex = spec.knee_amplitude * 0.5 * (1.0 + std::cos(leg_phase)) * 0.8 + 0.05;
      const Vec3 h{hip.x, hip.y, hip.z + sgn * spec.hip_width / 2.0};
      const Vec3 knee{h.x + spec.thigh * std::sin(hip_angle), h.y - spec.thigh * std::cos(hip_angle), h.z};
      const double shin_angle = hip_angle - knee_flex;
      const Vec3 ankle{knee.x + spec.shin * std::sin(shin_angle), knee.y - spec.shin * std::cos(shin_angle), h.z};
      const Vec3 toe{ankle.x + 0.07, ankle.y - 0.01, h.z};
      canvas.tapered(project(h), project(knee), spec.limb_radius * 1.25, spec.limb_radius, true);
      canvas.capsule(project(knee), project(ankle), spec.limb_radius * 0.9);
      canvas.capsule(project(ankle), project(toe), spec.limb_radius * 0.6);

      const double arm_angle = -spec.arm_amplitude * std::sin(leg_phase);
      const Vec3 shoulder{neck.x, neck.y - 0.02, neck.z + sgn * spec.shoulder_width / 2.0};
      const Vec3 elbow{shoulder.x + spec.upper_arm * std::sin(arm_angle),
                       shoulder.y - spec.upper_arm * std::cos(arm_angle), shoulder.z + sgn * 0.01};
      const double fore_angle = arm_angle + 0.25 + 0.15 * std::max(0.0, std::sin(-leg_phase));
      const Vec3 wrist{elbow.x + spec.forearm * std::sin(fore_angle), elbow.y - spec.forearm * std::cos(fore_angle),
                       elbow.z};
      canvas.capsule(project(shoulder), project(elbow), spec.limb_radius * 0.8);
      canvas.capsule(project(elbow), project(wrist), spec.limb_radius * 0.7);
    }

    const double coat_scale = spec.coat ? 1.3 : 1.0;
    const double hip_half = half_extent(spec.torso_depth * 0.5, spec.hip_width * 0.5 + spec.limb_radius) * coat_scale;
    const double chest_half = half_extent(spec.torso_depth * 0.55, spec.shoulder_width * 0.5) * coat_scale;
    canvas.tapered(project(hip), project(neck), hip_half, chest_half, true);
    if (spec.coat) {
      const Vec3 hem{hip.x, hip.y - spec.thigh * 0.55, hip.z};
      canvas.tapered(project(hip), project(hem), hip_half, hip_half * 1.1, false);
    }
    const Vec3 head{neck.x + 0.01, neck.y + 0.03 + spec.head_radius, neck.z};
    canvas.ellipse(project(head), spec.head_radius * 0.9, spec.head_radius * 1.1);
    canvas.capsule(project(neck), project(head), spec.limb_radius * 0.8);
    if (spec.bag) {
      const Vec3 bag{0.02, hip.y + 0.02, hip.z + spec.shoulder_width / 2.0 + 0.05};
      canvas.ellipse(project(bag), half_extent(0.07, 0.035) + 0.01, 0.08);
      canvas.capsule(project(bag), project(Vec3{neck.x, neck.y, neck.z + spec.shoulder_width / 2.0}), 0.008);
    }
  }
  return seq;
}

}  // namespace gaitmm
