#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gaitmm {

enum class Condition { kNM, kBG, kCL };

const char* condition_name(Condition c);  // "NM", "BG", "CL"
// Case-insensitive "nm" / "bg" / "cl".
Condition parse_condition(const std::string& s);

// D frames of 8-bit H x W silhouettes, stored contiguously.
struct FrameStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  FrameStack() = default;
  FrameStack(int d, int h, int w) : frames(d), height(h), width(w), pixels(static_cast<std::size_t>(d) * h * w, 0) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<std::uint8_t> frame(int t) { return {pixels.data() + t * frame_size(), frame_size()}; }
  std::span<const std::uint8_t> frame(int t) const { return {pixels.data() + t * frame_size(), frame_size()}; }
  void append(std::span<const std::uint8_t> frame);
};

struct SilhouetteSequence {
  int subject_id = 0;
  int view_deg = 0;
  Condition condition = Condition::kNM;
  int seq_index = 0;
  FrameStack frames;
};

inline constexpr int kAlignedHeight = 64;
inline constexpr int kAlignedWidth = 44;

// Scales the foreground so its vertical extent fills out_height rows (aspect ratio kept), then
// centres a out_width window on the horizontal centre of mass. Frames without foreground are
// dropped and counted in *dropped; a sequence with no foreground at all is a data error.
FrameStack align_and_crop(const FrameStack& raw, int* dropped = nullptr, int out_height = kAlignedHeight,
                          int out_width = kAlignedWidth);

// Pixels > threshold become 255, the rest 0.
void binarize(FrameStack& frames, std::uint8_t threshold = 127);

std::size_t foreground_pixels(std::span<const std::uint8_t> frame, std::uint8_t threshold = 127);
double intersection_over_union(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                               std::uint8_t threshold = 127);

}  // namespace gaitmm
