#include "gaitmm/silhouette.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "gaitmm/error.hpp"

namespace gaitmm {

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kNM: return "NM";
    case Condition::kBG: return "BG";
    case Condition::kCL: return "CL";
  }
  return "?";
}

Condition parse_condition(const std::string& s) {
  std::string u;
  for (char ch : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (u == "NM") return Condition::kNM;
  if (u == "BG") return Condition::kBG;
  if (u == "CL") return Condition::kCL;
  fail(ErrorKind::kData, "unknown walking condition '" + s + "'");
}

void FrameStack::append(std::span<const std::uint8_t> f) {
  if (f.size() != frame_size()) fail(ErrorKind::kData, "frame size mismatch while appending");
  pixels.insert(pixels.end(), f.begin(), f.end());
  ++frames;
}

namespace {

struct Tap {
  int src;
  double weight;
};

// Box-filter resampling weights mapping dst index i to source interval [offset + i/scale, offset + (i+1)/scale).
std::vector<std::vector<Tap>> area_weights(int dst_size, double scale, int src_offset, int src_limit) {
  std::vector<std::vector<Tap>> taps(dst_size);
  for (int i = 0; i < dst_size; ++i) {
    const double lo = src_offset + i / scale;
    const double hi = src_offset + (i + 1) / scale;
    double total = 0.0;
    for (int s = static_cast<int>(std::floor(lo)); s < static_cast<int>(std::ceil(hi)); ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap <= 0.0) continue;
      total += overlap;
      if (s >= 0 && s < src_limit) taps[i].push_back({s, overlap});
    }
    for (auto& t : taps[i]) t.weight /= total;
  }
  return taps;
}

std::optional<std::vector<std::uint8_t>> align_frame(std::span<const std::uint8_t> src, int H, int W, int out_h,
                                                     int out_w) {
  int top = -1, bottom = -1;
  for (int r = 0; r < H; ++r) {
    const auto row = src.subspan(static_cast<std::size_t>(r) * W, W);
    if (std::any_of(row.begin(), row.end(), [](std::uint8_t v) { return v > 0; })) {
      if (top < 0) top = r;
      bottom = r;
    }
  }
  if (top < 0) return std::nullopt;
  const int body_h = bottom - top + 1;
  const double scale = static_cast<double>(out_h) / body_h;
  const int scaled_w = std::max(1, static_cast<int>(std::lround(W * scale)));

  const auto row_taps = area_weights(out_h, scale, top, H);
  const auto col_taps = area_weights(scaled_w, scale, 0, W);
  std::vector<double> rows(static_cast<std::size_t>(out_h) * W, 0.0);
  for (int i = 0; i < out_h; ++i) {
    for (const Tap& t : row_taps[i]) {
      const std::uint8_t* s = src.data() + static_cast<std::size_t>(t.src) * W;
      double* d = rows.data() + static_cast<std::size_t>(i) * W;
      for (int x = 0; x < W; ++x) d[x] += t.weight * s[x];
    }
  }
  std::vector<double> scaled(static_cast<std::size_t>(out_h) * scaled_w, 0.0);
  double mass = 0.0, moment = 0.0;
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < scaled_w; ++j) {
      double v = 0.0;
      for (const Tap& t : col_taps[j]) v += t.weight * rows[static_cast<std::size_t>(i) * W + t.src];
      v = std::round(v);
      scaled[static_cast<std::size_t>(i) * scaled_w + j] = v;
      mass += v;
      moment += v * (j + 0.5);
    }
  }
  if (mass <= 0.0) return std::nullopt;
  const long left = std::lround(moment / mass - out_w / 2.0);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h) * out_w, 0);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      const long sj = left + j;
      if (sj < 0 || sj >= scaled_w) continue;
      out[static_cast<std::size_t>(i) * out_w + j] =
          static_cast<std::uint8_t>(std::clamp(scaled[static_cast<std::size_t>(i) * scaled_w + sj], 0.0, 255.0));
    }
  }
  return out;
}

}  // namespace

FrameStack align_and_crop(const FrameStack& raw, int* dropped, int out_height, int out_width) {
  FrameStack out(0, out_height, out_width);
  int lost = 0;
  for (int t = 0; t < raw.frames; ++t) {
    auto aligned = align_frame(raw.frame(t), raw.height, raw.width, out_height, out_width);
    if (aligned) {
      out.append(*aligned);
    } else {
      ++lost;
    }
  }
  if (dropped != nullptr) *dropped = lost;
  if (out.frames == 0) fail(ErrorKind::kData, "sequence has no foreground pixels in any frame");
  return out;
}

void binarize(FrameStack& frames, std::uint8_t threshold) {
  for (auto& p : frames.pixels) p = p > threshold ? 255 : 0;
}

std::size_t foreground_pixels(std::span<const std::uint8_t> frame, std::uint8_t threshold) {
  return static_cast<std::size_t>(
      std::count_if(frame.begin(), frame.end(), [&](std::uint8_t v) { return v > threshold; }));
}

double intersection_over_union(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                               std::uint8_t threshold) {
  if (a.size() != b.size()) fail(ErrorKind::kData, "IoU of frames with different sizes");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool fa = a[i] > threshold, fb = b[i] > threshold;
    inter += fa && fb;
    uni += fa || fb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace gaitmm
