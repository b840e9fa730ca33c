#include "gaitmm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gaitmm/error.hpp"

namespace gaitmm {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kShape: return "input-shape error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kStructural: return "structural error";
    case ErrorKind::kProtocol: return "protocol error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIo: return "I/O error";
  }
  return "error";
}

std::string Shape4::str() const {
  return std::to_string(channels) + "x" + std::to_string(frames) + "x" + std::to_string(height) + "x" +
         std::to_string(width);
}

FeatureMap::FeatureMap(int channels, int frames, int height, int width, double fill)
    : shape_{channels, frames, height, width} {
  if (channels <= 0 || frames <= 0 || height <= 0 || width <= 0) {
    fail(ErrorKind::kShape, "feature map dimensions must be positive, got " + shape_.str());
  }
  values_.assign(shape_.numel(), fill);
}

bool FeatureMap::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void FeatureMap::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

FeatureMap& FeatureMap::operator+=(const FeatureMap& other) {
  if (!(shape_ == other.shape_)) {
    fail(ErrorKind::kShape, "cannot add " + other.shape_.str() + " to " + shape_.str());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

FeatureMap FeatureMap::slab(int row_begin, int rows) const {
  if (row_begin < 0 || rows <= 0 || row_begin + rows > shape_.height) {
    fail(ErrorKind::kShape, "slab rows out of range for " + shape_.str());
  }
  FeatureMap out(shape_.channels, shape_.frames, rows, shape_.width);
  const std::size_t n = static_cast<std::size_t>(rows) * shape_.width;
  for (int c = 0; c < shape_.channels; ++c) {
    for (int t = 0; t < shape_.frames; ++t) {
      std::memcpy(out.data() + out.index(c, t, 0, 0), data() + index(c, t, row_begin, 0), n * sizeof(double));
    }
  }
  return out;
}

void FeatureMap::set_slab(int row_begin, const FeatureMap& src) {
  if (src.channels() != shape_.channels || src.frames() != shape_.frames || src.width() != shape_.width ||
      row_begin < 0 || row_begin + src.height() > shape_.height) {
    fail(ErrorKind::kShape, "slab " + src.shape().str() + " does not fit " + shape_.str());
  }
  const std::size_t n = static_cast<std::size_t>(src.height()) * shape_.width;
  for (int c = 0; c < shape_.channels; ++c) {
    for (int t = 0; t < shape_.frames; ++t) {
      std::memcpy(data() + index(c, t, row_begin, 0), src.data() + src.index(c, t, 0, 0), n * sizeof(double));
    }
  }
}

void FeatureMap::add_slab(int row_begin, const FeatureMap& src) {
  if (src.channels() != shape_.channels || src.frames() != shape_.frames || src.width() != shape_.width ||
      row_begin < 0 || row_begin + src.height() > shape_.height) {
    fail(ErrorKind::kShape, "slab " + src.shape().str() + " does not fit " + shape_.str());
  }
  const std::size_t n = static_cast<std::size_t>(src.height()) * shape_.width;
  for (int c = 0; c < shape_.channels; ++c) {
    for (int t = 0; t < shape_.frames; ++t) {
      double* dst = data() + index(c, t, row_begin, 0);
      const double* s = src.data() + src.index(c, t, 0, 0);
      for (std::size_t i = 0; i < n; ++i) dst[i] += s[i];
    }
  }
}

FeatureMap FeatureMap::first_frames(int frames) const {
  if (frames <= 0 || frames > shape_.frames) {
    fail(ErrorKind::kShape, "cannot take " + std::to_string(frames) + " frames of " + shape_.str());
  }
  FeatureMap out(shape_.channels, frames, shape_.height, shape_.width);
  const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
  for (int c = 0; c < shape_.channels; ++c) {
    std::memcpy(out.data() + out.index(c, 0, 0, 0), data() + index(c, 0, 0, 0), frames * plane * sizeof(double));
  }
  return out;
}

bool all_finite(const StripMatrix& m) { return m.allFinite(); }

}  // namespace gaitmm
