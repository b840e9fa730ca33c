#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gaitmm {

// Buffers handed to Eigen start on the same boundary every run.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct Shape4 {
  int channels = 0;
  int frames = 0;
  int height = 0;
  int width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * frames * height * width;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense channels x frames x height x width tensor, row-major with width fastest.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int frames, int height, int width, double fill = 0.0);
  explicit FeatureMap(const Shape4& shape, double fill = 0.0)
      : FeatureMap(shape.channels, shape.frames, shape.height, shape.width, fill) {}

  int channels() const { return shape_.channels; }
  int frames() const { return shape_.frames; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(int c, int t, int h, int w) const {
    return ((static_cast<std::size_t>(c) * shape_.frames + t) * shape_.height + h) * shape_.width + w;
  }
  double& at(int c, int t, int h, int w) { return values_[index(c, t, h, w)]; }
  double at(int c, int t, int h, int w) const { return values_[index(c, t, h, w)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  // One height x width plane.
  std::span<double> plane(int c, int t) {
    return {values_.data() + index(c, t, 0, 0), static_cast<std::size_t>(shape_.height) * shape_.width};
  }
  std::span<const double> plane(int c, int t) const {
    return {values_.data() + index(c, t, 0, 0), static_cast<std::size_t>(shape_.height) * shape_.width};
  }

  bool all_finite() const;
  void fill(double v);
  FeatureMap& operator+=(const FeatureMap& other);

  // Rows [row_begin, row_begin + rows) of every plane.
  FeatureMap slab(int row_begin, int rows) const;
  // Writes `src` into rows starting at row_begin; src must match every other dimension.
  void set_slab(int row_begin, const FeatureMap& src);
  void add_slab(int row_begin, const FeatureMap& src);
  // First `frames` frames.
  FeatureMap first_frames(int frames) const;

 private:
  Shape4 shape_;
  AlignedVector values_;
};

// num_strips x channels (or embed_dim) matrices used by the head.
using StripMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool all_finite(const StripMatrix& m);

}  // namespace gaitmm
