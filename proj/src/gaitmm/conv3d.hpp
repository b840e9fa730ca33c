#pragma once

#include <cstddef>
#include <span>
#include <type_traits>

#include "gaitmm/tensor.hpp"

namespace gaitmm {

// Every convolution in the network uses a 3x3x3 kernel, stride 1 and zero padding 1.
inline constexpr int kKernelExtent = 3;
inline constexpr int kKernelTaps = kKernelExtent * kKernelExtent * kKernelExtent;

// Full 3D convolution. kernel layout: [out][in][t][h][w].
template <class T>
struct Conv3dView {
  int out_channels = 0;
  int in_channels = 0;
  std::span<T> kernel;
  std::span<T> bias;

  static std::size_t kernel_size(int out, int in) { return static_cast<std::size_t>(out) * in * kKernelTaps; }
  static std::size_t parameter_count(int out, int in) { return kernel_size(out, in) + out; }
};
using Conv3dWeights = Conv3dView<const double>;
using Conv3dGrads = Conv3dView<double>;

// Per-channel 3x3x3 depthwise kernel followed by a 1x1x1 pointwise mixer; bias on the pointwise stage only.
template <class T>
struct DepthwiseSeparable3dView {
  int out_channels = 0;
  int in_channels = 0;
  std::span<T> depthwise;  // [in][t][h][w]
  std::span<T> pointwise;  // [out][in]
  std::span<T> bias;       // [out]

  static std::size_t parameter_count(int out, int in) {
    return static_cast<std::size_t>(in) * kKernelTaps + static_cast<std::size_t>(in) * out + out;
  }
};
using DepthwiseSeparable3dWeights = DepthwiseSeparable3dView<const double>;
using DepthwiseSeparable3dGrads = DepthwiseSeparable3dView<double>;

template <class T>
Conv3dView<const double> as_const(const Conv3dView<T>& v) {
  return {v.out_channels, v.in_channels, v.kernel, v.bias};
}
template <class T>
DepthwiseSeparable3dView<const double> as_const(const DepthwiseSeparable3dView<T>& v) {
  return {v.out_channels, v.in_channels, v.depthwise, v.pointwise, v.bias};
}

FeatureMap conv3d_forward(const FeatureMap& x, const Conv3dWeights& w);
// Accumulates parameter gradients into `g`. Returns dL/dx when want_input_grad, else an empty map.
FeatureMap conv3d_backward(const FeatureMap& x, const Conv3dWeights& w, const FeatureMap& grad_out,
                           const Conv3dGrads& g, bool want_input_grad = true);

FeatureMap dwconv3d_forward(const FeatureMap& x, const DepthwiseSeparable3dWeights& w);
FeatureMap dwconv3d_backward(const FeatureMap& x, const DepthwiseSeparable3dWeights& w, const FeatureMap& grad_out,
                             const DepthwiseSeparable3dGrads& g, bool want_input_grad = true);

}  // namespace gaitmm
