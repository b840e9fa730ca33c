#include "gaitmm/conv3d.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "gaitmm/error.hpp"

namespace gaitmm {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col buffer (doubles); larger inputs are processed in frame chunks.
constexpr std::size_t kColumnBudget = std::size_t{1} << 23;

int frames_per_chunk(const FeatureMap& x) {
  const std::size_t per_frame = static_cast<std::size_t>(x.channels()) * kKernelTaps * x.height() * x.width();
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_frame, 1), 1,
                                                  static_cast<std::size_t>(x.frames())));
}

// Builds the (channels*27) x (frames*H*W) patch matrix for frames [t0, t1).
void im2col(const FeatureMap& x, int t0, int t1, AlignedVector& col) {
  const int H = x.height(), W = x.width(), D = x.frames();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t n = (t1 - t0) * hw;
  col.resize(static_cast<std::size_t>(x.channels()) * kKernelTaps * n);
  for (int ci = 0; ci < x.channels(); ++ci) {
    for (int kt = 0; kt < 3; ++kt) {
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          const std::size_t r = static_cast<std::size_t>(ci) * kKernelTaps + kt * 9 + kh * 3 + kw;
          const int w_lo = std::max(0, 1 - kw), w_hi = std::min(W, W + 1 - kw);
          const std::size_t span = static_cast<std::size_t>(w_hi - w_lo);
          for (int tt = t0; tt < t1; ++tt) {
            double* dst = col.data() + r * n + (tt - t0) * hw;
            const int src_t = tt + kt - 1;
            if (src_t < 0 || src_t >= D) {
              std::fill(dst, dst + hw, 0.0);
              continue;
            }
            for (int h = 0; h < H; ++h) {
              double* d = dst + static_cast<std::size_t>(h) * W;
              const int src_h = h + kh - 1;
              if (src_h < 0 || src_h >= H) {
                std::fill(d, d + W, 0.0);
                continue;
              }
              const double* src = x.data() + x.index(ci, src_t, src_h, 0) + (kw - 1);
              if (w_lo > 0) d[0] = 0.0;
              if (w_hi < W) d[W - 1] = 0.0;
              std::memcpy(d + w_lo, src + w_lo, span * sizeof(double));
            }
          }
        }
      }
    }
  }
}

void col2im_add(const AlignedVector& col, int t0, int t1, FeatureMap& dx) {
  const int H = dx.height(), W = dx.width(), D = dx.frames();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t n = (t1 - t0) * hw;
  for (int ci = 0; ci < dx.channels(); ++ci) {
    for (int kt = 0; kt < 3; ++kt) {
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          const std::size_t r = static_cast<std::size_t>(ci) * kKernelTaps + kt * 9 + kh * 3 + kw;
          const int w_lo = std::max(0, 1 - kw), w_hi = std::min(W, W + 1 - kw);
          for (int tt = t0; tt < t1; ++tt) {
            const int src_t = tt + kt - 1;
            if (src_t < 0 || src_t >= D) continue;
            const double* s = col.data() + r * n + (tt - t0) * hw;
            for (int h = 0; h < H; ++h) {
              const int src_h = h + kh - 1;
              if (src_h < 0 || src_h >= H) continue;
              double* dst = dx.data() + dx.index(ci, src_t, src_h, 0) + (kw - 1);
              const double* row = s + static_cast<std::size_t>(h) * W;
              for (int w = w_lo; w < w_hi; ++w) dst[w] += row[w];
            }
          }
        }
      }
    }
  }
}

void check_conv(const FeatureMap& x, int in_channels, const char* what) {
  if (x.channels() != in_channels) {
    fail(ErrorKind::kConfig, std::string(what) + " expects " + std::to_string(in_channels) +
                                 " input channels, got input " + x.shape().str());
  }
}

void check_sizes(const Conv3dWeights& w) {
  if (w.kernel.size() != Conv3dWeights::kernel_size(w.out_channels, w.in_channels) ||
      w.bias.size() != static_cast<std::size_t>(w.out_channels)) {
    fail(ErrorKind::kConfig, "conv3d weight buffers do not match " + std::to_string(w.out_channels) + "x" +
                                 std::to_string(w.in_channels) + "x3x3x3");
  }
}

void check_sizes(const DepthwiseSeparable3dWeights& w) {
  if (w.depthwise.size() != static_cast<std::size_t>(w.in_channels) * kKernelTaps ||
      w.pointwise.size() != static_cast<std::size_t>(w.in_channels) * w.out_channels ||
      w.bias.size() != static_cast<std::size_t>(w.out_channels)) {
    fail(ErrorKind::kConfig, "depthwise-separable weight buffers do not match their channel counts");
  }
}

}  // namespace

FeatureMap conv3d_forward(const FeatureMap& x, const Conv3dWeights& w) {
  check_conv(x, w.in_channels, "conv3d");
  check_sizes(w);
  const int D = x.frames();
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  const std::size_t stride = D * hw;
  FeatureMap out(w.out_channels, D, x.height(), x.width());
  ConstMatrixMap kernel(w.kernel.data(), w.out_channels, static_cast<Eigen::Index>(w.in_channels) * kKernelTaps);
  const int chunk = frames_per_chunk(x);
  thread_local AlignedVector col;
  for (int t0 = 0; t0 < D; t0 += chunk) {
    const int t1 = std::min(D, t0 + chunk);
    const Eigen::Index n = static_cast<Eigen::Index>((t1 - t0) * hw);
    im2col(x, t0, t1, col);
    ConstMatrixMap cols(col.data(), kernel.cols(), n);
    StridedMap y(out.data() + t0 * hw, w.out_channels, n, Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
    y.noalias() = kernel * cols;
    for (int co = 0; co < w.out_channels; ++co) y.row(co).array() += w.bias[co];
  }
  return out;
}

FeatureMap conv3d_backward(const FeatureMap& x, const Conv3dWeights& w, const FeatureMap& grad_out,
                           const Conv3dGrads& g, bool want_input_grad) {
  check_conv(x, w.in_channels, "conv3d");
  check_sizes(w);
  if (grad_out.shape() != Shape4{w.out_channels, x.frames(), x.height(), x.width()}) {
    fail(ErrorKind::kShape, "conv3d gradient has shape " + grad_out.shape().str());
  }
  const int D = x.frames();
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  const std::size_t stride = D * hw;
  const Eigen::Index rows = static_cast<Eigen::Index>(w.in_channels) * kKernelTaps;
  ConstMatrixMap kernel(w.kernel.data(), w.out_channels, rows);
  MatrixMap dkernel(g.kernel.data(), w.out_channels, rows);
  FeatureMap dx;
  if (want_input_grad) dx = FeatureMap(x.shape());
  const int chunk = frames_per_chunk(x);
  thread_local AlignedVector col, dcol;
  for (int t0 = 0; t0 < D; t0 += chunk) {
    const int t1 = std::min(D, t0 + chunk);
    const Eigen::Index n = static_cast<Eigen::Index>((t1 - t0) * hw);
    im2col(x, t0, t1, col);
    ConstMatrixMap cols(col.data(), rows, n);
    ConstStridedMap dy(grad_out.data() + t0 * hw, w.out_channels, n,
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
    dkernel.noalias() += dy * cols.transpose();
    for (int co = 0; co < w.out_channels; ++co) g.bias[co] += dy.row(co).sum();
    if (want_input_grad) {
      dcol.resize(static_cast<std::size_t>(rows) * n);
      MatrixMap dcols(dcol.data(), rows, n);
      dcols.noalias() = kernel.transpose() * dy;
      col2im_add(dcol, t0, t1, dx);
    }
  }
  return dx;
}

namespace {

// Single-channel 3x3x3 correlation with zero padding: out += k * x.
void depthwise_accumulate(const double* x, const double* k, double* out, int D, int H, int W) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int kt = 0; kt < 3; ++kt) {
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const double kv = k[kt * 9 + kh * 3 + kw];
        const int w_lo = std::max(0, 1 - kw), w_hi = std::min(W, W + 1 - kw);
        for (int t = 0; t < D; ++t) {
          const int st = t + kt - 1;
          if (st < 0 || st >= D) continue;
          for (int h = 0; h < H; ++h) {
            const int sh = h + kh - 1;
            if (sh < 0 || sh >= H) continue;
            const double* src = x + st * hw + static_cast<std::size_t>(sh) * W + (kw - 1);
            double* dst = out + t * hw + static_cast<std::size_t>(h) * W;
            for (int w = w_lo; w < w_hi; ++w) dst[w] += kv * src[w];
          }
        }
      }
    }
  }
}

// Adjoint of depthwise_accumulate: dk += sum(dy * shifted x), dx += k * shifted dy.
void depthwise_adjoint(const double* x, const double* k, const double* dy, double* dk, double* dx, int D, int H,
                       int W) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int kt = 0; kt < 3; ++kt) {
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const int tap = kt * 9 + kh * 3 + kw;
        const double kv = k[tap];
        double acc = 0.0;
        const int w_lo = std::max(0, 1 - kw), w_hi = std::min(W, W + 1 - kw);
        for (int t = 0; t < D; ++t) {
          const int st = t + kt - 1;
          if (st < 0 || st >= D) continue;
          for (int h = 0; h < H; ++h) {
            const int sh = h + kh - 1;
            if (sh < 0 || sh >= H) continue;
            const std::size_t src_off = st * hw + static_cast<std::size_t>(sh) * W + (kw - 1);
            const std::size_t dst_off = t * hw + static_cast<std::size_t>(h) * W;
            for (int w = w_lo; w < w_hi; ++w) {
              acc += dy[dst_off + w] * x[src_off + w];
              if (dx != nullptr) dx[src_off + w] += kv * dy[dst_off + w];
            }
          }
        }
        dk[tap] += acc;
      }
    }
  }
}

}  // namespace

FeatureMap dwconv3d_forward(const FeatureMap& x, const DepthwiseSeparable3dWeights& w) {
  check_conv(x, w.in_channels, "depthwise-separable conv3d");
  check_sizes(w);
  const int D = x.frames(), H = x.height(), W = x.width();
  const std::size_t vol = static_cast<std::size_t>(D) * H * W;
  FeatureMap mid(w.in_channels, D, H, W);
  for (int ci = 0; ci < w.in_channels; ++ci) {
    depthwise_accumulate(x.data() + x.index(ci, 0, 0, 0), w.depthwise.data() + ci * kKernelTaps,
                         mid.data() + mid.index(ci, 0, 0, 0), D, H, W);
  }
  FeatureMap out(w.out_channels, D, H, W);
  ConstMatrixMap pw(w.pointwise.data(), w.out_channels, w.in_channels);
  ConstMatrixMap m(mid.data(), w.in_channels, static_cast<Eigen::Index>(vol));
  MatrixMap y(out.data(), w.out_channels, static_cast<Eigen::Index>(vol));
  y.noalias() = pw * m;
  for (int co = 0; co < w.out_channels; ++co) y.row(co).array() += w.bias[co];
  return out;
}

FeatureMap dwconv3d_backward(const FeatureMap& x, const DepthwiseSeparable3dWeights& w, const FeatureMap& grad_out,
                             const DepthwiseSeparable3dGrads& g, bool want_input_grad) {
  check_conv(x, w.in_channels, "depthwise-separable conv3d");
  check_sizes(w);
  const int D = x.frames(), H = x.height(), W = x.width();
  if (grad_out.shape() != Shape4{w.out_channels, D, H, W}) {
    fail(ErrorKind::kShape, "depthwise-separable gradient has shape " + grad_out.shape().str());
  }
  const Eigen::Index vol = static_cast<Eigen::Index>(D) * H * W;
  FeatureMap mid(w.in_channels, D, H, W);
  for (int ci = 0; ci < w.in_channels; ++ci) {
    depthwise_accumulate(x.data() + x.index(ci, 0, 0, 0), w.depthwise.data() + ci * kKernelTaps,
                         mid.data() + mid.index(ci, 0, 0, 0), D, H, W);
  }
  ConstMatrixMap pw(w.pointwise.data(), w.out_channels, w.in_channels);
  ConstMatrixMap m(mid.data(), w.in_channels, vol);
  ConstMatrixMap dy(grad_out.data(), w.out_channels, vol);
  MatrixMap dpw(g.pointwise.data(), w.out_channels, w.in_channels);
  dpw.noalias() += dy * m.transpose();
  for (int co = 0; co < w.out_channels; ++co) g.bias[co] += dy.row(co).sum();
  FeatureMap dmid(w.in_channels, D, H, W);
  MatrixMap dm(dmid.data(), w.in_channels, vol);
  dm.noalias() = pw.transpose() * dy;
  FeatureMap dx;
  if (want_input_grad) dx = FeatureMap(x.shape());
  for (int ci = 0; ci < w.in_channels; ++ci) {
    depthwise_adjoint(x.data() + x.index(ci, 0, 0, 0), w.depthwise.data() + ci * kKernelTaps,
                      dmid.data() + dmid.index(ci, 0, 0, 0), g.depthwise.data() + ci * kKernelTaps,
                      want_input_grad ? dx.data() + dx.index(ci, 0, 0, 0) : nullptr, D, H, W);
  }
  return dx;
}

}  // namespace gaitmm
