#include "gaitmm/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gaitmm/error.hpp"

namespace gaitmm {
namespace {

void check_parts(const FeatureMap& x, int parts, const char* what) {
  if (parts <= 0 || x.height() % parts != 0) {
    fail(ErrorKind::kConfig, std::string(what) + ": height " + std::to_string(x.height()) +
                                 " is not divisible by the part count " + std::to_string(parts));
  }
}

FeatureMap part_forward(const FeatureMap& x, const PartFilter& filter) {
  return std::visit(
      [&](const auto& w) {
        using W = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<W, Conv3dWeights>) {
          return conv3d_forward(x, w);
        } else {
          return dwconv3d_forward(x, w);
        }
      },
      filter);
}

FeatureMap part_backward(const FeatureMap& x, const PartFilter& filter, const FeatureMap& grad_out,
                         const PartFilterGrads& grads, bool want_input_grad) {
  if (filter.index() != grads.index()) {
    fail(ErrorKind::kConfig, "part filter and gradient buffers use different convolution modes");
  }
  if (std::holds_alternative<Conv3dWeights>(filter)) {
    return conv3d_backward(x, std::get<Conv3dWeights>(filter), grad_out, std::get<Conv3dGrads>(grads),
                           want_input_grad);
  }
  return dwconv3d_backward(x, std::get<DepthwiseSeparable3dWeights>(filter), grad_out,
                           std::get<DepthwiseSeparable3dGrads>(grads), want_input_grad);
}

int part_out_channels(const PartFilter& filter) {
  return std::visit([](const auto& w) { return w.out_channels; }, filter);
}

}  // namespace

FeatureMap bme_forward(const FeatureMap& x, const Conv3dWeights& w) { return conv3d_forward(x, w); }

FeatureMap pme_forward(const FeatureMap& x, const PartFilterBank& bank) {
  const int k = bank.k_parts();
  check_parts(x, k, "pme");
  const int rows = x.height() / k;
  FeatureMap out(part_out_channels(bank.banks.front()), x.frames(), x.height(), x.width());
  for (int j = 0; j < k; ++j) {
    if (part_out_channels(bank.banks[j]) != out.channels()) {
      fail(ErrorKind::kConfig, "pme banks disagree on output channels");
    }
    out.set_slab(j * rows, part_forward(x.slab(j * rows, rows), bank.banks[j]));
  }
  return out;
}

FeatureMap pme_backward(const FeatureMap& x, const PartFilterBank& bank, const FeatureMap& grad_out,
                        const PartFilterBankGrads& grads, bool want_input_grad) {
  const int k = bank.k_parts();
  check_parts(x, k, "pme");
  if (static_cast<int>(grads.banks.size()) != k) fail(ErrorKind::kConfig, "pme gradient bank count mismatch");
  const int rows = x.height() / k;
  FeatureMap dx;
  if (want_input_grad) dx = FeatureMap(x.shape());
  for (int j = 0; j < k; ++j) {
    FeatureMap d = part_backward(x.slab(j * rows, rows), bank.banks[j], grad_out.slab(j * rows, rows),
                                 grads.banks[j], want_input_grad);
    if (want_input_grad) dx.set_slab(j * rows, d);
  }
  return dx;
}

FeatureMap leaky_relu(const FeatureMap& z, double slope) {
  FeatureMap y = z;
  for (double& v : y.values()) v = v > 0.0 ? v : slope * v;
  return y;
}

void leaky_relu_backward_inplace(const FeatureMap& z, double slope, FeatureMap& grad) {
  auto zv = z.values();
  auto gv = grad.values();
  for (std::size_t i = 0; i < gv.size(); ++i) {
    if (!(zv[i] > 0.0)) gv[i] *= slope;
  }
}

FeatureMap ffsl_forward(const FeatureMap& x, const Conv3dWeights& w, const PartFilterBank& bank, bool use_pme,
                        double leaky_slope) {
  FeatureMap z = bme_forward(x, w);
  if (use_pme) {
    FeatureMap p = pme_forward(x, bank);
    if (p.shape() != z.shape()) {
      fail(ErrorKind::kShape, "body and part paths disagree: " + z.shape().str() + " vs " + p.shape().str());
    }
    z += p;
  }
  return leaky_relu(z, leaky_slope);
}

FeatureMap lma_forward(const FeatureMap& x, const LmaParams& p) {
  if (x.frames() % kLmaWindow != 0) {
    fail(ErrorKind::kShape, "lma: frame count " + std::to_string(x.frames()) + " is not divisible by 3");
  }
  const int out_frames = x.frames() / kLmaWindow;
  FeatureMap out(x.channels(), out_frames, x.height(), x.width());
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  for (int c = 0; c < x.channels(); ++c) {
    for (int t = 0; t < out_frames; ++t) {
      const double* a = x.data() + x.index(c, 3 * t, 0, 0);
      const double* b = a + hw;
      const double* d = b + hw;
      double* o = out.data() + out.index(c, t, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        const double mx = std::max(a[i], std::max(b[i], d[i]));
        const double mean = (a[i] + b[i] + d[i]) / 3.0;
        o[i] = p.p1 * mx + p.p2 * mean;
      }
    }
  }
  return out;
}

FeatureMap lma_backward(const FeatureMap& x, const LmaParams& p, const FeatureMap& grad_out, LmaGrads& g) {
  if (x.frames() % kLmaWindow != 0) {
    fail(ErrorKind::kShape, "lma: frame count " + std::to_string(x.frames()) + " is not divisible by 3");
  }
  const int out_frames = x.frames() / kLmaWindow;
  if (grad_out.shape() != Shape4{x.channels(), out_frames, x.height(), x.width()}) {
    fail(ErrorKind::kShape, "lma gradient has shape " + grad_out.shape().str());
  }
  FeatureMap dx(x.shape());
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  double gp1 = 0.0, gp2 = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    for (int t = 0; t < out_frames; ++t) {
      const double* win[3];
      double* dwin[3];
      win[0] = x.data() + x.index(c, 3 * t, 0, 0);
      dwin[0] = dx.data() + dx.index(c, 3 * t, 0, 0);
      for (int k = 1; k < 3; ++k) {
        win[k] = win[k - 1] + hw;
        dwin[k] = dwin[k - 1] + hw;
      }
      const double* go = grad_out.data() + grad_out.index(c, t, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        int arg = 0;
        if (win[1][i] > win[arg][i]) arg = 1;
        if (win[2][i] > win[arg][i]) arg = 2;
        const double mean = (win[0][i] + win[1][i] + win[2][i]) / 3.0;
        gp1 += go[i] * win[arg][i];
        gp2 += go[i] * mean;
        const double share = p.p2 * go[i] / 3.0;
        dwin[0][i] += share;
        dwin[1][i] += share;
        dwin[2][i] += share;
        dwin[arg][i] += p.p1 * go[i];
      }
    }
  }
  g.p1 += gp1;
  g.p2 += gp2;
  return dx;
}

FeatureMap msma_forward(const FeatureMap& x, const MsmaParams& mp) {
  const int l = mp.l_parts();
  check_parts(x, l, "msma");
  FeatureMap out = lma_forward(x, mp.global_lma);
  const int rows = x.height() / l;
  for (int j = 0; j < l; ++j) out.add_slab(j * rows, lma_forward(x.slab(j * rows, rows), mp.part_lmas[j]));
  return out;
}

FeatureMap msma_backward(const FeatureMap& x, const MsmaParams& mp, const FeatureMap& grad_out, MsmaGrads& g) {
  const int l = mp.l_parts();
  check_parts(x, l, "msma");
  if (static_cast<int>(g.part_lmas.size()) != l) g.part_lmas.assign(l, LmaGrads{});
  FeatureMap dx = lma_backward(x, mp.global_lma, grad_out, g.global_lma);
  const int rows = x.height() / l;
  for (int j = 0; j < l; ++j) {
    dx.add_slab(j * rows, lma_backward(x.slab(j * rows, rows), mp.part_lmas[j], grad_out.slab(j * rows, rows),
                                       g.part_lmas[j]));
  }
  return dx;
}

FeatureMap temporal_pool(const FeatureMap& x) {
  FeatureMap out(x.channels(), 1, x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    auto o = out.plane(c, 0);
    auto first = x.plane(c, 0);
    std::copy(first.begin(), first.end(), o.begin());
    for (int t = 1; t < x.frames(); ++t) {
      auto f = x.plane(c, t);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::max(o[i], f[i]);
    }
  }
  return out;
}

FeatureMap temporal_pool_backward(const FeatureMap& x, const FeatureMap& grad_out) {
  if (grad_out.shape() != Shape4{x.channels(), 1, x.height(), x.width()}) {
    fail(ErrorKind::kShape, "temporal pool gradient has shape " + grad_out.shape().str());
  }
  FeatureMap dx(x.shape());
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  for (int c = 0; c < x.channels(); ++c) {
    auto go = grad_out.plane(c, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      int arg = 0;
      double best = x.plane(c, 0)[i];
      for (int t = 1; t < x.frames(); ++t) {
        const double v = x.plane(c, t)[i];
        if (v > best) {
          best = v;
          arg = t;
        }
      }
      dx.plane(c, arg)[i] += go[i];
    }
  }
  return dx;
}

namespace {

void check_gem(const FeatureMap& pooled, double delta, int num_strips) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    fail(ErrorKind::kParameter, "gem: exponent must be positive and finite, got " + std::to_string(delta));
  }
  if (pooled.frames() != 1) fail(ErrorKind::kShape, "gem expects a temporally pooled map, got " + pooled.shape().str());
  if (num_strips <= 0 || pooled.height() % num_strips != 0) {
    fail(ErrorKind::kConfig, "gem: height " + std::to_string(pooled.height()) + " is not divisible by " +
                                 std::to_string(num_strips) + " strips");
  }
}

}  // namespace

StripMatrix gem_pool(const FeatureMap& pooled, double delta, int num_strips, double eps) {
  check_gem(pooled, delta, num_strips);
  const int rows = pooled.height() / num_strips;
  const std::size_t band = static_cast<std::size_t>(rows) * pooled.width();
  StripMatrix out(num_strips, pooled.channels());
  for (int c = 0; c < pooled.channels(); ++c) {
    for (int s = 0; s < num_strips; ++s) {
      const double* v = pooled.data() + pooled.index(c, 0, s * rows, 0);
      double vmax = eps;
      for (std::size_t i = 0; i < band; ++i) vmax = std::max(vmax, v[i]);
      // Scale by the band max so large exponents neither overflow nor underflow.
      double acc = 0.0;
      for (std::size_t i = 0; i < band; ++i) acc += std::pow(std::max(v[i], eps) / vmax, delta);
      out(s, c) = vmax * std::pow(acc / static_cast<double>(band), 1.0 / delta);
    }
  }
  return out;
}

GemBackward gem_backward(const FeatureMap& pooled, double delta, int num_strips, const StripMatrix& grad_out,
                         double eps) {
  check_gem(pooled, delta, num_strips);
  if (grad_out.rows() != num_strips || grad_out.cols() != pooled.channels()) {
    fail(ErrorKind::kShape, "gem gradient shape mismatch");
  }
  const int rows = pooled.height() / num_strips;
  const std::size_t band = static_cast<std::size_t>(rows) * pooled.width();
  const double n = static_cast<double>(band);
  GemBackward result{FeatureMap(pooled.shape()), 0.0};
  for (int c = 0; c < pooled.channels(); ++c) {
    for (int s = 0; s < num_strips; ++s) {
      const double go = grad_out(s, c);
      const double* v = pooled.data() + pooled.index(c, 0, s * rows, 0);
      double* dv = result.grad_input.data() + pooled.index(c, 0, s * rows, 0);
      double vmax = eps;
      for (std::size_t i = 0; i < band; ++i) vmax = std::max(vmax, v[i]);
      double sum_pow = 0.0, sum_pow_log = 0.0;
      for (std::size_t i = 0; i < band; ++i) {
        const double r = std::max(v[i], eps) / vmax;
        const double rp = std::pow(r, delta);
        sum_pow += rp;
        sum_pow_log += rp * std::log(r);
      }
      const double mean_pow = sum_pow / n;
      const double y = vmax * std::pow(mean_pow, 1.0 / delta);
      const double scale = std::pow(mean_pow, 1.0 / delta - 1.0) / n;
      for (std::size_t i = 0; i < band; ++i) {
        if (v[i] > eps) dv[i] += go * scale * std::pow(v[i] / vmax, delta - 1.0);
      }
      const double dy_ddelta = y * (-std::log(mean_pow) / (delta * delta) + (sum_pow_log / n) / (delta * mean_pow));
      result.grad_delta += go * dy_ddelta;
    }
  }
  return result;
}

StripMatrix strip_linear_forward(const StripMatrix& in, std::span<const LinearWeights> maps) {
  if (in.rows() != static_cast<Eigen::Index>(maps.size())) {
    fail(ErrorKind::kConfig, "strip count " + std::to_string(in.rows()) + " does not match " +
                                 std::to_string(maps.size()) + " per-strip maps");
  }
  if (maps.empty()) return StripMatrix(0, 0);
  const int out_dim = maps.front().out_dim;
  StripMatrix out(in.rows(), out_dim);
  for (std::size_t s = 0; s < maps.size(); ++s) {
    const auto& m = maps[s];
    if (m.in_dim != in.cols() || m.out_dim != out_dim || m.weight.size() != static_cast<std::size_t>(m.in_dim) * m.out_dim ||
        m.bias.size() != static_cast<std::size_t>(m.out_dim)) {
      fail(ErrorKind::kConfig, "strip map " + std::to_string(s) + " expects " + std::to_string(m.in_dim) +
                                   " inputs, got " + std::to_string(in.cols()));
    }
    Eigen::Map<const StripMatrix> w(m.weight.data(), m.out_dim, m.in_dim);
    Eigen::Map<const Eigen::VectorXd> b(m.bias.data(), m.out_dim);
    out.row(static_cast<Eigen::Index>(s)) = (w * in.row(static_cast<Eigen::Index>(s)).transpose() + b).transpose();
  }
  return out;
}

StripMatrix strip_linear_backward(const StripMatrix& in, std::span<const LinearWeights> maps,
                                  const StripMatrix& grad_out, std::span<const LinearGrads> grads) {
  if (grads.size() != maps.size() || grad_out.rows() != in.rows()) {
    fail(ErrorKind::kConfig, "strip map gradient buffers do not match");
  }
  StripMatrix din(in.rows(), in.cols());
  for (std::size_t s = 0; s < maps.size(); ++s) {
    const auto& m = maps[s];
    const Eigen::Index row = static_cast<Eigen::Index>(s);
    Eigen::Map<const StripMatrix> w(m.weight.data(), m.out_dim, m.in_dim);
    Eigen::Map<StripMatrix> dw(grads[s].weight.data(), m.out_dim, m.in_dim);
    Eigen::Map<Eigen::VectorXd> db(grads[s].bias.data(), m.out_dim);
    dw.noalias() += grad_out.row(row).transpose() * in.row(row);
    db += grad_out.row(row).transpose();
    din.row(row) = (w.transpose() * grad_out.row(row).transpose()).transpose();
  }
  return din;
}

StripMatrix sefc_forward(const StripMatrix& strips, const HeadParams& hp) {
  return strip_linear_forward(strips, hp.sefc_weights);
}

}  // namespace gaitmm
