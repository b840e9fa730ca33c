#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gaitmm/blocks.hpp"
#include "gaitmm/config.hpp"

namespace gaitmm {

enum class ParamModule { kBme, kPme, kMsma, kGem, kSefc, kClassifier };
const char* param_module_name(ParamModule m);

struct ParamEntry {
  std::string name;
  ParamModule module;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ConvSlot {
  int out_channels = 0;
  int in_channels = 0;
  std::size_t kernel = 0;
  std::size_t bias = 0;
};

struct SeparableSlot {
  int out_channels = 0;
  int in_channels = 0;
  std::size_t depthwise = 0;
  std::size_t pointwise = 0;
  std::size_t bias = 0;
};

struct LinearSlot {
  int out_dim = 0;
  int in_dim = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;
};

using PartSlot = std::variant<ConvSlot, SeparableSlot>;

// Offsets of every learnable tensor inside one flat parameter vector. Parameters and their
// gradients share this layout.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& cfg);

  std::size_t total() const { return total_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  const ConvSlot& bme(int block) const { return bme_.at(block); }
  // Empty when the PME path is ablated.
  const std::vector<PartSlot>& pme(int block) const { return pme_.at(block); }
  // Offset of (p1, p2) for the global LMA (part = -1) or part LMA j.
  std::size_t lma(int part) const { return part < 0 ? msma_global_ : msma_parts_.at(part); }
  bool has_msma() const { return has_msma_; }
  std::size_t gem_delta() const { return gem_delta_; }
  const LinearSlot& sefc(int strip) const { return sefc_.at(strip); }
  const LinearSlot& classifier(int strip) const { return classifier_.at(strip); }

 private:
  std::size_t add(const std::string& name, ParamModule module, std::size_t size);

  std::size_t total_ = 0;
  std::vector<ParamEntry> entries_;
  std::vector<ConvSlot> bme_;
  std::vector<std::vector<PartSlot>> pme_;
  bool has_msma_ = false;
  std::size_t msma_global_ = 0;
  std::vector<std::size_t> msma_parts_;
  std::size_t gem_delta_ = 0;
  std::vector<LinearSlot> sefc_;
  std::vector<LinearSlot> classifier_;
};

// Typed views into a flat buffer laid out by ParamLayout (const for weights, mutable for gradients).
template <class T>
class ParamViews {
 public:
  ParamViews(const ParamLayout& layout, std::span<T> buffer) : layout_(&layout), buf_(buffer) {}

  Conv3dView<T> bme(int block) const { return conv(layout_->bme(block)); }

  std::vector<std::variant<Conv3dView<T>, DepthwiseSeparable3dView<T>>> pme(int block) const {
    std::vector<std::variant<Conv3dView<T>, DepthwiseSeparable3dView<T>>> out;
    for (const auto& slot : layout_->pme(block)) {
      if (const auto* c = std::get_if<ConvSlot>(&slot)) {
        out.emplace_back(conv(*c));
      } else {
        const auto& s = std::get<SeparableSlot>(slot);
        out.emplace_back(DepthwiseSeparable3dView<T>{
            s.out_channels, s.in_channels,
            buf_.subspan(s.depthwise, static_cast<std::size_t>(s.in_channels) * kKernelTaps),
            buf_.subspan(s.pointwise, static_cast<std::size_t>(s.in_channels) * s.out_channels),
            buf_.subspan(s.bias, s.out_channels)});
      }
    }
    return out;
  }

  T& lma_p1(int part) const { return buf_[layout_->lma(part)]; }
  T& lma_p2(int part) const { return buf_[layout_->lma(part) + 1]; }
  T& gem_delta() const { return buf_[layout_->gem_delta()]; }

  LinearView<T> sefc(int strip) const { return linear(layout_->sefc(strip)); }
  LinearView<T> classifier(int strip) const { return linear(layout_->classifier(strip)); }

 private:
  Conv3dView<T> conv(const ConvSlot& s) const {
    return {s.out_channels, s.in_channels,
            buf_.subspan(s.kernel, Conv3dView<T>::kernel_size(s.out_channels, s.in_channels)),
            buf_.subspan(s.bias, s.out_channels)};
  }
  LinearView<T> linear(const LinearSlot& s) const {
    return {s.out_dim, s.in_dim, buf_.subspan(s.weight, static_cast<std::size_t>(s.out_dim) * s.in_dim),
            buf_.subspan(s.bias, s.out_dim)};
  }

  const ParamLayout* layout_;
  std::span<T> buf_;
};

// All learnable weights of one model plus the configuration that shapes them.
class ModelParams {
 public:
  // All parameters zero, except LMA weights and the GeM exponent which take their configured initial values.
  explicit ModelParams(ModelConfig cfg);
  // Fan-in scaled uniform weights, zero biases, LMA weights and GeM exponent at their initial values.
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);

  ModelParams(const ModelParams& other);
  ModelParams& operator=(const ModelParams& other);
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return *layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  ParamViews<const double> view() const { return {*layout_, std::span<const double>(values_)}; }
  ParamViews<double> mutable_view() { return {*layout_, std::span<double>(values_)}; }

  Conv3dWeights bme(int block) const { return view().bme(block); }
  PartFilterBank pme(int block) const;
  MsmaParams msma() const;
  HeadParams head() const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParamLayout> layout_;
  AlignedVector values_;
};

struct ParamCount {
  std::size_t total = 0;
  std::map<ParamModule, std::size_t> per_module;
  std::size_t of(ParamModule m) const {
    auto it = per_module.find(m);
    return it == per_module.end() ? 0 : it->second;
  }
};

ParamCount count_parameters(const ModelConfig& cfg);
inline ParamCount count_parameters(const ModelParams& params) { return count_parameters(params.config()); }

}  // namespace gaitmm
