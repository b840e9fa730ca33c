#include "gaitmm/params.hpp"

#include <cmath>

#include "gaitmm/error.hpp"
#include "gaitmm/rng.hpp"

namespace gaitmm {

const char* param_module_name(ParamModule m) {
  switch (m) {
    case ParamModule::kBme: return "bme";
    case ParamModule::kPme: return "pme";
    case ParamModule::kMsma: return "msma";
    case ParamModule::kGem: return "gem";
    case ParamModule::kSefc: return "sefc";
    case ParamModule::kClassifier: return "classifier";
  }
  return "?";
}

std::size_t ParamLayout::add(const std::string& name, ParamModule module, std::size_t size) {
  entries_.push_back({name, module, total_, size});
  const std::size_t offset = total_;
  total_ += size;
  return offset;
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
  require_valid(cfg);
  int in = cfg.input_channels;
  for (int b = 0; b < cfg.num_ffsl_blocks; ++b) {
    const int out = cfg.stage_channels[b];
    const std::string prefix = "block" + std::to_string(b + 1);
    ConvSlot body{out, in, 0, 0};
    body.kernel = add(prefix + ".bme.kernel", ParamModule::kBme, Conv3dWeights::kernel_size(out, in));
    body.bias = add(prefix + ".bme.bias", ParamModule::kBme, out);
    bme_.push_back(body);
    std::vector<PartSlot> parts;
    if (cfg.ablation.use_pme) {
      for (int j = 0; j < cfg.k_parts; ++j) {
        const std::string p = prefix + ".pme.part" + std::to_string(j);
        if (cfg.pme_mode == PmeMode::kStandard) {
          ConvSlot s{out, in, 0, 0};
          s.kernel = add(p + ".kernel", ParamModule::kPme, Conv3dWeights::kernel_size(out, in));
          s.bias = add(p + ".bias", ParamModule::kPme, out);
          parts.emplace_back(s);
        } else {
          SeparableSlot s{out, in, 0, 0, 0};
          s.depthwise = add(p + ".depthwise", ParamModule::kPme, static_cast<std::size_t>(in) * kKernelTaps);
          s.pointwise = add(p + ".pointwise", ParamModule::kPme, static_cast<std::size_t>(in) * out);
          s.bias = add(p + ".bias", ParamModule::kPme, out);
          parts.emplace_back(s);
        }
      }
    }
    pme_.push_back(std::move(parts));
    in = out;
  }
  has_msma_ = cfg.ablation.use_msma;
  if (has_msma_) {
    msma_global_ = add("msma.global", ParamModule::kMsma, 2);
    for (int j = 0; j < cfg.l_parts; ++j) {
      msma_parts_.push_back(add("msma.part" + std::to_string(j), ParamModule::kMsma, 2));
    }
  }
  gem_delta_ = add("gem.delta", ParamModule::kGem, 1);
  const int channels = cfg.output_channels();
  for (int s = 0; s < cfg.num_strips; ++s) {
    const std::string p = "sefc.strip" + std::to_string(s);
    LinearSlot l{cfg.embed_dim, channels, 0, 0};
    l.weight = add(p + ".weight", ParamModule::kSefc, static_cast<std::size_t>(cfg.embed_dim) * channels);
    l.bias = add(p + ".bias", ParamModule::kSefc, cfg.embed_dim);
    sefc_.push_back(l);
  }
  for (int s = 0; s < cfg.num_strips; ++s) {
    const std::string p = "classifier.strip" + std::to_string(s);
    LinearSlot l{cfg.num_classes, cfg.embed_dim, 0, 0};
    l.weight = add(p + ".weight", ParamModule::kClassifier, static_cast<std::size_t>(cfg.num_classes) * cfg.embed_dim);
    l.bias = add(p + ".bias", ParamModule::kClassifier, cfg.num_classes);
    classifier_.push_back(l);
  }
}

ModelParams::ModelParams(ModelConfig cfg)
    : cfg_(std::move(cfg)), layout_(std::make_unique<ParamLayout>(cfg_)), values_(layout_->total(), 0.0) {
  auto v = mutable_view();
  if (layout_->has_msma()) {
    for (int j = -1; j < cfg_.l_parts; ++j) {
      v.lma_p1(j) = cfg_.lma_init;
      v.lma_p2(j) = cfg_.lma_init;
    }
  }
  v.gem_delta() = cfg_.gem_delta_init;
}

ModelParams::ModelParams(const ModelParams& other)
    : cfg_(other.cfg_), layout_(std::make_unique<ParamLayout>(*other.layout_)), values_(other.values_) {}

ModelParams& ModelParams::operator=(const ModelParams& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    layout_ = std::make_unique<ParamLayout>(*other.layout_);
    values_ = other.values_;
  }
  return *this;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  Rng rng(seed);
  auto fill_uniform = [&](std::span<double> w, double bound) {
    for (double& x : w) x = rng.uniform(-bound, bound);
  };
  auto v = p.mutable_view();
  for (int b = 0; b < cfg.num_ffsl_blocks; ++b) {
    auto body = v.bme(b);
    fill_uniform(body.kernel, std::sqrt(6.0 / (body.in_channels * kKernelTaps)));
    for (auto& part : v.pme(b)) {
      if (auto* c = std::get_if<Conv3dGrads>(&part)) {
        fill_uniform(c->kernel, std::sqrt(6.0 / (c->in_channels * kKernelTaps)));
      } else {
        auto& s = std::get<DepthwiseSeparable3dGrads>(part);
        fill_uniform(s.depthwise, std::sqrt(6.0 / kKernelTaps));
        fill_uniform(s.pointwise, std::sqrt(6.0 / s.in_channels));
      }
    }
  }
  for (int s = 0; s < cfg.num_strips; ++s) {
    auto l = v.sefc(s);
    fill_uniform(l.weight, 1.0 / std::sqrt(static_cast<double>(l.in_dim)));
  }
  for (int s = 0; s < cfg.num_strips; ++s) {
    auto l = v.classifier(s);
    fill_uniform(l.weight, 1.0 / std::sqrt(static_cast<double>(l.in_dim)));
  }
  return p;
}

PartFilterBank ModelParams::pme(int block) const {
  PartFilterBank bank;
  for (auto& part : view().pme(block)) {
    std::visit([&](const auto& w) { bank.banks.emplace_back(w); }, part);
  }
  return bank;
}

MsmaParams ModelParams::msma() const {
  MsmaParams mp;
  if (!layout_->has_msma()) return mp;
  auto v = view();
  mp.global_lma = {v.lma_p1(-1), v.lma_p2(-1)};
  for (int j = 0; j < cfg_.l_parts; ++j) mp.part_lmas.push_back({v.lma_p1(j), v.lma_p2(j)});
  return mp;
}

HeadParams ModelParams::head() const {
  HeadParams hp;
  auto v = view();
  hp.gem_delta = v.gem_delta();
  for (int s = 0; s < cfg_.num_strips; ++s) {
    hp.sefc_weights.push_back(v.sefc(s));
    hp.classifier_weights.push_back(v.classifier(s));
  }
  return hp;
}

ParamCount count_parameters(const ModelConfig& cfg) {
  ParamLayout layout(cfg);
  ParamCount count;
  for (const auto& e : layout.entries()) {
    count.per_module[e.module] += e.size;
    count.total += e.size;
  }
  return count;
}

}  // namespace gaitmm
