#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <unistd.h>

#include "gaitmm/config.hpp"
#include "gaitmm/error.hpp"
#include "gaitmm/rng.hpp"
#include "gaitmm/tensor.hpp"

namespace testing {

inline gaitmm::FeatureMap random_map(int c, int d, int h, int w, gaitmm::Rng& rng, double lo = -1.0, double hi = 1.0) {
  gaitmm::FeatureMap x(c, d, h, w);
  for (double& v : x.values()) v = rng.uniform(lo, hi);
  return x;
}

inline gaitmm::StripMatrix random_strips(int rows, int cols, gaitmm::Rng& rng) {
  gaitmm::StripMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

// A few thousand parameters; runs a forward pass in well under a millisecond.
inline gaitmm::ModelConfig tiny_model() {
  gaitmm::ModelConfig m;
  m.input_height = 8;
  m.input_width = 4;
  m.num_ffsl_blocks = 3;
  m.stage_channels = {2, 3, 3};
  m.k_parts = 4;
  m.l_parts = 4;
  m.msma_after_block = 2;
  m.num_strips = 4;
  m.embed_dim = 5;
  m.num_classes = 4;
  return m;
}

// |a - b| <= rel * max(|a|, |b|) + abs.
inline bool close(double a, double b, double rel, double abs) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs;
}

template <class Fn>
gaitmm::ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const gaitmm::Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a gaitmm::Error");
}

template <class Fn>
std::string error_message_of(Fn&& fn) {
  try {
    fn();
  } catch (const gaitmm::Error& e) {
    return e.what();
  }
  return {};
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gaitmm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
