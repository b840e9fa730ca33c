#include "gaitmm/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "gaitmm/error.hpp"

namespace gaitmm {

TrainingState TrainingState::fresh(const RunConfig& cfg) {
  require_valid(cfg);
  TrainingState s{cfg, ModelParams::initialize(cfg.model, mix_seed(cfg.train.seed, 1)), {},
                  Rng(mix_seed(cfg.train.seed, 2)), 0};
  s.adam.m.assign(s.params.values().size(), 0.0);
  s.adam.v.assign(s.params.values().size(), 0.0);
  return s;
}

namespace {

void write_doubles(std::ofstream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& is, double* dst, std::size_t n, const std::string& path) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) fail(ErrorKind::kIo, "checkpoint '" + path + "' is truncated");
}

}  // namespace

void save_checkpoint(const TrainingState& state, const std::string& path) {
  nlohmann::json header;
  header["schema"] = "gaitmm-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = dump_config(state.cfg);
  header["iteration"] = state.iteration;
  header["adam_step"] = state.adam.step;
  header["sampler"] = state.sampler.state();
  header["param_count"] = state.params.values().size();
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& e : state.params.layout().entries()) {
    layout.push_back({{"name", e.name}, {"offset", e.offset}, {"size", e.size}});
  }
  header["layout"] = std::move(layout);
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::kIo, "cannot write checkpoint '" + tmp + "'");
    os.write(kCheckpointMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    os.write(reinterpret_cast<const char*>(&length), sizeof(length));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto values = state.params.values();
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    write_doubles(os, state.adam.m);
    write_doubles(os, state.adam.v);
    os.flush();
    if (!os) fail(ErrorKind::kIo, "failed writing checkpoint '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move checkpoint into '" + path + "': " + ec.message());
}

TrainingState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  is.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(ErrorKind::kIo, "'" + path + "' is not a checkpoint");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kIo, "checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  }
  if (length > (1u << 30)) fail(ErrorKind::kIo, "checkpoint '" + path + "' has a corrupt header");
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) fail(ErrorKind::kIo, "checkpoint '" + path + "' is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, "checkpoint '" + path + "' header: " + e.what());
  }
  const RunConfig cfg = parse_config(header.at("config").get<std::string>());
  TrainingState state{cfg, ModelParams(cfg.model), {}, Rng(), header.at("iteration").get<int>()};
  const std::size_t n = state.params.values().size();
  if (header.at("param_count").get<std::size_t>() != n) {
    fail(ErrorKind::kIo, "checkpoint '" + path + "' parameter count does not match its configuration");
  }
  state.adam.step = header.at("adam_step").get<std::int64_t>();
  state.sampler.set_state(header.at("sampler").get<std::string>());
  state.adam.m.resize(n);
  state.adam.v.resize(n);
  read_doubles(is, state.params.values().data(), n, path);
  read_doubles(is, state.adam.m.data(), n, path);
  read_doubles(is, state.adam.v.data(), n, path);
  return state;
}

}  // namespace gaitmm
