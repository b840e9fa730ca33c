#include "gaitmm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "gaitmm/error.hpp"

namespace gaitmm {

const char* pme_mode_name(PmeMode mode) {
  return mode == PmeMode::kStandard ? "standard" : "depthwise_separable";
}

PmeMode parse_pme_mode(const std::string& s) {
  if (s == "standard") return PmeMode::kStandard;
  if (s == "depthwise_separable" || s == "dw") return PmeMode::kDepthwiseSeparable;
  fail(ErrorKind::kConfig, "unknown pme_mode '" + s + "' (expected standard or depthwise_separable)");
}

ModelConfig ModelConfig::large_dataset() {
  ModelConfig cfg;
  cfg.num_ffsl_blocks = 6;
  cfg.stage_channels = {32, 32, 64, 64, 128, 128};
  cfg.msma_after_block = 4;
  cfg.num_classes = 5153;
  return cfg;
}

RunConfig RunConfig::desk_preset() {
  RunConfig cfg;
  cfg.model.input_height = 32;
  cfg.model.input_width = 22;
  cfg.model.stage_channels = {4, 8, 16};
  cfg.model.num_strips = 16;
  cfg.model.embed_dim = 32;
  cfg.model.num_classes = 8;
  cfg.train.iterations = 2000;
  cfg.train.base_lr = 1e-3;
  cfg.train.decay_at = 1600;
  cfg.train.decayed_lr = 1e-4;
  cfg.train.P = 4;
  cfg.train.K = 4;
  cfg.train.checkpoint_every = 500;
  return cfg;
}

std::vector<std::string> validate(const ModelConfig& c) {
  std::vector<std::string> v;
  auto positive = [&](int value, const char* name) {
    if (value <= 0) v.push_back(std::string(name) + " must be positive (got " + std::to_string(value) + ")");
  };
  positive(c.input_channels, "input_channels");
  positive(c.input_height, "input_height");
  positive(c.input_width, "input_width");
  positive(c.num_ffsl_blocks, "num_ffsl_blocks");
  positive(c.k_parts, "k_parts");
  positive(c.l_parts, "l_parts");
  positive(c.num_strips, "num_strips");
  positive(c.embed_dim, "embed_dim");
  positive(c.num_classes, "num_classes");
  auto divisible = [&](int parts, const char* name) {
    if (parts > 0 && c.input_height > 0 && c.input_height % parts != 0) {
      v.push_back("input_height (" + std::to_string(c.input_height) + ") must be divisible by " + name + " (" +
                  std::to_string(parts) + ")");
    }
  };
  divisible(c.k_parts, "k_parts");
  if (c.ablation.use_msma) divisible(c.l_parts, "l_parts");
  divisible(c.num_strips, "num_strips");
  if (static_cast<int>(c.stage_channels.size()) != c.num_ffsl_blocks) {
    v.push_back("stage_channels lists " + std::to_string(c.stage_channels.size()) + " widths but num_ffsl_blocks is " +
                std::to_string(c.num_ffsl_blocks));
  }
  for (int ch : c.stage_channels) {
    if (ch <= 0) v.push_back("stage_channels entries must be positive");
  }
  if (c.ablation.use_msma && (c.msma_after_block < 1 || c.msma_after_block >= c.num_ffsl_blocks)) {
    v.push_back("msma_after_block must satisfy 1 <= msma_after_block < num_ffsl_blocks (got " +
                std::to_string(c.msma_after_block) + " with " + std::to_string(c.num_ffsl_blocks) + " blocks)");
  }
  if (!(c.gem_delta_init > 0.0) || !std::isfinite(c.gem_delta_init)) v.push_back("gem_delta_init must be > 0");
  if (!(c.gem_eps > 0.0)) v.push_back("gem_eps must be > 0");
  if (!(c.leaky_slope >= 0.0 && c.leaky_slope < 1.0)) v.push_back("leaky_slope must lie in [0, 1)");
  if (!std::isfinite(c.lma_init)) v.push_back("lma_init must be finite");
  return v;
}

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> v = validate(cfg.model);
  const TrainConfig& t = cfg.train;
  if (t.iterations < 0) v.push_back("iterations must be >= 0");
  if (t.decay_at < 0) v.push_back("decay_at must be >= 0");
  if (!(t.base_lr > 0.0)) v.push_back("base_lr must be > 0");
  if (!(t.decayed_lr > 0.0)) v.push_back("decayed_lr must be > 0");
  if (!(t.margin >= 0.0)) v.push_back("margin must be >= 0");
  if (t.P < 2) v.push_back("P must be >= 2 (triplets need two identities)");
  if (t.K < 2) v.push_back("K must be >= 2 (triplets need two sequences per identity)");
  if (t.D <= 0) v.push_back("D must be positive");
  if (cfg.model.ablation.use_msma && t.D > 0 && t.D % 3 != 0) {
    v.push_back("frames entering MSMA must be divisible by 3 (D = " + std::to_string(t.D) + ")");
  }
  if (t.checkpoint_every < 0) v.push_back("checkpoint_every must be >= 0");
  if (!(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0)) v.push_back("adam_beta1 must lie in [0, 1)");
  if (!(t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0)) v.push_back("adam_beta2 must lie in [0, 1)");
  if (!(t.adam_eps > 0.0)) v.push_back("adam_eps must be > 0");
  if (!(t.weight_decay >= 0.0)) v.push_back("weight_decay must be >= 0");
  if (!(t.grad_clip >= 0.0)) v.push_back("grad_clip must be >= 0");
  if (!(t.triplet_weight >= 0.0) || !(t.ce_weight >= 0.0)) v.push_back("loss weights must be >= 0");
  if (t.min_train_frames < 1) v.push_back("min_train_frames must be >= 1");
  return v;
}

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::string msg = "invalid configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  return msg;
}

}  // namespace

void require_valid(const ModelConfig& cfg) {
  auto v = validate(cfg);
  if (!v.empty()) fail(ErrorKind::kConfig, join_violations(v));
}

void require_valid(const RunConfig& cfg) {
  auto v = validate(cfg);
  if (!v.empty()) fail(ErrorKind::kConfig, join_violations(v));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  const std::string t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    fail(ErrorKind::kConfig, key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

int parse_int32(const std::string& key, const std::string& s) {
  const long long v = parse_int(key, s);
  if (v < INT32_MIN || v > INT32_MAX) fail(ErrorKind::kConfig, key + ": integer out of range");
  return static_cast<int>(v);
}

double parse_real(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size()) fail(ErrorKind::kConfig, key + ": expected a real number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  fail(ErrorKind::kConfig, key + ": expected true or false, got '" + s + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int32(key, item));
  if (out.empty()) fail(ErrorKind::kConfig, key + ": expected a comma-separated integer list");
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string section;
  std::string name;
  std::string type;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  std::string key() const { return section + "." + name; }
};

#define GAITMM_INT_FIELD(sec, obj, member)                                                              \
  Field{sec, #member, "int", [](const RunConfig& c) { return std::to_string(c.obj.member); },            \
        [](RunConfig& c, const std::string& s) { c.obj.member = parse_int32(sec "." #member, s); }}
#define GAITMM_REAL_FIELD(sec, obj, member)                                                             \
  Field{sec, #member, "real", [](const RunConfig& c) { return format_real(c.obj.member); },              \
        [](RunConfig& c, const std::string& s) { c.obj.member = parse_real(sec "." #member, s); }}
#define GAITMM_BOOL_FIELD(sec, obj, member)                                                             \
  Field{sec, #member, "bool", [](const RunConfig& c) { return std::string(c.obj.member ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& s) { c.obj.member = parse_bool(sec "." #member, s); }}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      GAITMM_INT_FIELD("model", model, input_channels),
      GAITMM_INT_FIELD("model", model, input_height),
      GAITMM_INT_FIELD("model", model, input_width),
      GAITMM_INT_FIELD("model", model, num_ffsl_blocks),
      Field{"model", "stage_channels", "ints", [](const RunConfig& c) { return format_ints(c.model.stage_channels); },
            [](RunConfig& c, const std::string& s) { c.model.stage_channels = parse_ints("model.stage_channels", s); }},
      GAITMM_INT_FIELD("model", model, k_parts),
      GAITMM_INT_FIELD("model", model, l_parts),
      GAITMM_INT_FIELD("model", model, msma_after_block),
      Field{"model", "pme_mode", "enum", [](const RunConfig& c) { return std::string(pme_mode_name(c.model.pme_mode)); },
            [](RunConfig& c, const std::string& s) { c.model.pme_mode = parse_pme_mode(trim(s)); }},
      GAITMM_INT_FIELD("model", model, num_strips),
      GAITMM_INT_FIELD("model", model, embed_dim),
      GAITMM_INT_FIELD("model", model, num_classes),
      GAITMM_REAL_FIELD("model", model, leaky_slope),
      GAITMM_REAL_FIELD("model", model, gem_delta_init),
      GAITMM_REAL_FIELD("model", model, gem_eps),
      GAITMM_REAL_FIELD("model", model, lma_init),
      GAITMM_BOOL_FIELD("ablation", model.ablation, use_pme),
      GAITMM_BOOL_FIELD("ablation", model.ablation, use_msma),
      GAITMM_INT_FIELD("train", train, iterations),
      GAITMM_REAL_FIELD("train", train, base_lr),
      GAITMM_INT_FIELD("train", train, decay_at),
      GAITMM_REAL_FIELD("train", train, decayed_lr),
      GAITMM_REAL_FIELD("train", train, margin),
      GAITMM_INT_FIELD("train", train, P),
      GAITMM_INT_FIELD("train", train, K),
      GAITMM_INT_FIELD("train", train, D),
      Field{"train", "seed", "int", [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& s) {
              const long long v = parse_int("train.seed", s);
              if (v < 0) fail(ErrorKind::kConfig, "train.seed must be >= 0");
              c.train.seed = static_cast<std::uint64_t>(v);
            }},
      GAITMM_INT_FIELD("train", train, checkpoint_every),
      GAITMM_REAL_FIELD("train", train, adam_beta1),
      GAITMM_REAL_FIELD("train", train, adam_beta2),
      GAITMM_REAL_FIELD("train", train, adam_eps),
      GAITMM_REAL_FIELD("train", train, weight_decay),
      GAITMM_REAL_FIELD("train", train, grad_clip),
      GAITMM_REAL_FIELD("train", train, triplet_weight),
      GAITMM_REAL_FIELD("train", train, ce_weight),
      GAITMM_INT_FIELD("train", train, min_train_frames),
      GAITMM_BOOL_FIELD("train", train, recompute_activations),
  };
  return fields;
}

#undef GAITMM_INT_FIELD
#undef GAITMM_REAL_FIELD
#undef GAITMM_BOOL_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : schema()) {
    if (f.key() == key) return f;
  }
  fail(ErrorKind::kConfig, "unknown configuration key '" + key + "'");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::kConfig, where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kConfig, where + "expected '<type> <key> = <value>'");
    std::istringstream lhs(line.substr(0, eq));
    std::string type, name, extra;
    lhs >> type >> name >> extra;
    if (name.empty() || !extra.empty()) fail(ErrorKind::kConfig, where + "expected '<type> <key> = <value>'");
    if (section.empty()) fail(ErrorKind::kConfig, where + "entry outside of a section");
    const Field& f = find_field(section + "." + name);
    if (f.type != type) {
      fail(ErrorKind::kConfig, where + f.key() + " is declared '" + type + "' but has type '" + f.type + "'");
    }
    f.set(cfg, trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::kIo, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-5s %-22s = ", f.type.c_str(), f.name.c_str());
    out += buf + f.get(cfg) + "\n";
  }
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_field(key).get(cfg); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : schema()) keys.push_back(f.key());
  return keys;
}

}  // namespace gaitmm
