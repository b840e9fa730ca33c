#include "gaitmm/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"

#include "gaitmm/error.hpp"
#include "gaitmm/model.hpp"
#include "gaitmm/parallel.hpp"

namespace fs = std::filesystem;

namespace gaitmm {

std::optional<GaitEmbedding> extract_embedding(const SilhouetteSequence& seq, const ModelParams& params,
                                               std::string* warning) {
  const int usable = seq.frames.frames / 3 * 3;
  if (usable < 3) {
    if (warning != nullptr) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "skipping subject %03d %s-%02d view %03d: %d frame(s), need at least 3",
                    seq.subject_id, condition_name(seq.condition), seq.seq_index, seq.view_deg, seq.frames.frames);
      *warning = buf;
    }
    return std::nullopt;
  }
  std::vector<int> order(usable);
  for (int t = 0; t < usable; ++t) order[t] = t;
  const ModelConfig& cfg = params.config();
  const FeatureMap clip = frames_to_clip(seq.frames, order, cfg.input_height, cfg.input_width);
  GaitEmbedding e;
  e.strips = forward_item(params, clip).embedding;
  e.subject_id = seq.subject_id;
  e.view_deg = seq.view_deg;
  e.condition = seq.condition;
  e.seq_index = seq.seq_index;
  return e;
}

EmbeddingSet extract_embeddings(const Dataset& data, std::span<const std::size_t> indices,
                                const ModelParams& params) {
  std::vector<std::optional<GaitEmbedding>> slots(indices.size());
  std::vector<std::string> notes(indices.size());
  parallel_for(indices.size(), [&](std::size_t i) {
    slots[i] = extract_embedding(data.sequences.at(indices[i]), params, &notes[i]);
  });
  EmbeddingSet set;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      set.items.push_back(std::move(*slots[i]));
    } else {
      set.warnings.push_back(notes[i]);
    }
  }
  return set;
}

double pairwise_distance(const StripMatrix& a, const StripMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kConfig, "embedding shapes differ: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                 " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (a.rows() == 0) return 0.0;
  return (a - b).rowwise().norm().mean();
}

void RankOneReport::recompute_means() {
  double total = 0.0;
  int counted = 0;
  for (auto& c : conditions) {
    const std::size_t n = c.views.size();
    c.row_means.assign(n, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int cells = 0;
    for (std::size_t p = 0; p < n; ++p) {
      double row = 0.0;
      int row_cells = 0;
      for (std::size_t g = 0; g < n; ++g) {
        if (p == g || std::isnan(c.cells[p][g])) continue;
        row += c.cells[p][g];
        ++row_cells;
      }
      if (row_cells > 0) c.row_means[p] = row / row_cells;
      sum += row;
      cells += row_cells;
    }
    c.mean = cells > 0 ? sum / cells : std::numeric_limits<double>::quiet_NaN();
    if (cells > 0) {
      total += c.mean;
      ++counted;
    }
  }
  overall_mean = counted > 0 ? total / counted : std::numeric_limits<double>::quiet_NaN();
}

const ConditionReport* RankOneReport::find(Condition c) const {
  for (const auto& r : conditions) {
    if (r.condition == c) return &r;
  }
  return nullptr;
}

namespace {

std::string view_label(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

void require_views(const SplitProtocol& protocol, const std::set<int>& gallery_views,
                   const std::set<int>& probe_views) {
  std::string missing;
  for (int v : protocol.views) {
    const bool in_gallery = gallery_views.count(v) > 0;
    const bool in_probes = probe_views.count(v) > 0;
    if (in_gallery && in_probes) continue;
    if (!missing.empty()) missing += ", ";
    missing += view_label(v);
    missing += in_gallery ? " (no probes)" : in_probes ? " (no gallery)" : " (no gallery, no probes)";
  }
  if (!missing.empty()) {
    fail(ErrorKind::kProtocol, std::string("protocol ") + protocol_name(protocol.name) +
                                   " requires views missing from the data: " + missing);
  }
}

}  // namespace

RankOneReport rank1_matrix(std::span<const GaitEmbedding> gallery, std::span<const GaitEmbedding> probes,
                           const SplitProtocol& protocol) {
  std::set<int> gallery_views, probe_views;
  for (const auto& g : gallery) gallery_views.insert(g.view_deg);
  for (const auto& p : probes) probe_views.insert(p.view_deg);
  require_views(protocol, gallery_views, probe_views);

  std::vector<int> views = protocol.views;
  if (views.empty()) {
    std::set<int> all = gallery_views;
    all.insert(probe_views.begin(), probe_views.end());
    views.assign(all.begin(), all.end());
    std::string missing;
    for (int v : views) {
      if (!gallery_views.count(v)) missing += (missing.empty() ? "" : ", ") + view_label(v);
    }
    if (!missing.empty()) fail(ErrorKind::kProtocol, "no gallery embeddings for view(s) " + missing);
  }
  std::vector<Condition> conditions = protocol.probe_conditions;
  if (conditions.empty()) {
    std::set<Condition> seen;
    for (const auto& p : probes) seen.insert(p.condition);
    conditions.assign(seen.begin(), seen.end());
  }

  std::map<int, std::size_t> column;
  for (std::size_t i = 0; i < views.size(); ++i) column[views[i]] = i;
  std::vector<std::vector<std::size_t>> gallery_by_view(views.size());
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    auto it = column.find(gallery[g].view_deg);
    if (it != column.end()) gallery_by_view[it->second].push_back(g);
  }

  RankOneReport report;
  for (Condition cond : conditions) {
    ConditionReport c;
    c.condition = cond;
    c.views = views;
    const std::size_t n = views.size();
    std::vector<std::vector<int>> correct(n, std::vector<int>(n, 0));
    std::vector<int> probe_count(n, 0);
    for (const auto& probe : probes) {
      if (probe.condition != cond) continue;
      auto row = column.find(probe.view_deg);
      if (row == column.end()) continue;
      const std::size_t p = row->second;
      ++probe_count[p];
      for (std::size_t g = 0; g < n; ++g) {
        if (g == p) continue;
        const GaitEmbedding* best = nullptr;
        std::tuple<double, int, int, int> best_key;
        for (std::size_t idx : gallery_by_view[g]) {
          const GaitEmbedding& cand = gallery[idx];
          const auto key = std::tuple(pairwise_distance(probe, cand), cand.subject_id,
                                      static_cast<int>(cand.condition), cand.seq_index);
          if (best == nullptr || key < best_key) {
            best = &cand;
            best_key = key;
          }
        }
        if (best != nullptr && best->subject_id == probe.subject_id) ++correct[p][g];
      }
    }
    c.cells.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t p = 0; p < n; ++p) {
      if (probe_count[p] == 0) continue;
      for (std::size_t g = 0; g < n; ++g) {
        if (g != p) c.cells[p][g] = static_cast<double>(correct[p][g]) / probe_count[p];
      }
    }
    report.conditions.push_back(std::move(c));
  }
  report.recompute_means();
  return report;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  return os;
}

}  // namespace

void emit_report(const RankOneReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + dir + "': " + ec.message());
  for (const auto& c : report.conditions) {
    std::ofstream os = open_out(fs::path(dir) / (std::string("rank1_") + condition_name(c.condition) + ".csv"));
    os << "probe_view";
    for (int v : c.views) os << ',' << view_label(v);
    os << ",mean\n";
    for (std::size_t p = 0; p < c.views.size(); ++p) {
      os << view_label(c.views[p]);
      for (std::size_t g = 0; g < c.views.size(); ++g) os << ',' << fmt(c.cells[p][g]);
      os << ',' << fmt(p < c.row_means.size() ? c.row_means[p] : std::nan("")) << '\n';
    }
    if (!os) fail(ErrorKind::kIo, "failed writing report in '" + dir + "'");
  }
  std::ofstream os = open_out(fs::path(dir) / "summary.csv");
  os << "condition,mean\n";
  for (const auto& c : report.conditions) os << condition_name(c.condition) << ',' << fmt(c.mean) << '\n';
  if (!report.conditions.empty()) os << "all," << fmt(report.overall_mean) << '\n';
  if (!os) fail(ErrorKind::kIo, "failed writing report in '" + dir + "'");
}

void save_embeddings(const std::string& path, std::span<const GaitEmbedding> embeddings) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : embeddings) {
    std::vector<double> values(e.strips.data(), e.strips.data() + e.strips.size());
    out.push_back({{"subject", e.subject_id},
                   {"condition", condition_name(e.condition)},
                   {"seq", e.seq_index},
                   {"view", e.view_deg},
                   {"rows", e.strips.rows()},
                   {"cols", e.strips.cols()},
                   {"values", values}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  os << out.dump() << '\n';
  if (!os) fail(ErrorKind::kIo, "failed writing '" + path + "'");
}

std::vector<GaitEmbedding> load_embeddings(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<GaitEmbedding> out;
  try {
    const nlohmann::json in = nlohmann::json::parse(is);
    for (const auto& j : in) {
      GaitEmbedding e;
      e.subject_id = j.at("subject").get<int>();
      e.condition = parse_condition(j.at("condition").get<std::string>());
      e.seq_index = j.at("seq").get<int>();
      e.view_deg = j.at("view").get<int>();
      const auto rows = j.at("rows").get<Eigen::Index>();
      const auto cols = j.at("cols").get<Eigen::Index>();
      const auto values = j.at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != rows * cols) fail(ErrorKind::kIo, "embedding size mismatch");
      e.strips = Eigen::Map<const StripMatrix>(values.data(), rows, cols);
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::kIo, "malformed embeddings file '" + path + "': " + ex.what());
  }
  return out;
}

Evaluation evaluate(const Dataset& data, const ModelParams& params) {
  const auto gallery_idx = data.gallery_indices();
  const auto probe_idx = data.probe_indices();
  std::set<int> gallery_views, probe_views;
  for (std::size_t i : gallery_idx) gallery_views.insert(data.sequences[i].view_deg);
  for (std::size_t i : probe_idx) probe_views.insert(data.sequences[i].view_deg);
  require_views(data.protocol, gallery_views, probe_views);

  Evaluation ev;
  ev.gallery = extract_embeddings(data, gallery_idx, params);
  ev.probes = extract_embeddings(data, probe_idx, params);
  ev.report = rank1_matrix(ev.gallery.items, ev.probes.items, data.protocol);
  return ev;
}

}  // namespace gaitmm
