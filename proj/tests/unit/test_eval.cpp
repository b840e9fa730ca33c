#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gaitmm/eval.hpp"
#include "gaitmm/walker.hpp"
#include "helpers.hpp"
#include "naive.hpp"

using namespace gaitmm;
namespace fs = std::filesystem;

namespace {

GaitEmbedding make(int subject, int view, Condition c, int seq, StripMatrix strips) {
  GaitEmbedding e;
  e.strips = std::move(strips);
  e.subject_id = subject;
  e.view_deg = view;
  e.condition = c;
  e.seq_index = seq;
  return e;
}

SplitProtocol open_protocol(std::vector<Condition> conditions) {
  SplitProtocol p = SplitProtocol::synth();
  p.probe_conditions = std::move(conditions);
  return p;
}

struct OracleCell {
  int correct = 0;
  int total = 0;
};

// Exhaustive nearest neighbour per (condition, probe view, gallery view) over a distance-sorted gallery.
std::map<Condition, std::map<std::pair<int, int>, OracleCell>> brute_force(const std::vector<GaitEmbedding>& gallery,
                                                                           const std::vector<GaitEmbedding>& probes) {
  std::map<Condition, std::map<std::pair<int, int>, OracleCell>> out;
  std::set<int> views;
  for (const auto& g : gallery) views.insert(g.view_deg);
  for (const auto& p : probes) {
    for (int w : views) {
      if (w == p.view_deg) continue;
      std::vector<std::pair<double, const GaitEmbedding*>> ranked;
      for (const auto& g : gallery)
        if (g.view_deg == w) ranked.push_back({oracle::distance(p.strips, g.strips), &g});
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      OracleCell& cell = out[p.condition][{p.view_deg, w}];
      ++cell.total;
      cell.correct += ranked.front().second->subject_id == p.subject_id;
    }
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

double off_diagonal_mean(const ConditionReport& c) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.views.size(); ++i)
    for (std::size_t j = 0; j < c.views.size(); ++j)
      if (i != j && !std::isnan(c.cells[i][j])) {
        sum += c.cells[i][j];
        ++n;
      }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace

TEST_CASE("distance is the strip mean of Euclidean norms") {
  StripMatrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  CHECK(pairwise_distance(a, b) == 5.0);
  CHECK(pairwise_distance(a, a) == 0.0);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const StripMatrix x = testing::random_strips(16, 7, rng), y = testing::random_strips(16, 7, rng);
    CHECK(pairwise_distance(x, y) == doctest::Approx(oracle::distance(x, y)).epsilon(1e-12));
    CHECK(std::abs(pairwise_distance(x, y) - oracle::distance(x, y)) <= 1e-9);
    CHECK(pairwise_distance(x, y) == pairwise_distance(y, x));
    CHECK(pairwise_distance(x, y) > 0.0);
  }
  CHECK(testing::error_kind_of([] { pairwise_distance(StripMatrix::Zero(4, 3), StripMatrix::Zero(2, 3)); }) ==
        ErrorKind::kConfig);
}

TEST_CASE("probes that are copies of the gallery are all recognized") {
  Rng rng(5);
  std::vector<GaitEmbedding> gallery, probes;
  for (int s = 1; s <= 4; ++s) {
    const StripMatrix e = testing::random_strips(4, 6, rng);
    for (int v : {0, 18, 36}) {
      gallery.push_back(make(s, v, Condition::kNM, 1, e));
      probes.push_back(make(s, (v + 18) % 54, Condition::kNM, 5, e));
    }
  }
  const RankOneReport r = rank1_matrix(gallery, probes, open_protocol({Condition::kNM}));
  REQUIRE(r.conditions.size() == 1);
  const ConditionReport& c = r.conditions[0];
  CHECK(c.views == std::vector<int>{0, 18, 36});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) {
        CHECK(std::isnan(c.cells[i][j]));
      } else {
        CHECK(c.cells[i][j] == 1.0);
      }
    }
  CHECK(c.mean == 1.0);
  CHECK(r.overall_mean == 1.0);
}

TEST_CASE("orthogonal subjects are separated in every view pair") {
  std::vector<GaitEmbedding> gallery, probes;
  for (int v : {0, 90, 180}) {
    StripMatrix a = StripMatrix::Zero(1, 2), b = StripMatrix::Zero(1, 2);
    a(0, 0) = 1.0;
    b(0, 1) = 1.0;
    gallery.push_back(make(1, v, Condition::kNM, 1, a));
    gallery.push_back(make(2, v, Condition::kNM, 1, b));
    probes.push_back(make(1, v, Condition::kNM, 5, a * 0.9));
    probes.push_back(make(2, v, Condition::kNM, 5, b * 1.1));
  }
  const RankOneReport r = rank1_matrix(gallery, probes, open_protocol({Condition::kNM}));
  CHECK(r.conditions.at(0).mean == 1.0);
}

TEST_CASE("rank-1 matrix equals the brute-force oracle") {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> subject(1, 4), view(0, 1), cond(0, 2);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GaitEmbedding> gallery, probes;
    for (int s = 1; s <= 4; ++s)
      for (int v : {0, 90}) gallery.push_back(make(s, v, Condition::kNM, 1, testing::random_strips(3, 4, rng)));
    for (int i = 0; i < 20; ++i) {
      probes.push_back(make(subject(gen), 90 * view(gen), static_cast<Condition>(cond(gen)), 5,
                            testing::random_strips(3, 4, rng)));
    }
    const auto expect = brute_force(gallery, probes);
    const RankOneReport r =
        rank1_matrix(gallery, probes, open_protocol({Condition::kNM, Condition::kBG, Condition::kCL}));
    for (const ConditionReport& c : r.conditions) {
      for (std::size_t i = 0; i < c.views.size(); ++i) {
        for (std::size_t j = 0; j < c.views.size(); ++j) {
          if (i == j) continue;
          const auto ci = expect.find(c.condition);
          const bool present = ci != expect.end() && ci->second.count({c.views[i], c.views[j]}) > 0;
          if (!present) {
            CHECK(std::isnan(c.cells[i][j]));
            continue;
          }
          const OracleCell& o = ci->second.at({c.views[i], c.views[j]});
          CHECK(c.cells[i][j] == static_cast<double>(o.correct) / o.total);
        }
      }
      CHECK(c.mean == doctest::Approx(off_diagonal_mean(c)).epsilon(1e-15));
    }
  }
}

TEST_CASE("same-view gallery entries never influence a probe") {
  // Within its own view every probe sits on the other subject's gallery entry; across views it is exact.
  auto at = [](double x) { return StripMatrix::Constant(1, 1, x); };
  std::vector<GaitEmbedding> gallery{make(1, 0, Condition::kNM, 1, at(0.0)), make(2, 0, Condition::kNM, 1, at(10.0)),
                                     make(1, 90, Condition::kNM, 1, at(10.0)), make(2, 90, Condition::kNM, 1, at(0.0))};
  std::vector<GaitEmbedding> probes{make(1, 0, Condition::kNM, 5, at(10.0)), make(2, 0, Condition::kNM, 5, at(0.0)),
                                    make(1, 90, Condition::kNM, 5, at(0.0)), make(2, 90, Condition::kNM, 5, at(10.0))};
  int same_view_hits = 0;
  for (const auto& p : probes) {
    const GaitEmbedding* best = nullptr;
    for (const auto& g : gallery)
      if (g.view_deg == p.view_deg && (best == nullptr || pairwise_distance(p, g) < pairwise_distance(p, *best)))
        best = &g;
    same_view_hits += best->subject_id == p.subject_id;
  }
  REQUIRE(same_view_hits == 0);
  const RankOneReport r = rank1_matrix(gallery, probes, open_protocol({Condition::kNM}));
  const auto& c = r.conditions.at(0);
  CHECK(std::isnan(c.cells[0][0]));
  CHECK(std::isnan(c.cells[1][1]));
  CHECK(c.cells[0][1] == 1.0);
  CHECK(c.cells[1][0] == 1.0);
  CHECK(c.row_means == std::vector<double>{1.0, 1.0});
  CHECK(c.mean == 1.0);
  CHECK(r.overall_mean == 1.0);
}

TEST_CASE("ties and input order do not change the report") {
  const StripMatrix same = StripMatrix::Constant(2, 2, 0.5);
  std::vector<GaitEmbedding> gallery{make(2, 0, Condition::kNM, 1, same), make(1, 0, Condition::kNM, 1, same),
                                     make(3, 0, Condition::kNM, 1, StripMatrix::Constant(2, 2, 9.0)),
                                     make(1, 90, Condition::kNM, 1, StripMatrix::Zero(2, 2)),
                                     make(2, 90, Condition::kNM, 1, StripMatrix::Constant(2, 2, 1.0))};
  std::vector<GaitEmbedding> probes{make(1, 90, Condition::kNM, 5, same), make(2, 90, Condition::kNM, 5, same),
                                    make(2, 0, Condition::kNM, 5, StripMatrix::Constant(2, 2, 0.9))};
  const SplitProtocol protocol = open_protocol({Condition::kNM});
  const RankOneReport base = rank1_matrix(gallery, probes, protocol);
  const auto& c = base.conditions.at(0);
  CHECK(c.cells[1][0] == 0.5);
  CHECK(c.cells[0][1] == 1.0);
  std::mt19937 gen(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(gallery.begin(), gallery.end(), gen);
    std::shuffle(probes.begin(), probes.end(), gen);
    const RankOneReport r = rank1_matrix(gallery, probes, protocol);
    CHECK(r.conditions.at(0).cells[1][0] == 0.5);
    CHECK(r.conditions.at(0).cells[0][1] == 1.0);
    CHECK(r.overall_mean == base.overall_mean);
  }
}

TEST_CASE("a protocol view without gallery entries is reported") {
  Rng rng(1);
  std::vector<GaitEmbedding> gallery, probes;
  SplitProtocol p = SplitProtocol::casia_b_lt();
  for (int v : p.views) {
    if (v != 90) gallery.push_back(make(80, v, Condition::kNM, 1, testing::random_strips(2, 2, rng)));
    probes.push_back(make(80, v, Condition::kNM, 5, testing::random_strips(2, 2, rng)));
  }
  const std::string msg = testing::error_message_of([&] { rank1_matrix(gallery, probes, p); });
  CHECK(msg.find("090") != std::string::npos);
  CHECK(testing::error_kind_of([&] { rank1_matrix(gallery, probes, p); }) == ErrorKind::kProtocol);
}

TEST_CASE("protocol view grids follow the benchmark layouts") {
  Rng rng(4);
  std::vector<GaitEmbedding> gallery, probes;
  const SplitProtocol casia = SplitProtocol::casia_b_lt();
  for (int s : {75, 76}) {
    for (int v : casia.views) {
      gallery.push_back(make(s, v, Condition::kNM, 1, testing::random_strips(2, 2, rng)));
      for (Condition c : {Condition::kNM, Condition::kBG, Condition::kCL})
        probes.push_back(make(s, v, c, c == Condition::kNM ? 5 : 1, testing::random_strips(2, 2, rng)));
    }
  }
  const RankOneReport r = rank1_matrix(gallery, probes, casia);
  REQUIRE(r.conditions.size() == 3);
  for (const auto& c : r.conditions) {
    CHECK(c.views.size() == 11);
    CHECK(c.cells.size() == 11);
    CHECK(c.cells[0].size() == 11);
  }

  gallery.clear();
  probes.clear();
  const SplitProtocol ou = SplitProtocol::oumvlp();
  for (int v : ou.views) {
    gallery.push_back(make(6000, v, Condition::kNM, 1, testing::random_strips(2, 2, rng)));
    probes.push_back(make(6000, v, Condition::kNM, 0, testing::random_strips(2, 2, rng)));
  }
  const RankOneReport o = rank1_matrix(gallery, probes, ou);
  REQUIRE(o.conditions.size() == 1);
  CHECK(o.conditions[0].views.size() == 14);
  CHECK(o.conditions[0].mean == 1.0);
}

TEST_CASE("report files carry the documented layout") {
  std::vector<GaitEmbedding> gallery, probes;
  for (int s : {1, 2})
    for (int v : {0, 90}) {
      StripMatrix e = StripMatrix::Zero(1, 2);
      e(0, s - 1) = 1.0;
      gallery.push_back(make(s, v, Condition::kNM, 1, e));
      probes.push_back(make(s, v, Condition::kNM, 5, e));
    }
  probes.push_back(make(1, 0, Condition::kBG, 1, StripMatrix::Zero(1, 2)));
  const RankOneReport r = rank1_matrix(gallery, probes, open_protocol({Condition::kNM, Condition::kBG}));
  testing::ScratchDir dir("report");
  emit_report(r, dir.str());
  const auto nm = read_lines(dir.path() / "rank1_NM.csv");
  REQUIRE(nm.size() == 3);
  CHECK(nm[0] == "probe_view,000,090,mean");
  CHECK(nm[1] == "000,,1.000000,1.000000");
  CHECK(nm[2] == "090,1.000000,,1.000000");
  const auto bg = read_lines(dir.path() / "rank1_BG.csv");
  REQUIRE(bg.size() == 3);
  CHECK(bg[2] == "090,,,");
  const auto summary = read_lines(dir.path() / "summary.csv");
  REQUIRE(summary.size() == 4);
  CHECK(summary[0] == "condition,mean");
  CHECK(summary[1] == "NM,1.000000");
  CHECK(summary[3].rfind("all,", 0) == 0);

  testing::ScratchDir empty("empty_report");
  emit_report(RankOneReport{}, empty.str());
  CHECK(read_lines(empty.path() / "summary.csv") == std::vector<std::string>{"condition,mean"});

  std::ofstream(dir.path() / "blocker") << "x";
  CHECK(testing::error_kind_of([&] { emit_report(r, (dir.path() / "blocker" / "sub").string()); }) ==
        ErrorKind::kIo);
}

TEST_CASE("extraction truncates to whole windows and skips short sequences") {
  const ModelParams params = ModelParams::initialize(testing::tiny_model(), 3);
  SilhouetteSequence s = generate_walker_sequence(WalkerSpec::for_subject(1), 90, 31, 2);
  s.frames = align_and_crop(s.frames);
  REQUIRE(s.frames.frames == 31);
  SilhouetteSequence cut = s;
  cut.frames.pixels.resize(30 * cut.frames.frame_size());
  cut.frames.frames = 30;
  const auto a = extract_embedding(s, params);
  const auto b = extract_embedding(cut, params);
  const auto c = extract_embedding(s, params);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->strips.rows() == 4);
  CHECK(a->strips.cols() == 5);
  CHECK(all_finite(a->strips));
  CHECK(a->strips == b->strips);
  CHECK(a->strips == c->strips);
  CHECK(a->subject_id == s.subject_id);

  SilhouetteSequence tiny = cut;
  tiny.frames.pixels.resize(2 * tiny.frames.frame_size());
  tiny.frames.frames = 2;
  std::string warning;
  CHECK_FALSE(extract_embedding(tiny, params, &warning));
  CHECK(!warning.empty());
}

TEST_CASE("embeddings cache round-trips exactly") {
  Rng rng(12);
  std::vector<GaitEmbedding> items;
  for (int i = 0; i < 5; ++i)
    items.push_back(make(i, 18 * i, static_cast<Condition>(i % 3), i + 1, testing::random_strips(3, 4, rng)));
  testing::ScratchDir dir("cache");
  const std::string path = (dir.path() / "emb.json").string();
  save_embeddings(path, items);
  const auto back = load_embeddings(path);
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].strips == items[i].strips);
    CHECK(back[i].subject_id == items[i].subject_id);
    CHECK(back[i].view_deg == items[i].view_deg);
    CHECK(back[i].condition == items[i].condition);
    CHECK(back[i].seq_index == items[i].seq_index);
  }
  CHECK(testing::error_kind_of([&] { load_embeddings((dir.path() / "missing.json").string()); }) == ErrorKind::kIo);
}
