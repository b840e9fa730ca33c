#include "gaitmm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <tuple>

#include "gaitmm/error.hpp"
#include "gaitmm/parallel.hpp"
#include "gaitmm/png_io.hpp"
#include "gaitmm/walker.hpp"

namespace fs = std::filesystem;

namespace gaitmm {

const char* protocol_name(ProtocolName p) {
  switch (p) {
    case ProtocolName::kCasiaBLT: return "casia_b_lt";
    case ProtocolName::kOumvlp: return "oumvlp";
    case ProtocolName::kSynth: return "synth";
  }
  return "?";
}

ProtocolName parse_protocol(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "casia_b_lt" || l == "casia-b-lt" || l == "casia_b") return ProtocolName::kCasiaBLT;
  if (l == "oumvlp") return ProtocolName::kOumvlp;
  if (l == "synth") return ProtocolName::kSynth;
  fail(ErrorKind::kConfig, "unknown protocol '" + s + "' (expected casia_b_lt, oumvlp or synth)");
}

namespace {

bool in_ranges(const std::vector<SequenceRange>& ranges, Condition c, int seq) {
  return std::any_of(ranges.begin(), ranges.end(), [&](const SequenceRange& r) { return r.contains(c, seq); });
}

}  // namespace

bool SplitProtocol::is_train_sequence(Condition c, int seq) const {
  return train_sequences.empty() || in_ranges(train_sequences, c, seq);
}
bool SplitProtocol::is_gallery(Condition c, int seq) const { return in_ranges(gallery, c, seq); }
bool SplitProtocol::is_probe(Condition c, int seq) const { return in_ranges(probes, c, seq); }

void SplitProtocol::resolve(const std::set<int>& subjects) {
  train_subjects.clear();
  test_subjects.clear();
  if (num_train_subjects < 0) {
    train_subjects = subjects;
    test_subjects = subjects;
    return;
  }
  int n = 0;
  for (int s : subjects) {
    if (n++ < num_train_subjects) {
      train_subjects.insert(s);
    } else {
      test_subjects.insert(s);
    }
  }
}

SplitProtocol SplitProtocol::casia_b_lt() {
  SplitProtocol p;
  p.name = ProtocolName::kCasiaBLT;
  p.num_train_subjects = 74;
  for (int v = 0; v <= 180; v += 18) p.views.push_back(v);
  p.gallery = {{Condition::kNM, 1, 4}};
  p.probes = {{Condition::kNM, 5, 6}, {Condition::kBG, 1, 2}, {Condition::kCL, 1, 2}};
  p.probe_conditions = {Condition::kNM, Condition::kBG, Condition::kCL};
  return p;
}

SplitProtocol SplitProtocol::oumvlp() {
  SplitProtocol p;
  p.name = ProtocolName::kOumvlp;
  p.num_train_subjects = 5153;
  for (int v = 0; v <= 90; v += 15) p.views.push_back(v);
  for (int v = 180; v <= 270; v += 15) p.views.push_back(v);
  p.gallery = {{Condition::kNM, 1, 1}};
  p.probes = {{Condition::kNM, 0, 0}};
  p.probe_conditions = {Condition::kNM};
  return p;
}

SplitProtocol SplitProtocol::synth() {
  SplitProtocol p = casia_b_lt();
  p.name = ProtocolName::kSynth;
  p.num_train_subjects = -1;
  p.views.clear();
  p.train_sequences = {{Condition::kNM, 1, 4}};
  return p;
}

SplitProtocol SplitProtocol::by_name(ProtocolName name) {
  switch (name) {
    case ProtocolName::kCasiaBLT: return casia_b_lt();
    case ProtocolName::kOumvlp: return oumvlp();
    case ProtocolName::kSynth: return synth();
  }
  return synth();
}

std::set<int> Dataset::subjects() const {
  std::set<int> s;
  for (const auto& q : sequences) s.insert(q.subject_id);
  return s;
}

std::set<int> Dataset::views() const {
  std::set<int> v;
  for (const auto& q : sequences) v.insert(q.view_deg);
  return v;
}

std::vector<std::size_t> Dataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& q = sequences[i];
    if (protocol.train_subjects.count(q.subject_id) && protocol.is_train_sequence(q.condition, q.seq_index) &&
        q.frames.frames >= min_train_frames) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> Dataset::gallery_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& q = sequences[i];
    if (protocol.test_subjects.count(q.subject_id) && protocol.is_gallery(q.condition, q.seq_index)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::probe_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& q = sequences[i];
    if (protocol.test_subjects.count(q.subject_id) && protocol.is_probe(q.condition, q.seq_index)) out.push_back(i);
  }
  return out;
}

std::map<int, int> Dataset::train_labels() const {
  std::map<int, int> labels;
  for (std::size_t i : train_indices()) labels.emplace(sequences[i].subject_id, 0);
  int next = 0;
  for (auto& [subject, label] : labels) label = next++;
  return labels;
}

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png";
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct PendingSequence {
  SilhouetteSequence meta;
  fs::path dir;
};

void sort_sequences(std::vector<SilhouetteSequence>& seqs) {
  std::stable_sort(seqs.begin(), seqs.end(), [](const SilhouetteSequence& a, const SilhouetteSequence& b) {
    return std::tuple(a.subject_id, static_cast<int>(a.condition), a.seq_index, a.view_deg) <
           std::tuple(b.subject_id, static_cast<int>(b.condition), b.seq_index, b.view_deg);
  });
}

}  // namespace

Dataset make_dataset(std::vector<SilhouetteSequence> sequences, const SplitProtocol& protocol, int min_train_frames) {
  Dataset ds;
  ds.protocol = protocol;
  ds.sequences = std::move(sequences);
  ds.min_train_frames = min_train_frames;
  sort_sequences(ds.sequences);
  ds.protocol.resolve(ds.subjects());
  return ds;
}

Dataset load_dataset(const std::string& root, const SplitProtocol& protocol, const LoadOptions& options) {
  const fs::path base(root);
  std::error_code ec;
  if (!fs::is_directory(base, ec)) fail(ErrorKind::kIo, "dataset root '" + root + "' is not a directory");

  LoadStats stats;
  auto warn = [&](const std::string& msg) {
    ++stats.warnings;
    if (stats.messages.size() < 100) stats.messages.push_back(msg);
  };
  std::vector<PendingSequence> pending;
  for (const auto& subject_dir : sorted_children(base)) {
    const std::string sname = subject_dir.filename().string();
    if (!fs::is_directory(subject_dir)) {
      if (sname != "manifest.txt" && sname != "manifest.json") warn("ignoring non-directory entry " + subject_dir.string());
      continue;
    }
    if (!all_digits(sname)) {
      warn("subject directory name is not numeric: " + subject_dir.string());
      continue;
    }
    const int subject = std::stoi(sname);
    for (const auto& cond_dir : sorted_children(subject_dir)) {
      const std::string cname = cond_dir.filename().string();
      const auto dash = cname.find('-');
      Condition cond{};
      bool ok = fs::is_directory(cond_dir) && dash != std::string::npos && all_digits(cname.substr(dash + 1));
      if (ok) {
        try {
          cond = parse_condition(cname.substr(0, dash));
        } catch (const Error&) {
          ok = false;
        }
      }
      if (!ok) {
        warn("malformed condition directory: " + cond_dir.string());
        continue;
      }
      const int seq = std::stoi(cname.substr(dash + 1));
      for (const auto& view_dir : sorted_children(cond_dir)) {
        const std::string vname = view_dir.filename().string();
        if (!fs::is_directory(view_dir) || !all_digits(vname)) {
          warn("malformed view directory: " + view_dir.string());
          continue;
        }
        PendingSequence p;
        p.meta.subject_id = subject;
        p.meta.condition = cond;
        p.meta.seq_index = seq;
        p.meta.view_deg = std::stoi(vname);
        p.dir = view_dir;
        pending.push_back(std::move(p));
      }
    }
  }

  struct Loaded {
    bool ok = false;
    int dropped = 0;
    std::string problem;
  };
  std::vector<Loaded> results(pending.size());
  parallel_for(pending.size(), [&](std::size_t i) {
    auto& p = pending[i];
    FrameStack raw;
    for (const auto& f : sorted_children(p.dir)) {
      if (!is_png(f)) continue;
      GrayImage img;
      try {
        img = read_png_gray(f.string());
      } catch (const Error& e) {
        results[i].problem = e.what();
        return;
      }
      if (raw.frames == 0) raw = FrameStack(0, img.height, img.width);
      if (img.height != raw.height || img.width != raw.width) {
        results[i].problem = "frame size changes within " + p.dir.string();
        return;
      }
      raw.append(img.pixels);
    }
    if (raw.frames == 0) {
      results[i].problem = "no frames in " + p.dir.string();
      return;
    }
    binarize(raw);
    try {
      p.meta.frames = align_and_crop(raw, &results[i].dropped, options.out_height, options.out_width);
      results[i].ok = true;
    } catch (const Error&) {
      results[i].problem = "no foreground in any frame of " + p.dir.string();
      results[i].dropped = raw.frames;
    }
  });

  std::vector<SilhouetteSequence> sequences;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    stats.dropped_frames += results[i].dropped;
    if (results[i].ok) {
      sequences.push_back(std::move(pending[i].meta));
    } else {
      ++stats.empty_sequences;
      if (stats.messages.size() < 100) stats.messages.push_back(results[i].problem);
    }
  }
  Dataset ds = make_dataset(std::move(sequences), protocol, options.min_train_frames);
  ds.stats = std::move(stats);
  return ds;
}

std::string sequence_dir(const std::string& root, int subject, Condition c, int seq, int view) {
  char buf[64];
  std::string cond = condition_name(c);
  for (char& ch : cond) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  std::snprintf(buf, sizeof(buf), "%03d/%s-%02d/%03d", subject, cond.c_str(), seq, view);
  return (fs::path(root) / buf).string();
}

namespace {

struct SynthItem {
  int subject;
  Condition condition;
  int seq;
  int view;
};

std::vector<SynthItem> synth_items(const SynthCorpusOptions& o) {
  if (o.subjects < 0 || o.views < 0 || o.seqs_per_condition < 0 || o.frames < 1) {
    fail(ErrorKind::kParameter, "synthetic corpus options must be non-negative with at least one frame");
  }
  const int nm = o.nm_seqs < 0 ? o.seqs_per_condition : o.nm_seqs;
  std::vector<SynthItem> items;
  for (int s = 1; s <= o.subjects; ++s) {
    for (Condition c : {Condition::kNM, Condition::kBG, Condition::kCL}) {
      const int count = c == Condition::kNM ? nm : o.seqs_per_condition;
      for (int q = 1; q <= count; ++q) {
        for (int v = 0; v < o.views; ++v) items.push_back({s, c, q, v * o.view_step});
      }
    }
  }
  return items;
}

SilhouetteSequence render_item(const SynthCorpusOptions& o, const SynthItem& it) {
  const std::uint64_t subject_seed = mix_seed(o.seed, static_cast<std::uint64_t>(it.subject));
  const WalkerSpec spec = WalkerSpec::for_subject(subject_seed).with_condition(it.condition);
  // Shared by every view of one recording, like a synchronized multi-camera capture.
  const std::uint64_t phase_seed =
      mix_seed(subject_seed, static_cast<std::uint64_t>(static_cast<int>(it.condition) * 1000 + it.seq));
  SilhouetteSequence seq = generate_walker_sequence(spec, it.view, o.frames, phase_seed);
  seq.subject_id = it.subject;
  seq.condition = it.condition;
  seq.seq_index = it.seq;
  return seq;
}

}  // namespace

SynthCorpusSummary write_synthetic_corpus(const std::string& out_dir, const SynthCorpusOptions& options) {
  const auto items = synth_items(options);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out_dir + "': " + ec.message());
  std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
  if (!manifest) fail(ErrorKind::kIo, "cannot write manifest in '" + out_dir + "'");
  manifest << "# subject condition view seq num_frames\n";
  for (const auto& it : items) {
    manifest << it.subject << ' ' << condition_name(it.condition) << ' ' << it.view << ' ' << it.seq << ' '
             << options.frames << '\n';
  }
  manifest.close();
  if (!manifest) fail(ErrorKind::kIo, "failed writing manifest in '" + out_dir + "'");

  parallel_for(items.size(), [&](std::size_t i) {
    const SilhouetteSequence seq = render_item(options, items[i]);
    const std::string dir = sequence_dir(out_dir, items[i].subject, items[i].condition, items[i].seq, items[i].view);
    std::error_code err;
    fs::create_directories(dir, err);
    if (err) fail(ErrorKind::kIo, "cannot create '" + dir + "': " + err.message());
    for (int t = 0; t < seq.frames.frames; ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04d.png", t);
      write_png_gray((fs::path(dir) / name).string(), seq.frames.height, seq.frames.width, seq.frames.frame(t));
    }
  });
  return {items.size(), items.size() * static_cast<std::size_t>(options.frames)};
}

std::vector<SilhouetteSequence> generate_synthetic_sequences(const SynthCorpusOptions& options) {
  const auto items = synth_items(options);
  std::vector<SilhouetteSequence> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    SilhouetteSequence seq = render_item(options, items[i]);
    binarize(seq.frames);
    seq.frames = align_and_crop(seq.frames);
    out[i] = std::move(seq);
  });
  sort_sequences(out);
  return out;
}

FeatureMap frames_to_clip(const FrameStack& stack, std::span<const int> frame_indices, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0 || stack.height % out_height != 0 || stack.width % out_width != 0) {
    fail(ErrorKind::kConfig, "model input " + std::to_string(out_height) + "x" + std::to_string(out_width) +
                                 " must evenly divide the aligned frame size " + std::to_string(stack.height) + "x" +
                                 std::to_string(stack.width));
  }
  if (frame_indices.empty()) fail(ErrorKind::kData, "clip needs at least one frame");
  const int fh = stack.height / out_height, fw = stack.width / out_width;
  const double norm = 1.0 / (255.0 * fh * fw);
  FeatureMap clip(1, static_cast<int>(frame_indices.size()), out_height, out_width);
  for (std::size_t i = 0; i < frame_indices.size(); ++i) {
    const int t = frame_indices[i];
    if (t < 0 || t >= stack.frames) fail(ErrorKind::kData, "frame index out of range");
    const auto f = stack.frame(t);
    for (int r = 0; r < out_height; ++r) {
      for (int c = 0; c < out_width; ++c) {
        int acc = 0;
        for (int dr = 0; dr < fh; ++dr) {
          for (int dc = 0; dc < fw; ++dc) acc += f[static_cast<std::size_t>(r * fh + dr) * stack.width + c * fw + dc];
        }
        clip.at(0, static_cast<int>(i), r, c) = acc * norm;
      }
    }
  }
  return clip;
}

FeatureMap sequence_to_clip(const FrameStack& stack, int out_height, int out_width) {
  std::vector<int> idx(stack.frames);
  for (int t = 0; t < stack.frames; ++t) idx[t] = t;
  return frames_to_clip(stack, idx, out_height, out_width);
}

TrainingBatch sample_training_batch(const Dataset& data, std::span<const std::size_t> pool,
                                    const std::map<int, int>& labels, int P, int K, int D, Rng& rng,
                                    int out_height, int out_width) {
  if (P < 1 || K < 1 || D < 1) fail(ErrorKind::kParameter, "sampler needs P, K, D >= 1");
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i : pool) by_subject[data.sequences.at(i).subject_id].push_back(i);
  std::vector<int> subjects;
  for (const auto& [s, v] : by_subject) subjects.push_back(s);
  if (static_cast<int>(subjects.size()) < P) {
    fail(ErrorKind::kStructural, "sampler needs " + std::to_string(P) + " subjects with training sequences, found " +
                                     std::to_string(subjects.size()));
  }
  for (int i = 0; i < P; ++i) {
    const std::size_t j = i + rng.index(subjects.size() - i);
    std::swap(subjects[i], subjects[j]);
  }
  TrainingBatch batch;
  for (int i = 0; i < P; ++i) {
    const int subject = subjects[i];
    auto it = labels.find(subject);
    if (it == labels.end()) fail(ErrorKind::kData, "subject " + std::to_string(subject) + " has no class label");
    std::vector<std::size_t> seqs = by_subject[subject];
    std::vector<std::size_t> chosen;
    if (static_cast<int>(seqs.size()) >= K) {
      for (int k = 0; k < K; ++k) {
        const std::size_t j = k + rng.index(seqs.size() - k);
        std::swap(seqs[k], seqs[j]);
        chosen.push_back(seqs[k]);
      }
    } else {
      for (int k = 0; k < K; ++k) chosen.push_back(seqs[rng.index(seqs.size())]);
    }
    for (std::size_t idx : chosen) {
      const FrameStack& frames = data.sequences[idx].frames;
      const int len = frames.frames;
      const int start = len >= D ? static_cast<int>(rng.index(len - D + 1)) : static_cast<int>(rng.index(len));
      std::vector<int> order(D);
      for (int t = 0; t < D; ++t) order[t] = (start + t) % len;
      batch.clips.push_back(frames_to_clip(frames, order, out_height, out_width));
      batch.labels.push_back(it->second);
      batch.source.push_back(idx);
      batch.start_frame.push_back(start);
    }
  }
  return batch;
}

}  // namespace gaitmm
