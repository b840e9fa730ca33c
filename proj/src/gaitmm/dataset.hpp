#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gaitmm/rng.hpp"
#include "gaitmm/silhouette.hpp"
#include "gaitmm/tensor.hpp"

namespace gaitmm {

enum class ProtocolName { kCasiaBLT, kOumvlp, kSynth };

const char* protocol_name(ProtocolName p);  // "casia_b_lt", "oumvlp", "synth"
ProtocolName parse_protocol(const std::string& s);

// Selects sequences of one condition with seq_index in [first, last].
struct SequenceRange {
  Condition condition;
  int first;
  int last;
  bool contains(Condition c, int seq) const { return c == condition && seq >= first && seq <= last; }
};

struct SplitProtocol {
  ProtocolName name = ProtocolName::kSynth;
  int num_train_subjects = -1;  // first N subjects (sorted by id) train; -1: every subject trains and tests
  std::vector<int> views;       // views the evaluation requires; empty means "whatever the data has"
  std::vector<SequenceRange> train_sequences;  // empty: all sequences of training subjects
  std::vector<SequenceRange> gallery;
  std::vector<SequenceRange> probes;
  std::vector<Condition> probe_conditions;

  // Resolved against a corpus by load_dataset.
  std::set<int> train_subjects;
  std::set<int> test_subjects;

  bool is_train_sequence(Condition c, int seq) const;
  bool is_gallery(Condition c, int seq) const;
  bool is_probe(Condition c, int seq) const;
  void resolve(const std::set<int>& subjects);

  // 74 training subjects; gallery NM 1-4; probes NM 5-6, BG 1-2, CL 1-2; 11 views 0..180.
  static SplitProtocol casia_b_lt();
  // 5153 training subjects; gallery seq 1, probe seq 0; 14 views.
  static SplitProtocol oumvlp();
  // Closed-set synthetic protocol: every subject trains on NM 1-4 and is evaluated on held-out sequences.
  static SplitProtocol synth();
  static SplitProtocol by_name(ProtocolName name);
};

struct LoadOptions {
  int min_train_frames = 15;
  int out_height = kAlignedHeight;
  int out_width = kAlignedWidth;
};

struct LoadStats {
  std::size_t warnings = 0;       // malformed layout entries skipped
  std::size_t dropped_frames = 0; // frames without foreground
  std::size_t empty_sequences = 0;
  std::vector<std::string> messages;
};

struct Dataset {
  SplitProtocol protocol;
  std::vector<SilhouetteSequence> sequences;
  LoadStats stats;
  int min_train_frames = 15;

  std::set<int> subjects() const;
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> gallery_indices() const;
  std::vector<std::size_t> probe_indices() const;
  std::set<int> views() const;
  // Contiguous class labels 0..n-1 for the training subjects, in id order.
  std::map<int, int> train_labels() const;
};

// Layout: root/<subject:03d>/<cond>-<seq:02d>/<view:03d>/<frame:04d>.png, foreground > 127.
// Every sequence is binarized and aligned; sequences are sorted by (subject, condition, seq, view).
Dataset load_dataset(const std::string& root, const SplitProtocol& protocol, const LoadOptions& options = {});

// Assembles an in-memory dataset (sequences must already be aligned).
Dataset make_dataset(std::vector<SilhouetteSequence> sequences, const SplitProtocol& protocol,
                     int min_train_frames = 15);

struct SynthCorpusOptions {
  int subjects = 8;
  int views = 11;
  int view_step = 18;
  int seqs_per_condition = 2;
  int nm_seqs = 6;  // NM sequences per subject; -1 uses seqs_per_condition
  int frames = 40;
  std::uint64_t seed = 0;
};

struct SynthCorpusSummary {
  std::size_t sequences = 0;
  std::size_t frames = 0;
};

std::string sequence_dir(const std::string& root, int subject, Condition c, int seq, int view);
// Renders the synthetic corpus in the dataset layout plus a plain-text manifest.txt at the root.
SynthCorpusSummary write_synthetic_corpus(const std::string& out_dir, const SynthCorpusOptions& options);
// Same corpus, aligned, without touching the filesystem.
std::vector<SilhouetteSequence> generate_synthetic_sequences(const SynthCorpusOptions& options);

// Converts frames (in the given order) of an aligned stack to a 1 x D x out_h x out_w clip in [0, 1].
// out_h/out_w must divide the stack's size; larger stacks are box-averaged down.
FeatureMap frames_to_clip(const FrameStack& stack, std::span<const int> frame_indices, int out_height, int out_width);
FeatureMap sequence_to_clip(const FrameStack& stack, int out_height, int out_width);

struct TrainingBatch {
  std::vector<FeatureMap> clips;
  std::vector<int> labels;
  std::vector<std::size_t> source;  // dataset index of each clip
  std::vector<int> start_frame;
};

// P distinct subjects x K sequences (with replacement only when a subject has fewer than K),
// each reduced to a contiguous window of D frames (cyclic when the sequence is shorter than D).
TrainingBatch sample_training_batch(const Dataset& data, std::span<const std::size_t> pool,
                                    const std::map<int, int>& labels, int P, int K, int D, Rng& rng,
                                    int out_height, int out_width);

}  // namespace gaitmm
