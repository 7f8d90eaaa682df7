#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfuse/tensor.hpp"
#include "dfuse/train.hpp"
#include "dfuse/zeroeval.hpp"

namespace dfuse {

enum class Split {
  kLabeledTrain,
  kLabeledVal,
  kUnlabeled,
  kEval,
  kImageTrain,  // single-frame pairs for teacher pretraining
  kImageEval,
  kClass,       // one prototype text feature per concept
};

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

enum class RecordKind { kVideo, kText };

struct SynthConfig {
  std::size_t n_concepts = 64;
  std::size_t latent_dim = 16;
  std::size_t d_v = 32;
  std::size_t d_t = 32;
  std::size_t frames_per_video = 8;
  double noise_sigma = 0.6;
  std::size_t n_labeled_train = 512;
  std::size_t n_labeled_val = 128;
  std::size_t n_unlabeled = 4096;
  std::size_t n_eval = 512;
  std::size_t n_image_train = 2048;
  std::size_t n_image_eval = 512;
  // Use identity feature maps (requires d_v == d_t == latent_dim).
  bool identity_maps = false;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct CorpusRecord {
  std::string id;
  RecordKind kind = RecordKind::kText;
  Split split = Split::kEval;
  long concept_id = 0;
  std::optional<std::size_t> pair;  // shared by a video and its text; absent when unaligned
  Matrix features;                  // T x d_v for videos, 1 x d_t for texts
  std::optional<std::string> class_name;

  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(SynthConfig meta, std::vector<CorpusRecord> records);

  const SynthConfig& meta() const { return meta_; }
  const std::vector<CorpusRecord>& records() const { return records_; }
  std::size_t count(Split split) const;

  // Pairs of a labeled split ordered by pair index.
  PairSet pairs(Split split) const;
  UnpairedSet unpaired(Split split) const;
  // Class names and prototypes from the kClass records, in concept order.
  PromptSet prompts(std::vector<std::string> templates) const;
  // Eval bundle over a paired split; gallery_block = 0 picks n_concepts.
  EvalBundle eval_bundle(Split split, const EncoderConfig& enc, std::vector<std::string> templates,
                         std::size_t gallery_block = 0) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;

 private:
  SynthConfig meta_;
  std::vector<CorpusRecord> records_;
};

// Planted correspondence: unit-norm latent concepts c_k; video frames are
// A_v c_k + noise, texts A_t c_k + noise. Paired splits cycle through the
// concepts in shuffled blocks so every block of n_concepts pairs holds each
// concept once.
Corpus gen_corpus(const SynthConfig& cfg);

// JSON Lines: a meta line, then one record per line.
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);

void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace dfuse
