#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfuse/encoder.hpp"
#include "dfuse/tensor.hpp"

namespace dfuse {

inline constexpr std::string_view kDefaultPromptTemplate = "a video of a person {c}";
inline constexpr std::string_view kClassPlaceholder = "{c}";

// Prompt templates plus the desk-scale stand-in for a tokenizer: each class
// has a prototype text feature, and a rendered prompt maps to that prototype
// plus a deterministic perturbation seeded by the prompt string.
struct PromptSet {
  std::vector<std::string> templates{std::string(kDefaultPromptTemplate)};
  std::vector<std::string> class_names;
  Matrix class_prototypes;  // one row per class, input_dim_text columns
  double jitter_scale = 0.0;

  void validate() const;
  std::string render(std::size_t template_index, std::size_t class_index) const;
  TextFeatures prompt_features(std::size_t template_index, std::size_t class_index) const;
};

// Normalized mean of the per-template text embeddings, one row per class.
Matrix class_embeddings(const ParamVector& params, const PromptSet& prompts,
                        const EncoderConfig& enc);

// Class indices by descending similarity; ties go to the lower index.
std::vector<std::size_t> rank_classes(std::span<const double> video_embedding,
                                      const Matrix& class_embeddings, std::size_t k);

std::vector<std::size_t> classify_zero_shot(const ParamVector& params, const FrameStack& video,
                                            const PromptSet& prompts, const EncoderConfig& enc,
                                            std::size_t k);

double topk_accuracy(std::span<const std::vector<std::size_t>> predictions,
                     std::span<const std::size_t> labels, std::size_t k);

struct RankList {
  std::vector<std::size_t> ranks;  // 1-based, one per query
  std::size_t gallery_size = 0;

  void validate() const;
  friend bool operator==(const RankList&, const RankList&) = default;
};

// rank = 1 + #{g != true : sim(q, g) >= sim(q, true)}; ties count against the
// query. Similarity is the dot product.
RankList retrieval_ranks(const Matrix& queries, const Matrix& gallery,
                         std::span<const std::size_t> true_index);

// Query i matches gallery i; ranking happens within consecutive blocks of
// `block` items (block = 0 means one block covering everything).
RankList blocked_retrieval_ranks(const Matrix& queries, const Matrix& gallery, std::size_t block);

double recall_at_k(const RankList& ranks, std::size_t k);

// Lower middle element for an even count, so the result is always a rank.
std::size_t median_rank(const RankList& ranks);

struct ClassStat {
  std::string name;
  std::size_t correct = 0;
  std::size_t count = 0;

  double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
  friend bool operator==(const ClassStat&, const ClassStat&) = default;
};

struct ClassificationResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<ClassStat> per_class;  // class-index order
  friend bool operator==(const ClassificationResult&, const ClassificationResult&) = default;
};

inline constexpr std::size_t kRecallCutoffs[] = {1, 5, 10};

struct RetrievalResult {
  std::map<std::size_t, double> recall_at;  // K -> R@K
  std::size_t median_rank = 0;
  RankList ranks;
  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

struct EvalReport {
  std::optional<ClassificationResult> classification;
  std::optional<RetrievalResult> retrieval;

  // top5 >= top1, R@10 >= R@5 >= R@1, fractions in [0, 1]; throws Error.
  void check_invariants() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

ClassificationResult classification_metrics(std::span<const std::vector<std::size_t>> predictions,
                                            std::span<const std::size_t> labels,
                                            std::span<const std::string> class_names);
RetrievalResult retrieval_metrics(RankList ranks);

// Everything needed to evaluate one parameter vector.
struct EvalBundle {
  EncoderConfig enc;
  PromptSet prompts;
  std::vector<FrameStack> videos;
  std::vector<TextFeatures> texts;  // texts[i] describes videos[i]
  std::vector<std::size_t> labels;  // class of videos[i]
  std::size_t gallery_block = 0;
  bool classification = true;
  bool retrieval = true;
};

EvalReport evaluate(const ParamVector& params, const EvalBundle& bundle);

// Per-class top-1 difference a - b.
struct ClassDelta {
  std::string name;
  double delta = 0.0;
  std::size_t count = 0;
};

// Sorted by delta descending, ties by class name.
std::vector<ClassDelta> per_class_delta(const EvalReport& a, const EvalReport& b);

// Keep the `per_side` largest and `per_side` smallest entries of a sorted table.
std::vector<ClassDelta> truncate_extremes(std::span<const ClassDelta> sorted, std::size_t per_side);

// Count-weighted mean of the per-class deltas (= top1(a) - top1(b)).
double aggregate_delta(std::span<const ClassDelta> deltas);

enum class MetricSense { kHigherIsBetter, kLowerIsBetter };

// Improvement of `model` over `reference`: model - reference for accuracies
// and recalls, reference - model for ranks.
double metric_delta(double model, double reference, MetricSense sense);

// Round half away from zero to `decimals` places (tables print 1 decimal for
// percentages, 0 for median ranks).
double round_to(double value, int decimals);

struct RankDistRow {
  std::size_t position = 0;
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
};

// Each list sorted ascending independently, zipped by position.
std::vector<RankDistRow> rank_distribution(const RankList& a, const RankList& b);

}  // namespace dfuse
