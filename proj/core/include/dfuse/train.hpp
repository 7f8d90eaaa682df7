#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfuse/encoder.hpp"
#include "dfuse/objective.hpp"

namespace dfuse {

struct TrainConfig {
  double lr = 3e-5;
  std::size_t batch_size_labeled = 32;
  std::size_t batch_size_unlabeled = 32;
  std::size_t max_steps = 2000;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;  // batch sampling
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  static OptimizerState zeros_for(const ParamVector& params);
};

// Decoupled weight decay, then the bias-corrected Adam update. In place.
void adamw_step(ParamVector& params, const ParamVector& grad, OptimizerState& state,
                const TrainConfig& cfg);

// Video-text pairs: videos[i] matches texts[i].
struct PairSet {
  std::vector<FrameStack> videos;
  std::vector<TextFeatures> texts;
  std::vector<int> concepts;

  std::size_t size() const noexcept { return videos.size(); }
};

// Videos and texts with no stored alignment.
struct UnpairedSet {
  std::vector<FrameStack> videos;
  std::vector<TextFeatures> texts;

  bool empty() const noexcept { return videos.empty() && texts.empty(); }
};

struct CheckpointRecord {
  ParamVector params;
  std::size_t step = 0;
  double val_loss = 0.0;
  EncoderConfig enc;
  LossConfig loss;
  TrainConfig train;
};

struct ProgressEntry {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over steps since the previous entry; NaN at step 0
  double val_loss = 0.0;
};

using ProgressSink = std::function<void(const ProgressEntry&)>;

// "step\ttrain_loss\tval_loss"
std::string format_progress(const ProgressEntry& entry);

// Contrastive-only (lambda = 0) training on single-frame pairs; returns the
// final parameters. Initialized from init_params(enc).
ParamVector pretrain_teacher(const PairSet& images, const EncoderConfig& enc,
                             const TrainConfig& train, const LossConfig& loss,
                             const ProgressSink& progress = {});

// B x B teacher logits x_v . x_t / sigma. Requires B >= 2.
PseudoLabelBatch make_pseudo_labels(const ParamVector& teacher, std::span<const FrameStack> videos,
                                    std::span<const TextFeatures> texts, const EncoderConfig& enc,
                                    double sigma);

// Contrastive loss over consecutive chunks of `batch_size` pairs (a trailing
// chunk of < 2 pairs folds into the previous one), weighted by chunk size.
double validation_loss(const ParamVector& params, const PairSet& val, const EncoderConfig& enc,
                       double sigma, std::size_t batch_size);

// Student starts from the teacher. Every step draws one labeled and one
// unlabeled batch and applies one AdamW update on the combined objective.
// Returns the evaluated checkpoint with the lowest validation loss.
CheckpointRecord train_student(const ParamVector& teacher, const PairSet& labeled_train,
                               const PairSet& labeled_val, const UnpairedSet& unlabeled,
                               const EncoderConfig& enc, const LossConfig& loss,
                               const TrainConfig& train, const ProgressSink& progress = {});

}  // namespace dfuse
