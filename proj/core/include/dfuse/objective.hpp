#pragma once

#include <cstddef>
#include <vector>

#include "dfuse/encoder.hpp"
#include "dfuse/tensor.hpp"

namespace dfuse {

struct LossConfig {
  double sigma = 0.05;    // temperature
  double lambda = 0.999;  // distillation weight
  // Also distill on the labeled batch (teacher logits over the labeled pairs).
  bool distill_on_labeled = false;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Teacher similarity logits over one batch of videos (rows) and texts (cols).
struct PseudoLabelBatch {
  Matrix teacher_logits;

  std::size_t size() const noexcept { return teacher_logits.rows(); }
  void validate() const;
};

// Row i of z_v and row i of z_t are a positive pair; B >= 2.
struct LabeledBatch {
  EmbeddingBatch embeddings;

  void validate() const;
};

struct DirectionalLoss {
  double total = 0.0;
  double v2t = 0.0;
  double t2v = 0.0;
};

// InfoNCE in both directions, each averaged over the batch:
//   v2t = -(1/B) sum_i log softmax(S_i.)[i],  t2v = -(1/B) sum_j log softmax(S_.j)[j].
DirectionalLoss contrastive_loss_from_logits(const Matrix& logits);
DirectionalLoss contrastive_loss(const LabeledBatch& batch, const LossConfig& cfg);

// Soft cross-entropy of the student's row/column softmax against the teacher's.
DirectionalLoss distillation_loss_from_logits(const Matrix& student_logits,
                                              const Matrix& teacher_logits);
DirectionalLoss distillation_loss(const EmbeddingBatch& student, const PseudoLabelBatch& pseudo,
                                  const LossConfig& cfg);

// contrastive(labeled) + lambda * distill(unlabeled). An unlabeled batch with
// zero rows contributes nothing. labeled_pseudo is required iff
// cfg.distill_on_labeled.
double total_loss(const LabeledBatch& labeled, const EmbeddingBatch& student_unlabeled,
                  const PseudoLabelBatch& pseudo, const LossConfig& cfg,
                  const PseudoLabelBatch* labeled_pseudo = nullptr);

// d(v2t + t2v)/d(logits) for the contrastive and distillation losses:
// (Q_rows - P_rows)/B + (Q_cols - P_cols)/B, with P one-hot for contrastive.
Matrix contrastive_logit_grad(const Matrix& logits);
Matrix distillation_logit_grad(const Matrix& student_logits, const Matrix& teacher_logits);

// Column-wise softmax, i.e. softmax over videos for each text.
Matrix softmax_cols(const Matrix& m);

struct RawBatch {
  std::vector<FrameStack> videos;
  std::vector<TextFeatures> texts;

  std::size_t size() const noexcept { return videos.size(); }
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Loss (bit-identical to total_loss on the same embeddings) and its analytic
// gradient with respect to every encoder parameter.
LossGrad total_loss_grad(const ParamVector& params, const RawBatch& labeled,
                         const RawBatch& unlabeled, const PseudoLabelBatch& pseudo,
                         const LossConfig& cfg, const EncoderConfig& enc_cfg,
                         const PseudoLabelBatch* labeled_pseudo = nullptr);

}  // namespace dfuse
