#include "dfuse/objective.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dfuse/errors.hpp"

namespace dfuse {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw UsageError(fmt::format("{}: logits must be square, got {}x{}", what, m.rows(), m.cols()));
  }
}

// Mean over rows of -sum_j target(i, j) * log_softmax(logits)(i, j).
double row_cross_entropy(const Matrix& logits, const Matrix& target) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double lse = logsumexp(row);
    double ce = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) ce -= target(i, j) * (row[j] - lse);
    total += ce;
  }
  return total / static_cast<double>(logits.rows());
}

double row_nll_diagonal(const Matrix& logits) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    total += logsumexp(logits.row(i)) - logits(i, i);
  }
  return total / static_cast<double>(logits.rows());
}

void add_scaled(Matrix& acc, const Matrix& m, double scale) {
  auto a = acc.data();
  auto b = m.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

struct TracedBatch {
  std::vector<EncodeTrace> videos;
  std::vector<EncodeTrace> texts;
  EmbeddingBatch embeddings;
};

TracedBatch trace_batch(const ParamVector& params, const RawBatch& batch,
                        const EncoderConfig& cfg) {
  if (batch.videos.size() != batch.texts.size()) {
    throw UsageError(fmt::format("raw batch has {} videos but {} texts", batch.videos.size(),
                                 batch.texts.size()));
  }
  TracedBatch out;
  const std::size_t b = batch.size();
  out.embeddings.z_v = Matrix(b, cfg.embed_dim);
  out.embeddings.z_t = Matrix(b, cfg.embed_dim);
  for (std::size_t i = 0; i < b; ++i) {
    out.videos.push_back(trace_video(params, batch.videos[i], cfg));
    out.texts.push_back(trace_text(params, batch.texts[i], cfg));
    std::copy(out.videos.back().embedding.begin(), out.videos.back().embedding.end(),
              out.embeddings.z_v.row(i).begin());
    std::copy(out.texts.back().embedding.begin(), out.texts.back().embedding.end(),
              out.embeddings.z_t.row(i).begin());
  }
  return out;
}

// Push d(loss)/d(S) back through S = Zv Zt^T / sigma and both towers.
void backprop_logits(const ParamVector& params, const RawBatch& batch, const TracedBatch& traced,
                     const Matrix& d_logits, double sigma, const EncoderConfig& cfg,
                     ParamVector& grad) {
  const auto& zv = traced.embeddings.z_v;
  const auto& zt = traced.embeddings.z_t;
  const std::size_t b = batch.size();
  const std::size_t d = cfg.embed_dim;
  std::vector<double> dz(d);
  for (std::size_t i = 0; i < b; ++i) {
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t j = 0; j < b; ++j) {
      const double g = d_logits(i, j) / sigma;
      for (std::size_t k = 0; k < d; ++k) dz[k] += g * zt(j, k);
    }
    backprop_video(params, batch.videos[i], traced.videos[i], dz, cfg, grad);
  }
  for (std::size_t j = 0; j < b; ++j) {
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double g = d_logits(i, j) / sigma;
      for (std::size_t k = 0; k < d; ++k) dz[k] += g * zv(i, k);
    }
    backprop_text(params, batch.texts[j], traced.texts[j], dz, cfg, grad);
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw UsageError(fmt::format("sigma must be > 0, got {}", sigma));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw UsageError(fmt::format("lambda must be >= 0, got {}", lambda));
  }
}

void PseudoLabelBatch::validate() const {
  require_square(teacher_logits, "pseudo-label batch");
  if (!teacher_logits.all_finite()) throw UsageError("pseudo-label logits must be finite");
}

void LabeledBatch::validate() const {
  embeddings.validate();
  if (embeddings.size() < 2) {
    throw UsageError(fmt::format("labeled batch needs B >= 2 for in-batch negatives, got {}",
                                 embeddings.size()));
  }
}

Matrix softmax_cols(const Matrix& m) { return softmax_rows(m.transposed()).transposed(); }

DirectionalLoss contrastive_loss_from_logits(const Matrix& logits) {
  require_square(logits, "contrastive_loss");
  if (logits.rows() < 2) throw UsageError("contrastive_loss needs B >= 2");
  DirectionalLoss out;
  out.v2t = row_nll_diagonal(logits);
  out.t2v = row_nll_diagonal(logits.transposed());
  out.total = out.v2t + out.t2v;
  return out;
}

DirectionalLoss contrastive_loss(const LabeledBatch& batch, const LossConfig& cfg) {
  batch.validate();
  cfg.validate();
  return contrastive_loss_from_logits(
      similarity_matrix(batch.embeddings.z_v, batch.embeddings.z_t, cfg.sigma));
}

DirectionalLoss distillation_loss_from_logits(const Matrix& student_logits,
                                              const Matrix& teacher_logits) {
  require_square(student_logits, "distillation_loss");
  if (student_logits.rows() != teacher_logits.rows() ||
      student_logits.cols() != teacher_logits.cols()) {
    throw UsageError(fmt::format("distillation_loss: student batch {} != teacher batch {}",
                                 student_logits.rows(), teacher_logits.rows()));
  }
  if (student_logits.rows() < 1) throw UsageError("distillation_loss on an empty batch");
  DirectionalLoss out;
  out.v2t = row_cross_entropy(student_logits, softmax_rows(teacher_logits));
  const Matrix st = student_logits.transposed();
  const Matrix tt = teacher_logits.transposed();
  out.t2v = row_cross_entropy(st, softmax_rows(tt));
  out.total = out.v2t + out.t2v;
  return out;
}

DirectionalLoss distillation_loss(const EmbeddingBatch& student, const PseudoLabelBatch& pseudo,
                                  const LossConfig& cfg) {
  student.validate();
  pseudo.validate();
  cfg.validate();
  return distillation_loss_from_logits(similarity_matrix(student.z_v, student.z_t, cfg.sigma),
                                       pseudo.teacher_logits);
}

double total_loss(const LabeledBatch& labeled, const EmbeddingBatch& student_unlabeled,
                  const PseudoLabelBatch& pseudo, const LossConfig& cfg,
                  const PseudoLabelBatch* labeled_pseudo) {
  double distill = 0.0;
  if (student_unlabeled.size() > 0) distill += distillation_loss(student_unlabeled, pseudo, cfg).total;
  if (cfg.distill_on_labeled) {
    if (labeled_pseudo == nullptr) {
      throw UsageError("distill_on_labeled requires teacher logits for the labeled batch");
    }
    distill += distillation_loss(labeled.embeddings, *labeled_pseudo, cfg).total;
  }
  return contrastive_loss(labeled, cfg).total + cfg.lambda * distill;
}

Matrix contrastive_logit_grad(const Matrix& logits) {
  require_square(logits, "contrastive_logit_grad");
  const std::size_t b = logits.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix q_rows = softmax_rows(logits);
  Matrix q_cols = softmax_cols(logits);
  Matrix g(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      g(i, j) = (q_rows(i, j) - target) * inv_b + (q_cols(i, j) - target) * inv_b;
    }
  }
  return g;
}

Matrix distillation_logit_grad(const Matrix& student_logits, const Matrix& teacher_logits) {
  require_square(student_logits, "distillation_logit_grad");
  const std::size_t b = student_logits.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  const Matrix q_rows = softmax_rows(student_logits);
  const Matrix q_cols = softmax_cols(student_logits);
  const Matrix p_rows = softmax_rows(teacher_logits);
  const Matrix p_cols = softmax_cols(teacher_logits);
  Matrix g(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      g(i, j) = (q_rows(i, j) - p_rows(i, j)) * inv_b + (q_cols(i, j) - p_cols(i, j)) * inv_b;
    }
  }
  return g;
}

LossGrad total_loss_grad(const ParamVector& params, const RawBatch& labeled,
                         const RawBatch& unlabeled, const PseudoLabelBatch& pseudo,
                         const LossConfig& cfg, const EncoderConfig& enc_cfg,
                         const PseudoLabelBatch* labeled_pseudo) {
  cfg.validate();
  params.validate();
  const TracedBatch lab = trace_batch(params, labeled, enc_cfg);
  const TracedBatch unl = trace_batch(params, unlabeled, enc_cfg);

  LossGrad out;
  out.loss = total_loss(LabeledBatch{lab.embeddings}, unl.embeddings, pseudo, cfg, labeled_pseudo);
  out.grad = ParamVector::zeros_like(params);

  const Matrix s_lab = similarity_matrix(lab.embeddings.z_v, lab.embeddings.z_t, cfg.sigma);
  Matrix d_lab = contrastive_logit_grad(s_lab);
  if (cfg.distill_on_labeled) {
    add_scaled(d_lab, distillation_logit_grad(s_lab, labeled_pseudo->teacher_logits), cfg.lambda);
  }
  backprop_logits(params, labeled, lab, d_lab, cfg.sigma, enc_cfg, out.grad);

  if (unlabeled.size() > 0 && cfg.lambda != 0.0) {
    const Matrix s_unl = similarity_matrix(unl.embeddings.z_v, unl.embeddings.z_t, cfg.sigma);
    Matrix d_unl(s_unl.rows(), s_unl.cols());
    add_scaled(d_unl, distillation_logit_grad(s_unl, pseudo.teacher_logits), cfg.lambda);
    backprop_logits(params, unlabeled, unl, d_unl, cfg.sigma, enc_cfg, out.grad);
  }
  return out;
}

}  // namespace dfuse
