#include "dfuse/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "dfuse/errors.hpp"
#include "dfuse/rng.hpp"

namespace dfuse {

namespace {

// Epoch-wise shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    rng_.shuffle(std::span<std::size_t>(order_));
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

RawBatch gather_pairs(const PairSet& set, std::span<const std::size_t> idx) {
  RawBatch b;
  for (std::size_t i : idx) {
    b.videos.push_back(set.videos[i]);
    b.texts.push_back(set.texts[i]);
  }
  return b;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(m.row(idx[r]).begin(), m.row(idx[r]).end(), out.row(r).begin());
  }
  return out;
}

void check_pairs(const PairSet& set, const char* what) {
  if (set.videos.size() != set.texts.size()) {
    throw UsageError(fmt::format("{}: {} videos vs {} texts", what, set.videos.size(),
                                 set.texts.size()));
  }
}

void check_finite_loss(double loss, std::size_t step, const char* phase) {
  if (!std::isfinite(loss)) {
    throw NumericalError(fmt::format("{}: non-finite loss {} at step {}", phase, loss, step));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError(fmt::format("lr must be > 0, got {}", lr));
  if (batch_size_labeled < 2) throw UsageError("batch_size_labeled must be >= 2");
  if (batch_size_unlabeled < 2) throw UsageError("batch_size_unlabeled must be >= 2");
  if (max_steps < 1) throw UsageError("max_steps must be >= 1");
  if (eval_every < 1) throw UsageError("eval_every must be >= 1");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw UsageError("eps must be > 0");
}

OptimizerState OptimizerState::zeros_for(const ParamVector& params) {
  return {std::vector<double>(params.size(), 0.0), std::vector<double>(params.size(), 0.0), 0};
}

void adamw_step(ParamVector& params, const ParamVector& grad, OptimizerState& state,
                const TrainConfig& cfg) {
  if (!params.same_layout(grad) || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw UsageError("adamw_step: params, grad and optimizer state layouts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.values[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params.values[i] = params.values[i] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

std::string format_progress(const ProgressEntry& e) {
  return fmt::format("{}\t{}\t{}", e.step, e.train_loss, e.val_loss);
}

ParamVector pretrain_teacher(const PairSet& images, const EncoderConfig& enc,
                             const TrainConfig& train, const LossConfig& loss,
                             const ProgressSink& progress) {
  check_pairs(images, "pretrain_teacher");
  if (images.size() == 0) throw UsageError("pretrain_teacher: empty image corpus");
  for (const auto& v : images.videos) {
    if (v.length() != 1) throw UsageError("pretrain_teacher expects single-frame pairs (T = 1)");
  }
  if (images.size() < train.batch_size_labeled) {
    throw UsageError(fmt::format("pretrain_teacher: {} pairs < batch size {}", images.size(),
                                 train.batch_size_labeled));
  }
  train.validate();
  LossConfig contrastive_only = loss;
  contrastive_only.lambda = 0.0;
  contrastive_only.distill_on_labeled = false;
  contrastive_only.validate();

  ParamVector params = init_params(enc);
  OptimizerState state = OptimizerState::zeros_for(params);
  BatchSampler sampler(images.size(), derive_seed(train.seed, "teacher-batches"));
  const RawBatch no_unlabeled;
  const PseudoLabelBatch no_pseudo;
  double window = 0.0;
  std::size_t window_steps = 0;
  for (std::size_t step = 1; step <= train.max_steps; ++step) {
    const auto idx = sampler.next(train.batch_size_labeled);
    const auto lg = total_loss_grad(params, gather_pairs(images, idx), no_unlabeled, no_pseudo,
                                    contrastive_only, enc);
    check_finite_loss(lg.loss, step, "pretrain_teacher");
    adamw_step(params, lg.grad, state, train);
    window += lg.loss;
    ++window_steps;
    if (progress && (step % train.eval_every == 0 || step == train.max_steps)) {
      progress({step, window / static_cast<double>(window_steps),
                std::numeric_limits<double>::quiet_NaN()});
      window = 0.0;
      window_steps = 0;
    }
  }
  return params;
}

PseudoLabelBatch make_pseudo_labels(const ParamVector& teacher, std::span<const FrameStack> videos,
                                    std::span<const TextFeatures> texts, const EncoderConfig& enc,
                                    double sigma) {
  if (videos.size() != texts.size()) {
    throw UsageError(fmt::format("make_pseudo_labels: {} videos vs {} texts", videos.size(),
                                 texts.size()));
  }
  if (videos.size() < 2) throw UsageError("make_pseudo_labels needs a batch of at least 2");
  return {similarity_matrix(encode_videos(teacher, videos, enc), encode_texts(teacher, texts, enc),
                            sigma)};
}

double validation_loss(const ParamVector& params, const PairSet& val, const EncoderConfig& enc,
                       double sigma, std::size_t batch_size) {
  check_pairs(val, "validation_loss");
  if (val.size() < 2) throw UsageError("validation split needs at least 2 pairs");
  const Matrix zv = encode_videos(params, val.videos, enc);
  const Matrix zt = encode_texts(params, val.texts, enc);
  double weighted = 0.0;
  std::size_t begin = 0;
  while (begin < val.size()) {
    std::size_t end = std::min(begin + batch_size, val.size());
    if (val.size() - end < 2) end = val.size();
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto l = contrastive_loss_from_logits(
        similarity_matrix(gather_rows(zv, idx), gather_rows(zt, idx), sigma));
    weighted += l.total * static_cast<double>(idx.size());
    begin = end;
  }
  return weighted / static_cast<double>(val.size());
}

CheckpointRecord train_student(const ParamVector& teacher, const PairSet& labeled_train,
                               const PairSet& labeled_val, const UnpairedSet& unlabeled,
                               const EncoderConfig& enc, const LossConfig& loss,
                               const TrainConfig& train, const ProgressSink& progress) {
  train.validate();
  loss.validate();
  check_pairs(labeled_train, "train_student");
  if (labeled_train.size() == 0) throw UsageError("train_student: empty labeled-train split");
  if (labeled_val.size() == 0) throw UsageError("train_student: empty labeled-val split");
  if (labeled_train.size() < 2 * train.batch_size_labeled) {
    throw UsageError(fmt::format("train_student: labeled-train has {} pairs, needs >= 2 x {}",
                                 labeled_train.size(), train.batch_size_labeled));
  }
  const bool distill = loss.lambda != 0.0;
  if (distill && (unlabeled.videos.size() < train.batch_size_unlabeled ||
                  unlabeled.texts.size() < train.batch_size_unlabeled)) {
    throw UsageError(fmt::format(
        "train_student: lambda > 0 needs >= {} unlabeled videos and texts (have {} / {})",
        train.batch_size_unlabeled, unlabeled.videos.size(), unlabeled.texts.size()));
  }

  // Teacher embeddings are fixed for the whole run; pseudo-label logits for a
  // batch are dot products of cached rows, identical to make_pseudo_labels.
  Matrix teacher_unl_v, teacher_unl_t, teacher_lab_v, teacher_lab_t;
  if (distill) {
    teacher_unl_v = encode_videos(teacher, unlabeled.videos, enc);
    teacher_unl_t = encode_texts(teacher, unlabeled.texts, enc);
  }
  if (distill && loss.distill_on_labeled) {
    teacher_lab_v = encode_videos(teacher, labeled_train.videos, enc);
    teacher_lab_t = encode_texts(teacher, labeled_train.texts, enc);
  }

  ParamVector params = teacher;
  OptimizerState state = OptimizerState::zeros_for(params);
  BatchSampler lab_sampler(labeled_train.size(), derive_seed(train.seed, "labeled"));
  BatchSampler unl_v_sampler(std::max<std::size_t>(unlabeled.videos.size(), 1),
                             derive_seed(train.seed, "unlabeled-videos"));
  BatchSampler unl_t_sampler(std::max<std::size_t>(unlabeled.texts.size(), 1),
                             derive_seed(train.seed, "unlabeled-texts"));

  CheckpointRecord best{params, 0,
                        validation_loss(params, labeled_val, enc, loss.sigma,
                                        train.batch_size_labeled),
                        enc, loss, train};
  check_finite_loss(best.val_loss, 0, "validation");
  if (progress) progress({0, std::numeric_limits<double>::quiet_NaN(), best.val_loss});

  LossConfig step_cfg = loss;
  step_cfg.distill_on_labeled = distill && loss.distill_on_labeled;
  double window = 0.0;
  std::size_t window_steps = 0;
  for (std::size_t step = 1; step <= train.max_steps; ++step) {
    const auto lab_idx = lab_sampler.next(train.batch_size_labeled);
    const RawBatch lab = gather_pairs(labeled_train, lab_idx);
    RawBatch unl;
    PseudoLabelBatch pseudo;
    PseudoLabelBatch lab_pseudo;
    if (distill) {
      const auto v_idx = unl_v_sampler.next(train.batch_size_unlabeled);
      const auto t_idx = unl_t_sampler.next(train.batch_size_unlabeled);
      for (std::size_t k = 0; k < v_idx.size(); ++k) {
        unl.videos.push_back(unlabeled.videos[v_idx[k]]);
        unl.texts.push_back(unlabeled.texts[t_idx[k]]);
      }
      pseudo.teacher_logits =
          similarity_matrix(gather_rows(teacher_unl_v, v_idx), gather_rows(teacher_unl_t, t_idx),
                            loss.sigma);
      if (step_cfg.distill_on_labeled) {
        lab_pseudo.teacher_logits = similarity_matrix(gather_rows(teacher_lab_v, lab_idx),
                                                      gather_rows(teacher_lab_t, lab_idx),
                                                      loss.sigma);
      }
    }
    const auto lg = total_loss_grad(params, lab, unl, pseudo, step_cfg, enc,
                                    step_cfg.distill_on_labeled ? &lab_pseudo : nullptr);
    check_finite_loss(lg.loss, step, "train_student");
    adamw_step(params, lg.grad, state, train);
    window += lg.loss;
    ++window_steps;

    if (step % train.eval_every == 0 || step == train.max_steps) {
      const double val =
          validation_loss(params, labeled_val, enc, loss.sigma, train.batch_size_labeled);
      check_finite_loss(val, step, "validation");
      if (progress) progress({step, window / static_cast<double>(window_steps), val});
      window = 0.0;
      window_steps = 0;
      if (val < best.val_loss) {
        best.params = params;
        best.step = step;
        best.val_loss = val;
      }
    }
  }
  return best;
}

}  // namespace dfuse
