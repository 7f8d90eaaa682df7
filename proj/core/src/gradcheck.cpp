#include "dfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dfuse/rng.hpp"

namespace dfuse {

namespace {

std::size_t pick_dim(Rng& rng, std::size_t max_dim) {
  return 2 + static_cast<std::size_t>(rng.below(max_dim - 1));
}

RawBatch random_batch(Rng& rng, std::size_t b, const EncoderConfig& enc) {
  RawBatch batch;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t t = 1 + static_cast<std::size_t>(rng.below(6));
    FrameStack v{Matrix(t, enc.input_dim_video)};
    for (double& x : v.frames.data()) x = rng.normal();
    batch.videos.push_back(std::move(v));
    TextFeatures text(enc.input_dim_text);
    for (double& x : text) x = rng.normal();
    batch.texts.push_back(std::move(text));
  }
  return batch;
}

Matrix random_teacher_logits(Rng& rng, std::size_t b, std::size_t dim, double sigma) {
  Matrix a(b, dim), c(b, dim);
  for (double& x : a.data()) x = rng.normal();
  for (double& x : c.data()) x = rng.normal();
  return similarity_matrix(l2_normalize_rows(a), l2_normalize_rows(c), sigma);
}

double loss_at(const GradCheckInstance& inst, const ParamVector& params) {
  const LabeledBatch lab{{encode_videos(params, inst.labeled.videos, inst.enc),
                          encode_texts(params, inst.labeled.texts, inst.enc)}};
  const EmbeddingBatch unl{encode_videos(params, inst.unlabeled.videos, inst.enc),
                           encode_texts(params, inst.unlabeled.texts, inst.enc)};
  return total_loss(lab, unl, inst.pseudo, inst.loss, &inst.labeled_pseudo);
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t batch,
                                            std::size_t max_dim) {
  Rng rng(seed);
  GradCheckInstance inst;
  inst.enc.input_dim_video = pick_dim(rng, max_dim);
  inst.enc.input_dim_text = pick_dim(rng, max_dim);
  inst.enc.hidden_dim = pick_dim(rng, max_dim);
  inst.enc.embed_dim = pick_dim(rng, max_dim);
  inst.enc.n_frames = 1 + static_cast<std::size_t>(rng.below(4));
  inst.enc.seed = rng.next_u64();
  inst.loss.sigma = rng.uniform(0.05, 1.0);
  inst.loss.lambda = rng.uniform(0.0, 1.0);
  inst.loss.distill_on_labeled = rng.below(2) == 1;
  inst.params = init_params(inst.enc);
  // Scale weights up so the tanh units leave their linear regime.
  for (double& w : inst.params.values) w *= 2.0;
  inst.labeled = random_batch(rng, batch, inst.enc);
  inst.unlabeled = random_batch(rng, batch, inst.enc);
  inst.pseudo.teacher_logits = random_teacher_logits(rng, batch, inst.enc.embed_dim, inst.loss.sigma);
  inst.labeled_pseudo.teacher_logits =
      random_teacher_logits(rng, batch, inst.enc.embed_dim, inst.loss.sigma);
  return inst;
}

GradCheckResult run_gradcheck(const GradCheckOptions& opts) {
  GradCheckResult result;
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    const auto inst = random_gradcheck_instance(derive_seed(opts.seed, "gradcheck") + trial,
                                                opts.batch, opts.max_dim);
    const auto analytic = total_loss_grad(inst.params, inst.labeled, inst.unlabeled, inst.pseudo,
                                          inst.loss, inst.enc, &inst.labeled_pseudo);
    ParamVector probe = inst.params;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double orig = probe.values[i];
      probe.values[i] = orig + opts.step;
      const double up = loss_at(inst, probe);
      probe.values[i] = orig - opts.step;
      const double down = loss_at(inst, probe);
      probe.values[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      result.max_relative_error = std::max(
          result.max_relative_error, gradient_relative_error(analytic.grad.values[i], numeric));
      ++result.coordinates;
    }
    ++result.trials;
  }
  result.passed = result.max_relative_error < opts.tolerance;
  return result;
}

}  // namespace dfuse
