#pragma once

#include <cstddef>
#include <cstdint>

#include "dfuse/encoder.hpp"
#include "dfuse/objective.hpp"

namespace dfuse {

struct GradCheckOptions {
  std::size_t trials = 20;
  std::size_t batch = 4;
  std::size_t max_dim = 8;
  double step = 1e-5;        // central-difference half-width
  double tolerance = 1e-4;   // max relative error per coordinate
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, kGradCheckFloor). The floor keeps coordinates whose
// true derivative is ~0 from dominating through finite-difference round-off.
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);

// One random small problem: encoder, params, both batches and teacher logits.
struct GradCheckInstance {
  EncoderConfig enc;
  LossConfig loss;
  ParamVector params;
  RawBatch labeled;
  RawBatch unlabeled;
  PseudoLabelBatch pseudo;
  PseudoLabelBatch labeled_pseudo;
};

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t batch,
                                            std::size_t max_dim);

// Compares total_loss_grad against central differences of total_loss.
GradCheckResult run_gradcheck(const GradCheckOptions& opts);

}  // namespace dfuse
