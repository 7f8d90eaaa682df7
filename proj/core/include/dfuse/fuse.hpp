#pragma once

#include <span>
#include <vector>

#include "dfuse/encoder.hpp"
#include "dfuse/zeroeval.hpp"

namespace dfuse {

struct FusionConfig {
  double alpha = 0.4;  // weight on the student

  void validate() const;
};

// (1 - alpha) * teacher + alpha * student, every tensor including biases.
ParamVector fuse_weights(const ParamVector& teacher, const ParamVector& student,
                         const FusionConfig& cfg);

struct SweepRow {
  double alpha = 0.0;
  EvalReport report;
};

std::vector<SweepRow> sweep_alpha(const ParamVector& teacher, const ParamVector& student,
                                  std::span<const double> alphas, const EvalBundle& bundle);

// 0, 1/n, ..., 1 computed as i / n (no accumulated rounding).
std::vector<double> alpha_grid(std::size_t intervals);

}  // namespace dfuse
