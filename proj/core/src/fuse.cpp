#include "dfuse/fuse.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dfuse/errors.hpp"

namespace dfuse {

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError(fmt::format("alpha must lie in [0, 1], got {}", alpha));
  }
}

ParamVector fuse_weights(const ParamVector& teacher, const ParamVector& student,
                         const FusionConfig& cfg) {
  cfg.validate();
  teacher.validate();
  student.validate();
  if (!teacher.same_layout(student)) {
    throw UsageError("fuse_weights: teacher and student layouts differ");
  }
  ParamVector out = ParamVector::zeros_like(teacher);
  const double wt = 1.0 - cfg.alpha;
  const double ws = cfg.alpha;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = wt * teacher.values[i] + ws * student.values[i];
  }
  return out;
}

std::vector<SweepRow> sweep_alpha(const ParamVector& teacher, const ParamVector& student,
                                  std::span<const double> alphas, const EvalBundle& bundle) {
  if (alphas.empty()) throw UsageError("sweep_alpha: no alphas given");
  for (double a : alphas) FusionConfig{a}.validate();
  std::vector<SweepRow> rows;
  rows.reserve(alphas.size());
  for (double a : alphas) {
    rows.push_back({a, evaluate(fuse_weights(teacher, student, {a}), bundle)});
  }
  return rows;
}

std::vector<double> alpha_grid(std::size_t intervals) {
  if (intervals == 0) throw UsageError("alpha_grid needs at least one interval");
  std::vector<double> out;
  for (std::size_t i = 0; i <= intervals; ++i) {
    out.push_back(static_cast<double>(i) / static_cast<double>(intervals));
  }
  return out;
}

}  // namespace dfuse
