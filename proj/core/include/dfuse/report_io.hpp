#pragma once

#include <span>
#include <string>
#include <string_view>

#include "dfuse/fuse.hpp"
#include "dfuse/zeroeval.hpp"

namespace dfuse {

// Human-readable two-column table: metric, value. Per-class rows follow
// as "class:<name>" entries.
std::string report_to_tsv(const EvalReport& report);

// One JSON object per line: {"record":"metric"|"class"|"rank", ...}.
// Doubles use shortest round-trip formatting, so parsing is lossless.
std::string report_to_jsonl(const EvalReport& report);
EvalReport report_from_jsonl(std::string_view text);

// alpha, then top1, top5, R@1, R@5, R@10, MdR (columns present in the reports).
std::string sweep_to_tsv(std::span<const SweepRow> rows);
std::string sweep_to_jsonl(std::span<const SweepRow> rows);

std::string class_delta_to_tsv(std::span<const ClassDelta> deltas);
std::string rank_distribution_to_tsv(std::span<const RankDistRow> rows);

}  // namespace dfuse
