#include "dfuse/zeroeval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "dfuse/errors.hpp"
#include "dfuse/rng.hpp"

namespace dfuse {

void PromptSet::validate() const {
  if (templates.empty()) throw UsageError("prompt set needs at least one template");
  if (class_names.size() < 2) throw UsageError("prompt set needs at least two classes");
  for (const auto& t : templates) {
    const auto first = t.find(kClassPlaceholder);
    if (first == std::string::npos ||
        t.find(kClassPlaceholder, first + kClassPlaceholder.size()) != std::string::npos) {
      throw UsageError(fmt::format("template '{}' must contain {} exactly once", t,
                                   kClassPlaceholder));
    }
  }
  if (class_prototypes.rows() != class_names.size()) {
    throw UsageError(fmt::format("{} class names but {} prototypes", class_names.size(),
                                 class_prototypes.rows()));
  }
}

std::string PromptSet::render(std::size_t template_index, std::size_t class_index) const {
  std::string out = templates.at(template_index);
  out.replace(out.find(kClassPlaceholder), kClassPlaceholder.size(), class_names.at(class_index));
  return out;
}

TextFeatures PromptSet::prompt_features(std::size_t template_index,
                                        std::size_t class_index) const {
  const auto proto = class_prototypes.row(class_index);
  TextFeatures f(proto.begin(), proto.end());
  if (jitter_scale > 0.0) {
    Rng rng(fnv1a64(render(template_index, class_index)));
    for (double& x : f) x += jitter_scale * rng.normal();
  }
  return f;
}

Matrix class_embeddings(const ParamVector& params, const PromptSet& prompts,
                        const EncoderConfig& enc) {
  prompts.validate();
  Matrix out(prompts.class_names.size(), enc.embed_dim);
  const double n = static_cast<double>(prompts.templates.size());
  for (std::size_t c = 0; c < prompts.class_names.size(); ++c) {
    std::vector<double> mean(enc.embed_dim, 0.0);
    for (std::size_t t = 0; t < prompts.templates.size(); ++t) {
      const auto z = encode_text(params, prompts.prompt_features(t, c), enc);
      for (std::size_t k = 0; k < z.size(); ++k) mean[k] += z[k];
    }
    for (double& x : mean) x /= n;
    const auto z = l2_normalize(mean);
    std::copy(z.begin(), z.end(), out.row(c).begin());
  }
  return out;
}

std::vector<std::size_t> rank_classes(std::span<const double> video_embedding,
                                      const Matrix& class_emb, std::size_t k) {
  if (k > class_emb.rows()) {
    throw UsageError(fmt::format("top-{} requested from {} classes", k, class_emb.rows()));
  }
  std::vector<double> sims(class_emb.rows());
  for (std::size_t c = 0; c < sims.size(); ++c) sims[c] = dot(video_embedding, class_emb.row(c));
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  order.resize(k);
  return order;
}

std::vector<std::size_t> classify_zero_shot(const ParamVector& params, const FrameStack& video,
                                            const PromptSet& prompts, const EncoderConfig& enc,
                                            std::size_t k) {
  return rank_classes(encode_video(params, video, enc), class_embeddings(params, prompts, enc), k);
}

double topk_accuracy(std::span<const std::vector<std::size_t>> predictions,
                     std::span<const std::size_t> labels, std::size_t k) {
  if (predictions.size() != labels.size()) {
    throw UsageError(fmt::format("topk_accuracy: {} predictions vs {} labels", predictions.size(),
                                 labels.size()));
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = predictions[i];
    const auto end = p.begin() + static_cast<std::ptrdiff_t>(std::min(k, p.size()));
    if (std::find(p.begin(), end, labels[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void RankList::validate() const {
  for (std::size_t r : ranks) {
    if (r < 1 || r > gallery_size) {
      throw Error(fmt::format("rank {} outside [1, {}]", r, gallery_size));
    }
  }
}

RankList retrieval_ranks(const Matrix& queries, const Matrix& gallery,
                         std::span<const std::size_t> true_index) {
  if (queries.rows() != true_index.size()) {
    throw UsageError(fmt::format("retrieval_ranks: {} queries vs {} targets", queries.rows(),
                                 true_index.size()));
  }
  if (gallery.rows() == 0) throw UsageError("retrieval_ranks: empty gallery");
  if (queries.cols() != gallery.cols()) throw UsageError("retrieval_ranks: dim mismatch");
  RankList out{std::vector<std::size_t>(queries.rows()), gallery.rows()};
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const std::size_t target = true_index[q];
    if (target >= gallery.rows()) {
      throw UsageError(fmt::format("retrieval_ranks: target {} out of range for gallery of {}",
                                   target, gallery.rows()));
    }
    const double s_true = dot(queries.row(q), gallery.row(target));
    std::size_t ahead = 0;
    for (std::size_t g = 0; g < gallery.rows(); ++g) {
      if (g != target && dot(queries.row(q), gallery.row(g)) >= s_true) ++ahead;
    }
    out.ranks[q] = 1 + ahead;
  }
  return out;
}

RankList blocked_retrieval_ranks(const Matrix& queries, const Matrix& gallery,
                                 std::size_t block) {
  if (queries.rows() != gallery.rows()) {
    throw UsageError("blocked retrieval needs one gallery item per query");
  }
  const std::size_t n = queries.rows();
  if (block == 0) block = n;
  if (n == 0 || n % block != 0) {
    throw UsageError(fmt::format("{} pairs do not split into retrieval blocks of {}", n, block));
  }
  RankList out{{}, block};
  out.ranks.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += block) {
    Matrix q(block, queries.cols()), g(block, gallery.cols());
    std::vector<std::size_t> target(block);
    for (std::size_t i = 0; i < block; ++i) {
      std::copy(queries.row(begin + i).begin(), queries.row(begin + i).end(), q.row(i).begin());
      std::copy(gallery.row(begin + i).begin(), gallery.row(begin + i).end(), g.row(i).begin());
      target[i] = i;
    }
    const auto r = retrieval_ranks(q, g, target);
    out.ranks.insert(out.ranks.end(), r.ranks.begin(), r.ranks.end());
  }
  return out;
}

double recall_at_k(const RankList& ranks, std::size_t k) {
  if (k < 1) throw UsageError("recall_at_k needs k >= 1");
  if (ranks.ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.ranks.begin(), ranks.ranks.end(),
                                  [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.ranks.size());
}

std::size_t median_rank(const RankList& ranks) {
  if (ranks.ranks.empty()) throw UsageError("median_rank of an empty rank list");
  std::vector<std::size_t> sorted = ranks.ranks;
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

void EvalReport::check_invariants() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (classification) {
    const auto& c = *classification;
    if (!in_unit(c.top1) || !in_unit(c.top5)) throw Error("top-k accuracy outside [0, 1]");
    if (c.top5 < c.top1) throw Error(fmt::format("top5 {} < top1 {}", c.top5, c.top1));
  }
  if (retrieval) {
    const auto& r = *retrieval;
    double prev = 0.0;
    for (const auto& [k, v] : r.recall_at) {
      if (!in_unit(v)) throw Error(fmt::format("R@{} = {} outside [0, 1]", k, v));
      if (v < prev) throw Error(fmt::format("R@{} = {} below a smaller cutoff's recall", k, v));
      prev = v;
    }
    r.ranks.validate();
    if (!r.ranks.ranks.empty() && (r.median_rank < 1 || r.median_rank > r.ranks.gallery_size)) {
      throw Error(fmt::format("median rank {} outside gallery", r.median_rank));
    }
  }
}

ClassificationResult classification_metrics(std::span<const std::vector<std::size_t>> predictions,
                                            std::span<const std::size_t> labels,
                                            std::span<const std::string> class_names) {
  ClassificationResult out;
  out.top1 = topk_accuracy(predictions, labels, 1);
  out.top5 = topk_accuracy(predictions, labels, 5);
  for (const auto& n : class_names) out.per_class.push_back({n, 0, 0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& stat = out.per_class.at(labels[i]);
    ++stat.count;
    if (!predictions[i].empty() && predictions[i].front() == labels[i]) ++stat.correct;
  }
  return out;
}

RetrievalResult retrieval_metrics(RankList ranks) {
  RetrievalResult out;
  for (std::size_t k : kRecallCutoffs) out.recall_at[k] = recall_at_k(ranks, k);
  out.median_rank = median_rank(ranks);
  out.ranks = std::move(ranks);
  return out;
}

EvalReport evaluate(const ParamVector& params, const EvalBundle& bundle) {
  EvalReport report;
  const Matrix zv = encode_videos(params, bundle.videos, bundle.enc);
  if (bundle.classification) {
    if (bundle.labels.size() != bundle.videos.size()) {
      throw UsageError("evaluate: one label per video required");
    }
    const Matrix classes = class_embeddings(params, bundle.prompts, bundle.enc);
    const std::size_t k = std::min<std::size_t>(5, classes.rows());
    std::vector<std::vector<std::size_t>> predictions;
    predictions.reserve(zv.rows());
    for (std::size_t i = 0; i < zv.rows(); ++i) predictions.push_back(rank_classes(zv.row(i), classes, k));
    report.classification =
        classification_metrics(predictions, bundle.labels, bundle.prompts.class_names);
  }
  if (bundle.retrieval) {
    const Matrix zt = encode_texts(params, bundle.texts, bundle.enc);
    report.retrieval = retrieval_metrics(blocked_retrieval_ranks(zt, zv, bundle.gallery_block));
  }
  report.check_invariants();
  return report;
}

std::vector<ClassDelta> per_class_delta(const EvalReport& a, const EvalReport& b) {
  if (!a.classification || !b.classification) {
    throw UsageError("per_class_delta needs two classification reports");
  }
  const auto& ca = a.classification->per_class;
  const auto& cb = b.classification->per_class;
  std::map<std::string, const ClassStat*> by_name;
  for (const auto& s : cb) by_name[s.name] = &s;
  if (ca.size() != cb.size() || by_name.size() != cb.size()) {
    throw UsageError("per_class_delta: class sets differ");
  }
  std::vector<ClassDelta> out;
  for (const auto& s : ca) {
    auto it = by_name.find(s.name);
    if (it == by_name.end()) {
      throw UsageError(fmt::format("per_class_delta: class '{}' missing from second report", s.name));
    }
    if (it->second->count != s.count) {
      throw UsageError(fmt::format("per_class_delta: class '{}' has different sample counts", s.name));
    }
    out.push_back({s.name, s.accuracy() - it->second->accuracy(), s.count});
  }
  std::stable_sort(out.begin(), out.end(), [](const ClassDelta& x, const ClassDelta& y) {
    if (x.delta != y.delta) return x.delta > y.delta;
    return x.name < y.name;
  });
  return out;
}

std::vector<ClassDelta> truncate_extremes(std::span<const ClassDelta> sorted,
                                          std::size_t per_side) {
  if (sorted.size() <= 2 * per_side) return {sorted.begin(), sorted.end()};
  std::vector<ClassDelta> out(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(per_side));
  out.insert(out.end(), sorted.end() - static_cast<std::ptrdiff_t>(per_side), sorted.end());
  return out;
}

double aggregate_delta(std::span<const ClassDelta> deltas) {
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& d : deltas) {
    weighted += d.delta * static_cast<double>(d.count);
    total += d.count;
  }
  return total == 0 ? 0.0 : weighted / static_cast<double>(total);
}

double metric_delta(double model, double reference, MetricSense sense) {
  return sense == MetricSense::kHigherIsBetter ? model - reference : reference - model;
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

std::vector<RankDistRow> rank_distribution(const RankList& a, const RankList& b) {
  if (a.ranks.size() != b.ranks.size()) {
    throw UsageError(fmt::format("rank_distribution: {} vs {} queries", a.ranks.size(),
                                 b.ranks.size()));
  }
  auto sa = a.ranks;
  auto sb = b.ranks;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<RankDistRow> out(sa.size());
  for (std::size_t i = 0; i < sa.size(); ++i) out[i] = {i + 1, sa[i], sb[i]};
  return out;
}

}  // namespace dfuse
