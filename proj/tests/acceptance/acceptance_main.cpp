// Acceptance suite. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dfuse/checkpoint.hpp"
#include "dfuse/cli.hpp"
#include "dfuse/fileio.hpp"
#include "dfuse/fuse.hpp"
#include "dfuse/gradcheck.hpp"
#include "dfuse/objective.hpp"
#include "dfuse/report_io.hpp"
#include "dfuse/rng.hpp"
#include "dfuse/zeroeval.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using namespace dfuse;

namespace {

// Tolerances and budgets.
constexpr std::size_t kGradInstances = 20;
constexpr double kGradStep = 1e-5;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradFloor = 1e-6;  // denominator floor for near-zero derivatives
constexpr double kGradBudgetSeconds = 60.0;
constexpr std::size_t kLossInstances = 100;
constexpr double kLogitBound = 30.0;
constexpr double kLossTolerance = 1e-10;
constexpr std::size_t kFixedPointInstances = 100;
constexpr double kFixedPointTolerance = 1e-8;
constexpr double kTeacherMinR1 = 0.8;
constexpr double kStudentMinR1 = 0.9;
constexpr std::size_t kStudentMaxSteps = 2000;
constexpr double kStudentBudgetSeconds = 300.0;
constexpr std::size_t kMetricInstances = 50;
constexpr double kSweepBudgetSeconds = 120.0;
constexpr std::uint64_t kPipelineSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix unit_rows(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (double& x : m.data()) x = rng.normal();
  return l2_normalize_rows(m);
}

Matrix uniform_logits(Rng& rng, std::size_t n, double bound) {
  Matrix m(n, n);
  for (double& x : m.data()) x = rng.uniform(-bound, bound);
  return m;
}

// ---------------------------------------------------------------- AC1

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t coords = 0, floored = 0, max_dim_seen = 0;
  for (std::size_t i = 0; i < kGradInstances; ++i) {
    const auto inst = random_gradcheck_instance(derive_seed(1, fmt::format("ac1-{}", i)), 4, 8);
    const auto& e = inst.enc;
    max_dim_seen = std::max({max_dim_seen, e.input_dim_video, e.input_dim_text, e.hidden_dim,
                             e.embed_dim});
    const auto analytic = total_loss_grad(inst.params, inst.labeled, inst.unlabeled, inst.pseudo,
                                          inst.loss, e, &inst.labeled_pseudo);
    const auto numeric = oracle::fd_gradient(inst.params.values, kGradStep, e, inst.loss,
                                             inst.labeled, inst.unlabeled,
                                             inst.pseudo.teacher_logits,
                                             &inst.labeled_pseudo.teacher_logits);
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      const double a = analytic.grad.values[k], n = numeric[k];
      const double scale = std::max({std::abs(a), std::abs(n)});
      if (scale < kGradFloor) ++floored;
      worst = std::max(worst, std::abs(a - n) / std::max(scale, kGradFloor));
      ++coords;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTolerance && secs < kGradBudgetSeconds && max_dim_seen <= 8,
          fmt::format("{} instances, B=4, dims<={}, {} coords, max rel err {:.3e} (< {:.0e}), "
                      "{} coords below floor {:.0e}, {:.2f}s",
                      kGradInstances, max_dim_seen, coords, worst, kGradTolerance, floored,
                      kGradFloor, secs)};
}

// ---------------------------------------------------------------- AC2

Outcome loss_oracle_equivalence() {
  Rng rng(2);
  double worst = 0.0, max_logit = 0.0;
  for (std::size_t i = 0; i < kLossInstances; ++i) {
    const std::size_t b = 2 + rng.below(7);
    const std::size_t d = 1 + rng.below(8);
    const LossConfig cfg{rng.uniform(1.0 / kLogitBound, 1.0), rng.uniform(0.0, 1.0),
                         rng.below(2) == 1};
    const LabeledBatch lab{{unit_rows(rng, b, d), unit_rows(rng, b, d)}};
    const EmbeddingBatch unl{unit_rows(rng, b, d), unit_rows(rng, b, d)};
    const PseudoLabelBatch pseudo{uniform_logits(rng, b, kLogitBound)};
    const PseudoLabelBatch lpseudo{uniform_logits(rng, b, kLogitBound)};

    const double got = total_loss(lab, unl, pseudo, cfg, &lpseudo);
    const auto sl = oracle::similarity(oracle::to_grid(lab.embeddings.z_v),
                                       oracle::to_grid(lab.embeddings.z_t), cfg.sigma);
    const auto su = oracle::similarity(oracle::to_grid(unl.z_v), oracle::to_grid(unl.z_t), cfg.sigma);
    for (const auto& row : sl)
      for (double x : row) max_logit = std::max(max_logit, std::abs(x));
    double want = oracle::contrastive(sl).total() +
                  cfg.lambda * oracle::distillation(su, oracle::to_grid(pseudo.teacher_logits)).total();
    if (cfg.distill_on_labeled) {
      want += cfg.lambda * oracle::distillation(sl, oracle::to_grid(lpseudo.teacher_logits)).total();
    }
    worst = std::max(worst, std::abs(got - want));

    // Logit-level entry points on matrices that reach the bound.
    const auto s = uniform_logits(rng, b, kLogitBound);
    const auto t = uniform_logits(rng, b, kLogitBound);
    const auto c = contrastive_loss_from_logits(s);
    const auto oc = oracle::contrastive(oracle::to_grid(s));
    const auto dl = distillation_loss_from_logits(s, t);
    const auto od = oracle::distillation(oracle::to_grid(s), oracle::to_grid(t));
    worst = std::max({worst, std::abs(c.v2t - oc.v2t), std::abs(c.t2v - oc.t2v),
                      std::abs(dl.v2t - od.v2t), std::abs(dl.t2v - od.t2v)});

    // Raw-input path through both towers.
    const auto inst = random_gradcheck_instance(derive_seed(2, fmt::format("ac2-{}", i)), 4, 8);
    const double prod = total_loss_grad(inst.params, inst.labeled, inst.unlabeled, inst.pseudo,
                                        inst.loss, inst.enc, &inst.labeled_pseudo)
                            .loss;
    const double ref = oracle::total_loss(inst.params.values, inst.enc, inst.loss, inst.labeled,
                                          inst.unlabeled, inst.pseudo.teacher_logits,
                                          &inst.labeled_pseudo.teacher_logits);
    worst = std::max(worst, std::abs(prod - ref));
  }
  return {worst < kLossTolerance,
          fmt::format("{} instances x 3 paths, |logits|<={}, max abs diff {:.3e} (< {:.0e})",
                      kLossInstances, kLogitBound, worst, kLossTolerance)};
}

// ---------------------------------------------------------------- AC3

Outcome distillation_fixed_point() {
  Rng rng(3);
  double worst = 0.0;
  for (std::size_t i = 0; i < kFixedPointInstances; ++i) {
    const auto s = uniform_logits(rng, 2 + rng.below(15), kLogitBound);
    for (double g : distillation_logit_grad(s, s).data()) worst = std::max(worst, std::abs(g));
  }
  return {worst < kFixedPointTolerance,
          fmt::format("{} instances, max |dL/dS| {:.3e} (< {:.0e})", kFixedPointInstances, worst,
                      kFixedPointTolerance)};
}

// ---------------------------------------------------------------- pipeline

struct Cli {
  fs::path dir;
  std::string last_err;

  void operator()(std::vector<std::string> args) {
    std::ostringstream out, err;
    const auto prev = fs::current_path();
    fs::current_path(dir);
    const int code = dfuse::cli_dispatch(args, out, err);
    fs::current_path(prev);
    if (code != 0) {
      throw std::runtime_error(fmt::format("`dfuse {}` exited {}: {}", args.front(), code, err.str()));
    }
  }
};

struct Pipeline {
  fs::path dir;
  double student_seconds = 0.0;
  double sweep_seconds = 0.0;
};

Pipeline run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  Cli cli{dir, {}};
  Pipeline p{dir};
  const std::string seed = std::to_string(kPipelineSeed);
  cli({"gen-corpus", "--out", "corpus.jsonl", "--seed", seed});
  cli({"pretrain-teacher", "--corpus", "corpus.jsonl", "--out", "teacher.ckpt", "--seed", seed});
  cli({"eval-retrieval", "--model", "teacher.ckpt", "--corpus", "corpus.jsonl", "--split",
       "image-eval", "--out", "teacher_image.tsv"});
  const auto t0 = std::chrono::steady_clock::now();
  cli({"train-student", "--corpus", "corpus.jsonl", "--teacher", "teacher.ckpt", "--out",
       "student.ckpt", "--log", "student_progress.tsv", "--seed", seed});
  p.student_seconds = seconds_since(t0);
  cli({"fuse", "--teacher", "teacher.ckpt", "--student", "student.ckpt", "--alpha", "0", "--out",
       "fused0.ckpt"});
  cli({"fuse", "--teacher", "teacher.ckpt", "--student", "student.ckpt", "--alpha", "1", "--out",
       "fused1.ckpt"});
  cli({"fuse", "--teacher", "teacher.ckpt", "--student", "student.ckpt", "--out", "blend.ckpt"});
  for (const std::string m : {"teacher", "student", "fused0", "fused1", "blend"}) {
    cli({"eval-retrieval", "--model", m + ".ckpt", "--corpus", "corpus.jsonl", "--out",
         m + "_ret.tsv"});
    cli({"eval-classify", "--model", m + ".ckpt", "--corpus", "corpus.jsonl", "--out",
         m + "_cls.tsv"});
  }
  const auto t1 = std::chrono::steady_clock::now();
  cli({"sweep-alpha", "--teacher", "teacher.ckpt", "--student", "student.ckpt", "--corpus",
       "corpus.jsonl", "--out", "sweep.tsv"});
  p.sweep_seconds = seconds_since(t1);
  cli({"report-class-delta", "--a", "blend_cls.jsonl", "--b", "teacher_cls.jsonl", "--out",
       "class_delta.tsv"});
  cli({"report-rank-dist", "--a", "blend_ret.jsonl", "--b", "teacher_ret.jsonl", "--out",
       "rank_dist.tsv"});
  return p;
}

EvalReport load_report(const Pipeline& p, const std::string& name) {
  return report_from_jsonl(read_file(p.dir / name));
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// ---------------------------------------------------------------- AC4

Outcome fusion_endpoints(const Pipeline& p) {
  std::vector<std::string> mismatched;
  const std::pair<std::string, std::string> pairs[] = {{"fused0", "teacher"}, {"fused1", "student"}};
  for (const auto& [fused, ref] : pairs) {
    for (const std::string kind : {"_ret.tsv", "_ret.jsonl", "_cls.tsv", "_cls.jsonl"}) {
      if (read_file(p.dir / (fused + kind)) != read_file(p.dir / (ref + kind))) {
        mismatched.push_back(fused + kind);
      }
    }
  }
  const auto t = load_checkpoint(p.dir / "teacher.ckpt");
  const auto s = load_checkpoint(p.dir / "student.ckpt");
  const bool weights = load_checkpoint(p.dir / "fused0.ckpt").params == t.params &&
                       load_checkpoint(p.dir / "fused1.ckpt").params == s.params;
  std::string detail = "alpha=0 == teacher, alpha=1 == student: weights and 8 CLI report files byte-identical";
  if (!mismatched.empty()) detail = "differing: " + fmt::format("{}", fmt::join(mismatched, ", "));
  if (!weights) detail += "; fused weights differ from endpoint";
  return {mismatched.empty() && weights, detail};
}

// ---------------------------------------------------------------- AC5

Outcome planted_learning(const Pipeline& p) {
  const double teacher_r1 = load_report(p, "teacher_image.jsonl").retrieval->recall_at.at(1);
  const double student_r1 = load_report(p, "student_ret.jsonl").retrieval->recall_at.at(1);
  const double teacher_video_r1 = load_report(p, "teacher_ret.jsonl").retrieval->recall_at.at(1);
  const auto student = load_checkpoint(p.dir / "student.ckpt");
  const auto manifest = nlohmann::json::parse(read_file(p.dir / "student.ckpt.manifest.json"));
  const auto& cfg = manifest.at("config");
  const bool hyper = student.loss.sigma == 0.05 && student.loss.lambda == 0.999 &&
                     cfg.at("lr").get<double>() == 3e-5 &&
                     cfg.at("max_steps").get<std::size_t>() <= kStudentMaxSteps &&
                     student.step <= kStudentMaxSteps;
  const bool pass = hyper && teacher_r1 >= kTeacherMinR1 && student_r1 >= kStudentMinR1 &&
                    p.student_seconds < kStudentBudgetSeconds;
  return {pass, fmt::format("teacher image-eval R@1 {:.4f} (>= {}), student eval R@1 {:.4f} "
                            "(>= {}; teacher on video {:.4f}), sigma {} lambda {} lr {} "
                            "steps {} (best at {}), {:.1f}s (< {}s)",
                            teacher_r1, kTeacherMinR1, student_r1, kStudentMinR1,
                            teacher_video_r1, student.loss.sigma, student.loss.lambda,
                            cfg.at("lr").get<double>(), cfg.at("max_steps").get<std::size_t>(),
                            student.step, p.student_seconds, kStudentBudgetSeconds)};
}

// ---------------------------------------------------------------- AC6

Outcome metric_oracle(void) {
  Rng rng(6);
  std::size_t checked = 0, ties = 0;
  bool ok = true;
  std::string first_failure;
  for (std::size_t i = 0; i < kMetricInstances; ++i) {
    const std::size_t n = 2 + rng.below(60);
    const std::size_t d = 1 + rng.below(5);
    Matrix q(n, d), g(n, d);
    const bool integral = i % 2 == 0;  // integer coordinates force exact ties
    for (double& x : q.data()) x = integral ? static_cast<double>(rng.below(5)) - 2.0 : rng.normal();
    for (double& x : g.data()) x = integral ? static_cast<double>(rng.below(5)) - 2.0 : rng.normal();
    std::vector<std::size_t> diag(n);
    for (std::size_t k = 0; k < n; ++k) diag[k] = k;

    const auto ranks = retrieval_ranks(q, g, diag);
    const auto metrics = retrieval_metrics(ranks);
    const auto sims = oracle::similarity(oracle::to_grid(q), oracle::to_grid(g), 1.0);
    const auto oranks = oracle::sort_ranks(sims, diag);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) ties += j != k && sims[k][j] == sims[k][k] ? 1 : 0;
    bool same = ranks.ranks == oranks && metrics.median_rank == oracle::median(oranks);
    for (std::size_t k : kRecallCutoffs) same = same && metrics.recall_at.at(k) == oracle::recall(oranks, k);

    std::vector<std::size_t> perm = diag;
    rng.shuffle(std::span<std::size_t>(perm));
    Matrix pg(n, d);
    std::vector<std::size_t> truth(n);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < d; ++c) pg(k, c) = g(perm[k], c);
      truth[perm[k]] = k;
    }
    same = same && retrieval_ranks(q, pg, truth) == ranks;
    if (!same && ok) first_failure = fmt::format("instance {} (n={})", i, n);
    ok = ok && same;
    ++checked;
  }
  return {ok, ok ? fmt::format("{} instances exact (R@1/5/10, MdR, ranks), {} tied pairs "
                               "exercised, gallery permutation invariant",
                               checked, ties)
                 : "mismatch at " + first_failure};
}

// ---------------------------------------------------------------- AC7

Outcome delta_arithmetic() {
  struct Pair {
    const char* column;
    double blend, teacher, expected;
  };
  const Pair table[] = {
      {"UCF101 top1", 73.3, 74.5, -1.2}, {"MiT top1", 33.2, 30.1, 3.1},
      {"MSR-VTT R@5", 59.8, 55.1, 4.7},  {"YouCook2 R@5", 15.5, 14.6, 0.9},
      {"DiDeMo R@5", 53.7, 49.9, 3.8},
  };
  constexpr std::size_t kCount = 1000;  // one item per 0.1 percentage point
  std::vector<std::string> rows;
  bool ok = true;
  for (const auto& row : table) {
    auto report = [&](double pct) {
      EvalReport r;
      ClassificationResult c;
      c.per_class.push_back(
          {row.column, static_cast<std::size_t>(std::lround(pct * kCount / 100.0)), kCount});
      c.top1 = c.per_class[0].accuracy();
      c.top5 = 1.0;
      r.classification = c;
      return r;
    };
    const auto deltas = per_class_delta(report(row.blend), report(row.teacher));
    const double via_classes = round_to(100.0 * aggregate_delta(deltas), 1);
    const double via_metric =
        round_to(metric_delta(row.blend, row.teacher, MetricSense::kHigherIsBetter), 1);
    const bool match = via_classes == row.expected && via_metric == row.expected;
    ok = ok && match;
    rows.push_back(fmt::format("{} {}-{}={}{}", row.column, row.blend, row.teacher, via_classes,
                               match ? "" : " (MISMATCH)"));
  }
  return {ok, fmt::format("{}", fmt::join(rows, "; "))};
}

// ---------------------------------------------------------------- AC8

Outcome report_invariants(const Pipeline& p) {
  std::size_t reports = 0;
  for (const auto& entry : fs::directory_iterator(p.dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".jsonl" || name == "corpus.jsonl" || name == "sweep.jsonl") continue;
    load_report(p, name).check_invariants();
    ++reports;
  }
  std::istringstream sweep(read_file(p.dir / "sweep.jsonl"));
  std::string line;
  std::size_t sweep_rows = 0;
  while (std::getline(sweep, line)) {
    const auto j = nlohmann::json::parse(line);
    if (!(j.at("top5").get<double>() >= j.at("top1").get<double>() &&
          j.at("R@10").get<double>() >= j.at("R@5").get<double>() &&
          j.at("R@5").get<double>() >= j.at("R@1").get<double>())) {
      return {false, fmt::format("sweep row alpha={} violates ordering", j.at("alpha").dump())};
    }
    ++sweep_rows;
  }
  const auto dist = read_tsv(p.dir / "rank_dist.tsv");
  for (std::size_t r = 2; r < dist.size(); ++r) {
    for (std::size_t c = 1; c <= 2; ++c) {
      if (std::stoul(dist[r][c]) < std::stoul(dist[r - 1][c])) {
        return {false, fmt::format("rank_dist.tsv column {} decreases at row {}", c, r)};
      }
    }
  }
  // Property check on random metric inputs as well.
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const std::size_t gallery = 1 + rng.below(40);
    RankList ranks{{}, gallery};
    for (std::size_t k = 0, n = 1 + rng.below(50); k < n; ++k) ranks.ranks.push_back(1 + rng.below(gallery));
    std::vector<std::vector<std::size_t>> preds;
    std::vector<std::size_t> labels;
    for (int k = 0; k < 20; ++k) {
      std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6};
      rng.shuffle(std::span<std::size_t>(order));
      preds.push_back(order);
      labels.push_back(rng.below(7));
    }
    EvalReport r;
    r.retrieval = retrieval_metrics(ranks);
    r.classification = classification_metrics(
        preds, labels, std::vector<std::string>{"a", "b", "c", "d", "e", "f", "g"});
    r.check_invariants();
  }
  return {true, fmt::format("{} pipeline reports + {} sweep rows + 500 random reports valid; "
                            "rank_dist.tsv {} rows non-decreasing",
                            reports, sweep_rows, dist.size() - 1)};
}

// ---------------------------------------------------------------- AC9

Outcome alpha_sweep(const Pipeline& p) {
  const auto tsv = read_tsv(p.dir / "sweep.tsv");
  const std::vector<std::string> header{"alpha", "top1", "top5", "R@1", "R@5", "R@10", "MdR"};
  const auto grid = alpha_grid(10);
  bool shape = !tsv.empty() && tsv.front() == header && tsv.size() == grid.size() + 1;
  for (std::size_t r = 1; shape && r < tsv.size(); ++r) shape = tsv[r].size() == header.size();

  std::vector<nlohmann::json> rows;
  std::istringstream in(read_file(p.dir / "sweep.jsonl"));
  std::string line;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  shape = shape && rows.size() == grid.size();
  for (std::size_t i = 0; shape && i < rows.size(); ++i) shape = rows[i].at("alpha").get<double>() == grid[i];
  if (!shape) return {false, "sweep table malformed"};

  auto matches = [&](const nlohmann::json& row, const std::string& model) {
    const auto cls = load_report(p, model + "_cls.jsonl").classification.value();
    const auto ret = load_report(p, model + "_ret.jsonl").retrieval.value();
    return row.at("top1").get<double>() == cls.top1 && row.at("top5").get<double>() == cls.top5 &&
           row.at("R@1").get<double>() == ret.recall_at.at(1) &&
           row.at("R@5").get<double>() == ret.recall_at.at(5) &&
           row.at("R@10").get<double>() == ret.recall_at.at(10) &&
           row.at("MdR").get<std::size_t>() == ret.median_rank;
  };
  const bool endpoints = matches(rows.front(), "teacher") && matches(rows.back(), "student");

  // Interior behaviour is recorded, not asserted.
  const double r1_a = rows.front().at("R@1"), r1_b = rows.back().at("R@1");
  const double t1_a = rows.front().at("top1"), t1_b = rows.back().at("top1");
  std::vector<std::string> beats;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    const double r1 = rows[i].at("R@1"), t1 = rows[i].at("top1");
    if (r1 > std::max(r1_a, r1_b) || t1 > std::max(t1_a, t1_b)) beats.push_back(rows[i].at("alpha").dump());
  }
  const std::string interior = beats.empty() ? "no interior alpha beats both endpoints"
                                             : "interior alpha beating both endpoints: " +
                                                   fmt::format("{}", fmt::join(beats, ","));
  return {endpoints && p.sweep_seconds < kSweepBudgetSeconds,
          fmt::format("{} rows, endpoints {} standalone evals, {:.2f}s (< {}s); {}", rows.size(),
                      endpoints ? "equal" : "DIFFER from", p.sweep_seconds, kSweepBudgetSeconds,
                      interior)};
}

// ---------------------------------------------------------------- AC10

Outcome determinism(const Pipeline& a, const Pipeline& b) {
  std::vector<std::string> names, differing;
  for (const auto& e : fs::directory_iterator(a.dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::size_t bytes = 0;
  for (const auto& n : names) {
    if (!fs::exists(b.dir / n)) {
      differing.push_back(n + " (missing)");
      continue;
    }
    const auto x = read_file(a.dir / n);
    bytes += x.size();
    if (x != read_file(b.dir / n)) differing.push_back(n);
  }
  std::size_t count_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b.dir)) ++count_b;
  const bool ok = differing.empty() && count_b == names.size();
  return {ok, ok ? fmt::format("{} files ({} bytes) byte-identical across two full runs",
                               names.size(), bytes)
                 : "differing: " + fmt::format("{}", fmt::join(differing, ", "))};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "dfuse_acceptance";
  std::optional<Pipeline> first, second;
  auto pipeline = [&]() -> const Pipeline& {
    if (!first) first = run_pipeline(root / "run_a");
    return *first;
  };

  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"AC1", "gradient correctness", gradient_correctness},
      {"AC2", "loss oracle equivalence", loss_oracle_equivalence},
      {"AC3", "distillation fixed point", distillation_fixed_point},
      {"AC4", "fusion endpoints through CLI", [&] { return fusion_endpoints(pipeline()); }},
      {"AC5", "planted-data learning", [&] { return planted_learning(pipeline()); }},
      {"AC6", "metric oracle equivalence", metric_oracle},
      {"AC7", "delta arithmetic reproduction", delta_arithmetic},
      {"AC8", "report invariants", [&] { return report_invariants(pipeline()); }},
      {"AC9", "alpha-sweep deliverable", [&] { return alpha_sweep(pipeline()); }},
      {"AC10", "determinism",
       [&] {
         const auto& a = pipeline();
         if (!second) second = run_pipeline(root / "run_b");
         return determinism(a, *second);
       }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %-5s %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  fs::remove_all(root);
  return failures == 0 ? 0 : 1;
}
