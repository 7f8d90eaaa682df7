#include <benchmark/benchmark.h>

#include "dfuse/corpus.hpp"
#include "dfuse/objective.hpp"
#include "dfuse/rng.hpp"
#include "dfuse/train.hpp"
#include "dfuse/zeroeval.hpp"

using namespace dfuse;

namespace {

struct Fixture {
  Corpus corpus;
  EncoderConfig enc;
  ParamVector params;
  PairSet labeled;
  UnpairedSet unlabeled;

  Fixture() {
    SynthConfig s;
    s.n_unlabeled = 256;
    s.n_image_train = 64;
    s.n_image_eval = 64;
    corpus = gen_corpus(s);
    params = init_params(enc);
    labeled = corpus.pairs(Split::kLabeledTrain);
    unlabeled = corpus.unpaired(Split::kUnlabeled);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

RawBatch take(const std::vector<FrameStack>& v, const std::vector<TextFeatures>& t, std::size_t n) {
  return {{v.begin(), v.begin() + static_cast<long>(n)}, {t.begin(), t.begin() + static_cast<long>(n)}};
}

}  // namespace

static void BM_EncodeVideos(benchmark::State& state) {
  const auto& f = fixture();
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::span<const FrameStack> videos(f.labeled.videos.data(), n);
  for (auto _ : state) benchmark::DoNotOptimize(encode_videos(f.params, videos, f.enc));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_EncodeVideos)->Arg(32)->Arg(512);

static void BM_TotalLossGrad(benchmark::State& state) {
  const auto& f = fixture();
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto lab = take(f.labeled.videos, f.labeled.texts, b);
  const auto unl = take(f.unlabeled.videos, f.unlabeled.texts, b);
  const auto pseudo = make_pseudo_labels(f.params, unl.videos, unl.texts, f.enc, 0.05);
  const LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(total_loss_grad(f.params, lab, unl, pseudo, cfg, f.enc));
  }
}
BENCHMARK(BM_TotalLossGrad)->Arg(8)->Arg(32);

static void BM_AdamWStep(benchmark::State& state) {
  const auto& f = fixture();
  auto params = f.params;
  auto grad = ParamVector::zeros_like(params);
  for (std::size_t i = 0; i < grad.size(); ++i) grad.values[i] = 1e-3 * static_cast<double>(i % 7);
  auto opt = OptimizerState::zeros_for(params);
  const TrainConfig cfg;
  for (auto _ : state) adamw_step(params, grad, opt, cfg);
}
BENCHMARK(BM_AdamWStep);

static void BM_RetrievalRanks(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Matrix q(n, 16), g(n, 16);
  for (double& x : q.data()) x = rng.normal();
  for (double& x : g.data()) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(blocked_retrieval_ranks(q, g, 0));
  state.SetComplexityN(static_cast<long>(n));
}
BENCHMARK(BM_RetrievalRanks)->RangeMultiplier(4)->Range(64, 1024)->Complexity(benchmark::oNSquared);

static void BM_CorpusRoundTrip(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(parse_corpus(serialize_corpus(f.corpus)));
}
BENCHMARK(BM_CorpusRoundTrip)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
