#include "dfuse/encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dfuse/errors.hpp"
#include "dfuse/rng.hpp"

namespace dfuse {

namespace {

enum class Side { kVideo, kText };

struct TowerShape {
  std::size_t in;
  std::size_t hidden;
  std::size_t out;
};

TowerShape tower_shape(const EncoderConfig& cfg, Side side) {
  return {side == Side::kVideo ? cfg.input_dim_video : cfg.input_dim_text, cfg.hidden_dim,
          cfg.embed_dim};
}

std::string_view prefix(Side side) { return side == Side::kVideo ? "video" : "text"; }

template <typename T>
struct TowerRef {
  std::span<T> w1, b1, w2, b2;
};

template <typename PV>
auto tower_ref(PV& params, Side side) {
  using Elem = std::remove_reference_t<decltype(params.values[0])>;
  const std::string p(prefix(side));
  return TowerRef<Elem>{params.tensor(p + ".w1"), params.tensor(p + ".b1"),
                        params.tensor(p + ".w2"), params.tensor(p + ".b2")};
}

// affine -> tanh -> affine
void tower_forward(const TowerRef<const double>& t, const TowerShape& s,
                   std::span<const double> x, std::span<double> hidden, std::span<double> out) {
  for (std::size_t i = 0; i < s.hidden; ++i) {
    double a = t.b1[i];
    const double* w = t.w1.data() + i * s.in;
    for (std::size_t j = 0; j < s.in; ++j) a += w[j] * x[j];
    hidden[i] = std::tanh(a);
  }
  for (std::size_t i = 0; i < s.out; ++i) {
    double a = t.b2[i];
    const double* w = t.w2.data() + i * s.hidden;
    for (std::size_t j = 0; j < s.hidden; ++j) a += w[j] * hidden[j];
    out[i] = a;
  }
}

// Backprop one tower pass with upstream gradient d_out.
void tower_backward(const TowerRef<const double>& t, const TowerRef<double>& g,
                    const TowerShape& s, std::span<const double> x,
                    std::span<const double> hidden, std::span<const double> d_out,
                    std::vector<double>& scratch) {
  scratch.assign(s.hidden, 0.0);
  for (std::size_t i = 0; i < s.out; ++i) {
    const double d = d_out[i];
    g.b2[i] += d;
    const double* w = t.w2.data() + i * s.hidden;
    double* gw = g.w2.data() + i * s.hidden;
    for (std::size_t j = 0; j < s.hidden; ++j) {
      gw[j] += d * hidden[j];
      scratch[j] += w[j] * d;
    }
  }
  for (std::size_t i = 0; i < s.hidden; ++i) {
    const double da = scratch[i] * (1.0 - hidden[i] * hidden[i]);
    g.b1[i] += da;
    double* gw = g.w1.data() + i * s.in;
    for (std::size_t j = 0; j < s.in; ++j) gw[j] += da * x[j];
  }
}

void finish_trace(EncodeTrace& trace) {
  trace.norm = l2_norm(trace.pooled);
  if (!(trace.norm >= kDegenerateNorm)) {
    throw DegenerateEmbeddingError(
        fmt::format("encoder output has norm {} and cannot be normalized", trace.norm));
  }
  trace.embedding = trace.pooled;
  for (double& x : trace.embedding) x /= trace.norm;
}

// d(pooled) from d(embedding) through z = p / |p|.
std::vector<double> normalize_backward(const EncodeTrace& trace,
                                       std::span<const double> d_embedding) {
  const double proj = dot(trace.embedding, d_embedding);
  std::vector<double> d_pooled(trace.pooled.size());
  for (std::size_t i = 0; i < d_pooled.size(); ++i) {
    d_pooled[i] = (d_embedding[i] - trace.embedding[i] * proj) / trace.norm;
  }
  return d_pooled;
}

void check_tensor_dims(const ParamVector& params, const EncoderConfig& cfg) {
  if (params.layout != make_layout(cfg)) {
    throw UsageError("parameter layout does not match the encoder config");
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim_video < 1 || input_dim_text < 1 || hidden_dim < 1 || embed_dim < 1) {
    throw UsageError("encoder dimensions must all be >= 1");
  }
  if (n_frames < 1) throw UsageError("n_frames must be >= 1");
}

std::size_t TensorSpec::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Layout make_layout(const EncoderConfig& cfg) {
  cfg.validate();
  Layout layout;
  for (Side side : {Side::kVideo, Side::kText}) {
    const auto s = tower_shape(cfg, side);
    const std::string p(prefix(side));
    layout.push_back({p + ".w1", {s.hidden, s.in}});
    layout.push_back({p + ".b1", {s.hidden}});
    layout.push_back({p + ".w2", {s.out, s.hidden}});
    layout.push_back({p + ".b2", {s.out}});
  }
  return layout;
}

std::size_t layout_numel(const Layout& layout) {
  std::size_t n = 0;
  for (const auto& t : layout) n += t.numel();
  return n;
}

ParamVector ParamVector::zeros(Layout layout) {
  ParamVector p;
  p.values.assign(layout_numel(layout), 0.0);
  p.layout = std::move(layout);
  return p;
}

std::size_t ParamVector::offset_of(std::string_view name) const {
  std::size_t off = 0;
  for (const auto& t : layout) {
    if (t.name == name) return off;
    off += t.numel();
  }
  throw UsageError(fmt::format("no tensor named '{}' in layout", name));
}

std::span<double> ParamVector::tensor(std::string_view name) {
  const std::size_t off = offset_of(name);
  for (const auto& t : layout)
    if (t.name == name) return std::span<double>(values).subspan(off, t.numel());
  throw UsageError(fmt::format("no tensor named '{}' in layout", name));
}

std::span<const double> ParamVector::tensor(std::string_view name) const {
  const std::size_t off = offset_of(name);
  for (const auto& t : layout)
    if (t.name == name) return std::span<const double>(values).subspan(off, t.numel());
  throw UsageError(fmt::format("no tensor named '{}' in layout", name));
}

void ParamVector::validate() const {
  if (layout_numel(layout) != values.size()) {
    throw UsageError(fmt::format("layout declares {} values but vector holds {}",
                                 layout_numel(layout), values.size()));
  }
}

ParamVector init_params(const EncoderConfig& cfg) {
  ParamVector p = ParamVector::zeros(make_layout(cfg));
  Rng rng(cfg.seed);
  std::size_t off = 0;
  std::size_t fan_in = 1;
  for (const auto& t : p.layout) {
    if (t.shape.size() == 2) fan_in = t.shape[1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) p.values[off + i] = rng.uniform(-bound, bound);
    off += t.numel();
  }
  return p;
}

void EmbeddingBatch::validate() const {
  if (z_v.rows() != z_t.rows()) {
    throw UsageError(fmt::format("embedding batch has {} videos but {} texts", z_v.rows(),
                                 z_t.rows()));
  }
  if (z_v.cols() != z_t.cols()) throw UsageError("video/text embedding dims differ");
}

std::vector<std::size_t> sample_frame_indices(std::size_t num_frames, std::size_t num_samples) {
  if (num_frames < 1 || num_samples < 1) {
    throw UsageError("sample_frame_indices needs T >= 1 and N >= 1");
  }
  std::vector<std::size_t> idx(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) {
    // (2i + 1) * T / (2N) in exact integer arithmetic.
    idx[i] = ((2 * i + 1) * num_frames) / (2 * num_samples);
  }
  return idx;
}

EncodeTrace trace_video(const ParamVector& params, const FrameStack& video,
                        const EncoderConfig& cfg) {
  check_tensor_dims(params, cfg);
  if (video.length() < 1) throw UsageError("video has no frames");
  if (video.frames.cols() != cfg.input_dim_video) {
    throw UsageError(fmt::format("video frame dim {} != input_dim_video {}", video.frames.cols(),
                                 cfg.input_dim_video));
  }
  const auto shape = tower_shape(cfg, Side::kVideo);
  const auto tower = tower_ref(params, Side::kVideo);

  EncodeTrace trace;
  trace.frame_rows = sample_frame_indices(video.length(), cfg.n_frames);
  trace.hidden = Matrix(cfg.n_frames, shape.hidden);
  trace.pooled.assign(shape.out, 0.0);
  std::vector<double> out(shape.out);
  for (std::size_t f = 0; f < cfg.n_frames; ++f) {
    tower_forward(tower, shape, video.frames.row(trace.frame_rows[f]), trace.hidden.row(f), out);
    for (std::size_t i = 0; i < shape.out; ++i) trace.pooled[i] += out[i];
  }
  const double n = static_cast<double>(cfg.n_frames);
  for (double& x : trace.pooled) x /= n;
  finish_trace(trace);
  return trace;
}

EncodeTrace trace_text(const ParamVector& params, std::span<const double> text,
                       const EncoderConfig& cfg) {
  check_tensor_dims(params, cfg);
  if (text.size() != cfg.input_dim_text) {
    throw UsageError(
        fmt::format("text feature dim {} != input_dim_text {}", text.size(), cfg.input_dim_text));
  }
  const auto shape = tower_shape(cfg, Side::kText);
  EncodeTrace trace;
  trace.frame_rows = {0};
  trace.hidden = Matrix(1, shape.hidden);
  trace.pooled.assign(shape.out, 0.0);
  tower_forward(tower_ref(params, Side::kText), shape, text, trace.hidden.row(0), trace.pooled);
  finish_trace(trace);
  return trace;
}

std::vector<double> encode_video(const ParamVector& params, const FrameStack& video,
                                 const EncoderConfig& cfg) {
  return trace_video(params, video, cfg).embedding;
}

std::vector<double> encode_text(const ParamVector& params, std::span<const double> text,
                                const EncoderConfig& cfg) {
  return trace_text(params, text, cfg).embedding;
}

Matrix encode_videos(const ParamVector& params, std::span<const FrameStack> videos,
                     const EncoderConfig& cfg) {
  Matrix out(videos.size(), cfg.embed_dim);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto z = encode_video(params, videos[i], cfg);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

Matrix encode_texts(const ParamVector& params, std::span<const TextFeatures> texts,
                    const EncoderConfig& cfg) {
  Matrix out(texts.size(), cfg.embed_dim);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto z = encode_text(params, texts[i], cfg);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

void backprop_video(const ParamVector& params, const FrameStack& video, const EncodeTrace& trace,
                    std::span<const double> d_embedding, const EncoderConfig& cfg,
                    ParamVector& grad) {
  const auto shape = tower_shape(cfg, Side::kVideo);
  const auto tower = tower_ref(params, Side::kVideo);
  const auto g = tower_ref(grad, Side::kVideo);
  auto d_out = normalize_backward(trace, d_embedding);
  const double n = static_cast<double>(cfg.n_frames);
  for (double& x : d_out) x /= n;
  std::vector<double> scratch;
  for (std::size_t f = 0; f < trace.frame_rows.size(); ++f) {
    tower_backward(tower, g, shape, video.frames.row(trace.frame_rows[f]), trace.hidden.row(f),
                   d_out, scratch);
  }
}

void backprop_text(const ParamVector& params, std::span<const double> text,
                   const EncodeTrace& trace, std::span<const double> d_embedding,
                   const EncoderConfig& cfg, ParamVector& grad) {
  const auto shape = tower_shape(cfg, Side::kText);
  const auto d_out = normalize_backward(trace, d_embedding);
  std::vector<double> scratch;
  tower_backward(tower_ref(params, Side::kText), tower_ref(grad, Side::kText), shape, text,
                 trace.hidden.row(0), d_out, scratch);
}

}  // namespace dfuse
