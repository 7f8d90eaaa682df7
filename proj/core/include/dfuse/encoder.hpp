#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfuse/tensor.hpp"

namespace dfuse {

struct EncoderConfig {
  std::size_t input_dim_video = 32;
  std::size_t input_dim_text = 32;
  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 16;
  std::size_t n_frames = 4;  // frames sampled per video before mean-pooling
  std::uint64_t seed = 0;    // parameter initialization

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t numel() const;
  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

using Layout = std::vector<TensorSpec>;

// Fixed tensor order: video.w1, video.b1, video.w2, video.b2, then the same
// four for the text tower. Weights are [out, in] row-major.
Layout make_layout(const EncoderConfig& cfg);
std::size_t layout_numel(const Layout& layout);

// Every encoder weight, flattened in layout order. Teacher, student, fused
// models and gradients all share this representation.
struct ParamVector {
  std::vector<double> values;
  Layout layout;

  static ParamVector zeros(Layout layout);
  static ParamVector zeros_like(const ParamVector& other) { return zeros(other.layout); }

  std::size_t size() const noexcept { return values.size(); }
  bool same_layout(const ParamVector& other) const { return layout == other.layout; }

  std::size_t offset_of(std::string_view name) const;
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  // Throws UsageError if the layout does not account for every value.
  void validate() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Deterministic: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per tensor,
// where a bias uses the fan-in of the weight preceding it.
ParamVector init_params(const EncoderConfig& cfg);

// T x input_dim_video frame features for one clip.
struct FrameStack {
  Matrix frames;

  std::size_t length() const noexcept { return frames.rows(); }
};

using TextFeatures = std::vector<double>;

struct EmbeddingBatch {
  Matrix z_v;
  Matrix z_t;

  std::size_t size() const noexcept { return z_v.rows(); }
  void validate() const;
};

// TSN-style uniform sampling: index_i = floor((i + 0.5) * T / N).
// For T < N the same formula yields repeated indices.
std::vector<std::size_t> sample_frame_indices(std::size_t num_frames, std::size_t num_samples);

// Sampled frames -> tower -> mean-pool -> L2 normalize.
std::vector<double> encode_video(const ParamVector& params, const FrameStack& video,
                                 const EncoderConfig& cfg);
std::vector<double> encode_text(const ParamVector& params, std::span<const double> text,
                                const EncoderConfig& cfg);

Matrix encode_videos(const ParamVector& params, std::span<const FrameStack> videos,
                     const EncoderConfig& cfg);
Matrix encode_texts(const ParamVector& params, std::span<const TextFeatures> texts,
                    const EncoderConfig& cfg);

// Forward intermediates retained for backpropagation.
struct EncodeTrace {
  std::vector<std::size_t> frame_rows;  // rows of the input feeding each tower pass
  Matrix hidden;                        // one tanh activation row per tower pass
  std::vector<double> pooled;           // pre-normalization output
  double norm = 0.0;
  std::vector<double> embedding;
};

EncodeTrace trace_video(const ParamVector& params, const FrameStack& video,
                        const EncoderConfig& cfg);
EncodeTrace trace_text(const ParamVector& params, std::span<const double> text,
                       const EncoderConfig& cfg);

// Accumulate d(loss)/d(params) into grad given d(loss)/d(embedding).
void backprop_video(const ParamVector& params, const FrameStack& video, const EncodeTrace& trace,
                    std::span<const double> d_embedding, const EncoderConfig& cfg,
                    ParamVector& grad);
void backprop_text(const ParamVector& params, std::span<const double> text,
                   const EncodeTrace& trace, std::span<const double> d_embedding,
                   const EncoderConfig& cfg, ParamVector& grad);

}  // namespace dfuse
