#include "dfuse/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "dfuse/errors.hpp"
#include "dfuse/fileio.hpp"

namespace dfuse {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void bytes(void* p, std::size_t n) {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(fmt::format("checkpoint truncated at byte {}", pos_));
    }
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string_view view(std::size_t n) {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(fmt::format("checkpoint truncated at byte {}", pos_));
    }
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kMaxTensors = 1024;
constexpr std::uint32_t kMaxNameLength = 256;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (layout_numel(ckpt.params.layout) != ckpt.params.size()) {
    throw CheckpointLayoutError(fmt::format("layout declares {} values but vector holds {}",
                                            layout_numel(ckpt.params.layout), ckpt.params.size()));
  }
  Writer w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u64(ckpt.enc.input_dim_video);
  w.u64(ckpt.enc.input_dim_text);
  w.u64(ckpt.enc.hidden_dim);
  w.u64(ckpt.enc.embed_dim);
  w.u64(ckpt.enc.n_frames);
  w.u64(ckpt.enc.seed);
  w.f64(ckpt.loss.sigma);
  w.f64(ckpt.loss.lambda);
  w.u8(ckpt.loss.distill_on_labeled ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(ckpt.params.layout.size()));
  for (const auto& t : ckpt.params.layout) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u64(d);
  }
  w.u64(ckpt.params.values.size());
  const auto* vbytes = reinterpret_cast<const unsigned char*>(ckpt.params.values.data());
  const std::size_t vlen = ckpt.params.values.size() * sizeof(double);
  w.bytes(vbytes, vlen);
  w.u64(ckpt.step);
  w.f64(ckpt.val_loss);
  w.u32(crc32(std::span<const unsigned char>(vbytes, vlen)));
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw CheckpointMagicError("not a checkpoint: bad magic tag");
  }
  Reader r(bytes.substr(kCheckpointMagic.size()));
  Checkpoint c;
  c.enc.input_dim_video = r.u64();
  c.enc.input_dim_text = r.u64();
  c.enc.hidden_dim = r.u64();
  c.enc.embed_dim = r.u64();
  c.enc.n_frames = r.u64();
  c.enc.seed = r.u64();
  c.loss.sigma = r.f64();
  c.loss.lambda = r.f64();
  c.loss.distill_on_labeled = r.u8() != 0;

  const std::uint32_t n_tensors = r.u32();
  if (n_tensors > kMaxTensors) {
    throw CheckpointLayoutError(fmt::format("implausible tensor count {}", n_tensors));
  }
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorSpec t;
    const std::uint32_t len = r.u32();
    if (len > kMaxNameLength) throw CheckpointLayoutError("tensor name too long");
    t.name = std::string(r.view(len));
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) throw CheckpointLayoutError(fmt::format("tensor rank {} too large", rank));
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u64());
    c.params.layout.push_back(std::move(t));
  }
  const std::uint64_t n_values = r.u64();
  if (n_values != layout_numel(c.params.layout)) {
    throw CheckpointLayoutError(fmt::format("layout declares {} values, header says {}",
                                            layout_numel(c.params.layout), n_values));
  }
  try {
    if (make_layout(c.enc) != c.params.layout) {
      throw CheckpointLayoutError("tensor layout does not match the stored encoder config");
    }
  } catch (const UsageError& e) {
    throw CheckpointLayoutError(fmt::format("invalid encoder config: {}", e.what()));
  }
  if (n_values > r.remaining() / sizeof(double)) {
    throw CheckpointError("checkpoint truncated inside the value block");
  }
  const auto vbytes = r.view(n_values * sizeof(double));
  c.params.values.resize(n_values);
  std::memcpy(c.params.values.data(), vbytes.data(), vbytes.size());
  c.step = r.u64();
  c.val_loss = r.f64();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
  const std::uint32_t actual = crc32(vbytes);
  if (stored != actual) {
    throw CheckpointChecksumError(
        fmt::format("value checksum mismatch: stored {:08x}, computed {:08x}", stored, actual));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace dfuse
