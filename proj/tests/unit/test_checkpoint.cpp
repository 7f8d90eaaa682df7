#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "dfuse/checkpoint.hpp"
#include "dfuse/errors.hpp"
#include "dfuse/fileio.hpp"

using namespace dfuse;

namespace {

Checkpoint sample() {
  EncoderConfig e;
  e.input_dim_video = 3;
  e.input_dim_text = 4;
  e.hidden_dim = 5;
  e.embed_dim = 2;
  e.n_frames = 2;
  e.seed = 77;
  return {e, LossConfig{0.05, 0.999, true}, init_params(e), 1234, 0.625};
}

}  // namespace

TEST(Checkpoint, RoundTripBitExact) {
  const auto c = sample();
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 8), "DFCK0001");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "dfuse_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", sample());
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, FlippedValueByteIsChecksumError) {
  auto bytes = encode_checkpoint(sample());
  bytes[bytes.size() - 4 - 16 - 3] ^= 0x01;  // inside the last value
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointChecksumError);
}

TEST(Checkpoint, BadMagic) {
  auto bytes = encode_checkpoint(sample());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointMagicError);
  EXPECT_THROW(decode_checkpoint("DF"), CheckpointMagicError);
}

TEST(Checkpoint, LayoutValueCountMismatch) {
  auto c = sample();
  c.params.values.pop_back();
  // The encoder refuses to write an inconsistent vector, so corrupt the count field.
  EXPECT_THROW(encode_checkpoint(c), CheckpointLayoutError);
  auto good = sample();
  auto bytes = encode_checkpoint(good);
  const std::size_t n = good.params.size();
  const std::size_t count_off = bytes.size() - 4 - 16 - 8 * n - 8;
  std::uint64_t wrong = n - 1;
  std::memcpy(bytes.data() + count_off, &wrong, 8);
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointLayoutError);
}

TEST(Checkpoint, TruncatedAndTrailingBytes) {
  const auto bytes = encode_checkpoint(sample());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointError);
}

TEST(Fileio, Crc32KnownVector) {
  EXPECT_EQ(crc32(std::string_view("123456789")), 0xCBF43926u);
}
