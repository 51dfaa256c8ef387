#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "fixtures.hpp"
#include "univ/encoder.hpp"
#include "univ/error.hpp"
#include "univ/tensor_io.hpp"

namespace univ {
namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST(TensorIo, StreamRoundTripKeepsShapeAndBits) {
  Rng rng(1);
  for (const Shape& shape : {Shape{}, Shape{5}, Shape{2, 3}, Shape{3, 1, 4}}) {
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.normal() * 1e3;
    std::stringstream ss;
    write_tensor(ss, t);
    const Tensor back = read_tensor(ss);
    EXPECT_EQ(back.shape(), shape);
    EXPECT_EQ(back, t);
  }
}

TEST(TensorIo, HeaderLayout) {
  Tensor t({2}, std::vector<double>{1.0, -2.0});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u + 4u + 8u + 16u);
  EXPECT_EQ(bytes.substr(0, 8), "UNIVTNSR");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 2);
}

TEST(TensorIo, RejectsBadMagicAndTruncation) {
  std::stringstream bad("NOTATNSR\x01\x00\x00\x00");
  EXPECT_THROW(read_tensor(bad), DataError);
  std::stringstream ss;
  write_tensor(ss, Tensor({4}));
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_tensor(cut), DataError);
}

TEST(Checkpoint, RoundTripPreservesTensorsAndHeader) {
  fixture::TempDir dir("ckpt");
  const ParameterSet params = encoder::init_params(encoder::EncoderConfig{});
  save_checkpoint(dir.path() / "a.ckpt", params, {{"kind", "encoder"}, {"step", "12"}});
  const Checkpoint back = load_checkpoint(dir.path() / "a.ckpt");
  EXPECT_EQ(back.header.at("step"), "12");
  ASSERT_EQ(back.tensors.size(), params.size());
  for (const auto& [name, t] : params) EXPECT_EQ(back.tensors.at(name), t) << name;
}

TEST(Checkpoint, IdenticalParametersGiveIdenticalBytes) {
  fixture::TempDir dir("ckpt_bytes");
  const ParameterSet params = encoder::init_params(encoder::EncoderConfig{});
  save_checkpoint(dir.path() / "a.ckpt", params, {{"x", "1"}});
  save_checkpoint(dir.path() / "b.ckpt", encoder::init_params(encoder::EncoderConfig{}), {{"x", "1"}});
  EXPECT_EQ(file_bytes(dir.path() / "a.ckpt"), file_bytes(dir.path() / "b.ckpt"));
}

TEST(Checkpoint, BadMagicAndMissingFile) {
  fixture::TempDir dir("ckpt_bad");
  std::ofstream(dir.path() / "x.ckpt", std::ios::binary) << "UNIVXXXX";
  EXPECT_THROW(load_checkpoint(dir.path() / "x.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), DataError);
}

}  // namespace
}  // namespace univ
