#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "univ/encoder.hpp"
#include "univ/error.hpp"
#include "univ/grad_check.hpp"
#include "univ/tensor_ops.hpp"

namespace univ::encoder {
namespace {

EncoderConfig tiny() {
  EncoderConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.channels = 2;
  c.depth = 2;
  c.dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.seed = 5;
  return c;
}

Tensor random_image(Rng& rng, const EncoderConfig& c) {
  Tensor img({c.channels, c.image_size, c.image_size});
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

void expect_row_stochastic(const Tensor& a, double tol) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      EXPECT_GE(a.at(i, j), 0.0);
      total += a.at(i, j);
    }
    EXPECT_NEAR(total, 1.0, tol);
  }
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c;
  c.image_size = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(EncoderConfig{}.validate());
  EXPECT_EQ(EncoderConfig{}.num_patches(), 16u);
}

TEST(InitParams, SameSeedSameBytesDifferentSeedDiffers) {
  EncoderConfig c;
  EXPECT_EQ(init_params(c), init_params(c));
  EncoderConfig d = c;
  d.seed = 1;
  EXPECT_NE(init_params(c).at("block0.qkv.weight"), init_params(d).at("block0.qkv.weight"));
}

TEST(InitParams, ParameterCountMatchesPerLayerTally) {
  EncoderConfig c;
  c.channels = 1;  // depth 2, dim 32, heads 4, mlp 4, patch 4, image 16
  const std::size_t dim = 32, hidden = 128, patch_in = 1 * 4 * 4, tokens = 16;
  const std::size_t embed = dim * patch_in + dim + tokens * dim;
  const std::size_t norm = 2 * dim;
  const std::size_t block = norm + (3 * dim * dim + 3 * dim) + (dim * dim + dim) + norm + (hidden * dim + hidden) +
                            (dim * hidden + dim);
  const std::size_t expected = embed + 2 * block + norm;
  EXPECT_EQ(expected, 26528u);
  EXPECT_EQ(parameter_count(init_params(c)), expected);
}

TEST(InitParams, LayoutAndDistribution) {
  const ParameterSet p = init_params(EncoderConfig{});
  EXPECT_EQ(p.at("embed.patch.weight").shape(), (Shape{32, 48}));
  EXPECT_EQ(p.at("embed.pos.table").shape(), (Shape{16, 32}));
  EXPECT_EQ(p.at("block1.qkv.weight").shape(), (Shape{96, 32}));
  EXPECT_EQ(p.at("block1.fc2.weight").shape(), (Shape{32, 128}));
  for (double v : p.at("block0.fc1.bias").data()) EXPECT_EQ(v, 0.0);
  for (double v : p.at("head.norm.weight").data()) EXPECT_EQ(v, 1.0);
  double sq = 0.0;
  const Tensor& w = p.at("block0.fc1.weight");
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), 0.04);
    sq += v * v;
  }
  // A normal truncated at two standard deviations keeps about 77% of the variance.
  EXPECT_NEAR(std::sqrt(sq / w.numel()), 0.02 * std::sqrt(0.774), 0.002);
  for (const auto& [name, t] : p) EXPECT_TRUE(t.requires_grad()) << name;
}

TEST(Patchify, ChannelMajorWithinEachPatch) {
  EncoderConfig c = tiny();
  Tensor img({2, 8, 8});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i);
  const Tensor rows = patchify(img, c);
  ASSERT_EQ(rows.shape(), (Shape{4, 32}));
  // Patch 1 is the top-right 4×4 block.
  EXPECT_EQ(rows.at(1, 0), img[0 * 64 + 0 * 8 + 4]);
  EXPECT_EQ(rows.at(1, 5), img[0 * 64 + 1 * 8 + 5]);
  EXPECT_EQ(rows.at(1, 16), img[1 * 64 + 0 * 8 + 4]);
  EXPECT_EQ(rows.at(2, 0), img[0 * 64 + 4 * 8 + 0]);
  EXPECT_THROW(patchify(Tensor({3, 8, 8}), c), ConfigError);
}

TEST(Encode, ZeroImageIsFiniteWithStochasticAttention) {
  const EncoderConfig c;
  const EncoderOutput out = encode(Tensor({3, 16, 16}), init_params(c), c);
  EXPECT_EQ(out.features.shape(), (Shape{16, 32}));
  EXPECT_TRUE(out.features.all_finite());
  expect_row_stochastic(out.attention_last, 1e-9);
}

TEST(Encode, Deterministic) {
  const EncoderConfig c;
  const ParameterSet p = init_params(c);
  Rng rng(3);
  const Tensor img = random_image(rng, c);
  const EncoderOutput a = encode(img, p, c);
  const EncoderOutput b = encode(img, p, c);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.attention_last, b.attention_last);
}

TEST(Encode, AttentionRowStochasticOnRandomImages) {
  const EncoderConfig c;
  const ParameterSet p = init_params(c);
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(trial);
    expect_row_stochastic(encode(random_image(rng, c), p, c).attention_last, 1e-9);
  }
}

TEST(Encode, WrongImageShapeIsConfigError) {
  const EncoderConfig c;
  EXPECT_THROW(encode(Tensor({1, 16, 16}), init_params(c), c), ConfigError);
  EXPECT_THROW(encode(Tensor({3, 8, 8}), init_params(c), c), ConfigError);
}

TEST(Encode, PatchPermutationEquivariantWithoutPositions) {
  const EncoderConfig c;
  ParameterSet p = init_params(c);
  for (auto& v : p.at("embed.pos.table").data()) v = 0.0;
  const std::size_t g = c.grid(), ps = c.patch_size, n = c.num_patches();
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(Rng::derive(44, trial));
    const Tensor img = random_image(rng, c);
    std::vector<std::size_t> perm(n);  // output patch k holds input patch perm[k]
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    Tensor moved(img.shape());
    for (std::size_t ch = 0; ch < c.channels; ++ch) {
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = perm[k];
        for (std::size_t y = 0; y < ps; ++y) {
          for (std::size_t x = 0; x < ps; ++x) {
            const std::size_t dst_px = ((k / g) * ps + y) * c.image_size + (k % g) * ps + x;
            const std::size_t src_px = ((src / g) * ps + y) * c.image_size + (src % g) * ps + x;
            moved[ch * c.image_size * c.image_size + dst_px] = img[ch * c.image_size * c.image_size + src_px];
          }
        }
      }
    }
    const EncoderOutput a = encode(img, p, c);
    const EncoderOutput b = encode(moved, p, c);
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t d = 0; d < c.dim; ++d) worst = std::max(worst, std::abs(b.features.at(k, d) - a.features.at(perm[k], d)));
      for (std::size_t l = 0; l < n; ++l) {
        worst = std::max(worst, std::abs(b.attention_last.at(k, l) - a.attention_last.at(perm[k], perm[l])));
      }
    }
    EXPECT_LT(worst, 1e-9);
  }
}

TEST(Encode, TracedAndUntracedForwardAgree) {
  const EncoderConfig c = tiny();
  const ParameterSet p = init_params(c);
  Rng rng(2);
  const Tensor img = random_image(rng, c);
  Tape tape;
  const VarMap vars = bind(tape, p);
  const TracedOutput traced = encode(tape, vars, c, img);
  const EncoderOutput plain = encode(img, p, c);
  EXPECT_EQ(traced.features.value(), plain.features);
  EXPECT_EQ(traced.attention_last, plain.attention_last);
}

TEST(Encode, GradientWithRespectToEveryParameter) {
  const EncoderConfig c = tiny();
  const ParameterSet p = init_params(c);
  Rng rng(17);
  const Tensor img = random_image(rng, c);
  const Tensor w = oracle::random_matrix(rng, c.num_patches(), c.dim);
  std::size_t checked = 0;
  for (const auto& [name, value] : p) {
    auto f = [&, name = name](Tape& tape, Var x) {
      VarMap vars = bind(tape, p);
      vars[name] = x;
      return ad::sum(ad::hadamard_const(encode(tape, vars, c, img).features, w));
    };
    GradCheckOptions opt;
    opt.max_coords = 8;
    opt.seed = checked;
    EXPECT_LT(grad_check(f, value, opt), 1e-4) << name;
    ++checked;
  }
  EXPECT_EQ(checked, p.size());
}

TEST(Freeze, ClearsTrainableFlags) {
  ParameterSet p = init_params(EncoderConfig{});
  freeze(p);
  EXPECT_EQ(trainable_parameter_count(p), 0u);
}

TEST(ReplicateChannels, TilesSinglePlane) {
  Tensor ir({1, 2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const Tensor out = replicate_channels(ir, 3);
  ASSERT_EQ(out.shape(), (Shape{3, 2, 2}));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[c * 4 + i], ir[i]);
  }
  EXPECT_THROW(replicate_channels(Tensor({2, 2, 2}), 3), DimensionError);
}

}  // namespace
}  // namespace univ::encoder
