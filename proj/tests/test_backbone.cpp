#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "epcl/backbone.hpp"
#include "epcl/errors.hpp"
#include "epcl/ops.hpp"
#include "epcl/rng.hpp"
#include "epcl/tokenize.hpp"
#include "epcl/weights.hpp"

#include "support/oracles.hpp"

using namespace epcl;
namespace o = epcl::ops;
namespace fs = std::filesystem;

namespace {

TensorF random_seq(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<float> v(n * d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return TensorF::from_data({n, d}, v);
}

bool bitwise_equal(const TensorF& a, const TensorF& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

std::vector<double> widen(const TensorF& t) {
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<double>(t.data()[i]);
  return v;
}

// Row-wise normalization in double, same epsilon as the library.
std::vector<double> layer_norm_oracle(const std::vector<double>& x, std::size_t n,
                                      std::size_t d, const std::vector<double>& gamma,
                                      const std::vector<double>& beta) {
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = x[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double rstd = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = (x[i * d + j] - mean) * rstd * gamma[j] + beta[j];
  }
  return out;
}

TransformerConfig test_config(std::size_t layers, std::size_t width, std::size_t heads) {
  TransformerConfig cfg;
  cfg.layers = layers;
  cfg.width = width;
  cfg.heads = heads;
  cfg.mlp_ratio = 4.0f;
  cfg.input_dropout = 0.0f;
  return cfg;
}

}  // namespace

TEST_CASE("zero-layer stack is the identity") {
  Rng rng(21);
  BackboneWeights w = init_backbone(rng, test_config(0, 8, 2));
  TensorF seq = random_seq(rng, 5, 8);
  BackboneOutput out = backbone_forward(w, seq, rng, false);
  CHECK(out.layer_outputs.size() == 1);
  CHECK(bitwise_equal(out.layer_outputs[0], seq));
  CHECK(bitwise_equal(out.normalized, seq));
}

TEST_CASE("zeroed output projections make every block the identity") {
  Rng rng(22);
  BackboneWeights w = init_backbone(rng, test_config(2, 8, 2));
  for (auto& b : w.blocks) {
    std::fill(b.attn.wo.data_mut().begin(), b.attn.wo.data_mut().end(), 0.0f);
    std::fill(b.mlp_w2.data_mut().begin(), b.mlp_w2.data_mut().end(), 0.0f);
  }
  TensorF seq = random_seq(rng, 6, 8);
  BackboneOutput out = backbone_forward(w, seq, rng, false);
  REQUIRE(out.layer_outputs.size() == 3);
  for (const auto& layer : out.layer_outputs) CHECK(bitwise_equal(layer, seq));
}

TEST_CASE("one-layer one-head forward matches the step-by-step oracle") {
  Rng rng(23);
  BackboneWeights w = init_backbone(rng, test_config(1, 8, 1));
  // Random norm parameters so the oracle exercises more than the defaults.
  for (auto& v : w.blocks[0].ln1_gamma.data_mut()) v = static_cast<float>(rng.uniform(0.5, 1.5));
  for (auto& v : w.blocks[0].ln2_gamma.data_mut()) v = static_cast<float>(rng.uniform(0.5, 1.5));
  for (auto& v : w.final_gamma.data_mut()) v = static_cast<float>(rng.uniform(0.5, 1.5));
  for (auto& v : w.final_beta.data_mut()) v = static_cast<float>(rng.normal(0.0, 0.1));

  const std::size_t n = 5, d = 8, h = 32;
  TensorF seq = random_seq(rng, n, d);
  BackboneOutput out = backbone_forward(w, seq, rng, false);

  const BlockWeights& b = w.blocks[0];
  std::vector<double> x = widen(seq);
  std::vector<double> normed1 =
      layer_norm_oracle(x, n, d, widen(b.ln1_gamma), widen(b.ln1_beta));
  std::vector<double> attended = testing::msa_oracle(
      normed1, n, d, widen(b.attn.wq), widen(b.attn.bq), widen(b.attn.wk), widen(b.attn.bk),
      widen(b.attn.wv), widen(b.attn.bv), widen(b.attn.wo), widen(b.attn.bo), 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += attended[i];

  std::vector<double> normed2 =
      layer_norm_oracle(x, n, d, widen(b.ln2_gamma), widen(b.ln2_beta));
  std::vector<double> w1 = widen(b.mlp_w1), b1 = widen(b.mlp_b1);
  std::vector<double> w2 = widen(b.mlp_w2), b2 = widen(b.mlp_b2);
  std::vector<double> hidden(n * h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      double s = b1[j];
      for (std::size_t p = 0; p < d; ++p) s += normed2[i * d + p] * w1[p * h + j];
      hidden[i * h + j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = b2[j];
      for (std::size_t p = 0; p < h; ++p) s += hidden[i * h + p] * w2[p * d + j];
      x[i * d + j] += s;
    }
  std::vector<double> final_out =
      layer_norm_oracle(x, n, d, widen(w.final_gamma), widen(w.final_beta));

  for (std::size_t i = 0; i < n * d; ++i) {
    CHECK(std::abs(out.layer_outputs[1].data()[i] - x[i]) <= 1e-5);
    CHECK(std::abs(out.normalized.data()[i] - final_out[i]) <= 1e-5);
  }
}

TEST_CASE("evaluation forward is bitwise deterministic") {
  Rng rng(24);
  BackboneWeights w = init_backbone(rng, test_config(2, 8, 2));
  w.cfg.input_dropout = 0.3f;  // must be ignored outside training
  TensorF seq = random_seq(rng, 7, 8);

  Rng r1(1), r2(2);  // different generator states must not matter in eval
  BackboneOutput a = backbone_forward(w, seq, r1, false);
  BackboneOutput b = backbone_forward(w, seq, r2, false);
  CHECK(bitwise_equal(a.normalized, b.normalized));
  for (std::size_t l = 0; l < a.layer_outputs.size(); ++l)
    CHECK(bitwise_equal(a.layer_outputs[l], b.layer_outputs[l]));
}

TEST_CASE("training mode drops tokens only at the entrance") {
  Rng rng(25);
  BackboneWeights w = init_backbone(rng, test_config(1, 8, 2));
  w.cfg.input_dropout = 0.5f;
  TensorF seq = random_seq(rng, 10, 8);

  Rng dropper(77);
  BackboneOutput out = backbone_forward(w, seq, dropper, true);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < out.layer_outputs[0].size(); ++i)
    if (out.layer_outputs[0].data()[i] == 0.0f) ++zeros;
  CHECK(zeros > 0);  // p=0.5 over 80 values: some must drop

  BackboneOutput eval_out = backbone_forward(w, seq, dropper, false);
  CHECK(bitwise_equal(eval_out.layer_outputs[0], seq));
}

TEST_CASE("width and head mismatches are rejected") {
  Rng rng(26);
  BackboneWeights w = init_backbone(rng, test_config(1, 8, 2));
  TensorF narrow = random_seq(rng, 4, 6);
  CHECK_THROWS_WITH_AS(backbone_forward(w, narrow, rng, false), doctest::Contains("width"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(init_backbone(rng, test_config(1, 8, 3)),
                       doctest::Contains("divisible"), ConfigError);
}

TEST_CASE("layer outputs cover the input plus every block") {
  Rng rng(27);
  BackboneWeights w = init_backbone(rng, test_config(3, 8, 2));
  TensorF seq = random_seq(rng, 4, 8);
  BackboneOutput out = backbone_forward(w, seq, rng, false);
  CHECK(out.layer_outputs.size() == 4);
}

TEST_CASE("registered stack survives save/load/bind bitwise") {
  Rng rng(28);
  BackboneWeights w = init_backbone(rng, test_config(2, 8, 2));
  WeightContainer c;
  register_backbone(c, w);
  CHECK(c.width == 8);
  CHECK(c.layers == 2);

  fs::path p = fs::temp_directory_path() / "epcl_backbone_roundtrip.bin";
  save_weights(c, p.string());
  WeightContainer loaded = load_weights(p.string());
  for (const auto& name : loaded.names()) {
    INFO("tensor ", name);
    CHECK(loaded.is_frozen(name));
  }

  BackboneWeights w2 = bind_backbone(loaded);
  TensorF seq = random_seq(rng, 5, 8);
  Rng r1(1), r2(1);
  CHECK(bitwise_equal(backbone_forward(w, seq, r1, false).normalized,
                      backbone_forward(w2, seq, r2, false).normalized));
}

TEST_CASE("frozen backbone blocks gradients while the tokenizer learns") {
  Rng rng(29);
  WeightContainer c;
  register_point_tokenizer(c, init_point_tokenizer(rng, 8, 1));
  register_backbone(c, init_backbone(rng, test_config(2, 8, 2)));

  PointTokenizerWeights tok = bind_point_tokenizer(c);
  BackboneWeights bb = bind_backbone(c);

  PointCloud cloud;
  cloud.xyz.resize(16 * 3);
  for (auto& v : cloud.xyz) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  TokenSequence seq = tokenize_points(tok, cloud, 4, 3);
  BackboneOutput out = backbone_forward(bb, seq.combined(), rng, false);
  o::sum_all(out.normalized).backward();

  CHECK(c.get("tokenizer.point.mlp1.w").has_grad());
  CHECK(c.get("tokenizer.cls").has_grad());
  CHECK(c.get("task_token.fc.w").has_grad());
  for (const auto& name : c.names()) {
    if (name.rfind("backbone.", 0) != 0) continue;
    INFO("tensor ", name);
    CHECK_FALSE(c.get(name).has_grad());
  }
}
