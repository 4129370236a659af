#pragma once

#include <cstddef>
#include <vector>

#include "epcl/ops.hpp"
#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"
#include "epcl/weights.hpp"

// Pre-LN transformer stack: each block computes x + MSA(LN(x)) then
// x + MLP(LN(x)), with one LayerNorm after the last block. The forward pass
// returns every intermediate sequence (input embedding plus one per block) so
// depth-wise analyses can probe any layer. layers == 0 is a degenerate
// identity stack used by shape tests; real configs have layers >= 1.

namespace epcl {

struct TransformerConfig {
  std::size_t layers = 4;
  std::size_t width = 128;
  std::size_t heads = 4;
  float mlp_ratio = 4.0f;
  float input_dropout = 0.3f;  // applied to the token sequence before block 1
};

struct BlockWeights {
  TensorF ln1_gamma, ln1_beta;
  ops::MsaParams<float> attn;
  TensorF ln2_gamma, ln2_beta;
  TensorF mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // width -> ratio*width -> width, gelu between
};

struct BackboneWeights {
  TransformerConfig cfg;
  std::vector<BlockWeights> blocks;
  TensorF final_gamma, final_beta;  // undefined when layers == 0
};

struct BackboneOutput {
  std::vector<TensorF> layer_outputs;  // length layers+1, [0] is the input embedding
  TensorF normalized;                  // final LayerNorm output; heads read this
};

// Fresh random stack (the synthetic stand-in for a converted checkpoint).
BackboneWeights init_backbone(Rng& rng, const TransformerConfig& cfg);

// Containers store backbone tensors frozen by default and carry the stack
// geometry as metadata so bind_backbone can rebuild the config.
void register_backbone(WeightContainer& c, const BackboneWeights& w, bool frozen = true);
BackboneWeights bind_backbone(const WeightContainer& c);

// Runs the stack over a (tokens x width) sequence. Training mode applies the
// input dropout; evaluation is deterministic. Width mismatch -> ConfigError.
BackboneOutput backbone_forward(const BackboneWeights& w, const TensorF& seq, Rng& rng,
                                bool training);

}  // namespace epcl
