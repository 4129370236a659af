#include "epcl/backbone.hpp"

#include <string>

#include "epcl/errors.hpp"
#include "epcl/param_init.hpp"

namespace epcl {

namespace o = ops;

namespace {

std::size_t mlp_hidden(const TransformerConfig& cfg) {
  auto hidden = static_cast<std::size_t>(cfg.mlp_ratio * static_cast<float>(cfg.width) + 0.5f);
  if (hidden == 0) throw ConfigError("MLP expansion ratio yields an empty hidden layer");
  return hidden;
}

void check_config(const TransformerConfig& cfg) {
  if (cfg.width == 0) throw ConfigError("backbone width must be positive");
  if (cfg.layers > 0 && (cfg.heads == 0 || cfg.width % cfg.heads != 0))
    throw ConfigError("backbone width " + std::to_string(cfg.width) +
                      " not divisible by " + std::to_string(cfg.heads) + " heads");
}

std::string block_prefix(std::size_t i) { return "backbone.block" + std::to_string(i) + "."; }

}  // namespace

BackboneWeights init_backbone(Rng& rng, const TransformerConfig& cfg) {
  check_config(cfg);
  std::size_t d = cfg.width;
  std::size_t h = cfg.layers > 0 ? mlp_hidden(cfg) : 0;

  BackboneWeights w;
  w.cfg = cfg;
  w.blocks.resize(cfg.layers);
  for (auto& b : w.blocks) {
    b.ln1_gamma = TensorF::full({d}, 1.0f);
    b.ln1_beta = TensorF::zeros({d});
    b.attn.wq = normal_matrix(rng, d, d, 0.02);
    b.attn.bq = TensorF::zeros({d});
    b.attn.wk = normal_matrix(rng, d, d, 0.02);
    b.attn.bk = TensorF::zeros({d});
    b.attn.wv = normal_matrix(rng, d, d, 0.02);
    b.attn.bv = TensorF::zeros({d});
    b.attn.wo = normal_matrix(rng, d, d, 0.02);
    b.attn.bo = TensorF::zeros({d});
    b.ln2_gamma = TensorF::full({d}, 1.0f);
    b.ln2_beta = TensorF::zeros({d});
    b.mlp_w1 = normal_matrix(rng, d, h, 0.02);
    b.mlp_b1 = TensorF::zeros({h});
    b.mlp_w2 = normal_matrix(rng, h, d, 0.02);
    b.mlp_b2 = TensorF::zeros({d});
  }
  if (cfg.layers > 0) {
    w.final_gamma = TensorF::full({d}, 1.0f);
    w.final_beta = TensorF::zeros({d});
  }
  return w;
}

void register_backbone(WeightContainer& c, const BackboneWeights& w, bool frozen) {
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const BlockWeights& b = w.blocks[i];
    std::string p = block_prefix(i);
    c.add(p + "ln1.gamma", b.ln1_gamma, frozen);
    c.add(p + "ln1.beta", b.ln1_beta, frozen);
    c.add(p + "attn.wq", b.attn.wq, frozen);
    c.add(p + "attn.bq", b.attn.bq, frozen);
    c.add(p + "attn.wk", b.attn.wk, frozen);
    c.add(p + "attn.bk", b.attn.bk, frozen);
    c.add(p + "attn.wv", b.attn.wv, frozen);
    c.add(p + "attn.bv", b.attn.bv, frozen);
    c.add(p + "attn.wo", b.attn.wo, frozen);
    c.add(p + "attn.bo", b.attn.bo, frozen);
    c.add(p + "ln2.gamma", b.ln2_gamma, frozen);
    c.add(p + "ln2.beta", b.ln2_beta, frozen);
    c.add(p + "mlp.w1", b.mlp_w1, frozen);
    c.add(p + "mlp.b1", b.mlp_b1, frozen);
    c.add(p + "mlp.w2", b.mlp_w2, frozen);
    c.add(p + "mlp.b2", b.mlp_b2, frozen);
  }
  if (w.blocks.size() > 0) {
    c.add("backbone.ln_f.gamma", w.final_gamma, frozen);
    c.add("backbone.ln_f.beta", w.final_beta, frozen);
  }
  c.width = static_cast<std::uint32_t>(w.cfg.width);
  c.layers = static_cast<std::uint32_t>(w.cfg.layers);
  c.heads = static_cast<std::uint32_t>(w.cfg.heads);
  c.mlp_ratio = w.cfg.mlp_ratio;
}

BackboneWeights bind_backbone(const WeightContainer& c) {
  if (c.width == 0)
    throw DataError("weight archive lacks backbone geometry metadata");
  BackboneWeights w;
  w.cfg.width = c.width;
  w.cfg.layers = c.layers;
  w.cfg.heads = c.heads;
  w.cfg.mlp_ratio = c.mlp_ratio;
  check_config(w.cfg);

  w.blocks.resize(w.cfg.layers);
  for (std::size_t i = 0; i < w.cfg.layers; ++i) {
    BlockWeights& b = w.blocks[i];
    std::string p = block_prefix(i);
    b.ln1_gamma = c.get(p + "ln1.gamma");
    b.ln1_beta = c.get(p + "ln1.beta");
    b.attn.wq = c.get(p + "attn.wq");
    b.attn.bq = c.get(p + "attn.bq");
    b.attn.wk = c.get(p + "attn.wk");
    b.attn.bk = c.get(p + "attn.bk");
    b.attn.wv = c.get(p + "attn.wv");
    b.attn.bv = c.get(p + "attn.bv");
    b.attn.wo = c.get(p + "attn.wo");
    b.attn.bo = c.get(p + "attn.bo");
    b.ln2_gamma = c.get(p + "ln2.gamma");
    b.ln2_beta = c.get(p + "ln2.beta");
    b.mlp_w1 = c.get(p + "mlp.w1");
    b.mlp_b1 = c.get(p + "mlp.b1");
    b.mlp_w2 = c.get(p + "mlp.w2");
    b.mlp_b2 = c.get(p + "mlp.b2");
  }
  if (w.cfg.layers > 0) {
    w.final_gamma = c.get("backbone.ln_f.gamma");
    w.final_beta = c.get("backbone.ln_f.beta");
  }
  return w;
}

BackboneOutput backbone_forward(const BackboneWeights& w, const TensorF& seq, Rng& rng,
                                bool training) {
  check_config(w.cfg);
  if (seq.rank() != 2 || seq.cols() != w.cfg.width)
    throw ConfigError("backbone expects width " + std::to_string(w.cfg.width) +
                      ", token sequence has width " + std::to_string(seq.cols()));

  BackboneOutput out;
  TensorF x = o::dropout(seq, w.cfg.input_dropout, rng, training);
  out.layer_outputs.reserve(w.blocks.size() + 1);
  out.layer_outputs.push_back(x);

  for (const BlockWeights& b : w.blocks) {
    TensorF attended =
        o::multi_head_self_attention(o::layer_norm(x, b.ln1_gamma, b.ln1_beta), b.attn,
                                     w.cfg.heads);
    x = o::add(x, attended);
    TensorF normed = o::layer_norm(x, b.ln2_gamma, b.ln2_beta);
    TensorF expanded = o::gelu(o::add_rowvec(o::matmul(normed, b.mlp_w1), b.mlp_b1));
    TensorF squeezed = o::add_rowvec(o::matmul(expanded, b.mlp_w2), b.mlp_b2);
    x = o::add(x, squeezed);
    out.layer_outputs.push_back(x);
  }

  out.normalized = w.blocks.empty() ? x : o::layer_norm(x, w.final_gamma, w.final_beta);
  return out;
}

}  // namespace epcl
