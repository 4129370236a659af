#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epcl/tensor.hpp"

// Named-tensor archive with a frozen/trainable partition and a bit-exact
// binary file format. Entries keep insertion order; iteration, serialization
// and hashing all follow it, which is what makes training runs reproducible.
//
// File format (little-endian): 8-byte magic "EPCLWGT1", u32 version, u32
// tensor count, then per tensor: u16 name length + UTF-8 name, u8 frozen,
// u8 dtype (0 = float32), u8 rank, rank u32 dims, zero padding to the next
// 64-byte file offset, raw float32 payload. Metadata (source tag, backbone
// geometry) rides along as synthetic trailing "meta.*" tensors and is folded
// back into fields on load.

namespace epcl {

class WeightContainer {
 public:
  void add(const std::string& name, TensorF t, bool frozen = false);
  bool contains(const std::string& name) const;
  TensorF get(const std::string& name) const;  // throws std::out_of_range
  bool is_frozen(const std::string& name) const;
  void set_frozen(const std::string& name, bool frozen);
  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }

  // Free-form provenance tag plus the backbone geometry the tensors encode;
  // zero width means "not recorded".
  std::string source_tag;
  std::uint32_t width = 0;
  std::uint32_t layers = 0;
  std::uint32_t heads = 0;
  float mlp_ratio = 0.0f;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::size_t> index_;
  std::vector<TensorF> tensors_;
  std::vector<bool> frozen_;
};

void save_weights(const WeightContainer& c, const std::string& path);
WeightContainer load_weights(const std::string& path);  // DataError on bad files

enum class FreezePolicy { frozen_backbone, full_finetune, all_frozen };

// Accepts the CLI spellings "frozen-backbone", "full-finetune", "all-frozen".
FreezePolicy parse_freeze_policy(const std::string& s);
const char* freeze_policy_name(FreezePolicy p);

// Applies the policy: under frozen_backbone every "backbone.*" tensor is
// frozen and everything else trainable; full_finetune unfreezes the backbone
// too; all_frozen freezes everything. requires_grad mirrors the frozen flag.
void freeze_partition(WeightContainer& c, FreezePolicy policy);

std::string sha256_hex(const unsigned char* data, std::size_t n);

// Per-tensor content hashes, optionally restricted to a name prefix.
std::map<std::string, std::string> tensor_hashes(const WeightContainer& c,
                                                 const std::string& prefix = "");

}  // namespace epcl
