#include "epcl/weights.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "epcl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight archives are little-endian; big-endian hosts need byte swaps");

namespace epcl {

namespace {

constexpr char kMagic[8] = {'E', 'P', 'C', 'L', 'W', 'G', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kAlign = 64;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::size_t kMaxRank = 8;

// Metadata rides as synthetic trailing tensors so the file stays a plain
// tensor table. Reserved prefix; add() rejects user tensors under it.
const std::string kMetaPrefix = "meta.";
const std::string kMetaSourceTag = "meta.source_tag";
const std::string kMetaConfig = "meta.config";

struct Writer {
  std::ofstream f;
  std::uint64_t off = 0;

  void bytes(const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    off += n;
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void pad_to(std::size_t align) {
    static const char zeros[kAlign] = {};
    std::size_t rem = off % align;
    if (rem != 0) bytes(zeros, align - rem);
  }
};

struct Reader {
  std::vector<char> buf;
  std::size_t off = 0;
  std::string context;  // tensor name for truncation diagnostics

  void need(std::size_t n) {
    if (off + n > buf.size())
      throw DataError("weight archive truncated while reading " +
                      (context.empty() ? std::string("the header") : "tensor '" + context + "'"));
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + off, n);
    off += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    bytes(&v, 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  void skip_to(std::size_t align) {
    std::size_t rem = off % align;
    if (rem != 0) {
      need(align - rem);
      off += align - rem;
    }
  }
};

void write_tensor(Writer& w, const std::string& name, const TensorF& t, bool frozen) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(frozen ? 1 : 0);
  w.u8(kDtypeF32);
  const auto& shape = t.shape();
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
  w.pad_to(kAlign);
  w.bytes(t.data().data(), t.size() * sizeof(float));
}

}  // namespace

void WeightContainer::add(const std::string& name, TensorF t, bool frozen) {
  if (name.empty() || name.size() > 0xffff)
    throw std::invalid_argument("weight name must be 1..65535 bytes");
  if (name.rfind(kMetaPrefix, 0) == 0)
    throw std::invalid_argument("weight name prefix 'meta.' is reserved: " + name);
  if (!t.defined()) throw std::invalid_argument("weight '" + name + "' is undefined");
  if (t.rank() > kMaxRank)
    throw std::invalid_argument("weight '" + name + "' exceeds max rank");
  if (index_.count(name)) throw std::invalid_argument("duplicate weight name: " + name);
  t.set_requires_grad(!frozen);
  index_[name] = order_.size();
  order_.push_back(name);
  tensors_.push_back(std::move(t));
  frozen_.push_back(frozen);
}

bool WeightContainer::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

TensorF WeightContainer::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no weight named '" + name + "'");
  return tensors_[it->second];
}

bool WeightContainer::is_frozen(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no weight named '" + name + "'");
  return frozen_[it->second];
}

void WeightContainer::set_frozen(const std::string& name, bool frozen) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no weight named '" + name + "'");
  frozen_[it->second] = frozen;
  tensors_[it->second].set_requires_grad(!frozen);
}

void save_weights(const WeightContainer& c, const std::string& path) {
  Writer w;
  w.f.open(path, std::ios::binary | std::ios::trunc);
  if (!w.f) throw DataError("cannot open '" + path + "' for writing");

  std::uint32_t count = static_cast<std::uint32_t>(c.count());
  bool with_tag = !c.source_tag.empty();
  bool with_config = c.width != 0;
  count += (with_tag ? 1 : 0) + (with_config ? 1 : 0);

  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(count);
  for (const auto& name : c.names()) write_tensor(w, name, c.get(name), c.is_frozen(name));

  if (with_tag) {
    std::vector<float> bytes_as_f32(c.source_tag.size());
    for (std::size_t i = 0; i < c.source_tag.size(); ++i)
      bytes_as_f32[i] = static_cast<float>(static_cast<unsigned char>(c.source_tag[i]));
    write_tensor(w, kMetaSourceTag,
                 TensorF::from_data({bytes_as_f32.size()}, bytes_as_f32), true);
  }
  if (with_config) {
    std::vector<float> cfg = {static_cast<float>(c.width), static_cast<float>(c.layers),
                              static_cast<float>(c.heads), c.mlp_ratio};
    write_tensor(w, kMetaConfig, TensorF::from_data({cfg.size()}, cfg), true);
  }
  w.f.flush();
  if (!w.f) throw DataError("write to '" + path + "' failed");
}

WeightContainer load_weights(const std::string& path) {
  Reader r;
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open weight archive '" + path + "'");
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }

  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("'" + path + "' is not a weight archive (bad magic)");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("unsupported weight archive version " + std::to_string(version));
  std::uint32_t count = r.u32();

  WeightContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.context.clear();
    std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    r.context = name;
    if (name.empty()) throw DataError("weight archive holds an unnamed tensor");

    std::uint8_t frozen = r.u8();
    std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF32)
      throw DataError("tensor '" + name + "' has unsupported dtype code " +
                      std::to_string(dtype));
    std::uint8_t rank = r.u8();
    if (rank == 0 || rank > kMaxRank)
      throw DataError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      std::uint32_t dim = r.u32();
      if (dim == 0) throw DataError("tensor '" + name + "' has a zero dimension");
      shape[d] = dim;
      if (numel > r.buf.size() / dim)
        throw DataError("tensor '" + name + "' payload exceeds the file size");
      numel *= dim;
    }
    r.skip_to(kAlign);
    std::vector<float> payload(numel);
    r.bytes(payload.data(), numel * sizeof(float));

    if (name == kMetaSourceTag) {
      c.source_tag.assign(payload.size(), '\0');
      for (std::size_t j = 0; j < payload.size(); ++j)
        c.source_tag[j] = static_cast<char>(static_cast<unsigned char>(payload[j]));
    } else if (name == kMetaConfig) {
      if (payload.size() != 4) throw DataError("tensor 'meta.config' must hold 4 values");
      c.width = static_cast<std::uint32_t>(payload[0]);
      c.layers = static_cast<std::uint32_t>(payload[1]);
      c.heads = static_cast<std::uint32_t>(payload[2]);
      c.mlp_ratio = payload[3];
    } else {
      if (c.contains(name)) throw DataError("duplicate tensor '" + name + "' in archive");
      c.add(name, TensorF::from_data(shape, payload), frozen != 0);
    }
  }

  // Declared backbone width must match the normalization parameters; those
  // are always exactly one width wide, unlike the rectangular projections.
  if (c.width != 0) {
    for (const auto& name : c.names()) {
      bool is_norm = name.size() > 6 && (name.rfind(".gamma") == name.size() - 6 ||
                                         name.rfind(".beta") == name.size() - 5);
      if (name.rfind("backbone.", 0) == 0 && is_norm && c.get(name).size() != c.width)
        throw DataError("tensor '" + name + "' has " + std::to_string(c.get(name).size()) +
                        " values but the archive declares width " + std::to_string(c.width));
    }
  }
  return c;
}

FreezePolicy parse_freeze_policy(const std::string& s) {
  if (s == "frozen-backbone") return FreezePolicy::frozen_backbone;
  if (s == "full-finetune") return FreezePolicy::full_finetune;
  if (s == "all-frozen") return FreezePolicy::all_frozen;
  throw std::invalid_argument(
      "unknown freeze policy '" + s +
      "' (expected frozen-backbone, full-finetune, or all-frozen)");
}

const char* freeze_policy_name(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::frozen_backbone: return "frozen-backbone";
    case FreezePolicy::full_finetune: return "full-finetune";
    case FreezePolicy::all_frozen: return "all-frozen";
  }
  return "?";
}

void freeze_partition(WeightContainer& c, FreezePolicy policy) {
  for (const auto& name : c.names()) {
    bool frozen;
    switch (policy) {
      case FreezePolicy::frozen_backbone: frozen = name.rfind("backbone.", 0) == 0; break;
      case FreezePolicy::full_finetune: frozen = false; break;
      case FreezePolicy::all_frozen: frozen = true; break;
      default: throw std::invalid_argument("unknown freeze policy");
    }
    c.set_frozen(name, frozen);
  }
}

std::string sha256_hex(const unsigned char* data, std::size_t n) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data, n) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

std::map<std::string, std::string> tensor_hashes(const WeightContainer& c,
                                                 const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (const auto& name : c.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    TensorF t = c.get(name);
    out[name] = sha256_hex(reinterpret_cast<const unsigned char*>(t.data().data()),
                           t.size() * sizeof(float));
  }
  return out;
}

}  // namespace epcl
