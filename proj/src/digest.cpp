#include "qrng/digest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "qrng/error.hpp"

namespace qrng {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("SHA-256 update failed");
  }
  std::vector<std::uint8_t> finish() {
    std::vector<std::uint8_t> out(EVP_MAX_MD_SIZE);
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1) throw Error("SHA-256 final failed");
    out.resize(len);
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::vector<std::uint8_t> sha256(std::span<const std::uint8_t> data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.finish();
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

std::string sha256_hex(std::span<const std::uint8_t> data) { return to_hex(sha256(data)); }

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> expand_seed(std::uint64_t seed, std::string_view label, std::size_t nbytes) {
  std::vector<std::uint8_t> out;
  out.reserve(nbytes + 32);
  for (std::uint64_t counter = 0; out.size() < nbytes; ++counter) {
    Sha256 h;
    h.update(label.data(), label.size());
    std::uint8_t le[16];
    for (int i = 0; i < 8; ++i) {
      le[i] = static_cast<std::uint8_t>(seed >> (8 * i));
      le[8 + i] = static_cast<std::uint8_t>(counter >> (8 * i));
    }
    h.update(le, sizeof le);
    const auto block = h.finish();
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(nbytes);
  return out;
}

}  // namespace qrng

namespace qrng {

std::uint64_t derive_u64(std::uint64_t seed, std::string_view label) {
  const auto b = expand_seed(seed, label, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

}  // namespace qrng
