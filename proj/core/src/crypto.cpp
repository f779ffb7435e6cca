#include "paisa/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/crypto.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/obj_mac.h>
#include <openssl/rand.h>

#include <fstream>
#include <sstream>

namespace paisa::crypto {
namespace {

struct BnDeleter {
  void operator()(BIGNUM* p) const { BN_clear_free(p); }
};
struct BnCtxDeleter {
  void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct PointDeleter {
  void operator()(EC_POINT* p) const { EC_POINT_clear_free(p); }
};
struct GroupDeleter {
  void operator()(EC_GROUP* p) const { EC_GROUP_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};

using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;
using PointPtr = std::unique_ptr<EC_POINT, PointDeleter>;
using GroupPtr = std::unique_ptr<EC_GROUP, GroupDeleter>;

BnPtr new_bn() {
  BnPtr bn(BN_new());
  if (!bn) throw Error("BN_new failed");
  return bn;
}

BnPtr bn_from(ByteView bytes) {
  BnPtr bn(BN_bin2bn(bytes.data(), static_cast<int>(bytes.size()), nullptr));
  if (!bn) throw Error("BN_bin2bn failed");
  return bn;
}

template <std::size_t N>
FixedBytes<N> bn_to_fixed(const BIGNUM* bn) {
  FixedBytes<N> out{};
  if (BN_bn2binpad(bn, out.data(), static_cast<int>(N)) != static_cast<int>(N)) {
    throw Error("scalar does not fit its fixed width");
  }
  return out;
}

// EC_GROUP objects are not shared across threads.
const EC_GROUP* curve() {
  thread_local GroupPtr group(EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1));
  if (!group) throw Error("prime256v1 unavailable");
  return group.get();
}

const BIGNUM* order() { return EC_GROUP_get0_order(curve()); }

bool scalar_in_range(const BIGNUM* k) {
  return !BN_is_zero(k) && !BN_is_negative(k) && BN_cmp(k, order()) < 0;
}

PointPtr point_from(const PublicKey& pk, BN_CTX* ctx) {
  FixedBytes<65> octets{};
  octets[0] = 0x04;
  std::copy(pk.bytes.begin(), pk.bytes.end(), octets.begin() + 1);
  PointPtr p(EC_POINT_new(curve()));
  if (!p) return nullptr;
  if (EC_POINT_oct2point(curve(), p.get(), octets.data(), octets.size(), ctx) != 1) return nullptr;
  if (EC_POINT_is_at_infinity(curve(), p.get()) == 1) return nullptr;
  if (EC_POINT_is_on_curve(curve(), p.get(), ctx) != 1) return nullptr;
  return p;
}

using HmacKey = FixedBytes<32>;

HmacKey hmac_sha256(const HmacKey& key, std::initializer_list<ByteView> parts) {
  Bytes msg;
  for (ByteView p : parts) msg.insert(msg.end(), p.begin(), p.end());
  HmacKey out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    throw Error("HMAC-SHA256 failed");
  }
  OPENSSL_cleanse(msg.data(), msg.size());
  return out;
}

}  // namespace

PrivateKey::~PrivateKey() { OPENSSL_cleanse(scalar_.data(), scalar_.size()); }

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error("system entropy source failed");
  }
}

DeterministicRandom::DeterministicRandom(ByteView seed) : seed_(seed.begin(), seed.end()) {}

DeterministicRandom::DeterministicRandom(std::uint64_t seed) {
  ByteWriter w;
  w.u32be(static_cast<std::uint32_t>(seed >> 32)).u32be(static_cast<std::uint32_t>(seed));
  seed_ = std::move(w).take();
}

void DeterministicRandom::fill(std::span<std::uint8_t> out) {
  for (std::uint8_t& b : out) {
    if (used_ == block_.size()) {
      ByteWriter w(seed_.size() + 8);
      w.raw(seed_).u64le(counter_++);
      block_ = sha256(w.bytes()).bytes;
      used_ = 0;
    }
    b = block_[used_++];
  }
}

DeterministicRandom DeterministicRandom::derive(std::string_view label) const {
  ByteWriter w;
  w.raw(seed_).raw(as_bytes("/derive/")).raw(as_bytes(label));
  const Digest child = sha256(w.bytes());
  return DeterministicRandom(ByteView(child.bytes));
}

Digest sha256(ByteView data) { return hash_chunked(data, data.empty() ? 1 : data.size()); }

Digest hash_chunked(ByteView data, std::size_t chunk_size) {
  if (chunk_size == 0) throw Error("chunk size must be positive");
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 init failed");
  }
  for (std::size_t off = 0; off < data.size(); off += chunk_size) {
    const std::size_t n = std::min(chunk_size, data.size() - off);
    if (EVP_DigestUpdate(ctx.get(), data.data() + off, n) != 1) throw Error("SHA-256 update failed");
  }
  Digest d;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), d.bytes.data(), &len) != 1 || len != d.bytes.size()) {
    throw Error("SHA-256 final failed");
  }
  return d;
}

PublicKey derive_public_key(const PrivateKey& sk) {
  BnPtr d = bn_from(sk.scalar());
  if (!scalar_in_range(d.get())) throw Error("private key out of range");
  BnCtxPtr ctx(BN_CTX_new());
  PointPtr q(EC_POINT_new(curve()));
  if (!ctx || !q || EC_POINT_mul(curve(), q.get(), d.get(), nullptr, nullptr, ctx.get()) != 1) {
    throw Error("scalar multiplication failed");
  }
  FixedBytes<65> octets{};
  if (EC_POINT_point2oct(curve(), q.get(), POINT_CONVERSION_UNCOMPRESSED, octets.data(),
                         octets.size(), ctx.get()) != octets.size()) {
    throw Error("point encoding failed");
  }
  PublicKey pk;
  std::copy(octets.begin() + 1, octets.end(), pk.bytes.begin());
  return pk;
}

bool is_valid_public_key(const PublicKey& pk) {
  BnCtxPtr ctx(BN_CTX_new());
  return ctx && point_from(pk, ctx.get()) != nullptr;
}

KeyPair generate_keypair(std::optional<ByteView> seed) {
  FixedBytes<layout::kPrivateKey> scalar{};
  if (seed) {
    if (seed->size() != 32) throw Error("key seed must be 32 bytes");
    for (std::uint8_t counter = 0;; ++counter) {
      ByteWriter w;
      w.raw(as_bytes("paisa-keygen")).raw(*seed).u8(counter);
      scalar = sha256(w.bytes()).bytes;
      if (scalar_in_range(bn_from(scalar).get())) break;
      if (counter == 255) throw Error("key derivation did not converge");
    }
  } else {
    SystemRandom rng;
    do {
      rng.fill(scalar);
    } while (!scalar_in_range(bn_from(scalar).get()));
  }
  KeyPair kp{PublicKey{}, PrivateKey(scalar)};
  OPENSSL_cleanse(scalar.data(), scalar.size());
  kp.public_key = derive_public_key(kp.private_key);
  return kp;
}

Signature sign(const PrivateKey& sk, const Digest& digest) {
  BnPtr d = bn_from(sk.scalar());
  if (!scalar_in_range(d.get())) throw Error("private key out of range");
  BnCtxPtr ctx(BN_CTX_new());
  if (!ctx) throw Error("BN_CTX_new failed");
  const BIGNUM* n = order();

  // bits2octets(h1): qlen == hlen == 256, so reduce once mod n.
  BnPtr e = bn_from(digest.bytes);
  BnPtr e_mod = new_bn();
  if (BN_nnmod(e_mod.get(), e.get(), n, ctx.get()) != 1) throw Error("reduction failed");
  const auto h1 = bn_to_fixed<32>(e_mod.get());
  const auto& x = sk.scalar();

  HmacKey v{};
  v.fill(0x01);
  HmacKey k{};
  const std::uint8_t zero = 0x00;
  const std::uint8_t one = 0x01;
  k = hmac_sha256(k, {v, ByteView(&zero, 1), x, h1});
  v = hmac_sha256(k, {v});
  k = hmac_sha256(k, {v, ByteView(&one, 1), x, h1});
  v = hmac_sha256(k, {v});

  PointPtr kg(EC_POINT_new(curve()));
  BnPtr kx = new_bn(), r = new_bn(), s = new_bn(), tmp = new_bn();
  for (;;) {
    v = hmac_sha256(k, {v});
    BnPtr nonce = bn_from(v);
    BN_set_flags(nonce.get(), BN_FLG_CONSTTIME);
    if (scalar_in_range(nonce.get())) {
      if (EC_POINT_mul(curve(), kg.get(), nonce.get(), nullptr, nullptr, ctx.get()) != 1 ||
          EC_POINT_get_affine_coordinates(curve(), kg.get(), kx.get(), nullptr, ctx.get()) != 1 ||
          BN_nnmod(r.get(), kx.get(), n, ctx.get()) != 1) {
        throw Error("nonce point computation failed");
      }
      if (!BN_is_zero(r.get())) {
        // s = k^-1 * (e + r*d) mod n
        BnPtr kinv(BN_mod_inverse(nullptr, nonce.get(), n, ctx.get()));
        if (!kinv || BN_mod_mul(tmp.get(), r.get(), d.get(), n, ctx.get()) != 1 ||
            BN_mod_add(tmp.get(), tmp.get(), e_mod.get(), n, ctx.get()) != 1 ||
            BN_mod_mul(s.get(), kinv.get(), tmp.get(), n, ctx.get()) != 1) {
          throw Error("signature arithmetic failed");
        }
        if (!BN_is_zero(s.get())) break;
      }
    }
    k = hmac_sha256(k, {v, ByteView(&zero, 1)});
    v = hmac_sha256(k, {v});
  }
  OPENSSL_cleanse(k.data(), k.size());
  OPENSSL_cleanse(v.data(), v.size());

  Signature sig;
  const auto rb = bn_to_fixed<32>(r.get());
  const auto sb = bn_to_fixed<32>(s.get());
  std::copy(rb.begin(), rb.end(), sig.bytes.begin());
  std::copy(sb.begin(), sb.end(), sig.bytes.begin() + 32);
  return sig;
}

bool verify(const PublicKey& pk, const Digest& digest, const Signature& sig) noexcept {
  try {
    BnCtxPtr ctx(BN_CTX_new());
    if (!ctx) return false;
    PointPtr q = point_from(pk, ctx.get());
    if (!q) return false;
    const BIGNUM* n = order();
    BnPtr r = bn_from(ByteView(sig.bytes).first(32));
    BnPtr s = bn_from(ByteView(sig.bytes).last(32));
    if (!scalar_in_range(r.get()) || !scalar_in_range(s.get())) return false;

    BnPtr e = bn_from(digest.bytes);
    BnPtr w(BN_mod_inverse(nullptr, s.get(), n, ctx.get()));
    BnPtr u1 = new_bn(), u2 = new_bn(), x = new_bn(), v = new_bn();
    if (!w || BN_nnmod(e.get(), e.get(), n, ctx.get()) != 1 ||
        BN_mod_mul(u1.get(), e.get(), w.get(), n, ctx.get()) != 1 ||
        BN_mod_mul(u2.get(), r.get(), w.get(), n, ctx.get()) != 1) {
      return false;
    }
    PointPtr point(EC_POINT_new(curve()));
    if (!point || EC_POINT_mul(curve(), point.get(), u1.get(), q.get(), u2.get(), ctx.get()) != 1) {
      return false;
    }
    if (EC_POINT_is_at_infinity(curve(), point.get()) == 1) return false;
    if (EC_POINT_get_affine_coordinates(curve(), point.get(), x.get(), nullptr, ctx.get()) != 1 ||
        BN_nnmod(v.get(), x.get(), n, ctx.get()) != 1) {
      return false;
    }
    return BN_cmp(v.get(), r.get()) == 0;
  } catch (...) {
    return false;
  }
}

Bytes canonical_concat(std::initializer_list<PreimageField> fields) {
  return canonical_concat(std::span<const PreimageField>(fields.begin(), fields.size()));
}

Bytes canonical_concat(std::span<const PreimageField> fields) {
  ByteWriter w;
  for (const PreimageField& f : fields) {
    const std::size_t declared = layout::width(f.kind);
    if (declared == 0 || f.bytes.size() != declared) {
      throw Error("field " + std::string(layout::name(f.kind)) + " has " +
                  std::to_string(f.bytes.size()) + " bytes, declared width is " +
                  std::to_string(declared));
    }
    w.raw(f.bytes);
  }
  return std::move(w).take();
}

namespace {

std::vector<std::string> read_nonempty_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open key file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, std::initializer_list<std::string> lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write key file " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("failed writing key file " + path.string());
}

}  // namespace

void write_keypair_file(const std::filesystem::path& path, const KeyPair& keys) {
  write_lines(path, {to_hex(keys.private_key.scalar()), to_hex(keys.public_key.bytes)});
  std::filesystem::permissions(path, std::filesystem::perms::owner_read |
                                         std::filesystem::perms::owner_write);
}

void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk) {
  write_lines(path, {to_hex(pk.bytes)});
}

KeyPair read_keypair_file(const std::filesystem::path& path) {
  const auto lines = read_nonempty_lines(path);
  if (lines.size() != 2) throw Error(path.string() + ": expected private and public key lines");
  KeyPair kp{PublicKey{fixed_from_hex<layout::kPublicKey>(lines[1])},
             PrivateKey(fixed_from_hex<layout::kPrivateKey>(lines[0]))};
  if (derive_public_key(kp.private_key) != kp.public_key) {
    throw Error(path.string() + ": public key does not match private key");
  }
  return kp;
}

PublicKey read_public_key_file(const std::filesystem::path& path) {
  const auto lines = read_nonempty_lines(path);
  if (lines.empty() || lines.size() > 2) throw Error(path.string() + ": malformed key file");
  PublicKey pk{fixed_from_hex<layout::kPublicKey>(lines.back())};
  if (!is_valid_public_key(pk)) throw Error(path.string() + ": not a prime256v1 point");
  return pk;
}

}  // namespace paisa::crypto
