#pragma once

#include <filesystem>
#include <functional>
#include <initializer_list>
#include <memory>
#include <mutex>
#include <optional>

#include "paisa/bytes.hpp"
#include "paisa/layout.hpp"

// ECDSA over prime256v1 with SHA-256, fixed-width encodings throughout.
namespace paisa::crypto {

struct Digest {
  FixedBytes<layout::kDigest> bytes{};
  friend bool operator==(const Digest&, const Digest&) = default;
};

/// Uncompressed curve point without the 0x04 prefix: X || Y, 32 bytes each.
struct PublicKey {
  FixedBytes<layout::kPublicKey> bytes{};
  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

/// Raw r || s, big-endian, 32 bytes each.
struct Signature {
  FixedBytes<layout::kSignature> bytes{};
  friend bool operator==(const Signature&, const Signature&) = default;
};

/// 32-byte big-endian scalar. Wiped on destruction and never formatted implicitly.
class PrivateKey {
 public:
  PrivateKey() = default;
  explicit PrivateKey(const FixedBytes<layout::kPrivateKey>& scalar) : scalar_(scalar) {}
  PrivateKey(const PrivateKey&) = default;
  PrivateKey& operator=(const PrivateKey&) = default;
  ~PrivateKey();

  [[nodiscard]] const FixedBytes<layout::kPrivateKey>& scalar() const { return scalar_; }
  friend bool operator==(const PrivateKey&, const PrivateKey&) = default;

 private:
  FixedBytes<layout::kPrivateKey> scalar_{};
};

struct KeyPair {
  PublicKey public_key;
  PrivateKey private_key;
};

/// Source of random bytes. Implementations must be safe to call from one thread
/// at a time; SystemRandom is additionally thread-safe.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  template <std::size_t N>
  FixedBytes<N> bytes() {
    FixedBytes<N> out{};
    fill(out);
    return out;
  }
};

/// OpenSSL CSPRNG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Counter-mode SHA-256 stream keyed by a seed. Reproducible across platforms;
/// used for simulations and seeded demos.
class DeterministicRandom final : public RandomSource {
 public:
  explicit DeterministicRandom(ByteView seed);
  explicit DeterministicRandom(std::uint64_t seed);
  void fill(std::span<std::uint8_t> out) override;

  /// Independent child stream, e.g. one per simulated party.
  DeterministicRandom derive(std::string_view label) const;

 private:
  Bytes seed_;
  std::uint64_t counter_ = 0;
  FixedBytes<32> block_{};
  std::size_t used_ = 32;
};

Digest sha256(ByteView data);

/// SHA-256 of `data`, fed to the hash in `chunk_size`-byte updates.
Digest hash_chunked(ByteView data, std::size_t chunk_size);

/// Seeded mode derives the scalar from the 32-byte seed deterministically;
/// unseeded mode draws from the system CSPRNG.
KeyPair generate_keypair(std::optional<ByteView> seed = std::nullopt);

/// Throws Error if the scalar is zero or not below the curve order.
PublicKey derive_public_key(const PrivateKey& sk);

bool is_valid_public_key(const PublicKey& pk);

/// Deterministic ECDSA (RFC 6979 nonce, SHA-256 HMAC-DRBG) with low-s
/// normalisation left off, so output matches standard vectors.
Signature sign(const PrivateKey& sk, const Digest& digest);

/// Never throws; malformed keys or signatures verify as false.
bool verify(const PublicKey& pk, const Digest& digest, const Signature& sig) noexcept;

/// One fixed-width field of a hash preimage.
struct PreimageField {
  layout::Field kind;
  ByteView bytes;
};

/// Concatenates fields in order after checking each against its declared width.
/// Throws Error on a width mismatch.
Bytes canonical_concat(std::initializer_list<PreimageField> fields);
Bytes canonical_concat(std::span<const PreimageField> fields);

// Key files: line 1 = private scalar hex (optional), line 2 = public point hex.
void write_keypair_file(const std::filesystem::path& path, const KeyPair& keys);
void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk);
KeyPair read_keypair_file(const std::filesystem::path& path);
/// Accepts either a keypair file or a public-only file.
PublicKey read_public_key_file(const std::filesystem::path& path);

}  // namespace paisa::crypto
