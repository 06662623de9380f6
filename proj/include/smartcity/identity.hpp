#pragma once

// Wallets, Ed25519 signatures and recipient-public-key encryption.
//
// Encryption is a sealed-box construction: an ephemeral X25519 key agrees a
// shared secret with the recipient's (Ed25519 -> X25519 converted) key and the
// payload is sealed with XSalsa20-Poly1305. Randomness (ephemeral key, nonce)
// comes from a RandomSource so that simulations can be replayed bit-exactly.

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "smartcity/bytes.hpp"
#include "smartcity/canonical_json.hpp"
#include "smartcity/error.hpp"

namespace smartcity::identity {

enum class IdentityErrc { MalformedSignature, AuthenticationFailure, MalformedKey, MalformedAddress };

using IdentityError = CodedError<IdentityErrc>;

using PublicKey = std::array<std::uint8_t, 32>;
using PrivateKey = std::array<std::uint8_t, 32>;  // Ed25519 seed
using Signature = std::array<std::uint8_t, 64>;

/// 20-byte pseudonym: the first 20 bytes of SHA-256(public key).
class WalletAddress {
 public:
  static constexpr std::size_t kSize = 20;

  WalletAddress() = default;
  explicit WalletAddress(const std::array<std::uint8_t, kSize>& bytes) : bytes_(bytes) {}

  static WalletAddress from_public_key(const PublicKey& pk);
  /// Accepts "0x" + 40 lowercase hex characters only.
  static WalletAddress parse(std::string_view text);
  static bool is_well_formed(std::string_view text);

  std::string to_string() const;
  const std::array<std::uint8_t, kSize>& bytes() const { return bytes_; }
  bool is_zero() const;

  auto operator<=>(const WalletAddress&) const = default;

 private:
  std::array<std::uint8_t, kSize> bytes_{};
};

struct KeyPair {
  PublicKey public_key{};
  PrivateKey private_key{};

  WalletAddress address() const { return WalletAddress::from_public_key(public_key); }
};

/// Deterministic: the same seed always yields the same key pair.
KeyPair generate_keypair(const PrivateKey& seed);
KeyPair generate_random_keypair();

/// Interprets 64 hex characters as raw seed bytes; any other text is hashed
/// with SHA-256. Lets scenarios name actors by a memorable seed string.
PrivateKey seed_from_text(std::string_view text);

Signature sign(const PrivateKey& private_key, ByteView message);

/// Throws IdentityError(MalformedSignature) when `signature` is not 64 bytes.
bool verify(const PublicKey& public_key, ByteView message, ByteView signature);

class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;
};

class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream: block i is ChaCha20 keyed by SHA-256(seed || i).
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(const std::array<std::uint8_t, 32>& seed) : seed_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::array<std::uint8_t, 32> seed_;
  std::uint64_t counter_ = 0;
};

struct CipherEnvelope {
  WalletAddress recipient;
  PublicKey ephemeral_public{};
  std::array<std::uint8_t, 24> nonce{};
  Bytes ciphertext;
  std::array<std::uint8_t, 16> tag{};

  Json to_json() const;
  static CipherEnvelope from_json(const Json& j);
};

CipherEnvelope encrypt_for(const PublicKey& recipient, ByteView plaintext, RandomSource& rng);
CipherEnvelope encrypt_for(const PublicKey& recipient, ByteView plaintext);

/// Throws IdentityError(AuthenticationFailure) for a wrong key or any
/// tampering with the envelope.
Bytes decrypt(const PrivateKey& private_key, const CipherEnvelope& envelope);

/// Key file: {"address": "0x..", "private_key": b64url, "public_key": b64url}.
Json key_file_json(const KeyPair& kp);
KeyPair keypair_from_key_file(const Json& j);

}  // namespace smartcity::identity
