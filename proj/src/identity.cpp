#include "smartcity/identity.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

namespace smartcity::identity {

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

using SecretKey = std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES>;

SecretKey expand(const PrivateKey& seed) {
  ensure_sodium();
  PublicKey pk{};
  SecretKey sk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
  return sk;
}

template <std::size_t N>
std::array<std::uint8_t, N> fixed_from_b64(const Json& j, const char* field) {
  const Bytes raw = base64url_decode(j.at(field).get<std::string>());
  if (raw.size() != N) {
    throw IdentityError(IdentityErrc::MalformedKey, std::string("wrong length for ") + field);
  }
  std::array<std::uint8_t, N> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

}  // namespace

WalletAddress WalletAddress::from_public_key(const PublicKey& pk) {
  const Digest d = sha256(ByteView{pk.data(), pk.size()});
  std::array<std::uint8_t, kSize> bytes{};
  std::copy_n(d.begin(), kSize, bytes.begin());
  return WalletAddress(bytes);
}

bool WalletAddress::is_well_formed(std::string_view text) {
  if (text.size() != 2 + 2 * kSize || text.substr(0, 2) != "0x") return false;
  return std::all_of(text.begin() + 2, text.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

WalletAddress WalletAddress::parse(std::string_view text) {
  if (!is_well_formed(text)) {
    throw IdentityError(IdentityErrc::MalformedAddress,
                        "wallet address must be 0x followed by 40 lowercase hex digits");
  }
  return WalletAddress(fixed_from_hex<kSize>(text.substr(2)));
}

std::string WalletAddress::to_string() const { return "0x" + to_hex(bytes_); }

bool WalletAddress::is_zero() const {
  return std::all_of(bytes_.begin(), bytes_.end(), [](auto b) { return b == 0; });
}

KeyPair generate_keypair(const PrivateKey& seed) {
  ensure_sodium();
  KeyPair kp;
  SecretKey sk{};
  crypto_sign_seed_keypair(kp.public_key.data(), sk.data(), seed.data());
  sodium_memzero(sk.data(), sk.size());
  kp.private_key = seed;
  return kp;
}

KeyPair generate_random_keypair() {
  ensure_sodium();
  PrivateKey seed{};
  randombytes_buf(seed.data(), seed.size());
  return generate_keypair(seed);
}

PrivateKey seed_from_text(std::string_view text) {
  if (text.size() == 64) {
    try {
      return fixed_from_hex<32>(text);
    } catch (const std::invalid_argument&) {
      // not hex: fall through to hashing
    }
  }
  return sha256(text);
}

Signature sign(const PrivateKey& private_key, ByteView message) {
  SecretKey sk = expand(private_key);
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk.data());
  sodium_memzero(sk.data(), sk.size());
  return sig;
}

bool verify(const PublicKey& public_key, ByteView message, ByteView signature) {
  ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) {
    throw IdentityError(IdentityErrc::MalformedSignature,
                        "signature must be 64 bytes, got " + std::to_string(signature.size()));
  }
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     public_key.data()) == 0;
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  ensure_sodium();
  randombytes_buf(out.data(), out.size());
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  ensure_sodium();
  std::array<std::uint8_t, 40> material{};
  std::copy(seed_.begin(), seed_.end(), material.begin());
  for (int i = 0; i < 8; ++i) {
    material[32 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  }
  ++counter_;
  const Digest key = sha256(ByteView{material.data(), material.size()});
  randombytes_buf_deterministic(out.data(), out.size(), key.data());
}

Json CipherEnvelope::to_json() const {
  return Json{{"recipient", recipient.to_string()},
              {"ephemeral_public", base64url_encode(ephemeral_public)},
              {"nonce", base64url_encode(nonce)},
              {"ciphertext", base64url_encode(ciphertext)},
              {"tag", base64url_encode(tag)}};
}

CipherEnvelope CipherEnvelope::from_json(const Json& j) {
  try {
    CipherEnvelope env;
    env.recipient = WalletAddress::parse(j.at("recipient").get<std::string>());
    env.ephemeral_public = fixed_from_b64<32>(j, "ephemeral_public");
    env.nonce = fixed_from_b64<24>(j, "nonce");
    env.ciphertext = base64url_decode(j.at("ciphertext").get<std::string>());
    env.tag = fixed_from_b64<16>(j, "tag");
    return env;
  } catch (const IdentityError&) {
    throw;
  } catch (const std::exception& e) {
    throw IdentityError(IdentityErrc::MalformedKey, std::string("malformed cipher envelope: ") + e.what());
  }
}

CipherEnvelope encrypt_for(const PublicKey& recipient, ByteView plaintext, RandomSource& rng) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> recipient_x{};
  if (crypto_sign_ed25519_pk_to_curve25519(recipient_x.data(), recipient.data()) != 0) {
    throw IdentityError(IdentityErrc::MalformedKey, "recipient public key is not a valid Ed25519 point");
  }

  std::array<std::uint8_t, crypto_box_SEEDBYTES> eph_seed{};
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> eph_secret{};
  CipherEnvelope env;
  env.recipient = WalletAddress::from_public_key(recipient);
  rng.fill(eph_seed);
  rng.fill(env.nonce);
  crypto_box_seed_keypair(env.ephemeral_public.data(), eph_secret.data(), eph_seed.data());

  env.ciphertext.resize(plaintext.size());
  const int rc = crypto_box_detached(env.ciphertext.data(), env.tag.data(), plaintext.data(),
                                     plaintext.size(), env.nonce.data(), recipient_x.data(),
                                     eph_secret.data());
  sodium_memzero(eph_secret.data(), eph_secret.size());
  sodium_memzero(eph_seed.data(), eph_seed.size());
  if (rc != 0) {
    throw IdentityError(IdentityErrc::MalformedKey, "key agreement with recipient failed");
  }
  return env;
}

CipherEnvelope encrypt_for(const PublicKey& recipient, ByteView plaintext) {
  SystemRandom rng;
  return encrypt_for(recipient, plaintext, rng);
}

Bytes decrypt(const PrivateKey& private_key, const CipherEnvelope& envelope) {
  SecretKey sk = expand(private_key);
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> own_x{};
  crypto_sign_ed25519_sk_to_curve25519(own_x.data(), sk.data());
  sodium_memzero(sk.data(), sk.size());

  Bytes plain(envelope.ciphertext.size());
  const int rc = crypto_box_open_detached(plain.data(), envelope.ciphertext.data(),
                                          envelope.tag.data(), envelope.ciphertext.size(),
                                          envelope.nonce.data(), envelope.ephemeral_public.data(),
                                          own_x.data());
  sodium_memzero(own_x.data(), own_x.size());
  if (rc != 0) {
    throw IdentityError(IdentityErrc::AuthenticationFailure,
                        "cipher envelope failed authentication for this key");
  }
  return plain;
}

Json key_file_json(const KeyPair& kp) {
  return Json{{"address", kp.address().to_string()},
              {"public_key", base64url_encode(kp.public_key)},
              {"private_key", base64url_encode(kp.private_key)}};
}

KeyPair keypair_from_key_file(const Json& j) {
  try {
    const auto seed = fixed_from_b64<32>(j, "private_key");
    KeyPair kp = generate_keypair(seed);
    if (j.contains("public_key") && fixed_from_b64<32>(j, "public_key") != kp.public_key) {
      throw IdentityError(IdentityErrc::MalformedKey, "public key does not match private key");
    }
    if (j.contains("address") && j.at("address").get<std::string>() != kp.address().to_string()) {
      throw IdentityError(IdentityErrc::MalformedKey, "address does not match the key");
    }
    return kp;
  } catch (const IdentityError&) {
    throw;
  } catch (const std::exception& e) {
    throw IdentityError(IdentityErrc::MalformedKey, std::string("malformed key file: ") + e.what());
  }
}

}  // namespace smartcity::identity
