#pragma once

// Append-only hash-chained ledger.
//
// Header canonical form (hashed for block_hash):
//   {"index":I,"logical_time":T,"prev_hash":"<hex>","proposer":"0x<hex>","tx_root":"<hex>"}
// tx_root = SHA-256 over the concatenated raw 32-byte tx_ids, in block order
// (SHA-256 of the empty string for an empty block).
// A transaction's tx_id is SHA-256 over
//   {"envelope":<canonical envelope>,"logical_time":T,"sender":"0x<hex>"}
// and the signature is Ed25519 over those same bytes.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcity/bytes.hpp"
#include "smartcity/canonical_json.hpp"
#include "smartcity/error.hpp"
#include "smartcity/identity.hpp"

namespace smartcity::ledger {

using identity::WalletAddress;

enum class LedgerErrc { LinkMismatch, IndexMismatch, InvalidBlock, NotFound, MalformedRecord };

using LedgerError = CodedError<LedgerErrc>;

struct Transaction {
  Digest tx_id{};
  WalletAddress sender;
  identity::PublicKey public_key{};
  std::string envelope;  // canonical JSON bytes, opaque at this layer
  Bytes signature;
  std::uint64_t logical_time = 0;

  /// Signs `canonical_envelope` as `signer` and fills every field.
  static Transaction create(const identity::KeyPair& signer, std::string canonical_envelope,
                            std::uint64_t logical_time);

  std::string signing_bytes() const;
  Digest content_digest() const { return sha256(signing_bytes()); }
  /// Sender matches the public key and the signature verifies.
  bool signature_valid() const;

  Json to_json() const;
  static Transaction from_json(const Json& j);

  bool operator==(const Transaction&) const = default;
};

struct BlockHeader {
  std::uint64_t index = 0;
  Digest prev_hash{};
  Digest tx_root{};
  WalletAddress proposer;
  std::uint64_t logical_time = 0;

  bool operator==(const BlockHeader&) const = default;
};

std::string header_bytes(const BlockHeader& header);
Digest compute_block_hash(const BlockHeader& header);
Digest compute_tx_root(std::span<const Digest> tx_ids);

struct Block {
  BlockHeader header;
  std::vector<Transaction> transactions;
  Digest block_hash{};

  /// Builds a block with tx_root and block_hash derived from the contents.
  static Block assemble(std::uint64_t index, const Digest& prev_hash,
                        std::vector<Transaction> transactions, const WalletAddress& proposer,
                        std::uint64_t logical_time);

  std::uint64_t index() const { return header.index; }

  Json to_json() const;
  static Block from_json(const Json& j);

  bool operator==(const Block&) const = default;
};

Block genesis_block();

enum class InvalidReason { HashMismatch, LinkBroken, BadSignature, BadTxRoot, BadGenesis };

std::string_view to_string(InvalidReason reason);

struct ValidationReport {
  bool valid = true;
  std::optional<std::uint64_t> first_invalid_index;
  std::optional<InvalidReason> reason;

  Json to_json() const;
};

/// Checks a block on its own: header hash, tx_root over recomputed tx ids,
/// and every transaction signature. Linkage is not checked here.
std::optional<InvalidReason> check_block_contents(const Block& block);

class Chain {
 public:
  /// Genesis-only chain.
  Chain();

  /// Wraps blocks without checking them; use validate_chain() before trusting.
  static Chain from_blocks(std::vector<Block> blocks);

  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t size() const { return blocks_.size(); }
  const Block& tip() const { return blocks_.back(); }
  const Block& at(std::size_t index) const { return blocks_.at(index); }

  /// Throws LedgerError(IndexMismatch | LinkMismatch | InvalidBlock); on
  /// error the chain is unchanged.
  void append(Block block);

  bool operator==(const Chain&) const = default;

 private:
  std::vector<Block> blocks_;
};

ValidationReport validate_chain(const Chain& chain);

struct Provenance {
  std::uint64_t block_index = 0;
  std::size_t position = 0;
  WalletAddress sender;
  std::uint64_t logical_time = 0;

  Json to_json() const;
  bool operator==(const Provenance&) const = default;
};

/// Throws LedgerError(NotFound).
Provenance trace_transaction(const Chain& chain, const Digest& tx_id);

/// One canonical block per line, each terminated by '\n'.
std::string export_jsonl(const Chain& chain);
/// Parses JSON Lines; every line must be canonical. Does not validate the
/// chain. Throws LedgerError(MalformedRecord) with the offending line number.
Chain import_jsonl(std::string_view text);

}  // namespace smartcity::ledger
