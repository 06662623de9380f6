#pragma once

// Helpers shared by the unit and acceptance suites: seeded chain generation
// and the tamper mutations used to probe validate_chain.

#include <random>
#include <string>
#include <vector>

#include "smartcity/identity.hpp"
#include "smartcity/ledger.hpp"

namespace fixtures {

using namespace smartcity;

inline std::vector<identity::KeyPair> key_pool(std::size_t n, const std::string& tag = "pool") {
  std::vector<identity::KeyPair> keys;
  for (std::size_t i = 0; i < n; ++i) keys.push_back(identity::generate_keypair(sha256(tag + std::to_string(i))));
  return keys;
}

inline std::string ride_envelope(const identity::WalletAddress& sender, std::mt19937_64& rng) {
  static const char* stops[] = {"harbour", "hospital", "stadium", "university"};
  return canonical_dump(Json{{"action", "event"},
                             {"contract_id", "transport"},
                             {"payload",
                              {{"origin_stop", stops[rng() % 4]},
                               {"destination_stop", stops[rng() % 4]},
                               {"wait_s", rng() % 900}}},
                             {"sender", sender.to_string()}});
}

/// Genesis plus `blocks` signed blocks of 1..3 transactions each.
inline ledger::Chain seeded_chain(std::uint64_t seed, std::size_t blocks,
                                  const std::vector<identity::KeyPair>& keys) {
  std::mt19937_64 rng(seed);
  ledger::Chain chain;
  std::uint64_t time = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<ledger::Transaction> txs;
    for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) {
      const auto& k = keys[rng() % keys.size()];
      time += 1 + rng() % 3;
      txs.push_back(ledger::Transaction::create(k, ride_envelope(k.address(), rng), time));
    }
    chain.append(ledger::Block::assemble(chain.size(), chain.tip().block_hash, std::move(txs),
                                         keys[rng() % keys.size()].address(), ++time));
  }
  return chain;
}

enum class Mutation { TxPayload, Signature, HeaderField, TxRemoval, RehashedRewrite };

inline constexpr Mutation kMutations[] = {Mutation::TxPayload, Mutation::Signature, Mutation::HeaderField,
                                          Mutation::TxRemoval, Mutation::RehashedRewrite};

inline const char* to_string(Mutation m) {
  switch (m) {
    case Mutation::TxPayload: return "tx-payload";
    case Mutation::Signature: return "signature";
    case Mutation::HeaderField: return "header-field";
    case Mutation::TxRemoval: return "tx-removal";
    case Mutation::RehashedRewrite: return "rehashed-rewrite";
  }
  return "?";
}

struct Mutated {
  ledger::Chain chain;
  std::size_t index = 0;
};

/// Applies `m` to a non-genesis block picked by `rng`. A rehashed rewrite
/// leaves block k self-consistent, so it can only surface at k+1; it is never
/// applied to the tip, where nothing later commits to the rewritten hash.
inline Mutated mutate(const ledger::Chain& chain, Mutation m, std::mt19937_64& rng) {
  auto blocks = chain.blocks();
  const std::size_t last = blocks.size() - 1;
  const std::size_t k = m == Mutation::RehashedRewrite ? 1 + rng() % (last - 1) : 1 + rng() % last;
  auto& block = blocks[k];
  auto& tx = block.transactions[rng() % block.transactions.size()];
  switch (m) {
    case Mutation::TxPayload: {
      const auto pos = tx.envelope.find("wait_s\":") + 8;
      tx.envelope[pos] = tx.envelope[pos] == '9' ? '8' : '9';
      break;
    }
    case Mutation::Signature:
      tx.signature[rng() % tx.signature.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
      break;
    case Mutation::HeaderField:
      block.header.logical_time += 1 + rng() % 5;
      break;
    case Mutation::TxRemoval:
      block.transactions.erase(block.transactions.begin() +
                               static_cast<std::ptrdiff_t>(rng() % block.transactions.size()));
      break;
    case Mutation::RehashedRewrite:
      block.header.proposer = identity::WalletAddress::from_public_key(
          identity::generate_keypair(sha256("intruder" + std::to_string(rng()))).public_key);
      block.block_hash = ledger::compute_block_hash(block.header);
      break;
  }
  return {ledger::Chain::from_blocks(std::move(blocks)), k};
}

}  // namespace fixtures
