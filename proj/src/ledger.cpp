#include "smartcity/ledger.hpp"

#include <algorithm>

namespace smartcity::ledger {

namespace {

Json envelope_json(const std::string& envelope) { return parse_json(envelope); }

template <typename T>
T field(const Json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw LedgerError(LedgerErrc::MalformedRecord, std::string("field '") + name + "': " + e.what());
  }
}

Digest digest_field(const Json& j, const char* name) {
  try {
    return digest_from_hex(field<std::string>(j, name));
  } catch (const std::invalid_argument& e) {
    throw LedgerError(LedgerErrc::MalformedRecord, std::string("field '") + name + "': " + e.what());
  }
}

WalletAddress address_field(const Json& j, const char* name) {
  try {
    return WalletAddress::parse(field<std::string>(j, name));
  } catch (const identity::IdentityError& e) {
    throw LedgerError(LedgerErrc::MalformedRecord, std::string("field '") + name + "': " + e.what());
  }
}

}  // namespace

Transaction Transaction::create(const identity::KeyPair& signer, std::string canonical_envelope,
                                std::uint64_t logical_time) {
  Transaction tx;
  tx.sender = signer.address();
  tx.public_key = signer.public_key;
  tx.envelope = std::move(canonical_envelope);
  tx.logical_time = logical_time;
  const std::string bytes = tx.signing_bytes();
  tx.tx_id = sha256(bytes);
  const auto sig = identity::sign(signer.private_key, as_bytes(bytes));
  tx.signature.assign(sig.begin(), sig.end());
  return tx;
}

std::string Transaction::signing_bytes() const {
  // Keys are already in sorted order and the envelope is canonical, so this
  // concatenation is the canonical serialization of the three fields.
  std::string out;
  out.reserve(envelope.size() + 96);
  out += "{\"envelope\":";
  out += envelope;
  out += ",\"logical_time\":";
  out += std::to_string(logical_time);
  out += ",\"sender\":\"";
  out += sender.to_string();
  out += "\"}";
  return out;
}

bool Transaction::signature_valid() const {
  if (WalletAddress::from_public_key(public_key) != sender) return false;
  if (signature.size() != 64) return false;
  return identity::verify(public_key, as_bytes(signing_bytes()), signature);
}

Json Transaction::to_json() const {
  return Json{{"envelope", envelope_json(envelope)},
              {"logical_time", logical_time},
              {"public_key", to_hex(public_key)},
              {"sender", sender.to_string()},
              {"signature", to_hex(signature)},
              {"tx_id", to_hex(tx_id)}};
}

Transaction Transaction::from_json(const Json& j) {
  Transaction tx;
  try {
    tx.envelope = canonical_dump(j.at("envelope"));
    tx.public_key = fixed_from_hex<32>(field<std::string>(j, "public_key"));
    tx.signature = from_hex(field<std::string>(j, "signature"));
  } catch (const LedgerError&) {
    throw;
  } catch (const std::exception& e) {
    throw LedgerError(LedgerErrc::MalformedRecord, std::string("transaction: ") + e.what());
  }
  tx.tx_id = digest_field(j, "tx_id");
  tx.sender = address_field(j, "sender");
  tx.logical_time = field<std::uint64_t>(j, "logical_time");
  return tx;
}

std::string header_bytes(const BlockHeader& h) {
  return canonical_dump(Json{{"index", h.index},
                             {"logical_time", h.logical_time},
                             {"prev_hash", to_hex(h.prev_hash)},
                             {"proposer", h.proposer.to_string()},
                             {"tx_root", to_hex(h.tx_root)}});
}

Digest compute_block_hash(const BlockHeader& header) { return sha256(header_bytes(header)); }

Digest compute_tx_root(std::span<const Digest> tx_ids) {
  Bytes concat;
  concat.reserve(tx_ids.size() * 32);
  for (const auto& id : tx_ids) concat.insert(concat.end(), id.begin(), id.end());
  return sha256(ByteView{concat});
}

Block Block::assemble(std::uint64_t index, const Digest& prev_hash,
                      std::vector<Transaction> transactions, const WalletAddress& proposer,
                      std::uint64_t logical_time) {
  Block b;
  b.header.index = index;
  b.header.prev_hash = prev_hash;
  b.header.proposer = proposer;
  b.header.logical_time = logical_time;
  std::vector<Digest> ids;
  ids.reserve(transactions.size());
  for (const auto& tx : transactions) ids.push_back(tx.tx_id);
  b.header.tx_root = compute_tx_root(ids);
  b.transactions = std::move(transactions);
  b.block_hash = compute_block_hash(b.header);
  return b;
}

Json Block::to_json() const {
  Json txs = Json::array();
  for (const auto& tx : transactions) txs.push_back(tx.to_json());
  return Json{{"block_hash", to_hex(block_hash)},
              {"index", header.index},
              {"logical_time", header.logical_time},
              {"prev_hash", to_hex(header.prev_hash)},
              {"proposer", header.proposer.to_string()},
              {"transactions", std::move(txs)},
              {"tx_root", to_hex(header.tx_root)}};
}

Block Block::from_json(const Json& j) {
  Block b;
  b.header.index = field<std::uint64_t>(j, "index");
  b.header.logical_time = field<std::uint64_t>(j, "logical_time");
  b.header.prev_hash = digest_field(j, "prev_hash");
  b.header.proposer = address_field(j, "proposer");
  b.header.tx_root = digest_field(j, "tx_root");
  b.block_hash = digest_field(j, "block_hash");
  const auto& txs = j.at("transactions");
  if (!txs.is_array()) throw LedgerError(LedgerErrc::MalformedRecord, "transactions must be an array");
  for (const auto& tx : txs) b.transactions.push_back(Transaction::from_json(tx));
  return b;
}

Block genesis_block() {
  return Block::assemble(0, Digest{}, {}, WalletAddress{}, 0);
}

std::string_view to_string(InvalidReason reason) {
  switch (reason) {
    case InvalidReason::HashMismatch: return "hash-mismatch";
    case InvalidReason::LinkBroken: return "link-broken";
    case InvalidReason::BadSignature: return "bad-signature";
    case InvalidReason::BadTxRoot: return "bad-tx-root";
    case InvalidReason::BadGenesis: return "bad-genesis";
  }
  return "unknown";
}

Json ValidationReport::to_json() const {
  Json j{{"valid", valid}};
  j["first_invalid_index"] = first_invalid_index ? Json(*first_invalid_index) : Json(nullptr);
  j["reason"] = reason ? Json(std::string(ledger::to_string(*reason))) : Json(nullptr);
  return j;
}

std::optional<InvalidReason> check_block_contents(const Block& block) {
  if (compute_block_hash(block.header) != block.block_hash) return InvalidReason::HashMismatch;

  std::vector<Digest> ids;
  ids.reserve(block.transactions.size());
  for (const auto& tx : block.transactions) {
    const Digest id = tx.content_digest();
    if (id != tx.tx_id) return InvalidReason::BadTxRoot;
    ids.push_back(id);
  }
  if (compute_tx_root(ids) != block.header.tx_root) return InvalidReason::BadTxRoot;

  for (const auto& tx : block.transactions) {
    if (!tx.signature_valid()) return InvalidReason::BadSignature;
  }
  return std::nullopt;
}

Chain::Chain() { blocks_.push_back(genesis_block()); }

Chain Chain::from_blocks(std::vector<Block> blocks) {
  Chain c;
  c.blocks_ = std::move(blocks);
  return c;
}

void Chain::append(Block block) {
  if (block.header.index != blocks_.size()) {
    throw LedgerError(LedgerErrc::IndexMismatch,
                      "block index " + std::to_string(block.header.index) + " but chain length is " +
                          std::to_string(blocks_.size()));
  }
  if (blocks_.empty() || block.header.prev_hash != tip().block_hash) {
    throw LedgerError(LedgerErrc::LinkMismatch, "prev_hash does not match the tip block hash");
  }
  if (const auto bad = check_block_contents(block)) {
    throw LedgerError(LedgerErrc::InvalidBlock,
                      "invalid block (" + std::string(to_string(*bad)) + ")");
  }
  blocks_.push_back(std::move(block));
}

ValidationReport validate_chain(const Chain& chain) {
  auto fail = [](std::uint64_t index, InvalidReason reason) {
    return ValidationReport{false, index, reason};
  };
  const auto& blocks = chain.blocks();
  if (blocks.empty() || !(blocks.front() == genesis_block())) {
    return fail(0, InvalidReason::BadGenesis);
  }
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    const Block& b = blocks[k];
    if (compute_block_hash(b.header) != b.block_hash) return fail(k, InvalidReason::HashMismatch);
    if (b.header.index != k || b.header.prev_hash != blocks[k - 1].block_hash) {
      return fail(k, InvalidReason::LinkBroken);
    }
    if (const auto bad = check_block_contents(b)) return fail(k, *bad);
  }
  return ValidationReport{};
}

Json Provenance::to_json() const {
  return Json{{"block_index", block_index},
              {"position", position},
              {"sender", sender.to_string()},
              {"logical_time", logical_time}};
}

Provenance trace_transaction(const Chain& chain, const Digest& tx_id) {
  for (const auto& block : chain.blocks()) {
    const auto& txs = block.transactions;
    const auto it = std::find_if(txs.begin(), txs.end(),
                                 [&](const Transaction& tx) { return tx.tx_id == tx_id; });
    if (it != txs.end()) {
      return Provenance{block.header.index, static_cast<std::size_t>(it - txs.begin()), it->sender,
                        it->logical_time};
    }
  }
  throw LedgerError(LedgerErrc::NotFound, "transaction " + to_hex(tx_id) + " not found");
}

std::string export_jsonl(const Chain& chain) {
  std::string out;
  for (const auto& block : chain.blocks()) {
    out += canonical_dump(block.to_json());
    out += '\n';
  }
  return out;
}

Chain import_jsonl(std::string_view text) {
  std::vector<Block> blocks;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) {
      throw LedgerError(LedgerErrc::MalformedRecord, "line " + std::to_string(line_no) + ": empty line");
    }
    try {
      blocks.push_back(Block::from_json(parse_canonical(line)));
    } catch (const LedgerError& e) {
      throw LedgerError(LedgerErrc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw LedgerError(LedgerErrc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (blocks.empty()) throw LedgerError(LedgerErrc::MalformedRecord, "chain file is empty");
  return Chain::from_blocks(std::move(blocks));
}

}  // namespace smartcity::ledger
