#include "smartcity/store.hpp"

#include <fstream>
#include <sstream>

namespace smartcity::store {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::filesystem::path chain_path(const std::filesystem::path& store_dir) { return store_dir / "chain.jsonl"; }

ledger::Chain load_chain(const std::filesystem::path& source) {
  const auto file = std::filesystem::is_directory(source) ? chain_path(source) : source;
  std::string text;
  try {
    text = read_file(file);
  } catch (const std::exception& e) {
    throw ledger::LedgerError(ledger::LedgerErrc::MalformedRecord, e.what());
  }
  return ledger::import_jsonl(text);
}

void save_chain(const std::filesystem::path& path, const ledger::Chain& chain) {
  write_file(path, ledger::export_jsonl(chain));
}

SubmitResult submit(const std::filesystem::path& store_dir, const contracts::Registry& registry,
                    const identity::KeyPair& signer, std::uint64_t tick, std::string_view envelope_text) {
  Json env_json;
  try {
    env_json = parse_json(envelope_text);
  } catch (const CanonicalError& e) {
    throw SubmitError(std::string("envelope is not JSON: ") + e.what(), {{"", "not-json"}});
  }
  if (env_json.is_object() && !env_json.contains("sender")) env_json["sender"] = signer.address().to_string();

  contracts::ContractEnvelope env;
  try {
    env = contracts::ContractEnvelope::from_json(env_json);
  } catch (const std::invalid_argument& e) {
    throw SubmitError(e.what(), {{"", e.what()}});
  }
  if (env.sender != signer.address()) {
    throw SubmitError("envelope sender does not match the key", {{"sender", "does not match the key"}});
  }
  const std::string canonical = env.canonical();
  if (auto v = contracts::validate_envelope(registry, canonical); !v.empty()) {
    throw SubmitError("envelope violates the contract schema", std::move(v));
  }

  std::filesystem::create_directories(store_dir);
  const auto file = chain_path(store_dir);
  ledger::Chain chain = std::filesystem::exists(file) ? load_chain(file) : ledger::Chain{};
  const auto report = ledger::validate_chain(chain);
  if (!report.valid) {
    throw ledger::LedgerError(ledger::LedgerErrc::InvalidBlock,
                              "store chain is invalid at block " + std::to_string(*report.first_invalid_index));
  }

  auto replayed = contracts::replay(registry, chain);
  SubmitResult result;
  result.tx = ledger::Transaction::create(signer, canonical, tick);
  result.block_index = chain.size();
  chain.append(ledger::Block::assemble(chain.size(), chain.tip().block_hash, {result.tx}, signer.address(), tick));
  result.receipt = contracts::apply_transaction(registry, replayed.state, result.tx, result.block_index);
  save_chain(file, chain);
  return result;
}

}  // namespace smartcity::store
