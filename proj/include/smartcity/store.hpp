#pragma once

// Flat-file persistence for chains. A store is a directory holding a single
// chain.jsonl; the CLI appends one single-transaction block per submission.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smartcity/contracts.hpp"
#include "smartcity/identity.hpp"
#include "smartcity/ledger.hpp"

namespace smartcity::store {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// A directory is read as <dir>/chain.jsonl, anything else as a chain file.
/// Throws ledger::LedgerError(MalformedRecord) on unreadable input.
ledger::Chain load_chain(const std::filesystem::path& source);
void save_chain(const std::filesystem::path& path, const ledger::Chain& chain);

std::filesystem::path chain_path(const std::filesystem::path& store_dir);

/// Thrown when the submitted envelope fails canonicalization or schema checks.
struct SubmitError : std::runtime_error {
  SubmitError(const std::string& what, std::vector<contracts::Violation> v)
      : std::runtime_error(what), violations(std::move(v)) {}
  std::vector<contracts::Violation> violations;
};

struct SubmitResult {
  ledger::Transaction tx;
  std::uint64_t block_index = 0;
  contracts::Receipt receipt;
};

/// Canonicalizes `envelope_text` (any key order or whitespace), fills the
/// sender from `signer` when absent, signs it at `tick` and appends it as a
/// one-transaction block proposed by the signer. Creates the store if needed.
SubmitResult submit(const std::filesystem::path& store_dir, const contracts::Registry& registry,
                    const identity::KeyPair& signer, std::uint64_t tick, std::string_view envelope_text);

}  // namespace smartcity::store
