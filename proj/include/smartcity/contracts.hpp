#pragma once

// The JSON access layer: a registry of contracts, each declaring the actions
// it accepts (with a payload schema) and the read-only views it answers.
// World state is one JSON document per contract, rebuilt by folding committed
// envelopes in chain order.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smartcity/canonical_json.hpp"
#include "smartcity/error.hpp"
#include "smartcity/identity.hpp"
#include "smartcity/ledger.hpp"

namespace smartcity::contracts {

using identity::WalletAddress;

enum class ContractErrc { DuplicateContract, UnknownContract, UnknownView, MalformedQuery, ViewFailed };

using ContractError = CodedError<ContractErrc>;

// ---------------------------------------------------------------------------
// Schemas
// ---------------------------------------------------------------------------

enum class FieldType { String, Integer, Boolean, Object, Array };
enum class StringFormat { Any, WalletAddress, DigestHex, NonEmpty };

struct NamedRule;

/// Constraint on a single JSON value. `properties` applies to objects (always
/// closed: unknown members are violations), `items` (zero or one element) to
/// every array element. `min` and `max` bound integers; on arrays `min` is the
/// least item count.
struct FieldRule {
  FieldType type = FieldType::String;
  bool required = true;
  std::optional<std::int64_t> min;
  std::optional<std::int64_t> max;
  std::optional<std::size_t> max_length;
  std::vector<std::string> one_of;
  StringFormat format = StringFormat::Any;
  std::vector<NamedRule> properties;
  std::vector<FieldRule> items;
};

struct NamedRule {
  std::string name;
  FieldRule rule;
};

struct Violation {
  std::string path;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Appends violations for `value` against `rule`; `path` is a dotted path
/// such as "payload.amount_wh".
void check_value(const Json& value, const FieldRule& rule, const std::string& path,
                 std::vector<Violation>& out);

/// Shorthand for building an object rule from named members.
FieldRule object_rule(std::vector<NamedRule> members);

// ---------------------------------------------------------------------------
// Envelopes, receipts, state
// ---------------------------------------------------------------------------

struct ContractEnvelope {
  std::string contract_id;
  std::string action;
  Json payload = Json::object();
  WalletAddress sender;

  Json to_json() const;
  /// Canonical wire bytes: {"action":..,"contract_id":..,"payload":..,"sender":..}.
  std::string canonical() const { return canonical_dump(to_json()); }
  /// Structural parse only (no schema check). Throws std::invalid_argument.
  static ContractEnvelope from_json(const Json& j);
};

struct ExecutionContext {
  std::uint64_t block_index = 0;
  std::uint64_t tick = 0;
  Digest tx_id{};
};

/// Result of one handler invocation. A rejected outcome must leave the
/// contract state untouched.
struct Outcome {
  bool accepted = true;
  std::string reason;
  Json events = Json::array();

  static Outcome accept(Json events = Json::array()) { return {true, {}, std::move(events)}; }
  static Outcome reject(std::string reason) { return {false, std::move(reason), Json::array()}; }
};

enum class ReceiptStatus { Accepted, Rejected };

struct Receipt {
  Digest tx_id{};
  ReceiptStatus status = ReceiptStatus::Accepted;
  std::optional<std::string> reason;
  Json events = Json::array();

  bool accepted() const { return status == ReceiptStatus::Accepted; }
  Json to_json() const;
  bool operator==(const Receipt&) const = default;
};

using ActionHandler =
    std::function<Outcome(Json& state, const ContractEnvelope&, const ExecutionContext&)>;
/// Views may throw ContractError(ViewFailed) for domain errors such as a
/// missing plan.
using ViewFunction = std::function<Json(const Json& state, const Json& args)>;

struct ActionSpec {
  FieldRule payload;
  ActionHandler handler;
};

struct ViewSpec {
  FieldRule args;
  ViewFunction function;
};

struct ContractDescriptor {
  std::string contract_id;
  std::map<std::string, ActionSpec> actions;
  std::map<std::string, ViewSpec> views;
  Json initial_state = Json::object();
};

class Registry {
 public:
  /// Throws ContractError(DuplicateContract).
  void register_contract(ContractDescriptor descriptor);

  const ContractDescriptor* find(std::string_view contract_id) const;
  /// Sorted.
  std::vector<std::string> contract_ids() const;

 private:
  std::map<std::string, ContractDescriptor, std::less<>> contracts_;
};

class WorldState {
 public:
  static WorldState initial(const Registry& registry);

  Json& contract_state(const std::string& contract_id);
  const Json& contract_state(const std::string& contract_id) const;

  /// {"<contract_id>": <state>, ...}
  Json to_json() const;
  Digest state_hash() const { return canonical_digest(to_json()); }

  bool operator==(const WorldState&) const = default;

 private:
  std::map<std::string, Json> contracts_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

std::vector<Violation> validate_envelope(const Registry& registry, const ContractEnvelope& envelope);
/// Wire-level check: the bytes must already be canonical, then structural
/// and schema checks as above.
std::vector<Violation> validate_envelope(const Registry& registry, std::string_view envelope_bytes);

/// Executes in place. Invalid envelopes and handler rejections yield a
/// rejected receipt and leave `state` unchanged. Throws
/// ContractError(UnknownContract) when the contract is not registered.
Receipt apply(const Registry& registry, WorldState& state, const ContractEnvelope& envelope,
              const ExecutionContext& context);

/// Pure form of apply().
std::pair<WorldState, Receipt> execute(const Registry& registry, const WorldState& state,
                                       const ContractEnvelope& envelope,
                                       const ExecutionContext& context);

/// Parses the transaction's envelope, checks it against the signer and
/// applies it. Malformed bytes, a sender mismatch and unknown contracts
/// produce a rejected receipt rather than an exception.
Receipt apply_transaction(const Registry& registry, WorldState& state,
                          const ledger::Transaction& tx, std::uint64_t block_index);

struct ReplayResult {
  WorldState state;
  std::vector<Receipt> receipts;
};

ReplayResult replay(const Registry& registry, const ledger::Chain& chain);

/// query = {"contract_id": .., "view": .., "args": {..}}.
/// Throws ContractError(UnknownContract | UnknownView | MalformedQuery | ViewFailed).
Json query(const Registry& registry, const WorldState& state, const Json& query);

}  // namespace smartcity::contracts
