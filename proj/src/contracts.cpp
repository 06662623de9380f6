#include "smartcity/contracts.hpp"

#include <algorithm>

namespace smartcity::contracts {

namespace {

std::string_view type_name(FieldType t) {
  switch (t) {
    case FieldType::String: return "string";
    case FieldType::Integer: return "integer";
    case FieldType::Boolean: return "boolean";
    case FieldType::Object: return "object";
    case FieldType::Array: return "array";
  }
  return "?";
}

bool has_type(const Json& v, FieldType t) {
  switch (t) {
    case FieldType::String: return v.is_string();
    case FieldType::Integer: return v.is_number_integer();
    case FieldType::Boolean: return v.is_boolean();
    case FieldType::Object: return v.is_object();
    case FieldType::Array: return v.is_array();
  }
  return false;
}

std::string join(const std::string& base, const std::string& leaf) {
  return base.empty() ? leaf : base + "." + leaf;
}

}  // namespace

void check_value(const Json& value, const FieldRule& rule, const std::string& path,
                 std::vector<Violation>& out) {
  if (!has_type(value, rule.type)) {
    out.push_back({path, "expected " + std::string(type_name(rule.type))});
    return;
  }
  switch (rule.type) {
    case FieldType::Integer: {
      // Unsigned values above INT64_MAX are out of every range we declare.
      if (value.is_number_unsigned() && value.get<std::uint64_t>() > INT64_MAX) {
        out.push_back({path, "integer out of range"});
        return;
      }
      const auto n = value.get<std::int64_t>();
      if (rule.min && n < *rule.min) {
        out.push_back({path, "must be >= " + std::to_string(*rule.min)});
      }
      if (rule.max && n > *rule.max) {
        out.push_back({path, "must be <= " + std::to_string(*rule.max)});
      }
      break;
    }
    case FieldType::String: {
      const auto& s = value.get_ref<const std::string&>();
      if (rule.max_length && s.size() > *rule.max_length) {
        out.push_back({path, "longer than " + std::to_string(*rule.max_length)});
      }
      if (!rule.one_of.empty() &&
          std::find(rule.one_of.begin(), rule.one_of.end(), s) == rule.one_of.end()) {
        out.push_back({path, "not one of the allowed values"});
      }
      switch (rule.format) {
        case StringFormat::Any:
          break;
        case StringFormat::NonEmpty:
          if (s.empty()) out.push_back({path, "must not be empty"});
          break;
        case StringFormat::WalletAddress:
          if (!WalletAddress::is_well_formed(s)) out.push_back({path, "not a wallet address"});
          break;
        case StringFormat::DigestHex:
          if (s.size() != 64 || !std::all_of(s.begin(), s.end(), [](char c) {
                return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
              })) {
            out.push_back({path, "not a 32-byte lowercase hex digest"});
          }
          break;
      }
      break;
    }
    case FieldType::Object: {
      for (const auto& member : rule.properties) {
        const auto it = value.find(member.name);
        if (it == value.end()) {
          if (member.rule.required) out.push_back({join(path, member.name), "missing required field"});
          continue;
        }
        check_value(*it, member.rule, join(path, member.name), out);
      }
      for (const auto& [key, _] : value.items()) {
        const bool known = std::any_of(rule.properties.begin(), rule.properties.end(),
                                       [&](const NamedRule& m) { return m.name == key; });
        if (!known) out.push_back({join(path, key), "unexpected field"});
      }
      break;
    }
    case FieldType::Array: {
      if (rule.min && static_cast<std::int64_t>(value.size()) < *rule.min) {
        out.push_back({path, "fewer than " + std::to_string(*rule.min) + " items"});
      }
      if (rule.max_length && value.size() > *rule.max_length) {
        out.push_back({path, "more than " + std::to_string(*rule.max_length) + " items"});
      }
      if (!rule.items.empty()) {
        for (std::size_t i = 0; i < value.size(); ++i) {
          check_value(value[i], rule.items.front(), path + "[" + std::to_string(i) + "]", out);
        }
      }
      break;
    }
    case FieldType::Boolean:
      break;
  }
}

FieldRule object_rule(std::vector<NamedRule> members) {
  FieldRule r;
  r.type = FieldType::Object;
  r.properties = std::move(members);
  return r;
}

Json ContractEnvelope::to_json() const {
  return Json{{"action", action},
              {"contract_id", contract_id},
              {"payload", payload},
              {"sender", sender.to_string()}};
}

ContractEnvelope ContractEnvelope::from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("envelope must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "action" && key != "contract_id" && key != "payload" && key != "sender") {
      throw std::invalid_argument("unexpected envelope field '" + key + "'");
    }
  }
  auto str = [&](const char* name) {
    const auto it = j.find(name);
    if (it == j.end() || !it->is_string()) {
      throw std::invalid_argument(std::string("envelope field '") + name + "' must be a string");
    }
    return it->get<std::string>();
  };
  ContractEnvelope env;
  env.contract_id = str("contract_id");
  env.action = str("action");
  const std::string sender = str("sender");
  if (!WalletAddress::is_well_formed(sender)) {
    throw std::invalid_argument("envelope sender is not a wallet address");
  }
  env.sender = WalletAddress::parse(sender);
  const auto payload = j.find("payload");
  if (payload == j.end() || !payload->is_object()) {
    throw std::invalid_argument("envelope field 'payload' must be an object");
  }
  env.payload = *payload;
  return env;
}

Json Receipt::to_json() const {
  Json j{{"tx_id", to_hex(tx_id)},
         {"status", status == ReceiptStatus::Accepted ? "accepted" : "rejected"},
         {"events", events}};
  j["reason"] = reason ? Json(*reason) : Json(nullptr);
  return j;
}

void Registry::register_contract(ContractDescriptor descriptor) {
  const std::string id = descriptor.contract_id;
  if (contracts_.count(id) != 0) {
    throw ContractError(ContractErrc::DuplicateContract, "contract '" + id + "' already registered");
  }
  contracts_.emplace(id, std::move(descriptor));
}

const ContractDescriptor* Registry::find(std::string_view contract_id) const {
  const auto it = contracts_.find(contract_id);
  return it == contracts_.end() ? nullptr : &it->second;
}

std::vector<std::string> Registry::contract_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : contracts_) ids.push_back(id);
  return ids;
}

WorldState WorldState::initial(const Registry& registry) {
  WorldState s;
  for (const auto& id : registry.contract_ids()) {
    s.contracts_[id] = registry.find(id)->initial_state;
  }
  return s;
}

Json& WorldState::contract_state(const std::string& contract_id) {
  return contracts_.at(contract_id);
}

const Json& WorldState::contract_state(const std::string& contract_id) const {
  return contracts_.at(contract_id);
}

Json WorldState::to_json() const {
  Json j = Json::object();
  for (const auto& [id, state] : contracts_) j[id] = state;
  return j;
}

std::vector<Violation> validate_envelope(const Registry& registry, const ContractEnvelope& envelope) {
  std::vector<Violation> out;
  const ContractDescriptor* contract = registry.find(envelope.contract_id);
  if (contract == nullptr) {
    out.push_back({"contract_id", "unknown contract '" + envelope.contract_id + "'"});
    return out;
  }
  const auto action = contract->actions.find(envelope.action);
  if (action == contract->actions.end()) {
    out.push_back({"action", "unknown action '" + envelope.action + "'"});
    return out;
  }
  check_value(envelope.payload, action->second.payload, "payload", out);
  try {
    canonical_dump(envelope.payload);
  } catch (const CanonicalError&) {
    out.push_back({"payload", "floating-point numbers are not allowed"});
  }
  return out;
}

std::vector<Violation> validate_envelope(const Registry& registry, std::string_view envelope_bytes) {
  Json parsed;
  try {
    parsed = parse_canonical(envelope_bytes);
  } catch (const CanonicalError& e) {
    switch (e.code()) {
      case CanonicalErrc::NotJson: return {{"", "not-json"}};
      case CanonicalErrc::FloatingPoint: return {{"", "float"}};
      case CanonicalErrc::NotCanonical: return {{"", "non-canonical"}};
    }
  }
  ContractEnvelope env;
  try {
    env = ContractEnvelope::from_json(parsed);
  } catch (const std::invalid_argument& e) {
    return {{"", std::string("malformed envelope: ") + e.what()}};
  }
  return validate_envelope(registry, env);
}

namespace {

std::string describe(const std::vector<Violation>& violations) {
  std::string out = "schema:";
  for (const auto& v : violations) out += " " + v.path + " " + v.message + ";";
  return out;
}

}  // namespace

Receipt apply(const Registry& registry, WorldState& state, const ContractEnvelope& envelope,
              const ExecutionContext& context) {
  const ContractDescriptor* contract = registry.find(envelope.contract_id);
  if (contract == nullptr) {
    throw ContractError(ContractErrc::UnknownContract,
                        "contract '" + envelope.contract_id + "' is not registered");
  }
  Receipt receipt;
  receipt.tx_id = context.tx_id;
  if (auto violations = validate_envelope(registry, envelope); !violations.empty()) {
    receipt.status = ReceiptStatus::Rejected;
    receipt.reason = describe(violations);
    return receipt;
  }
  const ActionSpec& spec = contract->actions.at(envelope.action);
  Outcome outcome = spec.handler(state.contract_state(envelope.contract_id), envelope, context);
  if (outcome.accepted) {
    receipt.events = std::move(outcome.events);
  } else {
    receipt.status = ReceiptStatus::Rejected;
    receipt.reason = std::move(outcome.reason);
  }
  return receipt;
}

std::pair<WorldState, Receipt> execute(const Registry& registry, const WorldState& state,
                                       const ContractEnvelope& envelope,
                                       const ExecutionContext& context) {
  WorldState next = state;
  Receipt receipt = apply(registry, next, envelope, context);
  return {std::move(next), std::move(receipt)};
}

Receipt apply_transaction(const Registry& registry, WorldState& state,
                          const ledger::Transaction& tx, std::uint64_t block_index) {
  const ExecutionContext context{block_index, tx.logical_time, tx.tx_id};
  ContractEnvelope env;
  try {
    env = ContractEnvelope::from_json(parse_canonical(tx.envelope));
  } catch (const std::exception& e) {
    return Receipt{tx.tx_id, ReceiptStatus::Rejected, std::string("malformed envelope: ") + e.what(),
                   Json::array()};
  }
  if (env.sender != tx.sender) {
    return Receipt{tx.tx_id, ReceiptStatus::Rejected, std::string("sender-mismatch"), Json::array()};
  }
  // A committed transaction may name a contract this registry lacks; replay
  // records that instead of aborting.
  if (registry.find(env.contract_id) == nullptr) {
    return Receipt{tx.tx_id, ReceiptStatus::Rejected, std::string("unknown-contract"), Json::array()};
  }
  return apply(registry, state, env, context);
}

ReplayResult replay(const Registry& registry, const ledger::Chain& chain) {
  ReplayResult result{WorldState::initial(registry), {}};
  for (const auto& block : chain.blocks()) {
    for (const auto& tx : block.transactions) {
      result.receipts.push_back(apply_transaction(registry, result.state, tx, block.index()));
    }
  }
  return result;
}

Json query(const Registry& registry, const WorldState& state, const Json& q) {
  if (!q.is_object() || !q.contains("contract_id") || !q.contains("view") ||
      !q["contract_id"].is_string() || !q["view"].is_string()) {
    throw ContractError(ContractErrc::MalformedQuery,
                        "query must be {\"contract_id\": .., \"view\": .., \"args\": {..}}");
  }
  const auto contract_id = q["contract_id"].get<std::string>();
  const auto view_name = q["view"].get<std::string>();
  const ContractDescriptor* contract = registry.find(contract_id);
  if (contract == nullptr) {
    throw ContractError(ContractErrc::UnknownContract, "contract '" + contract_id + "' is not registered");
  }
  const auto view = contract->views.find(view_name);
  if (view == contract->views.end()) {
    throw ContractError(ContractErrc::UnknownView,
                        "contract '" + contract_id + "' has no view '" + view_name + "'");
  }
  const Json args = q.value("args", Json::object());
  std::vector<Violation> violations;
  check_value(args, view->second.args, "args", violations);
  if (!violations.empty()) {
    throw ContractError(ContractErrc::MalformedQuery, describe(violations));
  }
  return view->second.function(state.contract_state(contract_id), args);
}

}  // namespace smartcity::contracts
