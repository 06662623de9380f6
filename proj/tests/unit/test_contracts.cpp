#include <doctest.h>

#include "smartcity/contracts.hpp"

using namespace smartcity;
using namespace smartcity::contracts;

namespace {

identity::KeyPair user() { return identity::generate_keypair(identity::seed_from_text("user")); }

FieldRule integer(std::int64_t lo, std::int64_t hi) {
  FieldRule r;
  r.type = FieldType::Integer;
  r.min = lo;
  r.max = hi;
  return r;
}

// A tally contract: "add" increments a counter, refusing to pass a cap.
ContractDescriptor tally_contract() {
  ContractDescriptor d;
  d.contract_id = "tally";
  d.initial_state = Json{{"total", 0}};
  d.actions["add"] = ActionSpec{object_rule({{"amount", integer(1, 100)}}),
                                [](Json& state, const ContractEnvelope& env, const ExecutionContext&) {
                                  const auto next = state["total"].get<std::int64_t>() +
                                                    env.payload["amount"].get<std::int64_t>();
                                  if (next > 150) return Outcome::reject("cap-exceeded");
                                  state["total"] = next;
                                  return Outcome::accept(Json::array({Json{{"total", next}}}));
                                }};
  FieldRule no_args = object_rule({});
  d.views["total"] = ViewSpec{no_args, [](const Json& state, const Json&) { return state["total"]; }};
  return d;
}

Registry tally_registry() {
  Registry r;
  r.register_contract(tally_contract());
  return r;
}

ContractEnvelope add(std::int64_t amount) {
  return ContractEnvelope{"tally", "add", Json{{"amount", amount}}, user().address()};
}

}  // namespace

TEST_CASE("registry refuses duplicate contract ids") {
  Registry r = tally_registry();
  try {
    r.register_contract(tally_contract());
    FAIL("expected a throw");
  } catch (const ContractError& e) {
    CHECK(e.code() == ContractErrc::DuplicateContract);
  }
  CHECK(r.contract_ids() == std::vector<std::string>{"tally"});
}

TEST_CASE("schema checks report every violation with its path") {
  FieldRule rule = object_rule({{"n", integer(0, 10)},
                                {"who", FieldRule{.format = StringFormat::WalletAddress}},
                                {"tags", FieldRule{.type = FieldType::Array, .max_length = 2,
                                                   .items = {FieldRule{.one_of = {"a", "b"}}}}}});
  std::vector<Violation> out;
  check_value(Json{{"n", 11}, {"tags", {"a", "c", "b"}}, {"extra", true}}, rule, "payload", out);
  const std::vector<Violation> expected = {
      {"payload.extra", "unexpected field"},
      {"payload.n", "must be <= 10"},
      {"payload.who", "missing required field"},
      {"payload.tags", "more than 2 items"},
      {"payload.tags[1]", "not one of the allowed values"},
  };
  CHECK(out.size() == expected.size());
  for (const auto& v : expected) {
    CAPTURE(v.path);
    CHECK(std::find(out.begin(), out.end(), v) != out.end());
  }
}

TEST_CASE("envelope parsing requires exactly the four fields") {
  const auto good = add(5).to_json();
  CHECK(ContractEnvelope::from_json(good).canonical() == canonical_dump(good));
  Json extra = good;
  extra["nonce"] = 1;
  CHECK_THROWS_AS(ContractEnvelope::from_json(extra), std::invalid_argument);
  Json missing = good;
  missing.erase("payload");
  CHECK_THROWS_AS(ContractEnvelope::from_json(missing), std::invalid_argument);
  Json bad_sender = good;
  bad_sender["sender"] = "alice";
  CHECK_THROWS_AS(ContractEnvelope::from_json(bad_sender), std::invalid_argument);
}

TEST_CASE("validate_envelope on raw bytes classifies encoding problems") {
  const Registry r = tally_registry();
  CHECK(validate_envelope(r, add(5).canonical()).empty());
  CHECK(validate_envelope(r, "{").front().message == "not-json");
  CHECK(validate_envelope(r, R"({"b":1,"a":2})").front().message == "non-canonical");
  CHECK(validate_envelope(r, R"({"a":0.5})").front().message == "float");
  ContractEnvelope unknown = add(5);
  unknown.action = "subtract";
  CHECK(validate_envelope(r, unknown).front().path == "action");
}

TEST_CASE("apply: unknown contract throws, schema and handler failures reject") {
  const Registry r = tally_registry();
  WorldState s = WorldState::initial(r);
  ContractEnvelope env = add(5);
  env.contract_id = "nope";
  CHECK_THROWS_AS(apply(r, s, env, {}), ContractError);

  const Digest before = s.state_hash();
  const Receipt schema = apply(r, s, add(0), {});
  CHECK_FALSE(schema.accepted());
  CHECK(schema.reason.value().starts_with("schema: "));
  CHECK(s.state_hash() == before);

  CHECK(apply(r, s, add(100), {}).accepted());
  const Digest mid = s.state_hash();
  const Receipt capped = apply(r, s, add(60), {});
  CHECK(capped.reason == "cap-exceeded");
  CHECK(s.state_hash() == mid);
}

TEST_CASE("execute leaves its input untouched") {
  const Registry r = tally_registry();
  const WorldState s = WorldState::initial(r);
  const auto [next, receipt] = execute(r, s, add(7), {});
  CHECK(receipt.accepted());
  CHECK(s.contract_state("tally")["total"] == 0);
  CHECK(next.contract_state("tally")["total"] == 7);
}

TEST_CASE("apply_transaction rejects sender mismatch, unknown contracts and junk") {
  const Registry r = tally_registry();
  WorldState s = WorldState::initial(r);
  const auto other = identity::generate_keypair(identity::seed_from_text("other"));

  const auto forged = ledger::Transaction::create(other, add(5).canonical(), 1);
  CHECK(apply_transaction(r, s, forged, 1).reason == "sender-mismatch");

  ContractEnvelope env = add(5);
  env.contract_id = "ghost";
  const auto ghost = ledger::Transaction::create(user(), env.canonical(), 1);
  CHECK(apply_transaction(r, s, ghost, 1).reason == "unknown-contract");

  const auto junk = ledger::Transaction::create(user(), "[1,2]", 1);
  CHECK(apply_transaction(r, s, junk, 1).reason.value().starts_with("malformed envelope"));
  CHECK(s == WorldState::initial(r));
}

TEST_CASE("replay is deterministic and matches sequential application") {
  const Registry r = tally_registry();
  ledger::Chain chain;
  std::vector<ledger::Transaction> txs;
  for (int i = 1; i <= 6; ++i) txs.push_back(ledger::Transaction::create(user(), add(i * 10).canonical(), i));
  chain.append(ledger::Block::assemble(1, chain.tip().block_hash, {txs[0], txs[1], txs[2]}, user().address(), 4));
  chain.append(ledger::Block::assemble(2, chain.tip().block_hash, {txs[3], txs[4], txs[5]}, user().address(), 8));

  const auto a = replay(r, chain);
  const auto b = replay(r, chain);
  CHECK(a.state == b.state);
  CHECK(a.receipts == b.receipts);
  // 10+20+30+40 = 100; +50 would reach 150 (allowed); +60 exceeds the cap.
  CHECK(a.state.contract_state("tally")["total"] == 150);
  CHECK(a.receipts.back().reason == "cap-exceeded");

  WorldState manual = WorldState::initial(r);
  for (const auto& tx : txs) apply_transaction(r, manual, tx, 0);
  CHECK(manual.state_hash() == a.state.state_hash());
}

TEST_CASE("state hash is the digest of the canonical per-contract map") {
  const Registry r = tally_registry();
  const WorldState s = WorldState::initial(r);
  CHECK(s.state_hash() == sha256(R"({"tally":{"total":0}})"));
}

TEST_CASE("query dispatches to views and checks arguments") {
  const Registry r = tally_registry();
  const WorldState s = WorldState::initial(r);
  CHECK(query(r, s, Json{{"contract_id", "tally"}, {"view", "total"}}) == 0);
  auto code = [&](const Json& q) {
    try {
      query(r, s, q);
    } catch (const ContractError& e) {
      return e.code();
    }
    FAIL("expected a throw");
    return ContractErrc::ViewFailed;
  };
  CHECK(code(Json{{"contract_id", "tally"}}) == ContractErrc::MalformedQuery);
  CHECK(code(Json{{"contract_id", "x"}, {"view", "total"}}) == ContractErrc::UnknownContract);
  CHECK(code(Json{{"contract_id", "tally"}, {"view", "max"}}) == ContractErrc::UnknownView);
  CHECK(code(Json{{"contract_id", "tally"}, {"view", "total"}, {"args", {{"x", 1}}}}) ==
        ContractErrc::MalformedQuery);
}
