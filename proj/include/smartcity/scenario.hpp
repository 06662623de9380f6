#pragma once

// Scenario files: a network configuration, an actor roster and a timeline of
// envelopes submitted by actors at given ticks.
//
//   {
//     "seed": 7,
//     "network": {"nodes": 5, "behaviors": ["honest", ...], "delay_range": [1, 5],
//                 "drop_probability": 0.1, "proposal_period": 16, "max_block_txs": 16,
//                 "heartbeat_rounds": 3, "max_ticks": 100000},
//     "actors": [{"name": "alice", "role": "citizen", "seed": "alice"}],
//     "timeline": [{"tick": 1, "actor": "alice", "node": 0, "label": "req",
//                   "envelope": {"contract_id": "service", "action": "request",
//                                "payload": {...}}}]
//   }
//
// Inside payloads, strings "@name" and "@name.public_key" resolve to an
// actor's address and hex public key, "$tx:label" to the tx_id of an earlier
// labelled entry, and an object {"$encrypt_for": "name", "plaintext": ".."}
// to a cipher envelope sealed to that actor. The envelope sender defaults to
// the submitting actor.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smartcity/contracts.hpp"
#include "smartcity/error.hpp"
#include "smartcity/identity.hpp"
#include "smartcity/ledger.hpp"
#include "smartcity/netsim.hpp"

namespace smartcity::scenario {

/// Scenario schema or reference error; what() starts with the field path.
struct ScenarioError : std::runtime_error {
  ScenarioError(const std::string& path, const std::string& message)
      : std::runtime_error(path + ": " + message), path(path) {}
  std::string path;
};

struct Actor {
  std::string name;
  std::string role;
  identity::KeyPair keys;
};

struct TimelineEntry {
  std::uint64_t tick = 0;
  std::string actor;
  netsim::NodeId node = 0;
  std::optional<std::string> label;
  Json envelope;  // unresolved, as written in the file
};

struct Scenario {
  std::uint64_t seed = 0;
  netsim::NetworkConfig network;
  std::uint64_t max_ticks = 100'000;
  std::vector<Actor> actors;
  std::vector<TimelineEntry> timeline;

  const Actor* find_actor(std::string_view name) const;

  /// Throws ScenarioError.
  static Scenario from_json(const Json& j);
  static Scenario load(const std::filesystem::path& path);
};

struct Submission {
  std::uint64_t tick = 0;
  netsim::NodeId node = 0;
  std::string actor;
  std::optional<std::string> label;
  contracts::ContractEnvelope envelope;
  ledger::Transaction tx;
};

/// Resolves placeholders, validates every envelope against the registry and
/// signs it. Throws ScenarioError naming the offending timeline field.
std::vector<Submission> compile(const Scenario& scenario, const contracts::Registry& registry);

struct RunResult {
  Json report;
  std::string chain_jsonl;   // replica of the first honest node
  std::string events_jsonl;  // full event log
  std::vector<Submission> submissions;
};

/// Runs the scenario to quiescence (or max_ticks). `seed_override` replaces
/// the scenario seed.
RunResult run(const Scenario& scenario, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Writes chain.jsonl, events.jsonl and report.json into `out_dir`.
void write_run(const RunResult& result, const std::filesystem::path& out_dir);

}  // namespace smartcity::scenario
