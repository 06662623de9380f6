#include "smartcity/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <iterator>
#include <optional>

#include "smartcity/contracts.hpp"
#include "smartcity/ledger.hpp"
#include "smartcity/scenario.hpp"
#include "smartcity/store.hpp"
#include "smartcity/workflows.hpp"

namespace smartcity::cli {

namespace {

// Carries an exit code and a machine-readable reason up to run().
struct Failure {
  int code;
  std::string reason;
  std::string message;
};

[[noreturn]] void fail(int code, std::string reason, std::string message) {
  throw Failure{code, std::move(reason), std::move(message)};
}

void emit(std::ostream& out, const Json& j) { out << canonical_dump(j) << '\n'; }

ledger::Chain load_any(const std::string& path) {
  try {
    return store::load_chain(path);
  } catch (const ledger::LedgerError& e) {
    fail(kExitDomain, "malformed-chain", e.what());
  }
}

// Chains read by the query commands must validate first.
ledger::Chain load_valid(const std::string& path) {
  ledger::Chain chain = load_any(path);
  const auto report = ledger::validate_chain(chain);
  if (!report.valid) {
    fail(kExitDomain, std::string(ledger::to_string(*report.reason)),
         "chain is invalid at block " + std::to_string(*report.first_invalid_index));
  }
  return chain;
}

contracts::WorldState replay_state(const contracts::Registry& registry, const ledger::Chain& chain) {
  return contracts::replay(registry, chain).state;
}

Json query_or_fail(const contracts::Registry& registry, const contracts::WorldState& state, const Json& q) {
  try {
    return contracts::query(registry, state, q);
  } catch (const contracts::ContractError& e) {
    if (e.code() == contracts::ContractErrc::ViewFailed) fail(kExitDomain, e.what(), e.what());
    fail(kExitUsage, "malformed-query", e.what());
  }
}

Json parse_arg_json(const std::string& text, const std::string& what) {
  std::string body = text;
  if (!body.empty() && body.front() == '@') {
    try {
      body = store::read_file(body.substr(1));
    } catch (const std::exception& e) {
      fail(kExitUsage, "unreadable-input", e.what());
    }
  }
  try {
    return parse_json(body);
  } catch (const CanonicalError& e) {
    fail(kExitUsage, "not-json", what + ": " + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smart-city ledger toolkit: scenario runs, chain validation, tracing and audits.", "smartcity"};
  app.require_subcommand(1);
  std::string format = "json";
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json"}));

  std::function<void()> action;

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Derive a key pair from a seed and print the key file");
  std::string key_seed;
  std::string key_out;
  keygen->add_option("--seed", key_seed, "Seed text (64 hex characters are used verbatim)")->required();
  keygen->add_option("--out", key_out, "Write the key file here instead of standard output");
  keygen->callback([&] {
    action = [&] {
      const auto kp = identity::generate_keypair(identity::seed_from_text(key_seed));
      const Json file = identity::key_file_json(kp);
      if (key_out.empty()) {
        emit(out, file);
      } else {
        store::write_file(key_out, canonical_dump(file) + "\n");
        emit(out, Json{{"address", kp.address().to_string()}, {"public_key", to_hex(kp.public_key)}});
      }
    };
  });

  // run
  auto* run_cmd = app.add_subcommand("run", "Run a scenario to quiescence and write its artifacts");
  std::string scenario_path;
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  run_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run_cmd->add_option("--out", run_out, "Output directory for chain.jsonl, events.jsonl, report.json")->required();
  run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  run_cmd->callback([&] {
    action = [&] {
      scenario::Scenario s;
      scenario::RunResult result;
      try {
        s = scenario::Scenario::load(scenario_path);
        result = scenario::run(s, run_seed);
      } catch (const scenario::ScenarioError& e) {
        fail(kExitUsage, "scenario-invalid", e.what());
      }
      scenario::write_run(result, run_out);
      emit(out, result.report);
    };
  });

  // validate
  auto* validate = app.add_subcommand("validate", "Validate a chain file or store");
  std::string validate_path;
  validate->add_option("chain", validate_path, "Chain JSON Lines file or store directory")->required();
  validate->callback([&] {
    action = [&] {
      const auto report = ledger::validate_chain(load_any(validate_path));
      emit(out, report.to_json());
      if (!report.valid) throw Failure{kExitDomain, "", ""};
    };
  });

  // trace
  auto* trace = app.add_subcommand("trace", "Locate a transaction in a chain");
  std::string trace_path;
  std::string trace_id;
  trace->add_option("chain", trace_path, "Chain file or store")->required();
  trace->add_option("tx_id", trace_id, "Transaction id (64 hex characters)")->required();
  trace->callback([&] {
    action = [&] {
      const auto chain = load_valid(trace_path);
      Digest id;
      try {
        id = digest_from_hex(trace_id);
      } catch (const std::invalid_argument& e) {
        fail(kExitUsage, "malformed-tx-id", e.what());
      }
      try {
        Json j = ledger::trace_transaction(chain, id).to_json();
        j["tx_id"] = to_hex(id);
        emit(out, j);
      } catch (const ledger::LedgerError&) {
        fail(kExitDomain, "not-found", "transaction " + trace_id + " is not in the chain");
      }
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Aggregate transport statistics from a chain");
  std::string stats_path;
  workflows::TransportFilter filter;
  stats->add_option("chain", stats_path, "Chain file or store")->required();
  stats->add_option("--origin", filter.origin_stop, "Only events from this origin stop");
  stats->add_option("--destination", filter.destination_stop, "Only events to this destination stop");
  stats->add_option("--from-tick", filter.from_tick, "Only events at or after this tick");
  stats->add_option("--to-tick", filter.to_tick, "Only events at or before this tick");
  stats->callback([&] {
    action = [&] {
      const auto registry = workflows::civic_registry();
      const auto state = replay_state(registry, load_valid(stats_path));
      emit(out, workflows::transport_stats(state, filter).to_json());
    };
  });

  // audit-path
  auto* audit = app.add_subcommand("audit-path", "Audit a vehicle's notarized checkpoints against its plan");
  std::string audit_path;
  std::string vehicle;
  audit->add_option("chain", audit_path, "Chain file or store")->required();
  audit->add_option("vehicle", vehicle, "Vehicle wallet address")->required();
  audit->callback([&] {
    action = [&] {
      const auto registry = workflows::civic_registry();
      const auto state = replay_state(registry, load_valid(audit_path));
      emit(out, query_or_fail(registry, state,
                              Json{{"contract_id", "path"}, {"view", "audit"}, {"args", {{"vehicle", vehicle}}}}));
    };
  });

  // export
  auto* export_cmd = app.add_subcommand("export", "Write a chain as canonical JSON Lines");
  std::string export_path;
  std::string export_out;
  export_cmd->add_option("chain", export_path, "Chain file or store")->required();
  export_cmd->add_option("--out", export_out, "Destination file (default: standard output)");
  export_cmd->callback([&] {
    action = [&] {
      const std::string text = ledger::export_jsonl(load_any(export_path));
      if (export_out.empty()) {
        out << text;
      } else {
        store::write_file(export_out, text);
      }
    };
  });

  // import
  auto* import_cmd = app.add_subcommand("import", "Validate a chain export and install it into a store");
  std::string import_path;
  std::string import_out;
  import_cmd->add_option("chain", import_path, "Chain JSON Lines file")->required();
  import_cmd->add_option("--out", import_out, "Store directory")->required();
  import_cmd->callback([&] {
    action = [&] {
      const auto chain = load_valid(import_path);
      std::filesystem::create_directories(import_out);
      store::save_chain(store::chain_path(import_out), chain);
      emit(out, Json{{"blocks", chain.size()}, {"tip", to_hex(chain.tip().block_hash)}});
    };
  });

  // submit
  auto* submit = app.add_subcommand("submit", "Sign an envelope and append it to a store as a new block");
  std::string submit_store;
  std::string submit_key;
  std::uint64_t submit_tick = 0;
  std::string submit_envelope;
  submit->add_option("--store", submit_store, "Store directory")->required();
  submit->add_option("--key", submit_key, "Key file of the submitting actor")->required();
  submit->add_option("--tick", submit_tick, "Logical time of the transaction")->required();
  submit->add_option("envelope", submit_envelope, "Envelope JSON, or @file")->required();
  submit->callback([&] {
    action = [&] {
      identity::KeyPair signer;
      try {
        signer = identity::keypair_from_key_file(parse_json(store::read_file(submit_key)));
      } catch (const std::exception& e) {
        fail(kExitUsage, "bad-key-file", e.what());
      }
      std::string body = submit_envelope;
      if (!body.empty() && body.front() == '@') {
        try {
          body = store::read_file(body.substr(1));
        } catch (const std::exception& e) {
          fail(kExitUsage, "unreadable-input", e.what());
        }
      }
      const auto registry = workflows::civic_registry();
      try {
        const auto result = store::submit(submit_store, registry, signer, submit_tick, body);
        emit(out, Json{{"tx_id", to_hex(result.tx.tx_id)},
                       {"block_index", result.block_index},
                       {"receipt", result.receipt.to_json()}});
      } catch (const store::SubmitError& e) {
        Json violations = Json::array();
        for (const auto& v : e.violations) violations.push_back(Json{{"path", v.path}, {"message", v.message}});
        emit(out, Json{{"error", "invalid-envelope"}, {"violations", std::move(violations)}});
        throw Failure{kExitUsage, "", e.what()};
      } catch (const ledger::LedgerError& e) {
        fail(kExitDomain, "invalid-store", e.what());
      }
    };
  });

  // query
  auto* query = app.add_subcommand("query", "Evaluate a contract view over the replayed state");
  std::string query_path;
  std::string query_text;
  query->add_option("chain", query_path, "Chain file or store")->required();
  query->add_option("query", query_text, "{\"contract_id\":..,\"view\":..,\"args\":{..}}, or @file")->required();
  query->callback([&] {
    action = [&] {
      const Json q = parse_arg_json(query_text, "query");
      const auto registry = workflows::civic_registry();
      const auto state = replay_state(registry, load_valid(query_path));
      emit(out, query_or_fail(registry, state, q));
    };
  });

  // state
  auto* state_cmd = app.add_subcommand("state", "Print the replayed world state and its hash");
  std::string state_path;
  state_cmd->add_option("chain", state_path, "Chain file or store")->required();
  state_cmd->callback([&] {
    action = [&] {
      const auto registry = workflows::civic_registry();
      const auto replayed = contracts::replay(registry, load_valid(state_path));
      std::uint64_t accepted = 0;
      for (const auto& r : replayed.receipts) accepted += r.accepted() ? 1 : 0;
      emit(out, Json{{"state", replayed.state.to_json()},
                     {"state_hash", to_hex(replayed.state.state_hash())},
                     {"receipts", {{"accepted", accepted}, {"rejected", replayed.receipts.size() - accepted}}}});
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Failure& f) {
    if (!f.reason.empty()) {
      err << canonical_dump(Json{{"error", f.reason}, {"message", f.message}}) << '\n';
    } else if (!f.message.empty()) {
      err << "error: " << f.message << '\n';
    }
    return f.code;
  } catch (const std::exception& e) {
    err << canonical_dump(Json{{"error", "io"}, {"message", e.what()}}) << '\n';
    return kExitDomain;
  }
}

}  // namespace smartcity::cli
