// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Criterion 10 times this binary together with the unit suite.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "paths.hpp"
#include "smartcity/netsim.hpp"
#include "smartcity/scenario.hpp"
#include "smartcity/store.hpp"
#include "smartcity/workflows.hpp"

using namespace smartcity;
using namespace smartcity::workflows;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f s", s);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome tamper_evidence() {
  const auto start = Clock::now();
  const auto keys = fixtures::key_pool(8, "tamper");
  std::size_t detected = 0, total = 0, late = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    const std::size_t blocks = 10 + rng() % 41;
    const ledger::Chain chain = fixtures::seeded_chain(seed, blocks, keys);
    for (const auto m : fixtures::kMutations) {
      ++total;
      const auto mutated = fixtures::mutate(chain, m, rng);
      const auto report = ledger::validate_chain(mutated.chain);
      if (!report.valid && *report.first_invalid_index <= mutated.index + 1) {
        ++detected;
      } else {
        ++late;
      }
    }
  }
  const double t = seconds_since(start);
  return {detected == total && t < 5.0, std::to_string(detected) + "/" + std::to_string(total) +
                                            " mutations flagged at or before k+1, " + fmt_seconds(t) + " (limit 5 s)"};
}

// --- 2 ---------------------------------------------------------------------

struct ConvergenceStats {
  bool ok = true;
  std::size_t invalid_committed = 0;
  std::size_t missing = 0;
};

void converge_once(std::uint64_t seed, bool byzantine, ConvergenceStats& stats) {
  netsim::NetworkConfig c;
  c.nodes = 5;
  c.min_delay = 1;
  c.max_delay = 5;
  c.drop_ppm = 100'000;
  c.seed = seed;
  if (byzantine) {
    c.behaviors.assign(5, netsim::Behavior::Honest);
    c.behaviors[seed % 5] = netsim::Behavior::ByzantineInvalidProposer;
  }
  netsim::SimNetwork net(c, civic_registry());
  std::mt19937_64 rng(seed);
  const auto riders = fixtures::key_pool(12, "conv");
  std::vector<ledger::Transaction> txs;
  std::uint64_t tick = 1;
  for (int i = 0; i < 200; ++i) {
    tick += rng() % 3;
    const auto& k = riders[rng() % riders.size()];
    txs.push_back(ledger::Transaction::create(k, fixtures::ride_envelope(k.address(), rng), tick));
    net.schedule_submission(tick, rng() % 5, txs.back());
  }
  net.run_until_quiescent(1'000'000);
  if (!net.quiescent()) stats.ok = false;

  const auto honest = net.honest_nodes();
  const auto& ref = net.node(honest.front());
  for (const auto id : honest) {
    const auto& node = net.node(id);
    if (export_jsonl(node.replica()) != export_jsonl(ref.replica())) stats.ok = false;
    if (!ledger::validate_chain(node.replica()).valid) stats.ok = false;
    for (const auto& b : node.replica().blocks()) stats.invalid_committed += ledger::check_block_contents(b).has_value();
  }
  // Every committed transaction is on every honest replica (identical
  // replicas make that immediate) and every submitted one got committed.
  for (const auto& tx : txs) stats.missing += !ref.is_committed(tx.tx_id);
}

Outcome consensus_convergence() {
  const auto start = Clock::now();
  ConvergenceStats honest, byz;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    converge_once(seed, false, honest);
    converge_once(seed, true, byz);
  }
  const double t = seconds_since(start);
  const bool pass = honest.ok && byz.ok && honest.missing == 0 && byz.missing == 0 && honest.invalid_committed == 0 &&
                    byz.invalid_committed == 0 && t < 30.0;
  return {pass, "20 seeds x {all honest, one byzantine proposer}: replicas identical=" +
                    std::string(honest.ok && byz.ok ? "yes" : "no") + ", uncommitted txs=" +
                    std::to_string(honest.missing + byz.missing) + ", invalid blocks committed=" +
                    std::to_string(honest.invalid_committed + byz.invalid_committed) + ", " + fmt_seconds(t) +
                    " (limit 30 s)"};
}

// --- 3 ---------------------------------------------------------------------

// Runs one round where `accepting` nodes (proposer included) are honest and
// the rest stay silent; reports whether the proposer committed.
bool network_commits(std::size_t n, std::size_t accepting) {
  netsim::NetworkConfig c;
  c.nodes = n;
  c.min_delay = c.max_delay = 1;
  c.proposal_period = 4;
  c.behaviors.assign(n, netsim::Behavior::Silent);
  for (std::size_t i = 0; i < accepting; ++i) c.behaviors[(1 + i) % n] = netsim::Behavior::Honest;
  netsim::SimNetwork net(c, civic_registry());
  const auto k = identity::generate_keypair(sha256("majority"));
  net.schedule_submission(1, 1, ledger::Transaction::create(
                                    k, transport_event_envelope(k.address(), "a", "b", 1).canonical(), 1));
  while (net.clock() < 8) net.step();  // round 1 (node 1) runs from tick 4 to its deadline
  return net.node(1).height() == 1;
}

Outcome strict_majority() {
  std::ostringstream table;
  bool pass = true;
  for (std::size_t n : {3, 4, 5, 7}) {
    table << " N=" << n << ":";
    for (std::size_t a = 0; a <= n; ++a) {
      netsim::VoteRecord r;
      for (std::size_t i = 0; i < a; ++i) r.accept_votes.insert(i);
      for (std::size_t i = a; i < n; ++i) r.reject_votes.insert(i);
      const bool expected = a >= n / 2 + 1;
      const bool tallied = netsim::finalize(r, n);
      // A live round needs at least the proposer itself to be running.
      const bool live = a == 0 ? tallied : network_commits(n, a);
      pass = pass && tallied == expected && live == expected;
      table << (tallied != live ? '?' : tallied ? 'C' : '.');
    }
  }
  return {pass, "commit table by accept count 0..N (C = committed, ? = disagreement), table and live rounds agree with floor(N/2)+1:" +
                    table.str()};
}

// --- 4 ---------------------------------------------------------------------

scenario::Scenario load(const std::string& name) { return scenario::Scenario::load(testpaths::source("scenarios/" + name)); }

contracts::WorldState final_state(const scenario::RunResult& r) {
  return contracts::replay(civic_registry(), ledger::import_jsonl(r.chain_jsonl)).state;
}

Outcome service_protocol() {
  std::vector<std::string> failures;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // Happy path from the bundled scenario.
  const auto s = load("service_request.json");
  const auto run = scenario::run(s);
  const auto chain = ledger::import_jsonl(run.chain_jsonl);
  const auto replayed = contracts::replay(civic_registry(), chain);
  const std::string id = to_hex(run.submissions[0].tx.tx_id);
  const auto request = find_service_request(replayed.state, id);
  require(request.has_value(), "request present");
  std::vector<std::string> trace;
  for (const auto& receipt : replayed.receipts) {
    if (receipt.accepted() && !receipt.events.empty()) trace.push_back(receipt.events.back().at("status"));
  }
  require(trace == std::vector<std::string>{"Submitted", "Authenticated", "Fulfilled"}, "status trace");
  std::vector<std::string> expected_steps;
  for (const auto& sub : run.submissions) expected_steps.push_back(to_hex(sub.tx.tx_id));
  require(request && request->step_receipts == expected_steps, "three step receipts in request order");
  std::uint64_t last_pos = 0;
  for (const auto& step : expected_steps) {
    const auto p = ledger::trace_transaction(chain, digest_from_hex(step));
    const std::uint64_t pos = p.block_index * 1000 + p.position;
    require(pos > last_pos, "receipts appear on chain in step order");
    last_pos = pos;
  }

  // Document secrecy: the citizen opens it, 100 unrelated keys do not.
  const auto* alice = s.find_actor("alice");
  const auto& doc = request->document.value();
  require(to_bytes("Birth certificate: Alice Rossi, born 1990-04-12, Ancona") == identity::decrypt(alice->keys.private_key, doc),
          "citizen decrypts");
  int third_party_failures = 0;
  for (int i = 0; i < 100; ++i) {
    const auto other = identity::generate_keypair(sha256("fuzz-key-" + std::to_string(i)));
    try {
      identity::decrypt(other.private_key, doc);
    } catch (const identity::IdentityError& e) {
      third_party_failures += e.code() == identity::IdentityErrc::AuthenticationFailure;
    }
  }
  require(third_party_failures == 100, "100 third-party keys rejected");

  // Rejected variant stops at step 2 and refuses the later fulfillment.
  const auto rejected_run = scenario::run(load("service_rejected.json"));
  const auto rejected = find_service_request(final_state(rejected_run), to_hex(rejected_run.submissions[0].tx.tx_id));
  require(rejected && rejected->status == RequestStatus::Rejected && rejected->step_receipts.size() == 2,
          "rejected at step 2");
  require(rejected_run.report["transactions"][2]["status"] == "rejected" &&
              rejected_run.report["transactions"][2]["reason"] == "invalid-transition",
          "fulfillment after rejection refused");

  // Fulfillment before authentication is refused.
  oracles::Desk desk;
  const auto office = identity::generate_keypair(sha256("office"));
  const auto fresh = desk.submit(alice->keys, service_request_envelope(alice->keys, office.address(), "birth-certificate"));
  identity::SeededRandom rng(sha256("early"));
  const auto early = desk.submit(office, service_fulfill_envelope(office.address(), to_hex(fresh.tx_id),
                                                                  identity::encrypt_for(alice->keys.public_key, to_bytes("x"), rng)));
  require(early.reason == "invalid-transition", "out-of-order fulfillment refused");

  std::string detail = "trace Submitted->Authenticated->Fulfilled, 3 ordered receipts, rejected variant stops at step 2, "
                       "early fulfillment refused, " + std::to_string(third_party_failures) + "/100 foreign keys fail";
  for (const auto& f : failures) detail += "; FAILED: " + f;
  return {failures.empty(), detail};
}

// --- 5 ---------------------------------------------------------------------

Outcome energy_conservation() {
  std::size_t violations = 0, overdraws = 0, overdraws_rejected = 0, mismatched = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed + 500);
    oracles::Desk desk;
    const auto buildings = fixtures::key_pool(6, "building" + std::to_string(seed));
    std::vector<std::int64_t> balance(buildings.size(), 0);
    std::int64_t produced = 0;
    for (int step = 0; step < 500; ++step) {
      const std::size_t i = rng() % buildings.size();
      const Digest before = desk.state.state_hash();
      if (rng() % 5 < 2) {
        const std::int64_t amount = 1 + static_cast<std::int64_t>(rng() % 10'000);
        const auto r = desk.submit(buildings[i], energy_produce_envelope(buildings[i].address(), EnergySource::Solar, amount));
        mismatched += !r.accepted();
        produced += amount;
        balance[i] += amount;
      } else {
        std::size_t j = rng() % buildings.size();
        if (j == i) j = (j + 1) % buildings.size();
        const std::int64_t amount = 1 + static_cast<std::int64_t>(rng() % 12'000);
        const auto r = desk.submit(buildings[i], energy_trade_envelope(buildings[i].address(), buildings[j].address(), amount));
        if (amount > balance[i]) {
          ++overdraws;
          const bool refused = !r.accepted() && r.reason == "insufficient-storage" && desk.state.state_hash() == before;
          overdraws_rejected += refused;
        } else {
          mismatched += !r.accepted();
          balance[i] -= amount;
          balance[j] += amount;
        }
      }
      std::int64_t sum = 0;
      for (std::size_t b = 0; b < buildings.size(); ++b) {
        const auto acct = energy_account(desk.state, buildings[b].address());
        sum += acct.balance_wh();
        violations += acct.balance_wh() < 0 || acct.balance_wh() != balance[b];
      }
      violations += sum != produced;
    }
  }
  const bool pass = violations == 0 && mismatched == 0 && overdraws > 0 && overdraws == overdraws_rejected;
  return {pass, "50 runs x 500 envelopes: conservation/negativity violations=" + std::to_string(violations) +
                    ", overdraws rejected with unchanged state_hash=" + std::to_string(overdraws_rejected) + "/" +
                    std::to_string(overdraws) + ", unexpected outcomes=" + std::to_string(mismatched)};
}

// --- 6 ---------------------------------------------------------------------

struct Flight {
  std::vector<Point> waypoints;
  std::int64_t tolerance = 0;
  std::vector<std::pair<std::uint64_t, Point>> reports;
};

Flight make_flight(std::mt19937_64& rng, bool inject) {
  Flight f;
  f.tolerance = 200 + static_cast<std::int64_t>(rng() % 800);
  for (std::size_t i = 0, n = 5 + rng() % 16; i < n; ++i) {
    f.waypoints.push_back({static_cast<std::int64_t>(rng() % 2'000'000), static_cast<std::int64_t>(rng() % 2'000'000)});
  }
  auto chance = [&] { return inject && rng() % 10 == 0; };
  const auto half = f.tolerance / 2;
  for (std::uint64_t i = 0; i < f.waypoints.size(); ++i) {
    if (chance()) continue;  // missing
    Point p = f.waypoints[i];
    if (chance()) {
      p.x_cm += f.tolerance + 1 + static_cast<std::int64_t>(rng() % 5000);
    } else {
      p.x_cm += static_cast<std::int64_t>(rng() % (2 * half + 1)) - half;
      p.y_cm += static_cast<std::int64_t>(rng() % (2 * half + 1)) - half;
    }
    f.reports.emplace_back(i, p);
    if (f.reports.size() >= 2 && chance()) std::swap(f.reports[f.reports.size() - 1], f.reports[f.reports.size() - 2]);
  }
  return f;
}

std::vector<Anomaly> detect(const Flight& f, std::uint64_t flight_no) {
  oracles::Desk desk;
  const auto vehicle = identity::generate_keypair(sha256("vehicle" + std::to_string(flight_no)));
  desk.submit(vehicle, path_plan_envelope(vehicle.address(), f.waypoints, f.tolerance));
  std::uint64_t t = 0;
  for (const auto& [i, p] : f.reports) desk.submit(vehicle, path_checkpoint_envelope(vehicle.address(), i, p, ++t));
  return detect_hijack(desk.state, vehicle.address());
}

Outcome hijack_audit() {
  std::mt19937_64 rng(6);
  std::size_t equal = 0, with_anomalies = 0, false_positives = 0;
  for (std::uint64_t n = 0; n < 100; ++n) {
    const Flight f = make_flight(rng, true);
    const auto got = detect(f, n);
    equal += got == oracles::audit(f.waypoints, f.tolerance, f.reports);
    with_anomalies += !got.empty();
  }
  for (std::uint64_t n = 0; n < 100; ++n) {
    const Flight f = make_flight(rng, false);
    false_positives += !detect(f, 1000 + n).empty();
  }
  return {equal == 100 && false_positives == 0 && with_anomalies > 0,
          std::to_string(equal) + "/100 injected flights equal the oracle (" + std::to_string(with_anomalies) +
              " with anomalies), false positives on clean flights=" + std::to_string(false_positives)};
}

// --- 7 ---------------------------------------------------------------------

Outcome statistics_oracle() {
  std::size_t equal = 0, ties = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(700 + seed);
    oracles::Desk desk;
    const auto riders = fixtures::key_pool(30, "stats");
    for (int i = 0; i < 1000; ++i) {
      const auto& k = riders[rng() % riders.size()];
      desk.submit(k, transport_event_envelope(k.address(), "stop-" + std::to_string(rng() % 9),
                                              "stop-" + std::to_string(rng() % 9),
                                              static_cast<std::int64_t>(rng() % 1800)));
    }
    const auto stats = transport_stats(desk.state);
    equal += oracles::matches(oracles::aggregate(transport_events(desk.state)), stats);
    for (std::size_t i = 1; i < stats.top_destinations.size(); ++i) {
      ties += stats.top_destinations[i].count == stats.top_destinations[i - 1].count;
    }
  }

  // The bundled transport demo through the CLI against the Python oracle's golden file.
  const auto dir = testpaths::scratch("acceptance-stats");
  const auto run = testpaths::run_cli({"run", testpaths::source("scenarios/transport.json").string(), "--out", dir.string()});
  const auto stats = testpaths::run_cli({"stats", (dir / "chain.jsonl").string()});
  const bool golden = run.code == 0 && stats.code == 0 &&
                      stats.out == store::read_file(testpaths::source("tests/golden/transport_stats.json"));
  return {equal == static_cast<std::size_t>(seeds) && golden && ties > 0,
          std::to_string(equal) + "/" + std::to_string(seeds) + " runs of 1000 events equal brute force (" +
              std::to_string(ties) + " tied ranks exercised), CLI golden file " + (golden ? "matches" : "differs")};
}

// --- 8 ---------------------------------------------------------------------

// Replays a scenario's timeline through single-shot CLI commands, resolving
// placeholders from CLI outputs, and compares with the simulated run.
bool frontends_agree(const std::string& name, std::string& note) {
  const auto path = testpaths::source("scenarios/" + name);
  const Json raw = Json::parse(store::read_file(path));
  const auto s = scenario::Scenario::load(path);
  const auto run = scenario::run(s);

  const auto dir = testpaths::scratch("frontend-" + name);
  std::map<std::string, Json> keys;
  for (const auto& actor : raw["actors"]) {
    const auto k = testpaths::run_cli({"keygen", "--seed", actor["seed"], "--out", (dir / (actor["name"].get<std::string>() + ".key")).string()});
    if (k.code != 0) return false;
    keys[actor["name"]] = Json::parse(k.out);
  }
  std::map<std::string, std::string> labels;
  std::function<Json(const Json&, std::size_t)> resolve = [&](const Json& v, std::size_t entry) -> Json {
    if (v.is_string()) {
      const std::string str = v;
      if (str.starts_with("$tx:")) return labels.at(str.substr(4));
      if (str.starts_with("@")) {
        const auto dot = str.find('.');
        const Json& k = keys.at(str.substr(1, dot == std::string::npos ? std::string::npos : dot - 1));
        return dot == std::string::npos ? k["address"] : k["public_key"];
      }
      return v;
    }
    if (v.is_object() && v.contains("$encrypt_for")) {
      // The sealed document is part of the workload: both front ends carry the same ciphertext.
      return run.submissions[entry].envelope.payload["document"];
    }
    if (v.is_object() || v.is_array()) {
      Json out = v;
      for (auto it = out.begin(); it != out.end(); ++it) *it = resolve(*it, entry);
      return out;
    }
    return v;
  };

  std::vector<std::string> cli_ids;
  for (std::size_t i = 0; i < raw["timeline"].size(); ++i) {
    const Json& entry = raw["timeline"][i];
    const Json envelope = resolve(entry["envelope"], i);
    const auto r = testpaths::run_cli({"submit", "--store", (dir / "store").string(), "--key",
                                       (dir / (entry["actor"].get<std::string>() + ".key")).string(), "--tick",
                                       std::to_string(entry["tick"].get<std::uint64_t>()), envelope.dump(2)});
    if (r.code != 0) return false;
    cli_ids.push_back(Json::parse(r.out)["tx_id"]);
    if (entry.contains("label")) labels[entry["label"]] = cli_ids.back();
  }
  std::vector<std::string> sim_ids;
  for (const auto& sub : run.submissions) sim_ids.push_back(to_hex(sub.tx.tx_id));
  const auto state = testpaths::run_cli({"state", (dir / "store").string()});
  const bool ids_equal = cli_ids == sim_ids;
  const bool hash_equal = state.code == 0 && Json::parse(state.out)["state_hash"] == run.report["state_hash"];
  note += " " + name + ":" + (ids_equal && hash_equal ? "ok" : ids_equal ? "state-differs" : "ids-differ");
  return ids_equal && hash_equal;
}

Outcome frontend_independence() {
  std::string note;
  bool pass = true;
  for (const char* name : {"service_request.json", "energy.json", "path.json"}) pass = frontends_agree(name, note) && pass;
  return {pass, "CLI single-shot vs scenario run, tx_ids and state_hash:" + note};
}

// --- 9 ---------------------------------------------------------------------

Outcome determinism_roundtrip() {
  std::size_t identical = 0, roundtrips = 0, runs = 0;
  for (const char* name : {"service_request.json", "service_rejected.json", "transport.json", "energy.json", "path.json"}) {
    const auto s = load(name);
    for (const std::optional<std::uint64_t> seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{4242}}) {
      ++runs;
      const auto a = scenario::run(s, seed);
      const auto b = scenario::run(s, seed);
      identical += a.chain_jsonl == b.chain_jsonl && a.events_jsonl == b.events_jsonl &&
                   canonical_dump(a.report) == canonical_dump(b.report);
      roundtrips += ledger::export_jsonl(ledger::import_jsonl(a.chain_jsonl)) == a.chain_jsonl;
    }
  }
  return {identical == runs && roundtrips == runs,
          std::to_string(identical) + "/" + std::to_string(runs) + " reruns bit-identical (chain, events, report), " +
              std::to_string(roundtrips) + "/" + std::to_string(runs) + " export->import->export identical"};
}

// --- 10 --------------------------------------------------------------------

Outcome suite_wall_clock(double acceptance_seconds) {
  const auto start = Clock::now();
  const int rc = std::system(UNIT_TESTS_BINARY " > /dev/null 2>&1");
  const double unit = seconds_since(start);
  const double total = unit + acceptance_seconds;
  return {rc == 0 && total < 90.0, "unit suite " + fmt_seconds(unit) + (rc == 0 ? " (passed)" : " (FAILED)") +
                                       " + acceptance " + fmt_seconds(acceptance_seconds) + " = " + fmt_seconds(total) +
                                       " (limit 90 s)"};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "tamper-evidence", tamper_evidence},
      {2, "consensus convergence", consensus_convergence},
      {3, "strict-majority rule", strict_majority},
      {4, "service request protocol", service_protocol},
      {5, "energy conservation", energy_conservation},
      {6, "hijack audit oracle equivalence", hijack_audit},
      {7, "statistics oracle equivalence", statistics_oracle},
      {8, "front-end independence", frontend_independence},
      {9, "determinism and round-trip", determinism_roundtrip},
  };
  int failed = 0;
  auto report = [&](int number, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << number << ". " << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  };
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(c.number, c.name, o);
  }
  report(10, "full suite wall-clock", suite_wall_clock(seconds_since(start)));
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
