#include "smartcity/scenario.hpp"

#include <cmath>
#include <set>

#include "smartcity/store.hpp"
#include "smartcity/workflows.hpp"

namespace smartcity::scenario {

namespace {

const Json& member(const Json& obj, const char* key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ScenarioError(path + "." + key, "missing required field");
  return *it;
}

std::uint64_t as_uint(const Json& v, const std::string& path) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ScenarioError(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string as_string(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ScenarioError(path, "expected a string");
  return v.get<std::string>();
}

void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ScenarioError(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ScenarioError(path + "." + key, "unexpected field");
  }
}

netsim::NetworkConfig parse_network(const Json& j, std::uint64_t& max_ticks) {
  const std::string path = "network";
  check_keys(j, path, {"nodes", "behaviors", "delay_range", "drop_probability", "proposal_period",
                       "max_block_txs", "heartbeat_rounds", "max_ticks"});
  netsim::NetworkConfig c;
  c.nodes = as_uint(member(j, "nodes", path), path + ".nodes");
  if (j.contains("behaviors")) {
    const auto& b = j["behaviors"];
    if (!b.is_array()) throw ScenarioError(path + ".behaviors", "expected an array");
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::string p = path + ".behaviors[" + std::to_string(i) + "]";
      try {
        c.behaviors.push_back(netsim::parse_behavior(as_string(b[i], p)));
      } catch (const netsim::NetsimError& e) {
        throw ScenarioError(p, e.what());
      }
    }
  }
  if (j.contains("delay_range")) {
    const auto& d = j["delay_range"];
    if (!d.is_array() || d.size() != 2) throw ScenarioError(path + ".delay_range", "expected [min, max]");
    c.min_delay = as_uint(d[0], path + ".delay_range[0]");
    c.max_delay = as_uint(d[1], path + ".delay_range[1]");
  }
  if (j.contains("drop_probability")) {
    const auto& p = j["drop_probability"];
    if (!p.is_number()) throw ScenarioError(path + ".drop_probability", "expected a number in [0, 1]");
    const double prob = p.get<double>();
    if (!(prob >= 0.0 && prob <= 1.0)) throw ScenarioError(path + ".drop_probability", "expected a number in [0, 1]");
    c.drop_ppm = static_cast<std::uint32_t>(std::llround(prob * netsim::kPpm));
  }
  if (j.contains("proposal_period")) c.proposal_period = as_uint(j["proposal_period"], path + ".proposal_period");
  if (j.contains("max_block_txs")) c.max_block_txs = as_uint(j["max_block_txs"], path + ".max_block_txs");
  if (j.contains("heartbeat_rounds")) {
    c.heartbeat_rounds = static_cast<std::uint32_t>(as_uint(j["heartbeat_rounds"], path + ".heartbeat_rounds"));
  }
  if (j.contains("max_ticks")) max_ticks = as_uint(j["max_ticks"], path + ".max_ticks");
  try {
    c.check();
  } catch (const netsim::NetsimError& e) {
    throw ScenarioError(path, e.what());
  }
  return c;
}

}  // namespace

const Actor* Scenario::find_actor(std::string_view name) const {
  for (const auto& a : actors) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

Scenario Scenario::from_json(const Json& j) {
  check_keys(j, "scenario", {"seed", "network", "actors", "timeline", "description"});
  Scenario s;
  s.seed = as_uint(member(j, "seed", "scenario"), "seed");
  s.network = parse_network(member(j, "network", "scenario"), s.max_ticks);

  const auto& actors = member(j, "actors", "scenario");
  if (!actors.is_array()) throw ScenarioError("actors", "expected an array");
  for (std::size_t i = 0; i < actors.size(); ++i) {
    const std::string p = "actors[" + std::to_string(i) + "]";
    check_keys(actors[i], p, {"name", "role", "seed"});
    Actor a;
    a.name = as_string(member(actors[i], "name", p), p + ".name");
    a.role = actors[i].contains("role") ? as_string(actors[i]["role"], p + ".role") : "";
    a.keys = identity::generate_keypair(identity::seed_from_text(as_string(member(actors[i], "seed", p), p + ".seed")));
    if (a.name.empty()) throw ScenarioError(p + ".name", "must not be empty");
    if (s.find_actor(a.name)) throw ScenarioError(p + ".name", "duplicate actor '" + a.name + "'");
    s.actors.push_back(std::move(a));
  }

  const auto& timeline = member(j, "timeline", "scenario");
  if (!timeline.is_array()) throw ScenarioError("timeline", "expected an array");
  std::uint64_t last_tick = 0;
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    const std::string p = "timeline[" + std::to_string(i) + "]";
    check_keys(timeline[i], p, {"tick", "actor", "node", "label", "envelope"});
    TimelineEntry e;
    e.tick = as_uint(member(timeline[i], "tick", p), p + ".tick");
    if (e.tick == 0) throw ScenarioError(p + ".tick", "ticks start at 1");
    if (e.tick < last_tick) throw ScenarioError(p + ".tick", "ticks must be non-decreasing");
    last_tick = e.tick;
    e.actor = as_string(member(timeline[i], "actor", p), p + ".actor");
    if (!s.find_actor(e.actor)) throw ScenarioError(p + ".actor", "undeclared actor '" + e.actor + "'");
    e.node = timeline[i].contains("node") ? as_uint(timeline[i]["node"], p + ".node") : 0;
    if (e.node >= s.network.nodes) throw ScenarioError(p + ".node", "no such node");
    if (timeline[i].contains("label")) e.label = as_string(timeline[i]["label"], p + ".label");
    e.envelope = member(timeline[i], "envelope", p);
    if (!e.envelope.is_object()) throw ScenarioError(p + ".envelope", "expected an object");
    s.timeline.push_back(std::move(e));
  }
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = store::read_file(path);
  } catch (const std::exception& e) {
    throw ScenarioError("scenario", e.what());
  }
  try {
    return from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw ScenarioError("scenario", std::string("not valid JSON: ") + e.what());
  }
}

namespace {

struct Resolver {
  const Scenario& scenario;
  const std::map<std::string, std::string>& labels;
  identity::RandomSource& rng;

  const Actor& actor(const std::string& name, const std::string& path) const {
    const Actor* a = scenario.find_actor(name);
    if (!a) throw ScenarioError(path, "undeclared actor '" + name + "'");
    return *a;
  }

  Json resolve(const Json& v, const std::string& path) const {
    if (v.is_string()) {
      const auto& s = v.get_ref<const std::string&>();
      if (s.starts_with("$tx:")) {
        const auto it = labels.find(s.substr(4));
        if (it == labels.end()) throw ScenarioError(path, "unknown or later label '" + s.substr(4) + "'");
        return it->second;
      }
      if (s.starts_with("@")) {
        const auto dot = s.find('.');
        const std::string name = s.substr(1, dot == std::string::npos ? std::string::npos : dot - 1);
        const Actor& a = actor(name, path);
        if (dot == std::string::npos) return a.keys.address().to_string();
        if (s.substr(dot + 1) == "public_key") return to_hex(a.keys.public_key);
        throw ScenarioError(path, "unknown actor attribute in '" + s + "'");
      }
      return v;
    }
    if (v.is_object()) {
      if (v.contains("$encrypt_for")) {
        const Actor& a = actor(as_string(v["$encrypt_for"], path + ".$encrypt_for"), path + ".$encrypt_for");
        const std::string plaintext = as_string(member(v, "plaintext", path), path + ".plaintext");
        return identity::encrypt_for(a.keys.public_key, as_bytes(plaintext), rng).to_json();
      }
      Json out = Json::object();
      for (const auto& [key, child] : v.items()) out[key] = resolve(child, path + "." + key);
      return out;
    }
    if (v.is_array()) {
      Json out = Json::array();
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(resolve(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
    return v;
  }
};

}  // namespace

std::vector<Submission> compile(const Scenario& scenario, const contracts::Registry& registry) {
  std::vector<Submission> out;
  std::map<std::string, std::string> labels;
  identity::SeededRandom rng(canonical_digest(Json{{"purpose", "scenario-encryption"}, {"seed", scenario.seed}}));
  const Resolver resolver{scenario, labels, rng};

  for (std::size_t i = 0; i < scenario.timeline.size(); ++i) {
    const auto& entry = scenario.timeline[i];
    const std::string p = "timeline[" + std::to_string(i) + "].envelope";
    const Actor& actor = *scenario.find_actor(entry.actor);

    Json env_json = resolver.resolve(entry.envelope, p);
    if (!env_json.contains("sender")) env_json["sender"] = actor.keys.address().to_string();
    contracts::ContractEnvelope env;
    try {
      env = contracts::ContractEnvelope::from_json(env_json);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(p, e.what());
    }
    if (env.sender != actor.keys.address()) throw ScenarioError(p + ".sender", "does not match the submitting actor");
    if (const auto v = contracts::validate_envelope(registry, env); !v.empty()) {
      throw ScenarioError(p + "." + v.front().path, v.front().message);
    }

    Submission sub;
    sub.tick = entry.tick;
    sub.node = entry.node;
    sub.actor = entry.actor;
    sub.label = entry.label;
    sub.tx = ledger::Transaction::create(actor.keys, env.canonical(), entry.tick);
    sub.envelope = std::move(env);
    if (entry.label) {
      if (!labels.emplace(*entry.label, to_hex(sub.tx.tx_id)).second) {
        throw ScenarioError("timeline[" + std::to_string(i) + "].label", "duplicate label '" + *entry.label + "'");
      }
    }
    out.push_back(std::move(sub));
  }
  return out;
}

namespace {

Json build_report(const Scenario& scenario, const netsim::SimNetwork& net, const std::vector<Submission>& subs,
                  bool quiescent) {
  const auto honest = net.honest_nodes();
  const netsim::SimNode& ref = net.node(honest.empty() ? 0 : honest.front());

  bool converged = true;
  bool hashes_agree = true;
  for (const auto id : honest) {
    converged = converged && net.node(id).replica() == ref.replica();
    hashes_agree = hashes_agree && net.node(id).state().state_hash() == ref.state().state_hash();
  }

  Json lengths = Json::array();
  for (std::size_t i = 0; i < net.size(); ++i) lengths.push_back(net.node(i).replica().size());

  const auto& registry = net.registry();
  const auto replayed = contracts::replay(registry, ref.replica());
  std::map<std::string, const contracts::Receipt*> receipts;
  std::uint64_t accepted = 0;
  for (const auto& r : replayed.receipts) {
    receipts[to_hex(r.tx_id)] = &r;
    accepted += r.accepted() ? 1 : 0;
  }

  Json txs = Json::array();
  for (const auto& s : subs) {
    const std::string id = to_hex(s.tx.tx_id);
    Json t{{"tick", s.tick}, {"actor", s.actor}, {"action", s.envelope.contract_id + "." + s.envelope.action}, {"tx_id", id}};
    t["label"] = s.label ? Json(*s.label) : Json(nullptr);
    const auto it = receipts.find(id);
    t["committed"] = it != receipts.end();
    if (it != receipts.end()) {
      const auto prov = ledger::trace_transaction(ref.replica(), s.tx.tx_id);
      t["block_index"] = prov.block_index;
      t["position"] = prov.position;
      t["status"] = it->second->accepted() ? "accepted" : "rejected";
      t["reason"] = it->second->reason ? Json(*it->second->reason) : Json(nullptr);
    }
    txs.push_back(std::move(t));
  }

  const auto& state = ref.state();
  Json requests = Json::array();
  for (const auto& [id, r] : state.contract_state(workflows::kServiceContract).at("requests").items()) {
    requests.push_back(Json{{"request_id", id},
                            {"service_kind", r.at("service_kind")},
                            {"status", r.at("status")},
                            {"status_history", r.at("status_history")},
                            {"step_receipts", r.at("step_receipts")},
                            {"reason", r.at("reason")}});
  }
  Json audits = Json::object();
  for (const auto& [vehicle, _] : state.contract_state(workflows::kPathContract).at("vehicles").items()) {
    audits[vehicle] = contracts::query(registry, state,
                                       Json{{"contract_id", "path"}, {"view", "audit"}, {"args", {{"vehicle", vehicle}}}});
  }
  Json energy = Json::object();
  for (const auto& [building, account] : state.contract_state(workflows::kEnergyContract).at("accounts").items()) {
    energy[building] = account;
  }

  return Json{{"scenario_seed", scenario.seed},
              {"network", net.config().to_json()},
              {"final_tick", net.clock()},
              {"quiescent", quiescent},
              {"converged", converged},
              {"state_hashes_agree", hashes_agree},
              {"chain_lengths", std::move(lengths)},
              {"state_hash", to_hex(state.state_hash())},
              {"committed_txs", replayed.receipts.size()},
              {"receipts", {{"accepted", accepted}, {"rejected", replayed.receipts.size() - accepted}}},
              {"transactions", std::move(txs)},
              {"service_requests", std::move(requests)},
              {"path_audits", std::move(audits)},
              {"energy_accounts", std::move(energy)},
              {"transport_stats", workflows::transport_stats(state).to_json()}};
}

}  // namespace

RunResult run(const Scenario& input, std::optional<std::uint64_t> seed_override) {
  Scenario scenario = input;
  if (seed_override) scenario.seed = *seed_override;
  scenario.network.seed = scenario.seed;

  RunResult result;
  contracts::Registry registry = workflows::civic_registry();
  result.submissions = compile(scenario, registry);

  netsim::SimNetwork net(scenario.network, std::move(registry));
  for (const auto& s : result.submissions) net.schedule_submission(s.tick, s.node, s.tx);
  net.run_until_quiescent(scenario.max_ticks);

  result.report = build_report(scenario, net, result.submissions, net.quiescent());
  const auto honest = net.honest_nodes();
  result.chain_jsonl = ledger::export_jsonl(net.node(honest.empty() ? 0 : honest.front()).replica());
  for (const auto& e : net.event_log()) {
    result.events_jsonl += e.to_line();
    result.events_jsonl += '\n';
  }
  return result;
}

void write_run(const RunResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  store::write_file(out_dir / "chain.jsonl", result.chain_jsonl);
  store::write_file(out_dir / "events.jsonl", result.events_jsonl);
  store::write_file(out_dir / "report.json", canonical_dump(result.report) + "\n");
}

}  // namespace smartcity::scenario
