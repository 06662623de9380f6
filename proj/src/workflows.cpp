#include "smartcity/workflows.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <variant>

namespace smartcity::workflows {

__extension__ using Int128 = __int128;
__extension__ using UInt128 = unsigned __int128;

using contracts::ActionSpec;
using contracts::ContractError;
using contracts::ContractErrc;
using contracts::ExecutionContext;
using contracts::FieldRule;
using contracts::FieldType;
using contracts::NamedRule;
using contracts::Outcome;
using contracts::StringFormat;
using contracts::ViewSpec;

namespace {

// Schema helpers ------------------------------------------------------------

FieldRule string_rule(StringFormat format = StringFormat::Any, std::size_t max_length = 256) {
  FieldRule r;
  r.type = FieldType::String;
  r.format = format;
  r.max_length = max_length;
  return r;
}

FieldRule enum_rule(std::vector<std::string> values) {
  FieldRule r = string_rule();
  r.one_of = std::move(values);
  return r;
}

FieldRule int_rule(std::int64_t min, std::int64_t max) {
  FieldRule r;
  r.type = FieldType::Integer;
  r.min = min;
  r.max = max;
  return r;
}

FieldRule bool_rule() {
  FieldRule r;
  r.type = FieldType::Boolean;
  return r;
}

FieldRule optional(FieldRule r) {
  r.required = false;
  return r;
}

FieldRule point_rule() {
  FieldRule r;
  r.type = FieldType::Array;
  r.min = 2;
  r.max_length = 2;
  r.items.push_back(int_rule(-kMaxCoordinateCm, kMaxCoordinateCm));
  return r;
}

FieldRule array_of(FieldRule item, std::size_t max_length) {
  FieldRule r;
  r.type = FieldType::Array;
  r.max_length = max_length;
  r.items.push_back(std::move(item));
  return r;
}

constexpr std::int64_t kMaxTick = INT64_MAX;

// Point (de)serialization ----------------------------------------------------

Json point_json(const Point& p) { return Json::array({p.x_cm, p.y_cm}); }

Point point_from_json(const Json& j) { return Point{j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>()}; }

std::string sender_key(const ContractEnvelope& env) { return env.sender.to_string(); }

}  // namespace

// ---------------------------------------------------------------------------
// Service requests
// ---------------------------------------------------------------------------

std::string_view to_string(RequestStatus s) {
  switch (s) {
    case RequestStatus::Submitted: return "Submitted";
    case RequestStatus::Authenticated: return "Authenticated";
    case RequestStatus::DocumentRequested: return "DocumentRequested";
    case RequestStatus::Fulfilled: return "Fulfilled";
    case RequestStatus::Rejected: return "Rejected";
  }
  return "?";
}

RequestStatus parse_request_status(std::string_view s) {
  for (auto st : {RequestStatus::Submitted, RequestStatus::Authenticated, RequestStatus::DocumentRequested,
                  RequestStatus::Fulfilled, RequestStatus::Rejected}) {
    if (to_string(st) == s) return st;
  }
  throw std::invalid_argument("unknown request status '" + std::string(s) + "'");
}

bool is_legal_transition(RequestStatus from, RequestStatus to) {
  using S = RequestStatus;
  switch (from) {
    case S::Submitted: return to == S::Authenticated || to == S::Rejected;
    case S::Authenticated: return to == S::DocumentRequested || to == S::Rejected;
    case S::DocumentRequested: return to == S::Fulfilled;
    case S::Fulfilled:
    case S::Rejected: return false;
  }
  return false;
}

Json ServiceRequest::to_json() const {
  Json history = Json::array();
  for (auto s : status_history) history.push_back(std::string(to_string(s)));
  Json j{{"request_id", request_id},
         {"citizen", citizen.to_string()},
         {"citizen_public_key", to_hex(citizen_public_key)},
         {"institution", institution.to_string()},
         {"service_kind", service_kind},
         {"status", std::string(to_string(status))},
         {"status_history", std::move(history)},
         {"step_receipts", step_receipts},
         {"submitted_tick", submitted_tick}};
  j["reason"] = reason ? Json(*reason) : Json(nullptr);
  j["document"] = document ? document->to_json() : Json(nullptr);
  return j;
}

ServiceRequest ServiceRequest::from_json(const Json& j) {
  ServiceRequest r;
  r.request_id = j.at("request_id").get<std::string>();
  r.citizen = WalletAddress::parse(j.at("citizen").get<std::string>());
  r.citizen_public_key = fixed_from_hex<32>(j.at("citizen_public_key").get<std::string>());
  r.institution = WalletAddress::parse(j.at("institution").get<std::string>());
  r.service_kind = j.at("service_kind").get<std::string>();
  r.status = parse_request_status(j.at("status").get<std::string>());
  for (const auto& s : j.at("status_history")) r.status_history.push_back(parse_request_status(s.get<std::string>()));
  r.step_receipts = j.at("step_receipts").get<std::vector<std::string>>();
  r.submitted_tick = j.at("submitted_tick").get<std::uint64_t>();
  if (!j.at("reason").is_null()) r.reason = j["reason"].get<std::string>();
  if (!j.at("document").is_null()) r.document = identity::CipherEnvelope::from_json(j["document"]);
  return r;
}

namespace {

Json status_event(const ServiceRequest& r) {
  Json e{{"request_id", r.request_id}, {"status", std::string(to_string(r.status))}};
  if (r.reason) e["reason"] = *r.reason;
  return e;
}

Outcome service_request_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  const auto& p = env.payload;
  identity::PublicKey pk{};
  try {
    pk = fixed_from_hex<32>(p.at("citizen_public_key").get<std::string>());
  } catch (const std::exception&) {
    return Outcome::reject("malformed-public-key");
  }
  if (WalletAddress::from_public_key(pk) != env.sender) return Outcome::reject("public-key-mismatch");

  ServiceRequest r;
  r.request_id = to_hex(ctx.tx_id);
  if (state["requests"].contains(r.request_id)) return Outcome::reject("duplicate-request");
  r.citizen = env.sender;
  r.citizen_public_key = pk;
  r.institution = WalletAddress::parse(p.at("institution").get<std::string>());
  r.service_kind = p.at("service_kind").get<std::string>();
  r.status = RequestStatus::Submitted;
  r.status_history = {RequestStatus::Submitted};
  r.step_receipts = {r.request_id};
  r.submitted_tick = ctx.tick;
  Json event = status_event(r);
  state["requests"][r.request_id] = r.to_json();
  return Outcome::accept(Json::array({std::move(event)}));
}

// Looks up the request and checks the caller is its institution and that
// the request is in `required` status.
std::variant<ServiceRequest, Outcome> load_for_institution(const Json& state, const ContractEnvelope& env,
                                                           RequestStatus required) {
  const auto id = env.payload.at("request_id").get<std::string>();
  const auto& requests = state.at("requests");
  const auto it = requests.find(id);
  if (it == requests.end()) return Outcome::reject("unknown-request");
  ServiceRequest r = ServiceRequest::from_json(*it);
  if (r.institution != env.sender) return Outcome::reject("wrong-institution");
  if (r.status != required) return Outcome::reject("invalid-transition");
  return r;
}

void transition(ServiceRequest& r, RequestStatus to) {
  r.status = to;
  r.status_history.push_back(to);
}

Outcome service_authenticate_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  auto loaded = load_for_institution(state, env, RequestStatus::Submitted);
  if (auto* out = std::get_if<Outcome>(&loaded)) return *out;
  auto& r = std::get<ServiceRequest>(loaded);

  const bool authenticated = env.payload.at("citizen_authenticated").get<bool>();
  const bool obtainable = env.payload.at("obtainable").get<bool>();
  if (!authenticated) {
    transition(r, RequestStatus::Rejected);
    r.reason = "not-authenticated";
  } else if (!obtainable) {
    transition(r, RequestStatus::Rejected);
    r.reason = "not-obtainable";
  } else {
    transition(r, RequestStatus::Authenticated);
  }
  r.step_receipts.push_back(to_hex(ctx.tx_id));
  Json event = status_event(r);
  state["requests"][r.request_id] = r.to_json();
  return Outcome::accept(Json::array({std::move(event)}));
}

Outcome service_fulfill_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  auto loaded = load_for_institution(state, env, RequestStatus::Authenticated);
  if (auto* out = std::get_if<Outcome>(&loaded)) return *out;
  auto& r = std::get<ServiceRequest>(loaded);

  identity::CipherEnvelope doc;
  try {
    doc = identity::CipherEnvelope::from_json(env.payload.at("document"));
  } catch (const std::exception&) {
    return Outcome::reject("malformed-document");
  }
  if (doc.recipient != r.citizen) return Outcome::reject("wrong-recipient");
  if (doc.ciphertext.size() > kMaxDocumentBytes) return Outcome::reject("document-too-large");

  Json events = Json::array();
  // The contract asks the institution for the document, then hands the
  // sealed document to the citizen, all within this one transaction.
  transition(r, RequestStatus::DocumentRequested);
  events.push_back(status_event(r));
  r.document = std::move(doc);
  transition(r, RequestStatus::Fulfilled);
  events.push_back(status_event(r));
  r.step_receipts.push_back(to_hex(ctx.tx_id));
  state["requests"][r.request_id] = r.to_json();
  return Outcome::accept(std::move(events));
}

}  // namespace

ContractDescriptor service_contract() {
  ContractDescriptor d;
  d.contract_id = kServiceContract;
  d.initial_state = Json{{"requests", Json::object()}};

  FieldRule document = contracts::object_rule({
      {"recipient", string_rule(StringFormat::WalletAddress)},
      {"ephemeral_public", string_rule(StringFormat::NonEmpty, 64)},
      {"nonce", string_rule(StringFormat::NonEmpty, 64)},
      {"ciphertext", string_rule(StringFormat::Any, (kMaxDocumentBytes + 2) / 3 * 4 + 4)},
      {"tag", string_rule(StringFormat::NonEmpty, 64)},
  });

  d.actions["request"] = ActionSpec{
      contracts::object_rule({{"institution", string_rule(StringFormat::WalletAddress)},
                              {"service_kind", enum_rule(service_kinds())},
                              {"citizen_public_key", string_rule(StringFormat::DigestHex)}}),
      service_request_handler};
  d.actions["authenticate"] = ActionSpec{
      contracts::object_rule({{"request_id", string_rule(StringFormat::DigestHex)},
                              {"citizen_authenticated", bool_rule()},
                              {"obtainable", bool_rule()}}),
      service_authenticate_handler};
  d.actions["fulfill"] = ActionSpec{
      contracts::object_rule({{"request_id", string_rule(StringFormat::DigestHex)}, {"document", document}}),
      service_fulfill_handler};

  d.views["status"] = ViewSpec{
      contracts::object_rule({{"request_id", string_rule(StringFormat::DigestHex)}}),
      [](const Json& state, const Json& args) {
        const auto id = args.at("request_id").get<std::string>();
        const auto& requests = state.at("requests");
        const auto it = requests.find(id);
        if (it == requests.end()) return Json{{"found", false}, {"request_id", id}};
        return Json{{"found", true}, {"request", *it}};
      }};
  return d;
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

std::string_view to_string(EnergySource s) {
  switch (s) {
    case EnergySource::Solar: return "solar";
    case EnergySource::Wind: return "wind";
    case EnergySource::Other: return "other";
  }
  return "?";
}

std::string_view to_string(EnergyEntryKind k) {
  switch (k) {
    case EnergyEntryKind::Production: return "production";
    case EnergyEntryKind::TradeOut: return "trade-out";
    case EnergyEntryKind::TradeIn: return "trade-in";
  }
  return "?";
}

Json EnergyLedgerEntry::to_json() const {
  Json j{{"building", building.to_string()},
         {"kind", std::string(workflows::to_string(kind))},
         {"amount_wh", amount_wh},
         {"tick", tick}};
  if (source) j["source"] = std::string(workflows::to_string(*source));
  return j;
}

CarbonReport carbon_report(const EnergyAccount& account) {
  CarbonReport r;
  r.renewable_wh = account.renewable_wh;
  r.total_wh = account.produced_wh;
  // renewable <= total <= 1e18-ish, so widen before scaling by 1e6.
  r.renewable_share_ppm = r.total_wh == 0
                              ? 0
                              : static_cast<std::int64_t>(static_cast<Int128>(r.renewable_wh) * 1'000'000 /
                                                          r.total_wh);
  return r;
}

Json CarbonReport::to_json() const {
  return Json{{"renewable_wh", renewable_wh}, {"total_wh", total_wh}, {"renewable_share_ppm", renewable_share_ppm}};
}

namespace {

EnergyAccount account_from_json(const Json& j) {
  return EnergyAccount{j.at("produced_wh").get<std::int64_t>(), j.at("renewable_wh").get<std::int64_t>(),
                       j.at("traded_in_wh").get<std::int64_t>(), j.at("traded_out_wh").get<std::int64_t>()};
}

Json account_json(const EnergyAccount& a) {
  return Json{{"produced_wh", a.produced_wh},
              {"renewable_wh", a.renewable_wh},
              {"traded_in_wh", a.traded_in_wh},
              {"traded_out_wh", a.traded_out_wh},
              {"balance_wh", a.balance_wh()}};
}

EnergyAccount load_account(const Json& state, const std::string& building) {
  const auto& accounts = state.at("accounts");
  const auto it = accounts.find(building);
  return it == accounts.end() ? EnergyAccount{} : account_from_json(*it);
}

EnergySource parse_source(const std::string& s) {
  if (s == "solar") return EnergySource::Solar;
  if (s == "wind") return EnergySource::Wind;
  return EnergySource::Other;
}

Outcome energy_produce_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  const auto amount = env.payload.at("amount_wh").get<std::int64_t>();
  if (amount <= 0) return Outcome::reject("non-positive-amount");
  const auto source = parse_source(env.payload.at("source").get<std::string>());
  const std::string building = sender_key(env);

  EnergyAccount account = load_account(state, building);
  account.produced_wh += amount;
  if (source != EnergySource::Other) account.renewable_wh += amount;
  state["accounts"][building] = account_json(account);

  const EnergyLedgerEntry entry{env.sender, EnergyEntryKind::Production, source, amount, ctx.tick};
  return Outcome::accept(Json::array({entry.to_json()}));
}

Outcome energy_trade_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  const auto amount = env.payload.at("amount_wh").get<std::int64_t>();
  if (amount <= 0) return Outcome::reject("non-positive-amount");
  const auto buyer = WalletAddress::parse(env.payload.at("buyer").get<std::string>());
  if (buyer == env.sender) return Outcome::reject("self-trade");

  EnergyAccount seller_account = load_account(state, sender_key(env));
  if (seller_account.balance_wh() < amount) return Outcome::reject("insufficient-storage");
  EnergyAccount buyer_account = load_account(state, buyer.to_string());
  seller_account.traded_out_wh += amount;
  buyer_account.traded_in_wh += amount;
  state["accounts"][sender_key(env)] = account_json(seller_account);
  state["accounts"][buyer.to_string()] = account_json(buyer_account);

  const EnergyLedgerEntry out{env.sender, EnergyEntryKind::TradeOut, std::nullopt, amount, ctx.tick};
  const EnergyLedgerEntry in{buyer, EnergyEntryKind::TradeIn, std::nullopt, amount, ctx.tick};
  return Outcome::accept(Json::array({out.to_json(), in.to_json()}));
}

}  // namespace

ContractDescriptor energy_contract() {
  ContractDescriptor d;
  d.contract_id = kEnergyContract;
  d.initial_state = Json{{"accounts", Json::object()}};

  // Amounts may be non-positive at the schema level so the handler can
  // report them as non-positive-amount rather than as a schema error.
  const FieldRule amount = int_rule(-kMaxAmountWh, kMaxAmountWh);
  d.actions["produce"] = ActionSpec{
      contracts::object_rule({{"source", enum_rule({"other", "solar", "wind"})}, {"amount_wh", amount}}),
      energy_produce_handler};
  d.actions["trade"] = ActionSpec{
      contracts::object_rule({{"buyer", string_rule(StringFormat::WalletAddress)}, {"amount_wh", amount}}),
      energy_trade_handler};

  const FieldRule building_args = contracts::object_rule({{"building", string_rule(StringFormat::WalletAddress)}});
  d.views["balance"] = ViewSpec{building_args, [](const Json& state, const Json& args) {
                                  const auto building = args.at("building").get<std::string>();
                                  Json j = account_json(load_account(state, building));
                                  j["building"] = building;
                                  return j;
                                }};
  d.views["carbon"] = ViewSpec{building_args, [](const Json& state, const Json& args) {
                                 const auto building = args.at("building").get<std::string>();
                                 Json j = carbon_report(load_account(state, building)).to_json();
                                 j["building"] = building;
                                 return j;
                               }};
  return d;
}

// ---------------------------------------------------------------------------
// Path notarization
// ---------------------------------------------------------------------------

Json PathPlan::to_json() const {
  Json wps = Json::array();
  for (const auto& p : waypoints) wps.push_back(point_json(p));
  return Json{{"plan_id", plan_id},
              {"vehicle", vehicle.to_string()},
              {"waypoints", std::move(wps)},
              {"tolerance_cm", tolerance_cm},
              {"registered_tick", registered_tick}};
}

PathPlan PathPlan::from_json(const Json& j) {
  PathPlan p;
  p.plan_id = j.at("plan_id").get<std::string>();
  p.vehicle = WalletAddress::parse(j.at("vehicle").get<std::string>());
  for (const auto& w : j.at("waypoints")) p.waypoints.push_back(point_from_json(w));
  p.tolerance_cm = j.at("tolerance_cm").get<std::int64_t>();
  p.registered_tick = j.at("registered_tick").get<std::uint64_t>();
  return p;
}

Json PathCheckpoint::to_json() const {
  return Json{{"vehicle", vehicle.to_string()},
              {"waypoint_index", waypoint_index},
              {"observed", point_json(observed)},
              {"tick", tick}};
}

PathCheckpoint PathCheckpoint::from_json(const Json& j) {
  return PathCheckpoint{WalletAddress::parse(j.at("vehicle").get<std::string>()),
                        j.at("waypoint_index").get<std::uint64_t>(), point_from_json(j.at("observed")),
                        j.at("tick").get<std::uint64_t>()};
}

std::string_view to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::Deviation: return "deviation";
    case AnomalyKind::Missing: return "missing";
    case AnomalyKind::OutOfOrder: return "out-of-order";
  }
  return "?";
}

Json Anomaly::to_json() const {
  Json j{{"kind", std::string(workflows::to_string(kind))}, {"waypoint_index", waypoint_index}};
  if (distance_cm) j["distance_cm"] = *distance_cm;
  return j;
}

std::uint64_t isqrt(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(n)));
  while (r > 0 && static_cast<UInt128>(r) * r > n) --r;
  while (static_cast<UInt128>(r + 1) * (r + 1) <= n) ++r;
  return r;
}

std::vector<Anomaly> audit_checkpoints(const PathPlan& plan, std::span<const PathCheckpoint> checkpoints) {
  std::vector<Anomaly> out;
  const auto tol = static_cast<std::uint64_t>(plan.tolerance_cm);
  std::vector<bool> seen(plan.waypoints.size(), false);
  std::optional<std::uint64_t> highest;

  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto& c = checkpoints[i];
    if (c.waypoint_index >= plan.waypoints.size()) continue;  // rejected by the handler
    const Point& target = plan.waypoints[c.waypoint_index];
    const auto dx = static_cast<std::uint64_t>(std::abs(c.observed.x_cm - target.x_cm));
    const auto dy = static_cast<std::uint64_t>(std::abs(c.observed.y_cm - target.y_cm));
    const std::uint64_t d2 = dx * dx + dy * dy;
    if (d2 > tol * tol) out.push_back({AnomalyKind::Deviation, c.waypoint_index, isqrt(d2)});
    if (i > 0 && c.waypoint_index < checkpoints[i - 1].waypoint_index) {
      out.push_back({AnomalyKind::OutOfOrder, c.waypoint_index, std::nullopt});
    }
    seen[c.waypoint_index] = true;
    highest = std::max(highest.value_or(0), c.waypoint_index);
  }
  if (highest) {
    for (std::uint64_t j = 0; j < *highest; ++j) {
      if (!seen[j]) out.push_back({AnomalyKind::Missing, j, std::nullopt});
    }
  }
  std::sort(out.begin(), out.end(), [](const Anomaly& a, const Anomaly& b) {
    return std::tie(a.waypoint_index, a.kind, a.distance_cm) < std::tie(b.waypoint_index, b.kind, b.distance_cm);
  });
  return out;
}

namespace {

Outcome path_plan_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  const auto& wps = env.payload.at("waypoints");
  if (wps.size() < 2) return Outcome::reject("too-few-waypoints");
  PathPlan plan;
  for (const auto& w : wps) {
    if (w.size() != 2) return Outcome::reject("malformed-waypoint");
    plan.waypoints.push_back(point_from_json(w));
  }
  plan.tolerance_cm = env.payload.at("tolerance_cm").get<std::int64_t>();
  if (plan.tolerance_cm <= 0) return Outcome::reject("non-positive-tolerance");
  plan.plan_id = to_hex(ctx.tx_id);
  plan.vehicle = env.sender;
  plan.registered_tick = ctx.tick;

  // A new plan replaces the previous one and starts a fresh checkpoint log.
  state["vehicles"][sender_key(env)] = Json{{"plan", plan.to_json()}, {"checkpoints", Json::array()}};
  return Outcome::accept(Json::array({Json{{"plan_id", plan.plan_id}, {"waypoints", plan.waypoints.size()}}}));
}

Outcome path_checkpoint_handler(Json& state, const ContractEnvelope& env, const ExecutionContext&) {
  auto& vehicles = state["vehicles"];
  const auto it = vehicles.find(sender_key(env));
  if (it == vehicles.end()) return Outcome::reject("no-plan");
  const auto& plan = (*it)["plan"];

  const auto& observed = env.payload.at("observed");
  if (observed.size() != 2) return Outcome::reject("malformed-waypoint");
  PathCheckpoint cp{env.sender, env.payload.at("waypoint_index").get<std::uint64_t>(), point_from_json(observed),
                    env.payload.at("tick").get<std::uint64_t>()};
  if (cp.waypoint_index >= plan.at("waypoints").size()) return Outcome::reject("waypoint-out-of-range");
  auto& log = (*it)["checkpoints"];
  if (!log.empty() && cp.tick < log.back().at("tick").get<std::uint64_t>()) {
    return Outcome::reject("non-monotonic-tick");
  }
  Json event = cp.to_json();
  log.push_back(cp.to_json());
  return Outcome::accept(Json::array({std::move(event)}));
}

}  // namespace

ContractDescriptor path_contract() {
  ContractDescriptor d;
  d.contract_id = kPathContract;
  d.initial_state = Json{{"vehicles", Json::object()}};

  d.actions["plan"] = ActionSpec{
      contracts::object_rule({{"waypoints", array_of(point_rule(), 4096)},
                              {"tolerance_cm", int_rule(-kMaxCoordinateCm, kMaxCoordinateCm)}}),
      path_plan_handler};
  d.actions["checkpoint"] = ActionSpec{
      contracts::object_rule({{"waypoint_index", int_rule(0, 4096)},
                              {"observed", point_rule()},
                              {"tick", int_rule(0, kMaxTick)}}),
      path_checkpoint_handler};

  const FieldRule vehicle_args = contracts::object_rule({{"vehicle", string_rule(StringFormat::WalletAddress)}});
  d.views["plan"] = ViewSpec{vehicle_args, [](const Json& state, const Json& args) {
                               const auto& vehicles = state.at("vehicles");
                               const auto it = vehicles.find(args.at("vehicle").get<std::string>());
                               if (it == vehicles.end()) {
                                 throw ContractError(ContractErrc::ViewFailed, "no-plan");
                               }
                               return (*it)["plan"];
                             }};
  d.views["audit"] = ViewSpec{vehicle_args, [](const Json& state, const Json& args) {
                                const auto vehicle = args.at("vehicle").get<std::string>();
                                const auto& vehicles = state.at("vehicles");
                                const auto it = vehicles.find(vehicle);
                                if (it == vehicles.end()) {
                                  throw ContractError(ContractErrc::ViewFailed, "no-plan");
                                }
                                const PathPlan plan = PathPlan::from_json((*it)["plan"]);
                                std::vector<PathCheckpoint> cps;
                                for (const auto& c : (*it)["checkpoints"]) cps.push_back(PathCheckpoint::from_json(c));
                                Json anomalies = Json::array();
                                for (const auto& a : audit_checkpoints(plan, cps)) anomalies.push_back(a.to_json());
                                Json arrival = nullptr;
                                for (const auto& c : cps) {
                                  if (c.waypoint_index + 1 == plan.waypoints.size()) {
                                    arrival = c.tick;
                                    break;
                                  }
                                }
                                return Json{{"vehicle", vehicle},
                                            {"plan_id", plan.plan_id},
                                            {"checkpoints", cps.size()},
                                            {"anomalies", std::move(anomalies)},
                                            {"arrival_tick", std::move(arrival)}};
                              }};
  return d;
}

// ---------------------------------------------------------------------------
// Transport statistics
// ---------------------------------------------------------------------------

Json TransportEvent::to_json() const {
  return Json{{"rider", rider.to_string()},
              {"origin_stop", origin_stop},
              {"destination_stop", destination_stop},
              {"wait_s", wait_s},
              {"tick", tick}};
}

TransportEvent TransportEvent::from_json(const Json& j) {
  return TransportEvent{WalletAddress::parse(j.at("rider").get<std::string>()), j.at("origin_stop").get<std::string>(),
                        j.at("destination_stop").get<std::string>(), j.at("wait_s").get<std::int64_t>(),
                        j.at("tick").get<std::uint64_t>()};
}

bool TransportFilter::matches(const TransportEvent& e) const {
  if (origin_stop && e.origin_stop != *origin_stop) return false;
  if (destination_stop && e.destination_stop != *destination_stop) return false;
  if (from_tick && e.tick < *from_tick) return false;
  if (to_tick && e.tick > *to_tick) return false;
  return true;
}

TransportFilter TransportFilter::from_json(const Json& j) {
  TransportFilter f;
  if (j.contains("origin_stop")) f.origin_stop = j["origin_stop"].get<std::string>();
  if (j.contains("destination_stop")) f.destination_stop = j["destination_stop"].get<std::string>();
  if (j.contains("from_tick")) f.from_tick = j["from_tick"].get<std::uint64_t>();
  if (j.contains("to_tick")) f.to_tick = j["to_tick"].get<std::uint64_t>();
  return f;
}

Json TransportStats::to_json() const {
  Json top = Json::array();
  for (const auto& t : top_destinations) top.push_back(Json{{"stop", t.stop}, {"count", t.count}});
  Json waits = Json::array();
  for (const auto& w : mean_wait_s) {
    waits.push_back(Json{{"stop", w.stop}, {"mean_s", w.mean_s}, {"remainder_us", w.remainder_us}, {"events", w.events}});
  }
  return Json{{"total_events", total_events}, {"top_destinations", std::move(top)}, {"mean_wait_s", std::move(waits)}};
}

TransportStats aggregate_transport(std::span<const TransportEvent> events, const TransportFilter& filter) {
  TransportStats stats;
  std::map<std::string, std::uint64_t> destinations;
  std::map<std::string, std::pair<std::int64_t, std::uint64_t>> waits;  // stop -> (sum, n)
  for (const auto& e : events) {
    if (!filter.matches(e)) continue;
    ++stats.total_events;
    ++destinations[e.destination_stop];
    auto& [sum, n] = waits[e.origin_stop];
    sum += e.wait_s;
    ++n;
  }
  for (const auto& [stop, count] : destinations) stats.top_destinations.push_back({stop, count});
  std::stable_sort(stats.top_destinations.begin(), stats.top_destinations.end(),
                   [](const StopCount& a, const StopCount& b) { return a.count > b.count; });
  for (const auto& [stop, acc] : waits) {
    const auto [sum, n] = acc;
    const auto count = static_cast<std::int64_t>(n);
    stats.mean_wait_s.push_back({stop, sum / count, (sum % count) * 1'000'000 / count, n});
  }
  return stats;
}

namespace {

Outcome transport_event_handler(Json& state, const ContractEnvelope& env, const ExecutionContext& ctx) {
  const TransportEvent e{env.sender, env.payload.at("origin_stop").get<std::string>(),
                         env.payload.at("destination_stop").get<std::string>(),
                         env.payload.at("wait_s").get<std::int64_t>(), ctx.tick};
  Json record = e.to_json();
  state["events"].push_back(record);
  return Outcome::accept(Json::array({std::move(record)}));
}

}  // namespace

ContractDescriptor transport_contract() {
  ContractDescriptor d;
  d.contract_id = kTransportContract;
  d.initial_state = Json{{"events", Json::array()}};

  d.actions["event"] = ActionSpec{
      contracts::object_rule({{"origin_stop", string_rule(StringFormat::NonEmpty, 64)},
                              {"destination_stop", string_rule(StringFormat::NonEmpty, 64)},
                              {"wait_s", int_rule(0, 86'400 * 365)}}),
      transport_event_handler};

  d.views["stats"] = ViewSpec{
      contracts::object_rule({{"origin_stop", optional(string_rule(StringFormat::NonEmpty, 64))},
                              {"destination_stop", optional(string_rule(StringFormat::NonEmpty, 64))},
                              {"from_tick", optional(int_rule(0, kMaxTick))},
                              {"to_tick", optional(int_rule(0, kMaxTick))}}),
      [](const Json& state, const Json& args) {
        std::vector<TransportEvent> events;
        for (const auto& e : state.at("events")) events.push_back(TransportEvent::from_json(e));
        return aggregate_transport(events, TransportFilter::from_json(args)).to_json();
      }};
  return d;
}

// ---------------------------------------------------------------------------
// Registry and readers
// ---------------------------------------------------------------------------

void register_civic_contracts(Registry& registry) {
  registry.register_contract(service_contract());
  registry.register_contract(energy_contract());
  registry.register_contract(path_contract());
  registry.register_contract(transport_contract());
}

Registry civic_registry() {
  Registry r;
  register_civic_contracts(r);
  return r;
}

std::optional<ServiceRequest> find_service_request(const WorldState& state, std::string_view request_id) {
  const auto& requests = state.contract_state(kServiceContract).at("requests");
  const auto it = requests.find(std::string(request_id));
  if (it == requests.end()) return std::nullopt;
  return ServiceRequest::from_json(*it);
}

EnergyAccount energy_account(const WorldState& state, const WalletAddress& building) {
  return load_account(state.contract_state(kEnergyContract), building.to_string());
}

CarbonReport carbon_report(const WorldState& state, const WalletAddress& building) {
  return carbon_report(energy_account(state, building));
}

std::optional<PathPlan> find_path_plan(const WorldState& state, const WalletAddress& vehicle) {
  const auto& vehicles = state.contract_state(kPathContract).at("vehicles");
  const auto it = vehicles.find(vehicle.to_string());
  if (it == vehicles.end()) return std::nullopt;
  return PathPlan::from_json(it->at("plan"));
}

std::vector<PathCheckpoint> path_checkpoints(const WorldState& state, const WalletAddress& vehicle) {
  std::vector<PathCheckpoint> out;
  const auto& vehicles = state.contract_state(kPathContract).at("vehicles");
  const auto it = vehicles.find(vehicle.to_string());
  if (it == vehicles.end()) return out;
  for (const auto& c : it->at("checkpoints")) out.push_back(PathCheckpoint::from_json(c));
  return out;
}

std::optional<std::uint64_t> arrival_tick(const WorldState& state, const WalletAddress& vehicle) {
  const auto plan = find_path_plan(state, vehicle);
  if (!plan) return std::nullopt;
  for (const auto& c : path_checkpoints(state, vehicle)) {
    if (c.waypoint_index + 1 == plan->waypoints.size()) return c.tick;
  }
  return std::nullopt;
}

std::vector<Anomaly> detect_hijack(const WorldState& state, const WalletAddress& vehicle) {
  const auto plan = find_path_plan(state, vehicle);
  if (!plan) throw WorkflowError(WorkflowErrc::NoPlan, "no plan registered for " + vehicle.to_string());
  return audit_checkpoints(*plan, path_checkpoints(state, vehicle));
}

std::vector<TransportEvent> transport_events(const WorldState& state) {
  std::vector<TransportEvent> out;
  for (const auto& e : state.contract_state(kTransportContract).at("events")) out.push_back(TransportEvent::from_json(e));
  return out;
}

TransportStats transport_stats(const WorldState& state, const TransportFilter& filter) {
  return aggregate_transport(transport_events(state), filter);
}

// ---------------------------------------------------------------------------
// Envelope builders
// ---------------------------------------------------------------------------

namespace {

ContractEnvelope envelope(const char* contract, const char* action, const WalletAddress& sender, Json payload) {
  ContractEnvelope env;
  env.contract_id = contract;
  env.action = action;
  env.sender = sender;
  env.payload = std::move(payload);
  return env;
}

}  // namespace

ContractEnvelope service_request_envelope(const identity::KeyPair& citizen, const WalletAddress& institution,
                                          std::string_view service_kind) {
  return envelope(kServiceContract, "request", citizen.address(),
                  Json{{"institution", institution.to_string()},
                       {"service_kind", std::string(service_kind)},
                       {"citizen_public_key", to_hex(citizen.public_key)}});
}

ContractEnvelope service_authenticate_envelope(const WalletAddress& institution, std::string_view request_id,
                                               bool citizen_authenticated, bool obtainable) {
  return envelope(kServiceContract, "authenticate", institution,
                  Json{{"request_id", std::string(request_id)},
                       {"citizen_authenticated", citizen_authenticated},
                       {"obtainable", obtainable}});
}

ContractEnvelope service_fulfill_envelope(const WalletAddress& institution, std::string_view request_id,
                                          const identity::CipherEnvelope& document) {
  return envelope(kServiceContract, "fulfill", institution,
                  Json{{"request_id", std::string(request_id)}, {"document", document.to_json()}});
}

ContractEnvelope energy_produce_envelope(const WalletAddress& building, EnergySource source, std::int64_t amount_wh) {
  return envelope(kEnergyContract, "produce", building,
                  Json{{"source", std::string(to_string(source))}, {"amount_wh", amount_wh}});
}

ContractEnvelope energy_trade_envelope(const WalletAddress& seller, const WalletAddress& buyer, std::int64_t amount_wh) {
  return envelope(kEnergyContract, "trade", seller, Json{{"buyer", buyer.to_string()}, {"amount_wh", amount_wh}});
}

ContractEnvelope path_plan_envelope(const WalletAddress& vehicle, std::span<const Point> waypoints,
                                    std::int64_t tolerance_cm) {
  Json wps = Json::array();
  for (const auto& p : waypoints) wps.push_back(point_json(p));
  return envelope(kPathContract, "plan", vehicle, Json{{"waypoints", std::move(wps)}, {"tolerance_cm", tolerance_cm}});
}

ContractEnvelope path_checkpoint_envelope(const WalletAddress& vehicle, std::uint64_t waypoint_index, Point observed,
                                          std::uint64_t tick) {
  return envelope(kPathContract, "checkpoint", vehicle,
                  Json{{"waypoint_index", waypoint_index}, {"observed", point_json(observed)}, {"tick", tick}});
}

ContractEnvelope transport_event_envelope(const WalletAddress& rider, std::string_view origin_stop,
                                          std::string_view destination_stop, std::int64_t wait_s) {
  return envelope(kTransportContract, "event", rider,
                  Json{{"origin_stop", std::string(origin_stop)},
                       {"destination_stop", std::string(destination_stop)},
                       {"wait_s", wait_s}});
}

}  // namespace smartcity::workflows
