#pragma once

// Civic workflows implemented as contracts on the access layer:
//
//   service    actions request / authenticate / fulfill, view status
//   energy     actions produce / trade,                  views balance, carbon
//   path       actions plan / checkpoint,                views plan, audit
//   transport  action  event,                            view  stats
//
// Quantities are integers in smallest units: Wh, centimetres, seconds.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcity/contracts.hpp"
#include "smartcity/identity.hpp"

namespace smartcity::workflows {

using contracts::ContractDescriptor;
using contracts::ContractEnvelope;
using contracts::Registry;
using contracts::WorldState;
using identity::WalletAddress;

inline constexpr const char* kServiceContract = "service";
inline constexpr const char* kEnergyContract = "energy";
inline constexpr const char* kPathContract = "path";
inline constexpr const char* kTransportContract = "transport";

/// Largest document ciphertext accepted on-chain.
inline constexpr std::size_t kMaxDocumentBytes = 64 * 1024;
/// Bound on any single energy amount; keeps running sums far from overflow.
inline constexpr std::int64_t kMaxAmountWh = 1'000'000'000'000'000;
/// Coordinates are limited to +/- 10,000 km so squared distances fit in 64 bits.
inline constexpr std::int64_t kMaxCoordinateCm = 1'000'000'000;

enum class WorkflowErrc { NoPlan };
using WorkflowError = CodedError<WorkflowErrc>;

// ---------------------------------------------------------------------------
// Service requests
// ---------------------------------------------------------------------------

enum class RequestStatus { Submitted, Authenticated, DocumentRequested, Fulfilled, Rejected };

std::string_view to_string(RequestStatus s);
RequestStatus parse_request_status(std::string_view s);
bool is_legal_transition(RequestStatus from, RequestStatus to);

inline const std::vector<std::string>& service_kinds() {
  static const std::vector<std::string> kinds{"birth-certificate", "identity-card",
                                              "residence-certificate", "taxi-passenger-authentication"};
  return kinds;
}

struct ServiceRequest {
  std::string request_id;  // hex tx_id of the submitting transaction
  WalletAddress citizen;
  identity::PublicKey citizen_public_key{};
  WalletAddress institution;
  std::string service_kind;
  RequestStatus status = RequestStatus::Submitted;
  std::vector<RequestStatus> status_history;
  std::optional<std::string> reason;
  std::optional<identity::CipherEnvelope> document;
  std::vector<std::string> step_receipts;
  std::uint64_t submitted_tick = 0;

  Json to_json() const;
  static ServiceRequest from_json(const Json& j);
};

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

enum class EnergySource { Solar, Wind, Other };
enum class EnergyEntryKind { Production, TradeOut, TradeIn };

std::string_view to_string(EnergySource s);
std::string_view to_string(EnergyEntryKind k);

struct EnergyLedgerEntry {
  WalletAddress building;
  EnergyEntryKind kind = EnergyEntryKind::Production;
  std::optional<EnergySource> source;  // productions only
  std::int64_t amount_wh = 0;
  std::uint64_t tick = 0;

  Json to_json() const;
};

struct EnergyAccount {
  std::int64_t produced_wh = 0;
  std::int64_t renewable_wh = 0;
  std::int64_t traded_in_wh = 0;
  std::int64_t traded_out_wh = 0;

  std::int64_t balance_wh() const { return produced_wh + traded_in_wh - traded_out_wh; }
};

struct CarbonReport {
  std::int64_t renewable_wh = 0;
  std::int64_t total_wh = 0;
  std::int64_t renewable_share_ppm = 0;  // 0 when nothing was produced

  Json to_json() const;
  bool operator==(const CarbonReport&) const = default;
};

CarbonReport carbon_report(const EnergyAccount& account);

// ---------------------------------------------------------------------------
// Path notarization
// ---------------------------------------------------------------------------

struct Point {
  std::int64_t x_cm = 0;
  std::int64_t y_cm = 0;

  bool operator==(const Point&) const = default;
};

struct PathPlan {
  std::string plan_id;  // hex tx_id of the registering transaction
  WalletAddress vehicle;
  std::vector<Point> waypoints;
  std::int64_t tolerance_cm = 0;
  std::uint64_t registered_tick = 0;

  Json to_json() const;
  static PathPlan from_json(const Json& j);
};

struct PathCheckpoint {
  WalletAddress vehicle;
  std::uint64_t waypoint_index = 0;
  Point observed;
  std::uint64_t tick = 0;

  Json to_json() const;
  static PathCheckpoint from_json(const Json& j);
};

enum class AnomalyKind { Deviation, Missing, OutOfOrder };

std::string_view to_string(AnomalyKind k);

struct Anomaly {
  AnomalyKind kind = AnomalyKind::Deviation;
  std::uint64_t waypoint_index = 0;
  std::optional<std::uint64_t> distance_cm;  // deviations only

  Json to_json() const;
  auto operator<=>(const Anomaly&) const = default;
};

/// floor(sqrt(n)), exact for all 64-bit inputs.
std::uint64_t isqrt(std::uint64_t n);

/// Audit of notarized checkpoints (in notarization order) against a plan.
///   deviation     squared distance to the planned waypoint exceeds tolerance^2
///   missing       an index below the highest notarized index was never notarized
///   out-of-order  a checkpoint's index is lower than its predecessor's
/// Sorted by (waypoint_index, kind, distance).
std::vector<Anomaly> audit_checkpoints(const PathPlan& plan, std::span<const PathCheckpoint> checkpoints);

// ---------------------------------------------------------------------------
// Transport statistics
// ---------------------------------------------------------------------------

/// The only fields kept for a ride; nothing else about the rider is recorded.
struct TransportEvent {
  WalletAddress rider;
  std::string origin_stop;
  std::string destination_stop;
  std::int64_t wait_s = 0;
  std::uint64_t tick = 0;

  Json to_json() const;
  static TransportEvent from_json(const Json& j);
};

struct TransportFilter {
  std::optional<std::string> origin_stop;
  std::optional<std::string> destination_stop;
  std::optional<std::uint64_t> from_tick;
  std::optional<std::uint64_t> to_tick;

  bool matches(const TransportEvent& e) const;
  static TransportFilter from_json(const Json& j);
};

struct StopCount {
  std::string stop;
  std::uint64_t count = 0;
  bool operator==(const StopCount&) const = default;
};

/// Mean wait at an origin stop: mean_s = floor(sum / n) and the fractional
/// part expressed as floor((sum mod n) * 1e6 / n) micro-seconds.
struct StopWait {
  std::string stop;
  std::int64_t mean_s = 0;
  std::int64_t remainder_us = 0;
  std::uint64_t events = 0;
  bool operator==(const StopWait&) const = default;
};

struct TransportStats {
  std::uint64_t total_events = 0;
  std::vector<StopCount> top_destinations;  // count desc, stop asc
  std::vector<StopWait> mean_wait_s;        // stop asc

  Json to_json() const;
  bool operator==(const TransportStats&) const = default;
};

TransportStats aggregate_transport(std::span<const TransportEvent> events, const TransportFilter& filter);

// ---------------------------------------------------------------------------
// Contracts and state readers
// ---------------------------------------------------------------------------

ContractDescriptor service_contract();
ContractDescriptor energy_contract();
ContractDescriptor path_contract();
ContractDescriptor transport_contract();

void register_civic_contracts(Registry& registry);
Registry civic_registry();

std::optional<ServiceRequest> find_service_request(const WorldState& state, std::string_view request_id);
EnergyAccount energy_account(const WorldState& state, const WalletAddress& building);
CarbonReport carbon_report(const WorldState& state, const WalletAddress& building);
std::optional<PathPlan> find_path_plan(const WorldState& state, const WalletAddress& vehicle);
std::vector<PathCheckpoint> path_checkpoints(const WorldState& state, const WalletAddress& vehicle);
/// Tick of the first checkpoint at the final waypoint, if any.
std::optional<std::uint64_t> arrival_tick(const WorldState& state, const WalletAddress& vehicle);
/// Throws WorkflowError(NoPlan).
std::vector<Anomaly> detect_hijack(const WorldState& state, const WalletAddress& vehicle);
std::vector<TransportEvent> transport_events(const WorldState& state);
TransportStats transport_stats(const WorldState& state, const TransportFilter& filter = {});

// ---------------------------------------------------------------------------
// Envelope builders used by front ends (scenario files, CLI, tests)
// ---------------------------------------------------------------------------

ContractEnvelope service_request_envelope(const identity::KeyPair& citizen, const WalletAddress& institution,
                                          std::string_view service_kind);
ContractEnvelope service_authenticate_envelope(const WalletAddress& institution, std::string_view request_id,
                                               bool citizen_authenticated, bool obtainable);
ContractEnvelope service_fulfill_envelope(const WalletAddress& institution, std::string_view request_id,
                                          const identity::CipherEnvelope& document);
ContractEnvelope energy_produce_envelope(const WalletAddress& building, EnergySource source,
                                         std::int64_t amount_wh);
ContractEnvelope energy_trade_envelope(const WalletAddress& seller, const WalletAddress& buyer,
                                       std::int64_t amount_wh);
ContractEnvelope path_plan_envelope(const WalletAddress& vehicle, std::span<const Point> waypoints,
                                    std::int64_t tolerance_cm);
ContractEnvelope path_checkpoint_envelope(const WalletAddress& vehicle, std::uint64_t waypoint_index,
                                          Point observed, std::uint64_t tick);
ContractEnvelope transport_event_envelope(const WalletAddress& rider, std::string_view origin_stop,
                                          std::string_view destination_stop, std::int64_t wait_s);

}  // namespace smartcity::workflows
