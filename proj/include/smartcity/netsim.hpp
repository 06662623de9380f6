#pragma once

// Deterministic discrete-event simulation of the replicated ledger.
//
// Protocol (all times in logical ticks):
//   * A submitted transaction enters the origin's mempool and is sent to every
//     other node once (no re-gossip).
//   * Round r starts at tick r * proposal_period; its proposer is node r mod N.
//     The proposer packs up to max_block_txs mempool transactions (arrival
//     order) on top of its tip, votes for it, and sends the proposal to all.
//   * A voter accepts iff the block extends its tip, is internally valid and
//     every envelope passes contract validation, and it is not locked on a
//     different block at that height. Accepting locks the height until the
//     voter learns the outcome. Votes go back to the proposer only.
//   * The proposer commits once accepts reach the strict majority floor(N/2)+1
//     and aborts once that is impossible or at the deadline (2 * max_delay
//     ticks after the proposal; missing votes count as rejects). It appends
//     committed blocks and sends Commit / Abort to every node.
//   * Lagging nodes catch up by requesting the full chain from a peer that is
//     ahead and applying the fork rule: longer wins, equal length goes to the
//     lexicographically smaller tip hash. After its height changes, a node with
//     nothing to propose broadcasts its height during its next
//     heartbeat_rounds rounds.
//
// Each tick: (1) scheduled submissions for this tick, (2) delivery of due
// messages in (deliver_at, send sequence) order, (3) deadline handling of open
// rounds in node order, (4) the round's proposer acts if the tick starts a
// round. Every message delay is at least one tick, so nothing sent during a
// tick is delivered in the same tick.
//
// Randomness: one std::mt19937_64 stream per directed edge (from, to), seeded
// with splitmix64(seed + golden_gamma * (from * N + to + 1)). Each send first
// draws the drop decision (only when 0 < drop_ppm < 1e6: uniform in [0, 1e6)
// compared against drop_ppm), then, if delivered and min < max, the delay
// (uniform in [min, max]). Bounded draws use rejection sampling.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "smartcity/contracts.hpp"
#include "smartcity/error.hpp"
#include "smartcity/identity.hpp"
#include "smartcity/ledger.hpp"

namespace smartcity::netsim {

using ledger::Block;
using ledger::Chain;
using ledger::Transaction;

using NodeId = std::size_t;

enum class NetsimErrc { BadSignature, InvalidEnvelope, NotProposer, EmptyMempool, InvalidCandidate, InvalidConfig };

using NetsimError = CodedError<NetsimErrc>;

enum class Behavior { Honest, ByzantineInvalidProposer, Silent };

std::string_view to_string(Behavior b);
Behavior parse_behavior(std::string_view s);

inline constexpr std::uint32_t kPpm = 1'000'000;

struct NetworkConfig {
  std::size_t nodes = 5;
  std::vector<Behavior> behaviors;  // empty: all honest
  std::uint64_t min_delay = 1;
  std::uint64_t max_delay = 5;
  std::uint32_t drop_ppm = 0;  // drop probability in parts per million
  std::uint64_t seed = 0;
  std::uint64_t proposal_period = 0;  // 0: 3 * max_delay + 1
  std::size_t max_block_txs = 16;
  std::uint32_t heartbeat_rounds = 3;

  /// Throws NetsimError(InvalidConfig).
  void check() const;
  std::uint64_t effective_period() const { return proposal_period ? proposal_period : 3 * max_delay + 1; }
  Behavior behavior(NodeId id) const { return behaviors.empty() ? Behavior::Honest : behaviors.at(id); }
  Json to_json() const;
};

/// Smallest accept count that commits: floor(n / 2) + 1.
constexpr std::size_t majority(std::size_t n) { return n / 2 + 1; }

struct VoteRecord {
  Digest block_hash{};
  std::set<NodeId> accept_votes;
  std::set<NodeId> reject_votes;
  bool committed = false;
};

/// Closes a vote: sets and returns committed = |accepts| >= majority(n).
bool finalize(VoteRecord& record, std::size_t n);

struct Vote {
  bool accept = false;
  std::string reason;  // empty on accept
};

/// One log line: {"tick":..,"kind":..,"payload":{..}} in that field order.
struct Event {
  std::uint64_t tick = 0;
  std::string kind;
  Json payload;

  std::string to_line() const;
  bool operator==(const Event&) const = default;
};

class SimNode {
 public:
  SimNode(NodeId id, identity::KeyPair keypair, Behavior behavior, const contracts::Registry& registry);

  NodeId id() const { return id_; }
  Behavior behavior() const { return behavior_; }
  const identity::KeyPair& keypair() const { return keypair_; }
  const Chain& replica() const { return replica_; }
  const contracts::WorldState& state() const { return state_; }
  const std::vector<Transaction>& mempool() const { return mempool_; }
  std::uint64_t height() const { return replica_.size() - 1; }

  bool knows(const Digest& tx_id) const;
  bool is_committed(const Digest& tx_id) const { return committed_.count(tx_id) != 0; }

  /// Adds a verified transaction unless known; returns whether it was added.
  bool admit(const Transaction& tx);

  /// Packs up to `max_txs` mempool transactions on top of the tip. Byzantine
  /// proposers corrupt tx_root (and hash the corrupted header). Throws
  /// NetsimError(EmptyMempool).
  Block build_block(std::uint64_t clock, std::size_t max_txs) const;

  /// Stateless part of the vote (locks are handled by the network).
  Vote vote_on_block(const Block& block) const;

  /// Appends a block extending the tip and applies its transactions.
  void commit_block(const Block& block);

  /// Adopts `candidate` iff it is strictly longer, or equally long with a
  /// smaller tip hash. Throws NetsimError(InvalidCandidate) if it does not
  /// validate from genesis. Returns whether the candidate was adopted.
  bool resolve_fork(const Chain& candidate);

 private:
  friend class SimNetwork;

  void rebuild();

  NodeId id_;
  identity::KeyPair keypair_;
  Behavior behavior_;
  const contracts::Registry* registry_;
  Chain replica_;
  contracts::WorldState state_;
  std::vector<Transaction> mempool_;
  std::set<Digest> mempool_ids_;
  std::set<Digest> committed_;

  struct Lock {
    std::uint64_t index = 0;
    Digest block_hash{};
    NodeId proposer = 0;
  };
  std::optional<Lock> lock_;

  struct OpenRound {
    Block block;
    VoteRecord votes;
    std::uint64_t deadline = 0;
  };
  std::optional<OpenRound> round_;

  struct Decision {
    bool committed = false;
    Block block;
    std::vector<NodeId> accepts;
  };
  std::map<Digest, Decision> decisions_;

  std::uint32_t heartbeat_budget_ = 0;
};

struct SubmitAck {
  Digest tx_id{};
  bool duplicate = false;
};

class SimNetwork {
 public:
  /// Node keys are derived from the config seed and the node index.
  SimNetwork(NetworkConfig config, contracts::Registry registry);

  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  const NetworkConfig& config() const { return config_; }
  const contracts::Registry& registry() const { return *registry_; }
  std::uint64_t clock() const { return clock_; }
  std::size_t size() const { return nodes_.size(); }
  const SimNode& node(NodeId id) const { return *nodes_.at(id); }
  const std::vector<Event>& event_log() const { return log_; }
  std::size_t pending_messages() const { return queue_.size(); }

  /// Submits now at `origin`. Throws NetsimError(BadSignature | InvalidEnvelope).
  SubmitAck submit_transaction(const Transaction& tx, NodeId origin);

  /// Queues a submission for the start of tick `tick` (> clock()).
  void schedule_submission(std::uint64_t tick, NodeId origin, Transaction tx);

  /// Advances one tick; returns the events emitted during it.
  std::vector<Event> step();

  /// The current round's proposer broadcasts a new block. Throws
  /// NetsimError(NotProposer | EmptyMempool).
  Block propose_block(NodeId proposer);

  /// Closes `proposer`'s open round now and returns whether it committed.
  bool finalize_round(NodeId proposer);

  /// No scheduled submissions, no messages in flight, no open rounds, and no
  /// honest node with pending transactions or heartbeats.
  bool quiescent() const;

  /// Steps until quiescent() or `max_ticks` more ticks; returns ticks run.
  std::uint64_t run_until_quiescent(std::uint64_t max_ticks);

  /// Honest node ids in order.
  std::vector<NodeId> honest_nodes() const;

 private:
  struct TxGossip { Transaction tx; };
  struct Proposal { Block block; };
  struct VoteMsg { Digest block_hash; bool accept; std::string reason; std::uint64_t voter_height; };
  struct CommitMsg { Block block; std::vector<NodeId> accepts; };
  struct AbortMsg { Digest block_hash; std::uint64_t index; };
  struct OutcomeRequest { Digest block_hash; };
  struct SyncRequest { std::uint64_t height; };
  struct ChainTransfer { std::shared_ptr<const Chain> chain; };
  struct Status { std::uint64_t height; Digest tip_hash; };
  using Message = std::variant<TxGossip, Proposal, VoteMsg, CommitMsg, AbortMsg, OutcomeRequest, SyncRequest,
                               ChainTransfer, Status>;

  struct InFlight {
    NodeId from;
    NodeId to;
    Message message;
  };

  static std::string_view type_name(const Message& m);

  void emit(std::string kind, Json payload);
  void send(NodeId from, NodeId to, Message message);
  void broadcast(NodeId from, const Message& message);
  std::uint64_t draw_below(NodeId from, NodeId to, std::uint64_t bound);

  void deliver(const InFlight& msg);
  void on_tx(SimNode& node, const TxGossip& m);
  void on_proposal(SimNode& node, NodeId from, const Proposal& m);
  void on_vote(SimNode& node, NodeId from, const VoteMsg& m);
  void on_commit(SimNode& node, NodeId from, const CommitMsg& m);
  void on_abort(SimNode& node, const AbortMsg& m);
  void on_outcome_request(SimNode& node, NodeId from, const OutcomeRequest& m);
  void on_sync_request(SimNode& node, NodeId from, const SyncRequest& m);
  void on_chain(SimNode& node, NodeId from, const ChainTransfer& m);
  void on_status(SimNode& node, NodeId from, const Status& m);

  void request_sync(SimNode& node, NodeId peer);
  void record_vote(SimNode& proposer, NodeId voter, bool accept);
  void decide(SimNode& proposer, bool commit);
  void apply_commit(SimNode& node, const Block& block);
  void adopt(SimNode& node, const Chain& candidate, NodeId from);
  void height_changed(SimNode& node);
  void run_round(std::uint64_t round);

  NetworkConfig config_;
  std::unique_ptr<contracts::Registry> registry_;
  std::vector<std::unique_ptr<SimNode>> nodes_;
  std::uint64_t clock_ = 0;
  std::uint64_t send_seq_ = 0;
  std::map<std::pair<std::uint64_t, std::uint64_t>, InFlight> queue_;  // (deliver_at, seq)
  std::multimap<std::uint64_t, std::pair<NodeId, Transaction>> scheduled_;
  std::vector<std::mt19937_64> edge_rng_;
  std::vector<Event> log_;
  std::size_t step_log_start_ = 0;
};

}  // namespace smartcity::netsim
