#include "smartcity/netsim.hpp"

#include <algorithm>

namespace smartcity::netsim {

using contracts::validate_envelope;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Json ids_json(const std::set<NodeId>& ids) { return Json(std::vector<NodeId>(ids.begin(), ids.end())); }

}  // namespace

std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::Honest: return "honest";
    case Behavior::ByzantineInvalidProposer: return "byzantine-invalid-proposer";
    case Behavior::Silent: return "silent";
  }
  return "?";
}

Behavior parse_behavior(std::string_view s) {
  for (auto b : {Behavior::Honest, Behavior::ByzantineInvalidProposer, Behavior::Silent}) {
    if (to_string(b) == s) return b;
  }
  throw NetsimError(NetsimErrc::InvalidConfig, "unknown behavior '" + std::string(s) + "'");
}

void NetworkConfig::check() const {
  auto bad = [](const std::string& what) { throw NetsimError(NetsimErrc::InvalidConfig, what); };
  if (nodes == 0) bad("network needs at least one node");
  if (!behaviors.empty() && behaviors.size() != nodes) bad("behaviors must list one entry per node");
  if (min_delay < 1) bad("minimum delay must be at least one tick");
  if (max_delay < min_delay) bad("delay range is empty");
  if (drop_ppm > kPpm) bad("drop probability must be within [0, 1]");
  if (proposal_period != 0 && proposal_period <= 2 * max_delay) {
    bad("proposal period must exceed the vote deadline (2 * max_delay)");
  }
  if (max_block_txs == 0) bad("max_block_txs must be positive");
}

Json NetworkConfig::to_json() const {
  Json b = Json::array();
  for (NodeId i = 0; i < nodes; ++i) b.push_back(std::string(to_string(behavior(i))));
  return Json{{"nodes", nodes},
              {"behaviors", std::move(b)},
              {"delay_range", Json::array({min_delay, max_delay})},
              {"drop_ppm", drop_ppm},
              {"seed", seed},
              {"proposal_period", effective_period()},
              {"max_block_txs", max_block_txs},
              {"heartbeat_rounds", heartbeat_rounds}};
}

bool finalize(VoteRecord& record, std::size_t n) {
  record.committed = record.accept_votes.size() >= majority(n);
  return record.committed;
}

std::string Event::to_line() const {
  nlohmann::ordered_json j;
  j["tick"] = tick;
  j["kind"] = kind;
  j["payload"] = nlohmann::ordered_json::parse(canonical_dump(payload));
  return j.dump();
}

// ---------------------------------------------------------------------------
// SimNode
// ---------------------------------------------------------------------------

SimNode::SimNode(NodeId id, identity::KeyPair keypair, Behavior behavior, const contracts::Registry& registry)
    : id_(id),
      keypair_(keypair),
      behavior_(behavior),
      registry_(&registry),
      state_(contracts::WorldState::initial(registry)) {}

bool SimNode::knows(const Digest& tx_id) const {
  return mempool_ids_.count(tx_id) != 0 || committed_.count(tx_id) != 0;
}

bool SimNode::admit(const Transaction& tx) {
  if (knows(tx.tx_id)) return false;
  mempool_.push_back(tx);
  mempool_ids_.insert(tx.tx_id);
  return true;
}

Block SimNode::build_block(std::uint64_t clock, std::size_t max_txs) const {
  if (mempool_.empty()) {
    throw NetsimError(NetsimErrc::EmptyMempool, "node " + std::to_string(id_) + " has nothing to propose");
  }
  const std::size_t n = std::min(max_txs, mempool_.size());
  std::vector<Transaction> txs(mempool_.begin(), mempool_.begin() + static_cast<std::ptrdiff_t>(n));
  Block block = Block::assemble(height() + 1, replica_.tip().block_hash, std::move(txs), keypair_.address(), clock);
  if (behavior_ == Behavior::ByzantineInvalidProposer) {
    block.header.tx_root[0] ^= 0xff;
    block.block_hash = ledger::compute_block_hash(block.header);
  }
  return block;
}

Vote SimNode::vote_on_block(const Block& block) const {
  if (block.index() <= height()) return {false, "stale"};
  if (block.index() > height() + 1) return {false, "unknown-parent"};
  if (block.header.prev_hash != replica_.tip().block_hash) return {false, "fork"};
  if (const auto bad = ledger::check_block_contents(block)) {
    return {false, "invalid:" + std::string(ledger::to_string(*bad))};
  }
  std::set<Digest> seen;
  for (const auto& tx : block.transactions) {
    if (!seen.insert(tx.tx_id).second) return {false, "duplicate-tx"};
    if (is_committed(tx.tx_id)) return {false, "already-committed"};
    if (!validate_envelope(*registry_, tx.envelope).empty()) return {false, "invalid-envelope"};
    if (contracts::ContractEnvelope::from_json(parse_json(tx.envelope)).sender != tx.sender) {
      return {false, "sender-mismatch"};
    }
  }
  return {true, {}};
}

void SimNode::commit_block(const Block& block) {
  replica_.append(block);
  for (const auto& tx : block.transactions) {
    contracts::apply_transaction(*registry_, state_, tx, block.index());
    committed_.insert(tx.tx_id);
  }
  std::erase_if(mempool_, [&](const Transaction& tx) { return committed_.count(tx.tx_id) != 0; });
  std::erase_if(mempool_ids_, [&](const Digest& id) { return committed_.count(id) != 0; });
  if (lock_ && lock_->index <= height()) lock_.reset();
}

bool SimNode::resolve_fork(const Chain& candidate) {
  if (!ledger::validate_chain(candidate).valid) {
    throw NetsimError(NetsimErrc::InvalidCandidate, "candidate chain fails validation");
  }
  const bool longer = candidate.size() > replica_.size();
  const bool tie_win = candidate.size() == replica_.size() && candidate.tip().block_hash < replica_.tip().block_hash;
  if (!longer && !tie_win) return false;
  replica_ = candidate;
  rebuild();
  return true;
}

void SimNode::rebuild() {
  auto replayed = contracts::replay(*registry_, replica_);
  state_ = std::move(replayed.state);
  committed_.clear();
  for (const auto& block : replica_.blocks()) {
    for (const auto& tx : block.transactions) committed_.insert(tx.tx_id);
  }
  std::erase_if(mempool_, [&](const Transaction& tx) { return committed_.count(tx.tx_id) != 0; });
  std::erase_if(mempool_ids_, [&](const Digest& id) { return committed_.count(id) != 0; });
  if (lock_ && lock_->index <= height()) lock_.reset();
}

// ---------------------------------------------------------------------------
// SimNetwork
// ---------------------------------------------------------------------------

SimNetwork::SimNetwork(NetworkConfig config, contracts::Registry registry)
    : config_(std::move(config)), registry_(std::make_unique<contracts::Registry>(std::move(registry))) {
  config_.check();
  const std::size_t n = config_.nodes;
  for (NodeId i = 0; i < n; ++i) {
    const auto seed = canonical_digest(Json{{"node", i}, {"seed", config_.seed}});
    nodes_.push_back(
        std::make_unique<SimNode>(i, identity::generate_keypair(seed), config_.behavior(i), *registry_));
  }
  edge_rng_.reserve(n * n);
  for (NodeId from = 0; from < n; ++from) {
    for (NodeId to = 0; to < n; ++to) {
      edge_rng_.emplace_back(splitmix64(config_.seed + 0x9E3779B97F4A7C15ULL * (from * n + to + 1)));
    }
  }
}

std::vector<NodeId> SimNetwork::honest_nodes() const {
  std::vector<NodeId> out;
  for (const auto& node : nodes_) {
    if (node->behavior() == Behavior::Honest) out.push_back(node->id());
  }
  return out;
}

std::string_view SimNetwork::type_name(const Message& m) {
  static constexpr std::string_view kNames[] = {"tx", "proposal", "vote", "commit", "abort",
                                                "outcome-request", "sync-request", "chain", "status"};
  return kNames[m.index()];
}

void SimNetwork::emit(std::string kind, Json payload) {
  log_.push_back(Event{clock_, std::move(kind), std::move(payload)});
}

std::uint64_t SimNetwork::draw_below(NodeId from, NodeId to, std::uint64_t bound) {
  auto& gen = edge_rng_[from * nodes_.size() + to];
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t x = gen();
  while (x > limit) x = gen();
  return x % bound;
}

void SimNetwork::send(NodeId from, NodeId to, Message message) {
  if (nodes_[from]->behavior() == Behavior::Silent) return;
  bool dropped = config_.drop_ppm >= kPpm;
  if (config_.drop_ppm > 0 && config_.drop_ppm < kPpm) dropped = draw_below(from, to, kPpm) < config_.drop_ppm;
  if (dropped) {
    emit("drop", Json{{"from", from}, {"to", to}, {"type", std::string(type_name(message))}});
    return;
  }
  std::uint64_t delay = config_.min_delay;
  if (config_.max_delay > config_.min_delay) delay += draw_below(from, to, config_.max_delay - config_.min_delay + 1);
  queue_.emplace(std::make_pair(clock_ + delay, send_seq_++), InFlight{from, to, std::move(message)});
}

void SimNetwork::broadcast(NodeId from, const Message& message) {
  for (NodeId to = 0; to < nodes_.size(); ++to) {
    if (to != from) send(from, to, message);
  }
}

SubmitAck SimNetwork::submit_transaction(const Transaction& tx, NodeId origin) {
  if (!tx.signature_valid()) {
    throw NetsimError(NetsimErrc::BadSignature, "transaction " + to_hex(tx.tx_id) + " has an invalid signature");
  }
  if (tx.content_digest() != tx.tx_id) {
    throw NetsimError(NetsimErrc::BadSignature, "transaction id does not match its content");
  }
  if (const auto violations = validate_envelope(*registry_, tx.envelope); !violations.empty()) {
    throw NetsimError(NetsimErrc::InvalidEnvelope,
                      "envelope rejected: " + violations.front().path + " " + violations.front().message);
  }
  SimNode& node = *nodes_.at(origin);
  if (!node.admit(tx)) return SubmitAck{tx.tx_id, true};
  emit("submit", Json{{"node", origin}, {"tx_id", to_hex(tx.tx_id)}});
  broadcast(origin, TxGossip{tx});
  return SubmitAck{tx.tx_id, false};
}

void SimNetwork::schedule_submission(std::uint64_t tick, NodeId origin, Transaction tx) {
  if (tick <= clock_) {
    throw NetsimError(NetsimErrc::InvalidConfig, "submission tick " + std::to_string(tick) + " is not in the future");
  }
  if (origin >= nodes_.size()) throw NetsimError(NetsimErrc::InvalidConfig, "unknown origin node");
  scheduled_.emplace(tick, std::make_pair(origin, std::move(tx)));
}

std::vector<Event> SimNetwork::step() {
  const std::size_t first = log_.size();
  ++clock_;

  // 1. scheduled submissions
  const auto [sub_begin, sub_end] = scheduled_.equal_range(clock_);
  for (auto it = sub_begin; it != sub_end; ++it) {
    try {
      submit_transaction(it->second.second, it->second.first);
    } catch (const NetsimError& e) {
      emit("submit-rejected", Json{{"node", it->second.first},
                                   {"tx_id", to_hex(it->second.second.tx_id)},
                                   {"reason", e.what()}});
    }
  }
  scheduled_.erase(sub_begin, sub_end);

  // 2. deliveries due now
  while (!queue_.empty() && queue_.begin()->first.first <= clock_) {
    const InFlight msg = std::move(queue_.begin()->second);
    queue_.erase(queue_.begin());
    deliver(msg);
  }

  // 3. vote deadlines
  for (auto& node : nodes_) {
    if (node->round_ && node->round_->deadline <= clock_) decide(*node, false);
  }

  // 4. proposal round
  const std::uint64_t period = config_.effective_period();
  if (clock_ % period == 0) run_round(clock_ / period);

  return {log_.begin() + static_cast<std::ptrdiff_t>(first), log_.end()};
}

void SimNetwork::run_round(std::uint64_t round) {
  const NodeId proposer = round % nodes_.size();
  SimNode& node = *nodes_[proposer];
  auto skip = [&](const char* reason) {
    emit("skip", Json{{"node", proposer}, {"round", round}, {"reason", reason}});
  };
  if (node.behavior() == Behavior::Silent) return skip("silent");
  if (node.round_) return skip("round-open");
  if (node.lock_ && node.lock_->index == node.height() + 1) {
    skip("locked");
    send(proposer, node.lock_->proposer, OutcomeRequest{node.lock_->block_hash});
    return;
  }
  if (node.mempool().empty()) {
    if (node.heartbeat_budget_ > 0) {
      --node.heartbeat_budget_;
      emit("status", Json{{"node", proposer}, {"height", node.height()}});
      broadcast(proposer, Status{node.height(), node.replica().tip().block_hash});
      return;
    }
    return skip("empty-mempool");
  }
  propose_block(proposer);
}

Block SimNetwork::propose_block(NodeId proposer) {
  const std::uint64_t round = clock_ / config_.effective_period();
  if (round % nodes_.size() != proposer) {
    throw NetsimError(NetsimErrc::NotProposer, "node " + std::to_string(proposer) + " is not the proposer of round " +
                                                   std::to_string(round));
  }
  SimNode& node = *nodes_.at(proposer);
  Block block = node.build_block(clock_, config_.max_block_txs);

  SimNode::OpenRound open{block, VoteRecord{block.block_hash, {}, {}, false}, clock_ + 2 * config_.max_delay};
  node.round_ = std::move(open);
  node.lock_ = SimNode::Lock{block.index(), block.block_hash, proposer};
  emit("propose", Json{{"node", proposer},
                       {"index", block.index()},
                       {"block_hash", to_hex(block.block_hash)},
                       {"txs", block.transactions.size()}});
  broadcast(proposer, Proposal{block});
  record_vote(node, proposer, true);
  return block;
}

bool SimNetwork::finalize_round(NodeId proposer) {
  SimNode& node = *nodes_.at(proposer);
  if (!node.round_) return false;
  VoteRecord record = node.round_->votes;
  const bool committed = finalize(record, nodes_.size());
  decide(node, committed);
  return committed;
}

void SimNetwork::record_vote(SimNode& proposer, NodeId voter, bool accept) {
  auto& votes = proposer.round_->votes;
  if (votes.accept_votes.count(voter) || votes.reject_votes.count(voter)) return;
  (accept ? votes.accept_votes : votes.reject_votes).insert(voter);
  const std::size_t n = nodes_.size();
  if (votes.accept_votes.size() >= majority(n)) {
    decide(proposer, true);
  } else if (n - votes.reject_votes.size() < majority(n)) {
    decide(proposer, false);
  }
}

void SimNetwork::decide(SimNode& node, bool commit) {
  SimNode::OpenRound round = std::move(*node.round_);
  node.round_.reset();
  round.votes.committed = commit;
  const Block& block = round.block;
  std::vector<NodeId> accepts(round.votes.accept_votes.begin(), round.votes.accept_votes.end());
  emit(commit ? "commit" : "abort", Json{{"node", node.id()},
                                         {"index", block.index()},
                                         {"block_hash", to_hex(block.block_hash)},
                                         {"accepts", ids_json(round.votes.accept_votes)},
                                         {"rejects", ids_json(round.votes.reject_votes)}});
  node.decisions_[block.block_hash] = SimNode::Decision{commit, block, accepts};
  if (commit) {
    apply_commit(node, block);
    broadcast(node.id(), CommitMsg{block, accepts});
  } else {
    if (node.lock_ && node.lock_->block_hash == block.block_hash) node.lock_.reset();
    broadcast(node.id(), AbortMsg{block.block_hash, block.index()});
  }
}

void SimNetwork::apply_commit(SimNode& node, const Block& block) {
  node.commit_block(block);
  emit("append", Json{{"node", node.id()}, {"index", block.index()}, {"block_hash", to_hex(block.block_hash)}});
  height_changed(node);
}

void SimNetwork::height_changed(SimNode& node) { node.heartbeat_budget_ = config_.heartbeat_rounds; }

void SimNetwork::request_sync(SimNode& node, NodeId peer) {
  emit("sync-request", Json{{"node", node.id()}, {"peer", peer}, {"height", node.height()}});
  send(node.id(), peer, SyncRequest{node.height()});
}

void SimNetwork::deliver(const InFlight& msg) {
  SimNode& node = *nodes_[msg.to];
  emit("deliver", Json{{"from", msg.from}, {"to", msg.to}, {"type", std::string(type_name(msg.message))}});
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, TxGossip>) on_tx(node, m);
        else if constexpr (std::is_same_v<T, Proposal>) on_proposal(node, msg.from, m);
        else if constexpr (std::is_same_v<T, VoteMsg>) on_vote(node, msg.from, m);
        else if constexpr (std::is_same_v<T, CommitMsg>) on_commit(node, msg.from, m);
        else if constexpr (std::is_same_v<T, AbortMsg>) on_abort(node, m);
        else if constexpr (std::is_same_v<T, OutcomeRequest>) on_outcome_request(node, msg.from, m);
        else if constexpr (std::is_same_v<T, SyncRequest>) on_sync_request(node, msg.from, m);
        else if constexpr (std::is_same_v<T, ChainTransfer>) on_chain(node, msg.from, m);
        else if constexpr (std::is_same_v<T, Status>) on_status(node, msg.from, m);
      },
      msg.message);
}

void SimNetwork::on_tx(SimNode& node, const TxGossip& m) {
  if (node.knows(m.tx.tx_id)) return;
  if (!m.tx.signature_valid() || !validate_envelope(*registry_, m.tx.envelope).empty()) return;
  node.admit(m.tx);
}

void SimNetwork::on_proposal(SimNode& node, NodeId from, const Proposal& m) {
  const Block& block = m.block;
  Vote vote = node.vote_on_block(block);
  if (vote.accept && node.lock_ && node.lock_->index == block.index() && node.lock_->block_hash != block.block_hash) {
    vote = {false, "locked"};
    send(node.id(), node.lock_->proposer, OutcomeRequest{node.lock_->block_hash});
  }
  if (vote.accept) node.lock_ = SimNode::Lock{block.index(), block.block_hash, from};
  emit("vote", Json{{"node", node.id()},
                    {"block_hash", to_hex(block.block_hash)},
                    {"accept", vote.accept},
                    {"reason", vote.reason}});
  send(node.id(), from, VoteMsg{block.block_hash, vote.accept, vote.reason, node.height()});
  if (vote.reason == "unknown-parent") request_sync(node, from);
}

void SimNetwork::on_vote(SimNode& node, NodeId from, const VoteMsg& m) {
  if (node.round_ && node.round_->block.block_hash == m.block_hash) record_vote(node, from, m.accept);
  if (m.voter_height > node.height()) request_sync(node, from);
}

void SimNetwork::on_commit(SimNode& node, NodeId from, const CommitMsg& m) {
  const Block& block = m.block;
  if (m.accepts.size() < majority(nodes_.size())) return;
  if (block.index() > node.height() + 1) {
    request_sync(node, from);
    return;
  }
  if (block.index() <= node.height()) {
    if (node.replica().at(block.index()).block_hash != block.block_hash) {
      emit("conflict", Json{{"node", node.id()}, {"index", block.index()}, {"block_hash", to_hex(block.block_hash)}});
    }
    return;
  }
  if (!node.vote_on_block(block).accept) {
    emit("commit-refused", Json{{"node", node.id()}, {"index", block.index()}, {"block_hash", to_hex(block.block_hash)}});
    return;
  }
  apply_commit(node, block);
}

void SimNetwork::on_abort(SimNode& node, const AbortMsg& m) {
  if (node.lock_ && node.lock_->block_hash == m.block_hash) node.lock_.reset();
}

void SimNetwork::on_outcome_request(SimNode& node, NodeId from, const OutcomeRequest& m) {
  const auto it = node.decisions_.find(m.block_hash);
  if (it == node.decisions_.end()) return;
  const auto& d = it->second;
  if (d.committed) {
    send(node.id(), from, CommitMsg{d.block, d.accepts});
  } else {
    send(node.id(), from, AbortMsg{m.block_hash, d.block.index()});
  }
}

void SimNetwork::on_sync_request(SimNode& node, NodeId from, const SyncRequest& m) {
  // Equal height still answers so that equal-length forks can resolve.
  if (node.height() < m.height) return;
  send(node.id(), from, ChainTransfer{std::make_shared<const Chain>(node.replica())});
}

void SimNetwork::on_chain(SimNode& node, NodeId from, const ChainTransfer& m) { adopt(node, *m.chain, from); }

void SimNetwork::adopt(SimNode& node, const Chain& candidate, NodeId from) {
  // First index at which the candidate rewrites our history, if any.
  std::optional<std::uint64_t> rewrites;
  const std::size_t common = std::min(candidate.size(), node.replica().size());
  for (std::size_t i = 0; i < common; ++i) {
    if (candidate.at(i).block_hash != node.replica().at(i).block_hash) {
      rewrites = i;
      break;
    }
  }
  bool adopted = false;
  try {
    adopted = node.resolve_fork(candidate);
  } catch (const NetsimError&) {
    emit("invalid-candidate", Json{{"node", node.id()}, {"peer", from}});
    return;
  }
  if (!adopted) return;
  emit("adopt", Json{{"node", node.id()},
                     {"peer", from},
                     {"height", node.height()},
                     {"tip", to_hex(node.replica().tip().block_hash)},
                     {"rewrites_from", rewrites ? Json(*rewrites) : Json(nullptr)}});
  height_changed(node);
}

void SimNetwork::on_status(SimNode& node, NodeId from, const Status& m) {
  if (m.height > node.height() ||
      (m.height == node.height() && m.tip_hash < node.replica().tip().block_hash)) {
    request_sync(node, from);
  }
}

bool SimNetwork::quiescent() const {
  if (!scheduled_.empty() || !queue_.empty()) return false;
  for (const auto& node : nodes_) {
    if (node->round_) return false;
    if (node->behavior() != Behavior::Honest) continue;
    if (!node->mempool().empty() || node->heartbeat_budget_ > 0) return false;
  }
  return true;
}

std::uint64_t SimNetwork::run_until_quiescent(std::uint64_t max_ticks) {
  std::uint64_t ran = 0;
  while (ran < max_ticks && !quiescent()) {
    step();
    ++ran;
  }
  return ran;
}

}  // namespace smartcity::netsim
