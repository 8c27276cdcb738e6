#pragma once

#include <charconv>
#include <future>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "energychain/chain.hpp"
#include "energychain/wire.hpp"

namespace energychain {

inline constexpr std::string_view kReplacedMessage = "our chain was replaced";
inline constexpr std::string_view kAuthoritativeMessage = "our chain is authoritative";

struct PeerAddress {
  std::string scheme;
  std::string host;
  int port = 0;

  std::string url() const { return scheme + "://" + host + ":" + std::to_string(port); }
};

/// Parses "http://host:port" (an optional trailing '/' is accepted).
inline std::optional<PeerAddress> ParsePeerAddress(std::string_view text) {
  static const std::regex kPattern(R"(^(https?)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\]):([0-9]{1,5})/?$)");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, kPattern)) return std::nullopt;
  int port = 0;
  const auto port_str = m[3].str();
  std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
  if (port < 1 || port > 65535) return std::nullopt;
  return PeerAddress{m[1].str(), m[2].str(), port};
}

/// Registered neighbours, stored by normalized URL.
class PeerSet {
 public:
  PeerSet() = default;
  explicit PeerSet(std::string self_url) : self_(std::move(self_url)) {}

  const std::set<std::string>& peers() const { return peers_; }
  std::size_t size() const { return peers_.size(); }
  bool contains(const std::string& url) const { return peers_.count(url) != 0; }

  /// Adds a peer; idempotent. Throws ValidationError for malformed addresses
  /// or the node's own address.
  PeerSet& Register(std::string_view address) {
    auto parsed = ParsePeerAddress(address);
    if (!parsed) throw ValidationError("malformed node address: " + std::string(address));
    std::string url = parsed->url();
    if (self_ && url == *self_) throw ValidationError("a node cannot register itself");
    peers_.insert(std::move(url));
    return *this;
  }

 private:
  std::optional<std::string> self_;
  std::set<std::string> peers_;
};

/// Functional form of PeerSet::Register.
inline PeerSet RegisterNode(PeerSet peers, std::string_view address) {
  peers.Register(address);
  return peers;
}

struct ResolutionOutcome {
  bool replaced = false;
  std::string message;
  std::vector<Block> chain;
};

/// Longest-valid-chain rule. Only peer chains strictly longer than `local`
/// that fully validate are candidates; the first of the longest wins.
inline ResolutionOutcome ResolveConflicts(const std::vector<Block>& local,
                                          const std::vector<std::vector<Block>>& peer_chains,
                                          int difficulty = kDefaultDifficulty) {
  const std::vector<Block>* best = nullptr;
  std::size_t best_length = local.size();
  for (const auto& candidate : peer_chains) {
    if (candidate.size() > best_length && ValidateChain(candidate, difficulty)) {
      best = &candidate;
      best_length = candidate.size();
    }
  }
  if (best == nullptr) return {false, std::string(kAuthoritativeMessage), local};
  return {true, std::string(kReplacedMessage), *best};
}

/// Resolves against `chain` and adopts the winner in place.
inline ResolutionOutcome ResolveConflicts(Chain& chain, const std::vector<std::vector<Block>>& peer_chains) {
  auto outcome = ResolveConflicts(chain.blocks(), peer_chains, chain.difficulty());
  if (outcome.replaced) chain.AdoptBlocks(outcome.chain);
  return outcome;
}

/// Neither candidate agrees with the trusted reference.
class UnresolvableConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when every block of `candidate` hashes identically to the block at
/// the same position in `reference`.
inline bool MatchesReferencePrefix(const std::vector<Block>& candidate, const std::vector<Block>& reference) {
  if (candidate.size() > reference.size()) return false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (HashBlock(candidate[i]) != HashBlock(reference[i])) return false;
  }
  return true;
}

/// Picks whichever of two equal-length chains agrees with the reference
/// snapshot. Prefers `local` when both agree.
inline const std::vector<Block>& ArbitrateEqualLength(const std::vector<Block>& local,
                                                       const std::vector<Block>& rival,
                                                       const std::vector<Block>& reference) {
  if (local.size() != rival.size()) throw std::invalid_argument("arbitration requires equal-length chains");
  if (reference.size() < local.size()) throw std::invalid_argument("reference is shorter than the candidates");
  if (MatchesReferencePrefix(local, reference)) return local;
  if (MatchesReferencePrefix(rival, reference)) return rival;
  throw UnresolvableConflict("neither chain matches the reference snapshot");
}

/// GET /chain from every peer concurrently. Unreachable or malformed peers
/// are dropped; the result keeps the peer set's iteration order.
inline std::vector<std::vector<Block>> FetchPeerChains(const PeerSet& peers,
                                                       std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  std::vector<std::future<std::optional<std::vector<Block>>>> pending;
  for (const auto& url : peers.peers()) {
    pending.push_back(std::async(std::launch::async, [url, timeout]() -> std::optional<std::vector<Block>> {
      httplib::Client client(url);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      auto res = client.Get("/chain");
      if (!res || res->status != 200) return std::nullopt;
      try {
        return BlocksFromPayload(res->body);
      } catch (const WireError&) {
        return std::nullopt;
      }
    }));
  }
  std::vector<std::vector<Block>> chains;
  for (auto& f : pending) {
    if (auto blocks = f.get()) chains.push_back(std::move(*blocks));
  }
  return chains;
}

}  // namespace energychain
