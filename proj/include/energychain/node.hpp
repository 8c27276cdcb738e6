#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "energychain/chain.hpp"
#include "energychain/consensus.hpp"
#include "energychain/market.hpp"
#include "energychain/wire.hpp"

namespace energychain {

struct NodeOptions {
  std::string host = "127.0.0.1";
  int port = 5000;  // 0 picks an ephemeral port
  MarketConfig market;
  std::filesystem::path book_path = "energydemand.csv";
  std::optional<std::string> node_id;
  bool test_hooks = false;
  int difficulty = kDefaultDifficulty;
};

/// Error carried back to the client as {"error": reason}.
struct HttpError : std::runtime_error {
  HttpError(int status, const std::string& reason) : std::runtime_error(reason), status(status) {}
  int status;
};

/// One market node: chain, peers and order book behind an HTTP/JSON API.
/// Every mutation takes the writer lock; reads take a shared lock. Peer
/// fetches and proof-of-work searches run unlocked.
class Node {
 public:
  explicit Node(NodeOptions options)
      : options_(std::move(options)),
        chain_(options_.node_id.value_or(NewNodeId()), options_.difficulty),
        store_(options_.book_path) {
    options_.market.Validate();
    book_ = store_.Load(options_.market);
    Routes();
  }

  ~Node() { Stop(); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Binds and serves on a background thread. Returns the bound port.
  int Start() {
    if (running_) return port_;
    port_ = options_.port == 0 ? server_.bind_to_any_port(options_.host)
                               : (server_.bind_to_port(options_.host, options_.port) ? options_.port : -1);
    if (port_ <= 0) throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    {
      std::unique_lock lock(mutex_);
      peers_ = PeerSet(url());
    }
    running_ = true;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void Stop() {
    if (!running_.exchange(false)) return;
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  bool running() const { return running_; }
  int port() const { return port_; }
  std::string url() const { return "http://" + options_.host + ":" + std::to_string(port_); }
  const std::string& node_id() const { return chain_.node_id(); }
  int difficulty() const { return chain_.difficulty(); }
  const std::filesystem::path& book_path() const { return store_.path(); }

  std::vector<Block> blocks() const {
    std::shared_lock lock(mutex_);
    return chain_.blocks();
  }
  std::vector<Transaction> mempool() const {
    std::shared_lock lock(mutex_);
    return chain_.mempool();
  }
  OrderBook book() const {
    std::shared_lock lock(mutex_);
    return book_;
  }

 private:
  using Json = nlohmann::json;

  static Json ParseBody(const httplib::Request& req) {
    try {
      auto body = Json::parse(req.body);
      if (!body.is_object()) throw HttpError(400, "request body must be a JSON object");
      return body;
    } catch (const Json::parse_error&) {
      throw HttpError(400, "request body is not valid JSON");
    }
  }

  static const Json& Require(const Json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) throw HttpError(400, std::string("missing field \"") + key + "\"");
    return *it;
  }

  static std::string RequireString(const Json& body, const char* key) {
    const auto& v = Require(body, key);
    if (!v.is_string()) throw HttpError(400, std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
  }

  template <typename Q>
  static Q RequireDecimal(const Json& body, const char* key) {
    const auto& v = Require(body, key);
    std::optional<Q> q;
    if (v.is_number()) q = Q::FromDouble(v.get<double>());
    if (!q) throw HttpError(400, std::string("field \"") + key + "\" must be a number with at most 3 fraction digits");
    return *q;
  }

  using Handler = std::function<std::pair<int, Json>(const httplib::Request&)>;

  /// Wraps a handler with JSON rendering and error mapping.
  httplib::Server::Handler Wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      int status = 200;
      Json body;
      try {
        std::tie(status, body) = h(req);
      } catch (const HttpError& e) {
        status = e.status;
        body = {{"error", e.what()}};
      } catch (const WireError& e) {
        status = 400;
        body = {{"error", e.what()}};
      } catch (const ValidationError& e) {
        status = 400;
        body = {{"error", e.what()}};
      } catch (const std::exception& e) {
        status = 500;
        body = {{"error", e.what()}};
      }
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
  }

  void Routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/chain", Wrap([this](const auto&) { return std::pair{200, ChainPayload(blocks())}; }));
    server_.Get("/mine", Wrap([this](const auto&) { return Mine(); }));
    server_.Post("/transactions/new", Wrap([this](const auto& req) { return NewTransaction(req); }));
    server_.Post("/nodes/register", Wrap([this](const auto& req) { return RegisterNodes(req); }));
    server_.Get("/nodes/resolve", Wrap([this](const auto&) { return Resolve(); }));
    server_.Post("/nodes/arbitrate", Wrap([this](const auto& req) { return Arbitrate(req); }));
    server_.Get("/market/table", Wrap([this](const auto&) { return Table(); }));
    server_.Post("/market/sell", Wrap([this](const auto& req) { return Sell(req); }));
    server_.Post("/market/buy", Wrap([this](const auto& req) { return Buy(req); }));

    if (options_.test_hooks) {
      server_.Post("/test/truncate", Wrap([this](const auto& req) { return TestTruncate(req); }));
      server_.Post("/test/mutate", Wrap([this](const auto& req) { return TestMutate(req); }));
    }
  }

  std::pair<int, Json> Mine() {
    for (;;) {
      Block last;
      {
        std::shared_lock lock(mutex_);
        last = chain_.last_block();
      }
      const std::uint64_t proof = ProofOfWork(last, chain_.difficulty());
      std::unique_lock lock(mutex_);
      // The tip may have moved (another mine or an adopted chain).
      if (chain_.last_block() != last) continue;
      chain_.NewTransaction({std::string(kCoinbaseSender), chain_.node_id(), kCoinbaseReward});
      Json body = BlockToJson(chain_.ForgeBlock(proof));
      body["message"] = "New Block Forged";
      return {200, std::move(body)};
    }
  }

  std::pair<int, Json> NewTransaction(const httplib::Request& req) {
    const Json body = ParseBody(req);
    Transaction tx{RequireString(body, "sender"), RequireString(body, "recipient"),
                   RequireDecimal<Energy>(body, "amount")};
    if (tx.is_coinbase()) throw HttpError(400, "sender \"0\" is reserved for the mining reward");
    std::unique_lock lock(mutex_);
    const auto index = chain_.NewTransaction(std::move(tx));
    return {201, {{"message", "Transaction will be added to Block " + std::to_string(index)}}};
  }

  std::pair<int, Json> RegisterNodes(const httplib::Request& req) {
    const Json body = ParseBody(req);
    const auto& nodes = Require(body, "nodes");
    if (!nodes.is_array() || nodes.empty()) throw HttpError(400, "\"nodes\" must be a non-empty list of addresses");
    std::unique_lock lock(mutex_);
    PeerSet updated = peers_;
    for (const auto& n : nodes) {
      if (!n.is_string()) throw HttpError(400, "node addresses must be strings");
      updated.Register(n.get<std::string>());
    }
    peers_ = std::move(updated);
    Json list = Json::array();
    for (const auto& p : peers_.peers()) list.push_back(p);
    return {201, {{"message", "New nodes have been added"}, {"total_nodes", std::move(list)}}};
  }

  PeerSet peers() const {
    std::shared_lock lock(mutex_);
    return peers_;
  }

  static Json OutcomeBody(bool replaced, const std::vector<Block>& blocks) {
    if (replaced) return {{"message", kReplacedMessage}, {"new_chain", BlocksToJson(blocks)}};
    return {{"message", kAuthoritativeMessage}, {"chain", BlocksToJson(blocks)}};
  }

  std::pair<int, Json> Resolve() {
    const auto fetched = FetchPeerChains(peers());
    std::unique_lock lock(mutex_);
    const auto outcome = ResolveConflicts(chain_, fetched);
    return {200, OutcomeBody(outcome.replaced, outcome.chain)};
  }

  std::pair<int, Json> Arbitrate(const httplib::Request& req) {
    const Json body = ParseBody(req);
    const auto reference = BlocksFromPayload(Require(body, "reference"));
    const auto fetched = FetchPeerChains(peers());
    std::unique_lock lock(mutex_);
    const auto local = chain_.blocks();
    if (reference.size() < local.size()) throw HttpError(400, "reference is shorter than the local chain");
    if (MatchesReferencePrefix(local, reference)) return {200, OutcomeBody(false, local)};
    for (const auto& rival : fetched) {
      if (rival.size() != local.size() || !ValidateChain(rival, chain_.difficulty())) continue;
      try {
        const auto& chosen = ArbitrateEqualLength(local, rival, reference);
        chain_.AdoptBlocks(chosen);
        return {200, OutcomeBody(true, chain_.blocks())};
      } catch (const UnresolvableConflict&) {
      }
    }
    throw HttpError(409, "unresolvable: no equal-length chain matches the reference snapshot");
  }

  static Json OfferToJson(const SellOffer& o) {
    return {{"seller", o.seller}, {"ppu", o.ppu.to_double()}, {"units", o.units.to_double()}};
  }

  std::pair<int, Json> Table() {
    const OrderBook snapshot = book();
    Json rows = Json::array();
    std::size_t index = 1;
    for (const auto& o : snapshot.offers()) {
      Json row = OfferToJson(o);
      row["index"] = index++;
      rows.push_back(std::move(row));
    }
    return {200, {{"offers", std::move(rows)}, {"total_units", snapshot.total_units().to_double()}}};
  }

  std::pair<int, Json> Sell(const httplib::Request& req) {
    const Json body = ParseBody(req);
    SellOffer offer{RequireString(body, "seller"), RequireDecimal<Price>(body, "ppu"),
                    RequireDecimal<Energy>(body, "units"), 0};
    std::unique_lock lock(mutex_);
    OrderBook updated = PostOffer(book_, std::move(offer), options_.market);
    store_.Save(updated);
    book_ = std::move(updated);
    Json row = OfferToJson(book_.offers().back());
    row["index"] = book_.size();
    return {201, {{"message", "Offer posted"}, {"offer", std::move(row)}}};
  }

  std::pair<int, Json> Buy(const httplib::Request& req) {
    const Json body = ParseBody(req);
    const BuyRequest request{RequireString(body, "buyer"), RequireDecimal<Energy>(body, "units")};
    std::unique_lock lock(mutex_);
    auto result = MatchBuy(book_, request, options_.market);
    const auto txs = FillsToTransactions(result.fills);
    for (const auto& tx : txs) ValidateTransaction(tx);
    store_.Save(result.book);
    book_ = std::move(result.book);
    std::uint64_t block_index = 0;
    for (const auto& tx : txs) block_index = chain_.NewTransaction(tx);

    Json fills = Json::array();
    for (const auto& f : result.fills) {
      fills.push_back({{"seller", f.seller},
                       {"buyer", f.buyer},
                       {"units", f.units.to_double()},
                       {"ppu", f.ppu.to_double()},
                       {"cost", f.cost.to_double()}});
    }
    return {200,
            {{"fills", std::move(fills)}, {"total_cost", TotalCost(result.fills).to_double()}, {"block_index", block_index}}};
  }

  std::pair<int, Json> TestTruncate(const httplib::Request& req) {
    const Json body = ParseBody(req);
    const auto& keep = Require(body, "keep_blocks");
    if (!keep.is_number_unsigned()) throw HttpError(400, "\"keep_blocks\" must be a positive integer");
    std::unique_lock lock(mutex_);
    try {
      chain_.Truncate(keep.get<std::size_t>());
    } catch (const std::out_of_range& e) {
      throw HttpError(400, e.what());
    }
    return {200, ChainPayload(chain_.blocks())};
  }

  std::pair<int, Json> TestMutate(const httplib::Request& req) {
    const Json body = ParseBody(req);
    const auto& block_index = Require(body, "block_index");
    const auto& tx_index = Require(body, "tx_index");
    if (!block_index.is_number_unsigned() || !tx_index.is_number_unsigned()) {
      throw HttpError(400, "\"block_index\" and \"tx_index\" must be non-negative integers");
    }
    const Energy amount = RequireDecimal<Energy>(body, "amount");
    std::unique_lock lock(mutex_);
    try {
      chain_.MutateAmount(block_index.get<std::uint64_t>(), tx_index.get<std::size_t>(), amount);
    } catch (const std::out_of_range& e) {
      throw HttpError(400, e.what());
    }
    return {200, ChainPayload(chain_.blocks())};
  }

  NodeOptions options_;
  mutable std::shared_mutex mutex_;
  Chain chain_;
  PeerSet peers_;
  OrderBook book_;
  BookStore store_;

  httplib::Server server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  int port_ = -1;
};

}  // namespace energychain
