#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "energychain/quantity.hpp"
#include "energychain/sha256.hpp"

namespace energychain {

inline constexpr int kDefaultDifficulty = 4;
inline constexpr std::string_view kCoinbaseSender = "0";
inline constexpr std::string_view kGenesisPreviousHash = "1";
inline constexpr std::uint64_t kGenesisProof = 100;
inline const Energy kCoinbaseReward = Energy::FromWhole(1);

/// Raised when a transaction, block or request violates a domain invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Seconds since the Unix epoch at microsecond resolution.
struct Timestamp {
  std::int64_t micros = 0;

  static Timestamp Now() {
    using namespace std::chrono;
    return {duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()};
  }
  static Timestamp FromSeconds(double seconds) { return {static_cast<std::int64_t>(std::llround(seconds * 1e6))}; }

  double seconds() const { return static_cast<double>(micros) / 1e6; }

  /// Always exactly six fraction digits, e.g. "1556982715.026908".
  std::string to_string() const {
    std::string frac = std::to_string(micros % 1'000'000);
    frac.insert(0, 6 - frac.size(), '0');
    return std::to_string(micros / 1'000'000) + "." + frac;
  }

  auto operator<=>(const Timestamp&) const = default;
};

struct Transaction {
  std::string sender;
  std::string recipient;
  Energy amount;

  bool is_coinbase() const { return sender == kCoinbaseSender; }
  bool operator==(const Transaction&) const = default;
};

struct Block {
  std::uint64_t index = 0;
  Timestamp timestamp;
  std::vector<Transaction> transactions;
  std::uint64_t proof = 0;
  std::string previous_hash;

  bool operator==(const Block&) const = default;
};

namespace detail {

inline bool IsValidUtf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace detail

/// Throws ValidationError unless the transaction satisfies the ledger rules:
/// non-empty UTF-8 parties, positive amount, and no self-trade.
inline void ValidateTransaction(const Transaction& tx) {
  if (tx.sender.empty()) throw ValidationError("transaction sender is empty");
  if (tx.recipient.empty()) throw ValidationError("transaction recipient is empty");
  if (!detail::IsValidUtf8(tx.sender) || !detail::IsValidUtf8(tx.recipient)) {
    throw ValidationError("transaction parties must be valid UTF-8");
  }
  if (tx.amount.raw() <= 0) throw ValidationError("transaction amount must be positive");
  if (tx.sender == tx.recipient) throw ValidationError("sender and recipient must differ");
}

inline Block Genesis() {
  Block genesis;
  genesis.index = 1;
  genesis.timestamp = Timestamp{0};
  genesis.proof = kGenesisProof;
  genesis.previous_hash = std::string(kGenesisPreviousHash);
  return genesis;
}

/// Sorted-key, whitespace-free JSON. Amounts are milli-kWh integers and the
/// timestamp is a fixed six-fraction-digit string.
inline std::string CanonicalSerialize(const Block& block) {
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& tx : block.transactions) {
    txs.push_back({{"amount", tx.amount.raw()}, {"recipient", tx.recipient}, {"sender", tx.sender}});
  }
  const nlohmann::json obj = {
      {"index", block.index},
      {"previous_hash", block.previous_hash},
      {"proof", block.proof},
      {"timestamp", block.timestamp.to_string()},
      {"transactions", std::move(txs)},
  };
  return obj.dump();
}

inline std::string HashBlock(const Block& block) { return Sha256Hex(CanonicalSerialize(block)); }

inline bool ValidProof(std::uint64_t last_proof, std::uint64_t proof, std::string_view last_hash,
                       int difficulty = kDefaultDifficulty) {
  std::string guess = std::to_string(last_proof);
  guess += std::to_string(proof);
  guess += last_hash;
  return HasLeadingHexZeros(Sha256(guess), difficulty);
}

/// Smallest proof, counting up from 0, that satisfies ValidProof against `last`.
inline std::uint64_t ProofOfWork(const Block& last, int difficulty = kDefaultDifficulty) {
  const std::string last_hash = HashBlock(last);
  const std::string last_proof = std::to_string(last.proof);
  std::string guess;
  for (std::uint64_t proof = 0;; ++proof) {
    guess = last_proof;
    guess += std::to_string(proof);
    guess += last_hash;
    if (HasLeadingHexZeros(Sha256(guess), difficulty)) return proof;
  }
}

/// 1-based index of the first block at which validation fails, or nullopt
/// when the whole list is valid. A genesis mismatch reports 1.
inline std::optional<std::uint64_t> TamperScan(std::span<const Block> blocks, int difficulty = kDefaultDifficulty) {
  if (blocks.empty() || blocks.front() != Genesis()) return 1;
  std::string prev_hash = HashBlock(blocks.front());
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    const Block& prev = blocks[k - 1];
    const Block& cur = blocks[k];
    if (cur.previous_hash != prev_hash || cur.index != prev.index + 1 ||
        !ValidProof(prev.proof, cur.proof, cur.previous_hash, difficulty)) {
      return static_cast<std::uint64_t>(k + 1);
    }
    prev_hash = HashBlock(cur);
  }
  return std::nullopt;
}

inline bool ValidateChain(std::span<const Block> blocks, int difficulty = kDefaultDifficulty) {
  return !blocks.empty() && !TamperScan(blocks, difficulty).has_value();
}

/// 128 random bits as 32 lowercase hex characters.
inline std::string NewNodeId() {
  std::random_device rd;
  Digest bytes{};
  for (std::size_t i = 0; i < 16; i += 4) {
    const std::uint32_t r = rd();
    for (std::size_t k = 0; k < 4; ++k) bytes[i + k] = static_cast<std::uint8_t>(r >> (8 * k));
  }
  return ToHex(bytes).substr(0, 32);
}

/// A node's ledger: the block list rooted at the fixed genesis plus the
/// mempool of transactions waiting for the next forged block. Mutations must
/// be serialized by the owner.
class Chain {
 public:
  explicit Chain(std::string node_id = NewNodeId(), int difficulty = kDefaultDifficulty)
      : node_id_(std::move(node_id)), difficulty_(difficulty), blocks_{Genesis()} {
    if (!IsLowerHex(node_id_, 32)) throw ValidationError("node id must be 32 lowercase hex characters");
    if (difficulty_ < 0 || difficulty_ > 64) throw ValidationError("difficulty must be in [0, 64]");
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<Transaction>& mempool() const { return mempool_; }
  const std::string& node_id() const { return node_id_; }
  int difficulty() const { return difficulty_; }
  const Block& last_block() const { return blocks_.back(); }
  std::size_t length() const { return blocks_.size(); }

  /// Queues a transaction and returns the index of the block that will hold it.
  std::uint64_t NewTransaction(Transaction tx) {
    ValidateTransaction(tx);
    mempool_.push_back(std::move(tx));
    return last_block().index + 1;
  }

  /// Seals the mempool into a new block carrying `proof`.
  const Block& ForgeBlock(std::uint64_t proof, Timestamp timestamp = Timestamp::Now()) {
    const Block& last = last_block();
    const std::string last_hash = HashBlock(last);
    if (!ValidProof(last.proof, proof, last_hash, difficulty_)) {
      throw ValidationError("proof " + std::to_string(proof) + " does not satisfy the work target");
    }
    if (timestamp.micros <= 0) throw ValidationError("block timestamp must be positive");
    Block block;
    block.index = last.index + 1;
    block.timestamp = timestamp;
    block.transactions = std::exchange(mempool_, {});
    block.proof = proof;
    block.previous_hash = last_hash;
    blocks_.push_back(std::move(block));
    return blocks_.back();
  }

  /// Full mining flow: search, credit the miner, forge.
  const Block& Mine() {
    const std::uint64_t proof = ProofOfWork(last_block(), difficulty_);
    NewTransaction({std::string(kCoinbaseSender), node_id_, kCoinbaseReward});
    return ForgeBlock(proof);
  }

  /// Swaps in an adopted block list and drops mempool entries that it already
  /// records (multiset difference against the blocks being replaced).
  void AdoptBlocks(std::vector<Block> adopted) {
    std::vector<Transaction> fresh;
    for (const auto& block : adopted) {
      for (const auto& tx : block.transactions) fresh.push_back(tx);
    }
    for (const auto& block : blocks_) {
      for (const auto& tx : block.transactions) {
        if (auto it = std::find(fresh.begin(), fresh.end(), tx); it != fresh.end()) fresh.erase(it);
      }
    }
    for (const auto& tx : fresh) {
      if (auto it = std::find(mempool_.begin(), mempool_.end(), tx); it != mempool_.end()) mempool_.erase(it);
    }
    blocks_ = std::move(adopted);
  }

  // Fault injection. These deliberately bypass the validity rules.

  void Truncate(std::size_t keep_blocks) {
    if (keep_blocks < 1 || keep_blocks > blocks_.size()) {
      throw std::out_of_range("truncate keep_blocks out of range");
    }
    blocks_.resize(keep_blocks);
  }

  void MutateAmount(std::uint64_t block_index, std::size_t tx_index, Energy amount) {
    if (block_index <= 1) throw std::out_of_range("genesis block is immutable");
    if (block_index > blocks_.size()) throw std::out_of_range("block index out of range");
    auto& txs = blocks_[block_index - 1].transactions;
    if (tx_index >= txs.size()) throw std::out_of_range("transaction index out of range");
    txs[tx_index].amount = amount;
  }

 private:
  std::string node_id_;
  int difficulty_;
  std::vector<Block> blocks_;
  std::vector<Transaction> mempool_;
};

}  // namespace energychain
