#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "energychain/chain.hpp"

namespace energychain {

/// Malformed JSON payload or snapshot file.
class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON wire form used by GET /chain and snapshot files. Amounts render as kWh
// numbers and timestamps as seconds; both convert back exactly.

inline nlohmann::json TransactionToJson(const Transaction& tx) {
  return {{"amount", tx.amount.to_double()}, {"recipient", tx.recipient}, {"sender", tx.sender}};
}

inline nlohmann::json BlockToJson(const Block& block) {
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& tx : block.transactions) txs.push_back(TransactionToJson(tx));
  return {
      {"index", block.index},
      {"previous_hash", block.previous_hash},
      {"proof", block.proof},
      {"timestamp", block.timestamp.seconds()},
      {"transactions", std::move(txs)},
  };
}

inline nlohmann::json BlocksToJson(const std::vector<Block>& blocks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : blocks) arr.push_back(BlockToJson(b));
  return arr;
}

/// {"chain": [...], "length": N}
inline nlohmann::json ChainPayload(const std::vector<Block>& blocks) {
  return {{"chain", BlocksToJson(blocks)}, {"length", blocks.size()}};
}

namespace detail {

inline const nlohmann::json& Field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw WireError(std::string("missing field \"") + key + "\"");
  return *it;
}

inline std::uint64_t UnsignedField(const nlohmann::json& obj, const char* key) {
  const auto& v = Field(obj, key);
  if (!v.is_number_unsigned()) throw WireError(std::string("field \"") + key + "\" must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string StringField(const nlohmann::json& obj, const char* key) {
  const auto& v = Field(obj, key);
  if (!v.is_string()) throw WireError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline Energy EnergyFromJson(const nlohmann::json& v, const char* what) {
  if (!v.is_number()) throw WireError(std::string(what) + " must be a number");
  auto e = Energy::FromDouble(v.get<double>());
  if (!e) throw WireError(std::string(what) + " must have at most 3 fraction digits");
  return *e;
}

inline Transaction TransactionFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw WireError("transaction must be an object");
  Transaction tx;
  tx.sender = detail::StringField(j, "sender");
  tx.recipient = detail::StringField(j, "recipient");
  tx.amount = EnergyFromJson(detail::Field(j, "amount"), "amount");
  return tx;
}

inline Block BlockFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw WireError("block must be an object");
  if (j.size() != 5) throw WireError("block must carry exactly five fields");
  Block b;
  b.index = detail::UnsignedField(j, "index");
  b.previous_hash = detail::StringField(j, "previous_hash");
  b.proof = detail::UnsignedField(j, "proof");
  const auto& ts = detail::Field(j, "timestamp");
  if (!ts.is_number()) throw WireError("field \"timestamp\" must be a number");
  b.timestamp = Timestamp::FromSeconds(ts.get<double>());
  const auto& txs = detail::Field(j, "transactions");
  if (!txs.is_array()) throw WireError("field \"transactions\" must be an array");
  for (const auto& t : txs) b.transactions.push_back(TransactionFromJson(t));
  return b;
}

inline std::vector<Block> BlocksFromJson(const nlohmann::json& arr) {
  if (!arr.is_array()) throw WireError("chain must be an array");
  std::vector<Block> blocks;
  blocks.reserve(arr.size());
  for (const auto& b : arr) blocks.push_back(BlockFromJson(b));
  return blocks;
}

/// Parses a {"chain", "length"} payload; length must agree with the array.
inline std::vector<Block> BlocksFromPayload(const nlohmann::json& payload) {
  if (!payload.is_object()) throw WireError("chain payload must be an object");
  auto blocks = BlocksFromJson(detail::Field(payload, "chain"));
  if (detail::UnsignedField(payload, "length") != blocks.size()) throw WireError("length disagrees with chain");
  if (blocks.empty()) throw WireError("chain is empty");
  return blocks;
}

inline std::vector<Block> BlocksFromPayload(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw WireError(std::string("invalid JSON: ") + e.what());
  }
  return BlocksFromPayload(j);
}

inline void WriteSnapshot(const std::filesystem::path& path, const std::vector<Block>& blocks) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw WireError("cannot write snapshot " + tmp.string());
    out << ChainPayload(blocks).dump();
    if (!out) throw WireError("failed writing snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<Block> ReadSnapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WireError("cannot open snapshot " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return BlocksFromPayload(ss.str());
}

}  // namespace energychain
