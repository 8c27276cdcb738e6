#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "energychain/chain.hpp"
#include "energychain/quantity.hpp"

namespace energychain {

/// Regional bounds on offers: 0 <= ppu < ppu_cap and 0 < units <= max_demand.
struct MarketConfig {
  Price ppu_cap = Price::FromWhole(10);
  Energy max_demand = Energy::FromWhole(100);

  void Validate() const {
    if (ppu_cap.raw() <= 0) throw ValidationError("ppu cap must be positive");
    if (max_demand.raw() <= 0) throw ValidationError("max demand must be positive");
  }
};

struct SellOffer {
  std::string seller;
  Price ppu;
  Energy units;
  std::uint64_t posted_at = 0;

  bool operator==(const SellOffer&) const = default;
};

struct BuyRequest {
  std::string buyer;
  Energy units;
};

struct TradeFill {
  std::string seller;
  std::string buyer;
  Energy units;
  Price ppu;
  Money cost;

  bool operator==(const TradeFill&) const = default;
};

enum class OfferRejection {
  kInvalidSeller,
  kNegativePrice,
  kPriceAtOrAboveCap,
  kNonPositiveUnits,
  kUnitsAboveMaxDemand,
};

inline std::string_view Describe(OfferRejection r) {
  switch (r) {
    case OfferRejection::kInvalidSeller: return "seller must be a non-empty UTF-8 name";
    case OfferRejection::kNegativePrice: return "ppu must be >= 0";
    case OfferRejection::kPriceAtOrAboveCap: return "ppu must be below the regional price cap";
    case OfferRejection::kNonPositiveUnits: return "units must be > 0";
    case OfferRejection::kUnitsAboveMaxDemand: return "units must not exceed the maximum demand";
  }
  return "invalid offer";
}

inline std::optional<OfferRejection> ValidateOffer(const SellOffer& offer, const MarketConfig& config) {
  if (offer.seller.empty() || !detail::IsValidUtf8(offer.seller)) return OfferRejection::kInvalidSeller;
  if (offer.ppu.raw() < 0) return OfferRejection::kNegativePrice;
  if (offer.ppu >= config.ppu_cap) return OfferRejection::kPriceAtOrAboveCap;
  if (offer.units.raw() <= 0) return OfferRejection::kNonPositiveUnits;
  if (offer.units > config.max_demand) return OfferRejection::kUnitsAboveMaxDemand;
  return std::nullopt;
}

class MarketError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientSupply : public MarketError {
 public:
  InsufficientSupply() : MarketError("insufficient market supply") {}
};

/// Live sell offers in posting order.
class OrderBook {
 public:
  OrderBook() = default;

  const std::vector<SellOffer>& offers() const { return offers_; }
  bool empty() const { return offers_.empty(); }
  std::size_t size() const { return offers_.size(); }
  std::uint64_t next_sequence() const { return next_seq_; }

  Energy total_units() const {
    Energy total;
    for (const auto& o : offers_) total += o.units;
    return total;
  }

  /// Appends an already-validated offer and stamps posted_at.
  void Append(SellOffer offer) {
    offer.posted_at = next_seq_++;
    offers_.push_back(std::move(offer));
  }

  std::vector<SellOffer>& mutable_offers() { return offers_; }

 private:
  std::vector<SellOffer> offers_;
  std::uint64_t next_seq_ = 1;
};

inline OrderBook PostOffer(OrderBook book, SellOffer offer, const MarketConfig& config) {
  if (auto why = ValidateOffer(offer, config)) throw MarketError(std::string(Describe(*why)));
  book.Append(std::move(offer));
  return book;
}

struct MatchResult {
  std::vector<TradeFill> fills;
  OrderBook book;
};

/// Greedy cheapest-first fill. Offers are taken in (ppu, posted_at) order; a
/// fully consumed offer leaves the book, the last one may be partially drawn
/// down in place. The buyer's own offers are not eligible.
inline MatchResult MatchBuy(OrderBook book, const BuyRequest& request, const MarketConfig& config) {
  if (request.buyer.empty() || !detail::IsValidUtf8(request.buyer)) {
    throw MarketError("buyer must be a non-empty UTF-8 name");
  }
  if (request.units.raw() <= 0) throw MarketError("units must be > 0");
  if (request.units > config.max_demand) throw MarketError("units must not exceed the maximum demand");

  auto& offers = book.mutable_offers();
  Energy supply;
  for (const auto& o : offers)
    if (o.seller != request.buyer) supply += o.units;
  if (request.units > supply) throw InsufficientSupply();

  MatchResult result;
  Energy remaining = request.units;
  while (remaining.raw() > 0) {
    auto cheapest = offers.end();
    for (auto it = offers.begin(); it != offers.end(); ++it) {
      if (it->seller == request.buyer) continue;
      if (cheapest == offers.end() || it->ppu < cheapest->ppu ||
          (it->ppu == cheapest->ppu && it->posted_at < cheapest->posted_at)) {
        cheapest = it;
      }
    }
    const Energy take = std::min(remaining, cheapest->units);
    result.fills.push_back({cheapest->seller, request.buyer, take, cheapest->ppu, take * cheapest->ppu});
    remaining -= take;
    if (take == cheapest->units) {
      offers.erase(cheapest);
    } else {
      cheapest->units -= take;
    }
  }
  result.book = std::move(book);
  return result;
}

inline Money TotalCost(const std::vector<TradeFill>& fills) {
  Money total;
  for (const auto& f : fills) total += f.cost;
  return total;
}

/// Ledger entries for a set of fills: buyer pays seller in energy units.
inline std::vector<Transaction> FillsToTransactions(const std::vector<TradeFill>& fills) {
  std::vector<Transaction> txs;
  txs.reserve(fills.size());
  for (const auto& f : fills) txs.push_back({f.buyer, f.seller, f.units});
  return txs;
}

// CSV store for the book ("energydemand"): header `seller,ppu,units`, one row
// per offer in posting order.

namespace detail {

inline std::string CsvField(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Splits CSV text into records (RFC 4180 quoting).
inline std::vector<std::vector<std::string>> ParseCsv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::exchange(field, {}));
      field_started = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::exchange(field, {}));
        rows.push_back(std::exchange(row, {}));
      }
      field_started = false;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline std::string BookToCsv(const OrderBook& book) {
  std::string out = "seller,ppu,units\n";
  for (const auto& o : book.offers()) {
    out += detail::CsvField(o.seller);
    out += ',';
    out += o.ppu.to_string();
    out += ',';
    out += o.units.to_string();
    out += '\n';
  }
  return out;
}

/// Rebuilds a book from CSV text. Every row must satisfy the market bounds.
inline OrderBook BookFromCsv(std::string_view text, const MarketConfig& config) {
  const auto rows = detail::ParseCsv(text);
  if (rows.empty() || rows.front() != std::vector<std::string>{"seller", "ppu", "units"}) {
    throw ValidationError("book CSV must start with header seller,ppu,units");
  }
  OrderBook book;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 3) throw ValidationError("book CSV row " + std::to_string(r) + " must have 3 fields");
    auto ppu = Price::Parse(row[1]);
    auto units = Energy::Parse(row[2]);
    if (!ppu || !units) throw ValidationError("book CSV row " + std::to_string(r) + " has a malformed number");
    SellOffer offer{row[0], *ppu, *units, 0};
    if (auto why = ValidateOffer(offer, config)) {
      throw ValidationError("book CSV row " + std::to_string(r) + ": " + std::string(Describe(*why)));
    }
    book.Append(std::move(offer));
  }
  return book;
}

/// File-backed persistence; every save replaces the file via rename.
class BookStore {
 public:
  explicit BookStore(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  void Save(const OrderBook& book) const {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    const auto tmp = std::filesystem::path(path_.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << BookToCsv(book);
      if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
  }

  /// Empty book when the file does not exist yet.
  OrderBook Load(const MarketConfig& config) const {
    if (!std::filesystem::exists(path_)) return {};
    std::ifstream in(path_, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return BookFromCsv(ss.str(), config);
  }

 private:
  std::filesystem::path path_;
};

}  // namespace energychain
