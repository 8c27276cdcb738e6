#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "energychain/chain.hpp"
#include "energychain/consensus.hpp"
#include "energychain/node.hpp"
#include "energychain/wire.hpp"

namespace energychain::harness {

using Json = nlohmann::json;

/// Scenario file is malformed or references something that does not exist.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Step {
  std::string action;
  std::optional<std::size_t> node;  // target node, when the action has one
  Json args;                        // the raw step object
};

struct Scenario {
  std::string name;
  std::size_t node_count = 0;
  int base_port = 0;  // 0 lets every node pick an ephemeral port
  std::optional<int> difficulty;
  std::vector<Step> steps;
};

/// "A" -> 0, "B" -> 1, ... ; numeric indexes are accepted as well.
inline std::string NodeLabel(std::size_t i) {
  std::string label;
  do {
    label.insert(label.begin(), static_cast<char>('A' + i % 26));
    i = i / 26;
  } while (i-- > 0);
  return label;
}

namespace detail {

inline std::size_t ParseNodeRef(const Json& ref, std::size_t node_count) {
  std::optional<std::size_t> idx;
  if (ref.is_number_unsigned()) {
    idx = ref.get<std::size_t>();
  } else if (ref.is_string()) {
    for (std::size_t i = 0; i < node_count; ++i)
      if (NodeLabel(i) == ref.get<std::string>()) idx = i;
  }
  if (!idx || *idx >= node_count) throw ScenarioError("unknown node reference " + ref.dump());
  return *idx;
}

inline void RequireKeys(const Json& step, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!step.contains(k)) throw ScenarioError("step \"" + step.value("action", "?") + "\" is missing \"" + k + "\"");
  }
}

}  // namespace detail

inline Scenario ParseScenario(const Json& j) {
  if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
  Scenario s;
  s.name = j.value("name", "unnamed");
  const Json nodes = j.value("nodes", Json::object());
  s.node_count = nodes.value("count", std::size_t{0});
  s.base_port = nodes.value("base_port", 0);
  if (s.node_count == 0) throw ScenarioError("scenario must declare at least one node");
  if (s.base_port < 0 || s.base_port + static_cast<int>(s.node_count) > 65536) throw ScenarioError("bad port range");
  if (j.contains("difficulty")) {
    const int d = j.at("difficulty").get<int>();
    if (d < 0 || d > 64) throw ScenarioError("difficulty must be in [0, 64]");
    s.difficulty = d;
  }

  static const std::vector<std::string> kNodeActions = {"sell", "buy", "transaction", "mine", "kill", "truncate",
                                                        "mutate", "resolve", "arbitrate", "snapshot",
                                                        "assert_length", "assert_tamper_index",
                                                        "assert_matches_snapshot"};
  for (const auto& raw : j.value("steps", Json::array())) {
    if (!raw.is_object() || !raw.contains("action") || !raw.at("action").is_string()) {
      throw ScenarioError("every step needs a string \"action\"");
    }
    Step step;
    step.action = raw.at("action").get<std::string>();
    step.args = raw;
    const bool targets_node =
        std::find(kNodeActions.begin(), kNodeActions.end(), step.action) != kNodeActions.end();
    if (targets_node) {
      detail::RequireKeys(raw, {"node"});
      step.node = detail::ParseNodeRef(raw.at("node"), s.node_count);
    }
    if (step.action == "sell") {
      detail::RequireKeys(raw, {"seller", "ppu", "units"});
    } else if (step.action == "buy") {
      detail::RequireKeys(raw, {"buyer", "units"});
    } else if (step.action == "transaction") {
      detail::RequireKeys(raw, {"sender", "recipient", "amount"});
    } else if (step.action == "truncate") {
      detail::RequireKeys(raw, {"keep_blocks"});
      if (!raw.at("keep_blocks").is_number_unsigned() || raw.at("keep_blocks").get<std::uint64_t>() < 1) {
        throw ScenarioError("truncate keep_blocks must be >= 1");
      }
    } else if (step.action == "mutate") {
      detail::RequireKeys(raw, {"block_index", "tx_index", "amount"});
      if (!raw.at("block_index").is_number_unsigned() || raw.at("block_index").get<std::uint64_t>() < 2) {
        throw ScenarioError("mutate must target a non-genesis block (block_index >= 2)");
      }
    } else if (step.action == "arbitrate" || step.action == "assert_matches_snapshot") {
      detail::RequireKeys(raw, {"reference"});
    } else if (step.action == "snapshot") {
      detail::RequireKeys(raw, {"path"});
    } else if (step.action == "assert_length") {
      detail::RequireKeys(raw, {"length"});
    } else if (step.action == "assert_tamper_index") {
      detail::RequireKeys(raw, {"expect"});
    } else if (step.action == "assert_equal_chains") {
      detail::RequireKeys(raw, {"nodes"});
      if (!raw.at("nodes").is_array() || raw.at("nodes").size() < 2) {
        throw ScenarioError("assert_equal_chains needs at least two nodes");
      }
      for (const auto& ref : raw.at("nodes")) detail::ParseNodeRef(ref, s.node_count);
    } else if (!targets_node) {
      throw ScenarioError("unknown action \"" + step.action + "\"");
    }
    s.steps.push_back(std::move(step));
  }
  return s;
}

inline Scenario LoadScenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario " + path.string());
  try {
    return ParseScenario(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

struct StepOutcome {
  std::size_t index = 0;  // 1-based
  std::string action;
  std::string node;
  bool ok = false;
  std::string detail;
};

struct Assertion {
  std::size_t step = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string scenario;
  int difficulty = kDefaultDifficulty;
  std::vector<StepOutcome> steps;
  std::vector<Assertion> assertions;
  std::vector<std::pair<std::string, std::string>> final_digests;  // label -> tip hash ("down" when killed)
  double elapsed_seconds = 0.0;

  bool passed() const {
    for (const auto& s : steps)
      if (!s.ok) return false;
    for (const auto& a : assertions)
      if (!a.passed) return false;
    return true;
  }

  Json ToJson() const {
    Json j;
    j["scenario"] = scenario;
    j["difficulty"] = difficulty;
    j["passed"] = passed();
    j["elapsed_seconds"] = elapsed_seconds;
    j["steps"] = Json::array();
    for (const auto& s : steps) {
      j["steps"].push_back(
          {{"index", s.index}, {"action", s.action}, {"node", s.node}, {"ok", s.ok}, {"detail", s.detail}});
    }
    j["assertions"] = Json::array();
    for (const auto& a : assertions) {
      j["assertions"].push_back({{"step", a.step}, {"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
    }
    j["final_digests"] = Json::object();
    for (const auto& [label, digest] : final_digests) j["final_digests"][label] = digest;
    return j;
  }

  std::string ToText() const {
    std::ostringstream out;
    out << "scenario: " << scenario << " (difficulty " << difficulty << ")\n";
    for (const auto& s : steps) {
      out << "  [" << s.index << "] " << (s.ok ? "ok   " : "FAIL ") << s.action;
      if (!s.node.empty()) out << " " << s.node;
      if (!s.detail.empty()) out << ": " << s.detail;
      out << "\n";
    }
    out << "assertions:\n";
    for (const auto& a : assertions) {
      out << "  " << (a.passed ? "PASS " : "FAIL ") << a.name << " (step " << a.step << ")";
      if (!a.detail.empty()) out << ": " << a.detail;
      out << "\n";
    }
    out << "final digests:\n";
    for (const auto& [label, digest] : final_digests) out << "  " << label << " " << digest << "\n";
    out << "elapsed: " << elapsed_seconds << " s\n";
    out << (passed() ? "RESULT: PASS" : "RESULT: FAIL") << "\n";
    return out.str();
  }
};

struct RunOptions {
  std::optional<int> difficulty;           // overrides the scenario's value
  std::filesystem::path workdir;           // node books and relative snapshot paths; temp dir when empty
  std::string host = "127.0.0.1";
};

/// Drives a scenario against freshly started in-process nodes that speak the
/// same HTTP contract as standalone nodes (with test hooks enabled).
class Runner {
 public:
  Runner(Scenario scenario, RunOptions options) : scenario_(std::move(scenario)), options_(std::move(options)) {
    difficulty_ = options_.difficulty.value_or(scenario_.difficulty.value_or(kDefaultDifficulty));
    if (options_.workdir.empty()) {
      owns_workdir_ = true;
      options_.workdir = std::filesystem::temp_directory_path() /
                         ("energychain-" + scenario_.name + "-" + NewNodeId().substr(0, 8));
    }
    std::filesystem::create_directories(options_.workdir);
  }

  Report Run() {
    const auto start = std::chrono::steady_clock::now();
    Report report;
    report.scenario = scenario_.name;
    report.difficulty = difficulty_;
    StartNodes();

    for (std::size_t i = 0; i < scenario_.steps.size(); ++i) {
      const Step& step = scenario_.steps[i];
      StepOutcome outcome{i + 1, step.action, step.node ? NodeLabel(*step.node) : "", false, ""};
      try {
        outcome.detail = Execute(step, i + 1, report);
        outcome.ok = true;
      } catch (const std::exception& e) {
        outcome.detail = e.what();
      }
      report.steps.push_back(std::move(outcome));
    }

    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      std::string digest = "down";
      if (nodes_[n]->running()) {
        const auto blocks = nodes_[n]->blocks();
        digest = HashBlock(blocks.back()) + " (length " + std::to_string(blocks.size()) + ")";
      }
      report.final_digests.emplace_back(NodeLabel(n), digest);
    }
    for (auto& node : nodes_) node->Stop();
    nodes_.clear();
    if (owns_workdir_) {
      std::error_code ec;
      std::filesystem::remove_all(options_.workdir, ec);
    }
    report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

 private:
  void StartNodes() {
    for (std::size_t n = 0; n < scenario_.node_count; ++n) {
      NodeOptions opts;
      opts.host = options_.host;
      opts.port = scenario_.base_port == 0 ? 0 : scenario_.base_port + static_cast<int>(n);
      opts.book_path = options_.workdir / ("node" + NodeLabel(n)) / "energydemand.csv";
      std::filesystem::remove(opts.book_path);
      opts.test_hooks = true;
      opts.difficulty = difficulty_;
      auto node = std::make_unique<Node>(opts);
      node->Start();
      nodes_.push_back(std::move(node));
    }
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      Json list = Json::array();
      for (std::size_t m = 0; m < nodes_.size(); ++m)
        if (m != n) list.push_back(nodes_[m]->url());
      if (!list.empty()) Call(n, "POST", "/nodes/register", {{"nodes", list}}, 201);
    }
  }

  struct Reply {
    int status;
    std::string body;
    Json json;
  };

  Reply Call(std::size_t n, const std::string& method, const std::string& path, const Json& body = {},
             std::optional<int> expect_status = 200) {
    if (!nodes_[n]->running()) throw std::runtime_error("node " + NodeLabel(n) + " is unreachable (killed)");
    httplib::Client client(nodes_[n]->url());
    client.set_read_timeout(std::chrono::seconds(600));
    const auto res = method == "GET" ? client.Get(path) : client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("node " + NodeLabel(n) + " is unreachable");
    Reply reply{res->status, res->body, Json::parse(res->body, nullptr, false)};
    if (expect_status && reply.status != *expect_status) {
      std::string reason = reply.json.is_object() ? reply.json.value("error", res->body) : res->body;
      throw std::runtime_error(method + " " + path + " returned " + std::to_string(reply.status) + ": " + reason);
    }
    return reply;
  }

  std::filesystem::path Resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : options_.workdir / path;
  }

  static void Record(Report& report, std::size_t step, std::string name, bool passed, std::string detail) {
    report.assertions.push_back({step, std::move(name), passed, std::move(detail)});
  }

  std::string CheckMessage(const Step& step, std::size_t index, const Reply& reply, Report& report) {
    const std::string message = reply.json.value("message", "");
    if (step.args.contains("expect_message")) {
      const std::string expected = step.args.at("expect_message").get<std::string>();
      Record(report, index, step.action + " message", message == expected,
             "got \"" + message + "\", expected \"" + expected + "\"");
    }
    return message;
  }

  std::string Execute(const Step& step, std::size_t index, Report& report) {
    const auto& a = step.args;
    const std::size_t n = step.node.value_or(0);

    if (step.action == "sell") {
      Call(n, "POST", "/market/sell", {{"seller", a.at("seller")}, {"ppu", a.at("ppu")}, {"units", a.at("units")}},
           201);
      return a.at("seller").get<std::string>() + " offers " + a.at("units").dump() + " kWh @ " + a.at("ppu").dump();
    }
    if (step.action == "buy") {
      const bool expect_error = a.value("expect_error", false);
      auto reply = Call(n, "POST", "/market/buy", {{"buyer", a.at("buyer")}, {"units", a.at("units")}}, std::nullopt);
      if (expect_error) {
        Record(report, index, "buy rejected", reply.status >= 400 && reply.status < 500,
               "status " + std::to_string(reply.status));
        return "rejected: " + (reply.json.is_object() ? reply.json.value("error", "") : reply.body);
      }
      if (reply.status != 200) throw std::runtime_error("buy failed: " + reply.body);
      return std::to_string(reply.json.at("fills").size()) + " fill(s), total cost " + reply.json.at("total_cost").dump();
    }
    if (step.action == "transaction") {
      auto reply = Call(n, "POST", "/transactions/new",
                        {{"sender", a.at("sender")}, {"recipient", a.at("recipient")}, {"amount", a.at("amount")}}, 201);
      return reply.json.value("message", "");
    }
    if (step.action == "mine") {
      auto reply = Call(n, "GET", "/mine");
      return "block " + reply.json.at("index").dump() + " with " + std::to_string(reply.json.at("transactions").size()) +
             " transaction(s)";
    }
    if (step.action == "kill") {
      nodes_[n]->Stop();
      return "node stopped";
    }
    if (step.action == "truncate") {
      auto reply = Call(n, "POST", "/test/truncate", {{"keep_blocks", a.at("keep_blocks")}});
      return "length now " + reply.json.at("length").dump();
    }
    if (step.action == "mutate") {
      Call(n, "POST", "/test/mutate",
           {{"block_index", a.at("block_index")}, {"tx_index", a.at("tx_index")}, {"amount", a.at("amount")}});
      return "block " + a.at("block_index").dump() + " tx " + a.at("tx_index").dump() + " amount -> " +
             a.at("amount").dump();
    }
    if (step.action == "resolve") {
      return CheckMessage(step, index, Call(n, "GET", "/nodes/resolve"), report);
    }
    if (step.action == "arbitrate") {
      const auto reference = ReadSnapshot(Resolve(a.at("reference").get<std::string>()));
      auto reply = Call(n, "POST", "/nodes/arbitrate", {{"reference", ChainPayload(reference)}}, std::nullopt);
      if (reply.status != 200) {
        const std::string why = reply.json.is_object() ? reply.json.value("error", reply.body) : reply.body;
        if (a.contains("expect_message")) Record(report, index, "arbitrate message", false, why);
        throw std::runtime_error(why);
      }
      return CheckMessage(step, index, reply, report);
    }
    if (step.action == "snapshot") {
      auto reply = Call(n, "GET", "/chain");
      WriteSnapshot(Resolve(a.at("path").get<std::string>()), BlocksFromPayload(reply.body));
      return "wrote " + a.at("path").get<std::string>();
    }
    if (step.action == "assert_length") {
      auto reply = Call(n, "GET", "/chain");
      const auto got = reply.json.at("length").get<std::uint64_t>();
      const auto want = a.at("length").get<std::uint64_t>();
      Record(report, index, "length of " + NodeLabel(n), got == want,
             "got " + std::to_string(got) + ", expected " + std::to_string(want));
      return "length " + std::to_string(got);
    }
    if (step.action == "assert_tamper_index") {
      const auto blocks = BlocksFromPayload(Call(n, "GET", "/chain").body);
      const auto got = TamperScan(blocks, difficulty_);
      const std::string got_s = got ? std::to_string(*got) : "none";
      const std::string want_s = a.at("expect").is_null() ? "none" : a.at("expect").dump();
      Record(report, index, "tamper scan of " + NodeLabel(n), got_s == want_s,
             "first broken block " + got_s + ", expected " + want_s);
      return "first broken block " + got_s;
    }
    if (step.action == "assert_matches_snapshot") {
      const auto reference = ReadSnapshot(Resolve(a.at("reference").get<std::string>()));
      const auto blocks = BlocksFromPayload(Call(n, "GET", "/chain").body);
      const bool same = blocks.size() == reference.size() && MatchesReferencePrefix(blocks, reference);
      Record(report, index, NodeLabel(n) + " matches " + a.at("reference").get<std::string>(), same,
             same ? "block-for-block equal" : "diverges from reference");
      return same ? "matches reference" : "diverges from reference";
    }
    if (step.action == "assert_equal_chains") {
      std::vector<std::string> bodies;
      std::string labels;
      for (const auto& ref : a.at("nodes")) {
        const auto m = detail::ParseNodeRef(ref, nodes_.size());
        bodies.push_back(Call(m, "GET", "/chain").body);
        labels += (labels.empty() ? "" : ",") + NodeLabel(m);
      }
      bool equal = true;
      for (const auto& b : bodies) equal = equal && b == bodies.front();
      Record(report, index, "identical /chain payloads on " + labels, equal,
             equal ? "byte-identical" : "payloads differ");
      return equal ? "identical" : "different";
    }
    throw ScenarioError("unknown action \"" + step.action + "\"");
  }

  Scenario scenario_;
  RunOptions options_;
  int difficulty_ = kDefaultDifficulty;
  bool owns_workdir_ = false;
  std::vector<std::unique_ptr<Node>> nodes_;
};

inline Report RunScenario(const Scenario& scenario, const RunOptions& options = {}) {
  return Runner(scenario, options).Run();
}

inline void WriteReport(const Report& report, const std::filesystem::path& json_path) {
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  std::ofstream(json_path) << report.ToJson().dump(2) << '\n';
  auto text_path = json_path;
  text_path.replace_extension(".txt");
  if (text_path == json_path) text_path += ".txt";
  std::ofstream(text_path) << report.ToText();
}

}  // namespace energychain::harness
