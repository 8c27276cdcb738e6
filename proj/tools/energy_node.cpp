// HTTP node for the peer-to-peer energy market.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "energychain/node.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void OnSignal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy market blockchain node"};
  energychain::NodeOptions opts;
  std::string ppu_cap = "10";
  std::string max_demand = "100";
  std::string book_path = "energydemand.csv";
  std::string node_id;
  std::optional<int> difficulty;
  std::vector<std::string> peers;

  app.add_option("--host", opts.host, "Listen address")->capture_default_str();
  app.add_option("--port", opts.port, "Listen port (0 = ephemeral)")->capture_default_str();
  app.add_option("--ppu-cap", ppu_cap, "Regional price cap; offers need ppu < cap")->capture_default_str();
  app.add_option("--max-demand", max_demand, "Maximum kWh per offer or request")->capture_default_str();
  app.add_option("--book-path", book_path, "CSV order book store")->capture_default_str();
  app.add_option("--node-id", node_id, "32 lowercase hex characters (random when omitted)");
  app.add_option("--peer", peers, "Peer base URL to register at startup (repeatable)");
  app.add_flag("--test-hooks", opts.test_hooks, "Enable fault-injection endpoints under /test");
  app.add_option("--difficulty", difficulty, "Leading hex zeros for proof-of-work (requires --test-hooks)");
  CLI11_PARSE(app, argc, argv);

  auto cap = energychain::Price::Parse(ppu_cap);
  auto demand = energychain::Energy::Parse(max_demand);
  if (!cap || !demand) {
    std::cerr << "--ppu-cap and --max-demand must be decimals with at most 3 fraction digits\n";
    return 2;
  }
  opts.market = {*cap, *demand};
  opts.book_path = book_path;
  if (!node_id.empty()) opts.node_id = node_id;
  if (difficulty) {
    if (!opts.test_hooks) {
      std::cerr << "--difficulty is only available together with --test-hooks\n";
      return 2;
    }
    opts.difficulty = *difficulty;
  }

  try {
    energychain::Node node(opts);
    node.Start();
    std::cout << "node " << node.node_id() << " listening on " << node.url() << std::endl;
    if (!peers.empty()) {
      nlohmann::json body = {{"nodes", peers}};
      httplib::Client self(node.url());
      auto res = self.Post("/nodes/register", body.dump(), "application/json");
      if (!res || res->status != 201) {
        std::cerr << "peer registration failed: " << (res ? res->body : "no response") << "\n";
        return 1;
      }
    }
    std::signal(SIGINT, OnSignal);
    std::signal(SIGTERM, OnSignal);
    while (!g_stop && node.running()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    node.Stop();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
