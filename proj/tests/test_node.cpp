#include <gtest/gtest.h>

#include "energychain/node.hpp"
#include "node_client.hpp"

using namespace energychain;
using namespace testnode;

TEST(NodeChain, FreshNodeServesGenesis) {
  auto node = StartNode();
  const auto r = Get(*node, "/chain");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.json.at("length"), 1);
  ASSERT_EQ(r.json.at("chain").size(), 1u);
  const auto& g = r.json.at("chain")[0];
  EXPECT_EQ(g.at("index"), 1);
  EXPECT_EQ(g.at("previous_hash"), "1");
  EXPECT_EQ(g.at("proof"), 100);
  EXPECT_TRUE(g.at("transactions").empty());
  EXPECT_EQ(Json::parse(r.body).dump(), r.json.dump());
  EXPECT_EQ(BlocksFromPayload(r.body), std::vector<Block>{Genesis()});
}

TEST(NodeMine, CoinbaseOnlyThenLinkedBlocks) {
  auto node = StartNode();
  const auto m1 = Get(*node, "/mine");
  ASSERT_EQ(m1.status, 200);
  for (const char* key : {"message", "index", "previous_hash", "proof", "timestamp", "transactions"}) {
    EXPECT_TRUE(m1.json.contains(key)) << key;
  }
  ASSERT_EQ(m1.json.at("transactions").size(), 1u);
  EXPECT_EQ(m1.json.at("transactions")[0].at("sender"), "0");
  EXPECT_EQ(m1.json.at("transactions")[0].at("recipient"), node->node_id());
  const auto m2 = Get(*node, "/mine");
  EXPECT_GT(m2.json.at("index").get<int>(), m1.json.at("index").get<int>());
  EXPECT_TRUE(ValidateChain(BlocksFromPayload(Get(*node, "/chain").body), 1));
}

TEST(NodeTransactions, AcceptsValidRejectsInvalid) {
  auto node = StartNode();
  auto ok = Post(*node, "/transactions/new", {{"sender", "Tanisha Tichi"}, {"recipient", "Kristian Stromberg"}, {"amount", 8.0}});
  EXPECT_EQ(ok.status, 201);
  EXPECT_EQ(ok.json.at("message"), "Transaction will be added to Block 2");

  auto missing = Post(*node, "/transactions/new", {{"sender", "T"}, {"amount", 1}});
  EXPECT_EQ(missing.status, 400);
  EXPECT_TRUE(missing.json.contains("error"));
  EXPECT_EQ(Post(*node, "/transactions/new", {{"sender", "T"}, {"recipient", "K"}, {"amount", 0}}).status, 400);
  EXPECT_EQ(Post(*node, "/transactions/new", {{"sender", "0"}, {"recipient", "K"}, {"amount", 1}}).status, 400);
  EXPECT_EQ(Post(*node, "/transactions/new", {{"sender", "T"}, {"recipient", "K"}, {"amount", "1"}}).status, 400);

  httplib::Client c(node->url());
  EXPECT_EQ(c.Post("/transactions/new", "{not json", "application/json")->status, 400);

  const auto block = Get(*node, "/mine").json;
  ASSERT_EQ(block.at("transactions").size(), 2u);
  EXPECT_EQ(block.at("transactions")[0].dump(),
            R"({"amount":8.0,"recipient":"Kristian Stromberg","sender":"Tanisha Tichi"})");
  EXPECT_TRUE(node->mempool().empty());
}

TEST(NodeMarket, SellTableBuyFlow) {
  auto node = StartNode();
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "Kristian Stromberg"}, {"ppu", 3}, {"units", 4}}).status, 201);
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "Apyrl Goulet"}, {"ppu", 4}, {"units", 10}}).status, 201);
  const auto table = Get(*node, "/market/table").json;
  ASSERT_EQ(table.at("offers").size(), 2u);
  EXPECT_EQ(table.at("offers")[0].at("index"), 1);
  EXPECT_EQ(table.at("offers")[0].at("seller"), "Kristian Stromberg");
  EXPECT_EQ(table.at("offers")[1].at("index"), 2);

  const auto buy = Post(*node, "/market/buy", {{"buyer", "Ellis Acost"}, {"units", 9}});
  ASSERT_EQ(buy.status, 200);
  ASSERT_EQ(buy.json.at("fills").size(), 2u);
  EXPECT_EQ(buy.json.at("fills")[0].at("seller"), "Kristian Stromberg");
  EXPECT_EQ(buy.json.at("fills")[0].at("units"), 4.0);
  EXPECT_EQ(buy.json.at("fills")[1].at("units"), 5.0);
  EXPECT_DOUBLE_EQ(buy.json.at("total_cost").get<double>(), 4 * 3 + 5 * 4);
  EXPECT_EQ(buy.json.at("block_index"), 2);
  const auto pool = node->mempool();
  ASSERT_EQ(pool.size(), 2u);
  EXPECT_EQ(pool[0].sender, "Ellis Acost");
  EXPECT_EQ(pool[1].sender, "Ellis Acost");

  const auto mined = Get(*node, "/mine").json;
  ASSERT_EQ(mined.at("transactions").size(), 3u);
  EXPECT_EQ(mined.at("transactions")[2].at("sender"), "0");

  const auto after = Get(*node, "/market/table").json;
  ASSERT_EQ(after.at("offers").size(), 1u);
  EXPECT_EQ(after.at("offers")[0].at("seller"), "Apyrl Goulet");
  EXPECT_EQ(after.at("offers")[0].at("units"), 5.0);
  EXPECT_EQ(after.at("offers")[0].at("index"), 1);
}

TEST(NodeMarket, FailedBuyLeavesStateByteIdentical) {
  auto node = StartNode();
  Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", 2}, {"units", 7}});
  Post(*node, "/transactions/new", {{"sender", "X"}, {"recipient", "Y"}, {"amount", 1}});
  const auto csv_before = ReadFile(node->book_path());
  const auto book_before = BookToCsv(node->book());
  const auto pool_before = node->mempool();
  const auto r = Post(*node, "/market/buy", {{"buyer", "T"}, {"units", 8}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.json.at("error"), "insufficient market supply");
  EXPECT_EQ(BookToCsv(node->book()), book_before);
  EXPECT_EQ(node->mempool(), pool_before);
  EXPECT_EQ(ReadFile(node->book_path()), csv_before);
}

TEST(NodeMarket, RejectsOutOfDomainOffers) {
  auto node = StartNode();
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", 10}, {"units", 1}}).status, 400);
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", 1}, {"units", 0}}).status, 400);
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", -1}, {"units", 1}}).status, 400);
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", 1}, {"units", 100.5}}).status, 400);
  EXPECT_EQ(Post(*node, "/market/sell", {{"seller", "A"}, {"ppu", 1.0005}, {"units", 1}}).status, 400);
  EXPECT_EQ(Post(*node, "/market/sell", {{"ppu", 1}, {"units", 1}}).status, 400);
  EXPECT_TRUE(node->book().empty());
  EXPECT_EQ(Post(*node, "/market/buy", {{"buyer", "T"}, {"units", 0}}).status, 400);
}

TEST(NodeMarket, BookPersistsToCsvAndReloads) {
  NodeOptions opts;
  opts.port = 0;
  opts.difficulty = 1;
  opts.book_path = std::filesystem::temp_directory_path() / ("ec-persist-" + NewNodeId()) / "energydemand.csv";
  {
    Node node(opts);
    node.Start();
    Post(node, "/market/sell", {{"seller", "A"}, {"ppu", 1.5}, {"units", 2.25}});
    Post(node, "/market/sell", {{"seller", "B"}, {"ppu", 2}, {"units", 3}});
    Post(node, "/market/buy", {{"buyer", "T"}, {"units", 1}});
    EXPECT_EQ(ReadFile(opts.book_path), "seller,ppu,units\nA,1.5,1.25\nB,2,3\n");
  }
  {
    Node reloaded(opts);
    EXPECT_EQ(BookToCsv(reloaded.book()), "seller,ppu,units\nA,1.5,1.25\nB,2,3\n");
  }
  std::filesystem::remove_all(opts.book_path.parent_path());
}

TEST(NodePeers, RegisterAndResolve) {
  auto a = StartNode();
  auto b = StartNode();
  Get(*a, "/mine");
  Get(*a, "/mine");

  EXPECT_EQ(Post(*b, "/nodes/register", {{"nodes", Json::array()}}).status, 400);
  EXPECT_EQ(Post(*b, "/nodes/register", {{"nodes", {"not a url"}}}).status, 400);
  EXPECT_EQ(Post(*b, "/nodes/register", {{"nodes", {b->url()}}}).status, 400);

  auto none = Get(*b, "/nodes/resolve");
  EXPECT_EQ(none.json.at("message"), "our chain is authoritative");
  EXPECT_TRUE(none.json.contains("chain"));

  auto reg = Post(*b, "/nodes/register", {{"nodes", {a->url()}}});
  EXPECT_EQ(reg.status, 201);
  auto res = Get(*b, "/nodes/resolve");
  EXPECT_EQ(res.json.at("message"), "our chain was replaced");
  EXPECT_EQ(res.json.at("new_chain").size(), 3u);
  EXPECT_EQ(Get(*a, "/chain").body, Get(*b, "/chain").body);
}

TEST(NodePeers, ResolveSkipsDeadPeers) {
  auto a = StartNode();
  auto b = StartNode();
  auto c = StartNode();
  Get(*a, "/mine");
  Get(*c, "/mine");
  Get(*c, "/mine");
  Post(*b, "/nodes/register", {{"nodes", {a->url(), c->url()}}});
  a->Stop();
  auto res = Get(*b, "/nodes/resolve");
  EXPECT_EQ(res.status, 200);
  EXPECT_EQ(res.json.at("message"), "our chain was replaced");
  EXPECT_EQ(Get(*b, "/chain").body, Get(*c, "/chain").body);
}

TEST(NodeTestHooks, GatedByFlag) {
  auto plain = StartNode(1, false);
  EXPECT_EQ(Post(*plain, "/test/truncate", {{"keep_blocks", 1}}).status, 404);
  auto hooked = StartNode();
  Get(*hooked, "/mine");
  Get(*hooked, "/mine");
  Get(*hooked, "/mine");
  EXPECT_EQ(Post(*hooked, "/test/mutate", {{"block_index", 1}, {"tx_index", 0}, {"amount", 5}}).status, 400);
  EXPECT_EQ(Post(*hooked, "/test/mutate", {{"block_index", 9}, {"tx_index", 0}, {"amount", 5}}).status, 400);
  EXPECT_EQ(Post(*hooked, "/test/mutate", {{"block_index", 2}, {"tx_index", 0}, {"amount", 999}}).status, 200);
  EXPECT_FALSE(ValidateChain(hooked->blocks(), 1));
  EXPECT_EQ(TamperScan(hooked->blocks(), 1), 3u);
  auto t = Post(*hooked, "/test/truncate", {{"keep_blocks", 3}});
  EXPECT_EQ(t.status, 200);
  EXPECT_EQ(Get(*hooked, "/chain").json.at("length"), 3);
  EXPECT_EQ(Post(*hooked, "/test/truncate", {{"keep_blocks", 0}}).status, 400);
}

TEST(NodeArbitrate, RestoresTamperedNodeFromReference) {
  auto a = StartNode();
  auto b = StartNode();
  Post(*a, "/transactions/new", {{"sender", "T"}, {"recipient", "K"}, {"amount", 8}});
  Get(*a, "/mine");
  Get(*a, "/mine");
  Post(*b, "/nodes/register", {{"nodes", {a->url()}}});
  Get(*b, "/nodes/resolve");
  const auto reference = ChainPayload(a->blocks());
  Post(*b, "/test/mutate", {{"block_index", 2}, {"tx_index", 0}, {"amount", 999}});

  EXPECT_EQ(Get(*b, "/nodes/resolve").json.at("message"), "our chain is authoritative");
  auto r = Post(*b, "/nodes/arbitrate", {{"reference", reference}});
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(r.json.at("message"), "our chain was replaced");
  EXPECT_EQ(b->blocks(), a->blocks());

  // The untampered node already agrees with the reference.
  Post(*a, "/nodes/register", {{"nodes", {b->url()}}});
  EXPECT_EQ(Post(*a, "/nodes/arbitrate", {{"reference", reference}}).json.at("message"), "our chain is authoritative");
}

TEST(NodeArbitrate, UnresolvableWhenNoChainMatches) {
  auto a = StartNode();
  auto b = StartNode();
  Get(*a, "/mine");
  Post(*b, "/nodes/register", {{"nodes", {a->url()}}});
  Get(*b, "/nodes/resolve");
  auto reference = a->blocks();
  reference[1].proof += 1;
  auto r = Post(*b, "/nodes/arbitrate", {{"reference", ChainPayload(reference)}});
  EXPECT_EQ(r.status, 409);
  EXPECT_TRUE(r.json.contains("error"));
  EXPECT_EQ(Post(*b, "/nodes/arbitrate", {{"reference", "nope"}}).status, 400);
}
