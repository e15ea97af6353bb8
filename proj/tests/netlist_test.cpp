#include <gtest/gtest.h>

#include "dmrgnn/netlist.hpp"
#include "fixtures.hpp"

namespace dmrgnn {
namespace {

TEST(Netlist, BufDesignHasExpectedShape) {
  auto nl = fixtures::buf_design();
  EXPECT_EQ(nl.cells.size(), 2u);
  EXPECT_EQ(nl.nets.size(), 3u);  // x, buf->y, const->done
  EXPECT_EQ(nl.ports[nl.done_port].name, "done");
}

TEST(Netlist, MultiDriverIsRejected) {
  netlist_builder b("bad");
  net_id x = b.add_input("x");
  net_id y = b.add_cell("g0", primitive_kind::buf, {x});
  std::vector<net_id> in{x};
  b.add_cell_driving("g1", primitive_kind::inv, in, y);
  b.add_output("done", y);
  try {
    b.finish();
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::multi_driver);
  }
}

TEST(Netlist, UndrivenNetIsRejected) {
  netlist_builder b("bad");
  net_id floating = b.add_net("floating");
  net_id y = b.add_cell("g0", primitive_kind::buf, {floating});
  b.add_output("done", y);
  try {
    b.finish();
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::dangling_net);
  }
}

TEST(Netlist, CombinationalCycleReportsWitness) {
  netlist_builder b("loop");
  net_id x = b.add_input("x");
  net_id n1 = b.add_net("n1");
  std::vector<net_id> in0{x, n1};
  net_id n0 = b.add_cell("g_and", primitive_kind::and2, in0);
  std::vector<net_id> in1{n0};
  b.add_cell_driving("g_not", primitive_kind::inv, in1, n1);
  b.add_output("done", n0);
  try {
    b.finish();
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::combinational_cycle);
    std::string msg = e.what();
    EXPECT_NE(msg.find("g_and"), std::string::npos);
    EXPECT_NE(msg.find("g_not"), std::string::npos);
  }
}

TEST(Netlist, LoopThroughFlipFlopIsLegal) {
  netlist_builder b("toggle");
  net_id q = b.add_net("q");
  std::vector<net_id> in{q};
  net_id nq = b.add_cell("g_not", primitive_kind::inv, in);
  std::vector<net_id> din{nq};
  b.add_cell_driving("r_t", primitive_kind::dff, din, q);
  b.add_output("done", q);
  EXPECT_NO_THROW(b.finish());
}

TEST(Netlist, MissingDonePort) {
  netlist_builder b("nodone");
  net_id x = b.add_input("x");
  b.add_output("y", x);
  try {
    b.finish();
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::missing_done_port);
  }
}

TEST(PartitionModules, SplitsByPrefix) {
  netlist_builder b("wrap");
  net_id x = b.add_input("x");
  net_id last = x;
  for (int i = 0; i < 8; ++i) b.add_cell("u_sbox_a/r" + std::to_string(i), primitive_kind::dff, {x});
  for (int i = 0; i < 8; ++i) last = b.add_cell("u_sbox_b/r" + std::to_string(i), primitive_kind::dff, {x});
  b.add_output("done", last);
  auto nl = b.finish();
  std::vector<prefix_rule> rules{{"u_sbox_a/", replica_tag::a}, {"u_sbox_b/", replica_tag::b}};
  auto map = partition_modules(nl, rules);
  EXPECT_EQ(map.ffs_a.size(), 8u);
  EXPECT_EQ(map.ffs_b.size(), 8u);
  EXPECT_TRUE(map.ffs_shared.empty());
  EXPECT_EQ(map.ffs_a.size() + map.ffs_b.size() + map.ffs_shared.size(), nl.dff_count());
}

TEST(PartitionModules, UnmatchedFlipFlop) {
  netlist_builder b("wrap");
  net_id x = b.add_input("x");
  b.add_cell("u_sbox_a/r0", primitive_kind::dff, {x});
  net_id d = b.add_cell("ctrl_done_r", primitive_kind::dff, {x});
  b.add_output("done", d);
  auto nl = b.finish();
  std::vector<prefix_rule> rules{{"u_sbox_a/", replica_tag::a}, {"u_sbox_b/", replica_tag::b}};
  try {
    partition_modules(nl, rules);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::unmatched_instance);
    EXPECT_NE(std::string(e.what()).find("ctrl_done_r"), std::string::npos);
  }
}

TEST(PartitionModules, OverlappingRulesAreAnError) {
  auto nl = fixtures::mini_dmr();
  std::vector<prefix_rule> rules{{"u_", replica_tag::a}, {"u_b/", replica_tag::b}};
  EXPECT_THROW(partition_modules(nl, rules), error);
}

TEST(CanonicalHash, IgnoresNamesButSeesStructure) {
  auto a = fixtures::mini_dmr(1, 2);
  auto b = a;
  for (auto& c : b.cells) c.id = "renamed_" + c.id.substr(c.id.find('/') + 1) + std::to_string(c.pins.size());
  EXPECT_EQ(canonical_hash(a), canonical_hash(b));
  auto c = fixtures::mini_dmr(2, 2);
  EXPECT_NE(canonical_hash(a), canonical_hash(c));
  auto d = a;
  for (auto& cell : d.cells)
    if (cell.kind == primitive_kind::xor2) {
      cell.kind = primitive_kind::or2;
      break;
    }
  EXPECT_NE(canonical_hash(a), canonical_hash(d));
}

}  // namespace
}  // namespace dmrgnn
