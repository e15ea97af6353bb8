#include <gtest/gtest.h>

#include <sstream>

#include "dmrgnn/sim.hpp"
#include "fixtures.hpp"

namespace dmrgnn {
namespace {

std::size_t cell_named(const netlist& nl, const std::string& id) {
  for (std::size_t i = 0; i < nl.cells.size(); ++i)
    if (nl.cells[i].id == id) return i;
  ADD_FAILURE() << "no cell " << id;
  return 0;
}

TEST(Compile, ChainOrderFollowsDependencies) {
  // Cells declared in reverse: second buffer first.
  netlist_builder b("chain");
  net_id x = b.add_input("x");
  net_id mid = b.add_net("mid");
  std::vector<net_id> in2{mid};
  net_id y = b.add_net("y");
  b.add_cell_driving("g_second", primitive_kind::buf, in2, y);
  std::vector<net_id> in1{x};
  b.add_cell_driving("g_first", primitive_kind::buf, in1, mid);
  b.add_output("y", y);
  b.add_output("done", x);
  auto nl = b.finish();
  auto prog = compile(nl);
  ASSERT_EQ(prog.eval_order.size(), 2u);
  EXPECT_EQ(nl.cells[prog.eval_order[0]].id, "g_first");
  EXPECT_EQ(nl.cells[prog.eval_order[1]].id, "g_second");
}

TEST(Compile, FlipFlopsAreStateNotOps) {
  netlist_builder b("xor_of_ffs");
  net_id x = b.add_input("x");
  net_id q0 = b.add_cell("r0", primitive_kind::dff, {x});
  net_id q1 = b.add_cell("r1", primitive_kind::dff, {x});
  net_id y = b.add_cell("g_xor", primitive_kind::xor2, {q0, q1});
  b.add_output("done", y);
  auto prog = compile(b.finish());
  ASSERT_EQ(prog.eval_order.size(), 1u);
  EXPECT_EQ(prog.ops[0].kind, primitive_kind::xor2);
  EXPECT_EQ(prog.state_slots(), 2u);
}

TEST(RunGold, RegisteredReplicasFinishAtCycleOne) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  auto gold = run_gold(prog, stimulus::from_word(prog, 0b11));
  ASSERT_TRUE(gold.done_time);
  EXPECT_EQ(*gold.done_time, 1);
  // word bit0 = x0 ^ x1, bit1 = x0 & x1
  EXPECT_EQ(gold.out_a, 0b10u);
  EXPECT_EQ(gold.out_b, 0b10u);
  auto gold01 = run_gold(prog, stimulus::from_word(prog, 0b01));
  EXPECT_EQ(gold01.out_a, 0b01u);
}

TEST(RunGold, ConstantDoneIsCycleZero) {
  auto nl = fixtures::buf_design();
  watch_spec w;
  w.out_a = {1};
  w.done = nl.done_port;
  auto prog = compile(nl, w);
  for (std::uint64_t x : {0u, 1u}) {
    auto gold = run_gold(prog, stimulus::from_word(prog, x));
    EXPECT_EQ(*gold.done_time, 0);
    EXPECT_EQ(gold.out_a, x);
  }
}

TEST(RunGold, NeverDone) {
  netlist_builder b("never");
  net_id x = b.add_input("x");
  net_id zero = b.add_cell("g_zero", primitive_kind::const0, {});
  b.add_output("y", x);
  b.add_output("done", zero);
  auto prog = compile(b.finish());
  try {
    run_gold(prog, stimulus::from_word(prog, 1, 64));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::gold_never_done);
  }
}

TEST(RunGold, StimulusMustCoverInputs) {
  auto nl = fixtures::mini_dmr();
  auto prog = compile(nl);
  stimulus s;
  s.inputs = {true};
  EXPECT_THROW(run_gold(prog, s), error);
}

TEST(RunWithFault, OverwrittenFlipIsMasked) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0b11);
  auto gold = run_gold(prog, stim);
  fault_spec f{{{cell_named(nl, "u_a/r_s0"), 0}}};
  auto r = run_with_fault(prog, stim, f, gold);
  EXPECT_EQ(r.out_a, gold.out_a);
  EXPECT_EQ(r.out_b, gold.out_b);
  EXPECT_TRUE(r.done_ok_at_t);
}

TEST(RunWithFault, OutputRegisterFlipAtDoneTime) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0b11);
  auto gold = run_gold(prog, stim);
  fault_spec f{{{cell_named(nl, "u_a/r_s0"), *gold.done_time}}};
  auto r = run_with_fault(prog, stim, f, gold);
  EXPECT_EQ(r.out_a, gold.out_a ^ 1u);
  EXPECT_EQ(r.out_b, gold.out_b);
  EXPECT_TRUE(r.done_ok_at_t);
}

TEST(RunWithFault, DoneRegisterFlip) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0b10);
  auto gold = run_gold(prog, stim);
  fault_spec f{{{cell_named(nl, "u_b/v0"), *gold.done_time}}};
  EXPECT_FALSE(run_with_fault(prog, stim, f, gold).done_ok_at_t);
}

TEST(RunWithFault, FlipPropagatesThroughPipeline) {
  // Stage-0 register flipped at cycle 1 reaches the output at cycle 2 = T.
  auto nl = fixtures::mini_dmr(2, 2);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0b01);
  auto gold = run_gold(prog, stim);
  ASSERT_EQ(*gold.done_time, 2);
  auto r1 = run_with_fault(prog, stim, fault_spec{{{cell_named(nl, "u_a/r_c0"), 1}}}, gold);
  EXPECT_EQ(r1.out_a, gold.out_a ^ 2u);
  auto r2 = run_with_fault(prog, stim, fault_spec{{{cell_named(nl, "u_a/r_c0"), 2}}}, gold);
  EXPECT_EQ(r2.out_a, gold.out_a);
}

TEST(RunWithFault, InvalidFaults) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0);
  auto gold = run_gold(prog, stim);
  auto code = [&](const fault_spec& f) {
    try {
      run_with_fault(prog, stim, f, gold);
    } catch (const error& e) {
      return e.code();
    }
    return errc::io_error;
  };
  EXPECT_EQ(code({{{cell_named(nl, "u_a/g_xor"), 0}}}), errc::invalid_fault);
  EXPECT_EQ(code({{{cell_named(nl, "u_a/r_s0"), 5}}}), errc::invalid_fault);
  EXPECT_EQ(code({{{cell_named(nl, "u_a/r_s0"), -1}}}), errc::invalid_fault);
}

// Properties over every single and doubled flip of a pipelined fixture.
TEST(RunWithFault, ZeroFaultIdempotenceAndLocality) {
  auto nl = fixtures::mini_dmr(2, 3);
  auto prog = compile(nl);
  for (std::uint64_t x = 0; x < 4; ++x) {
    auto stim = stimulus::from_word(prog, x);
    auto gold = run_gold(prog, stim);
    const int t = *gold.done_time;
    EXPECT_EQ(run_with_fault(prog, stim, fault_spec{}, gold), gold);
    for (std::size_t c = 0; c < nl.cells.size(); ++c) {
      if (nl.cells[c].kind != primitive_kind::dff) continue;
      for (int cyc = 0; cyc <= t; ++cyc) {
        fault_injection inj{c, cyc};
        EXPECT_EQ(run_with_fault(prog, stim, fault_spec{{inj, inj}}, gold), gold);
        auto single = run_with_fault(prog, stim, fault_spec{{inj}}, gold);
        if (nl.cells[c].tag == replica_tag::a) { EXPECT_EQ(single.out_b, gold.out_b); }
        if (nl.cells[c].tag == replica_tag::b) { EXPECT_EQ(single.out_a, gold.out_a); }
        EXPECT_EQ(run_with_fault(prog, stim, fault_spec{{inj}}, gold), single);
      }
    }
  }
}

TEST(RunFaultLanes, LanesMatchSingleRuns) {
  auto nl = fixtures::mini_dmr(2, 1);
  auto prog = compile(nl);
  auto stim = stimulus::from_word(prog, 0b11);
  auto gold = run_gold(prog, stim);
  std::vector<fault_spec> faults;
  for (std::size_t c = 0; c < nl.cells.size(); ++c)
    if (nl.cells[c].kind == primitive_kind::dff)
      for (int cyc = 0; cyc <= *gold.done_time; ++cyc) faults.push_back({{{c, cyc}}});
  auto lanes = run_fault_lanes(prog, stim, faults, *gold.done_time);
  for (std::size_t i = 0; i < faults.size(); ++i) EXPECT_EQ(lanes[i], run_with_fault(prog, stim, faults[i], gold));
}

TEST(Sim, LutMatchesTruthTable) {
  rng r(7);
  for (int k = 2; k <= 6; ++k) {
    netlist_builder b("lut");
    std::vector<net_id> ins;
    for (int i = 0; i < k; ++i) ins.push_back(b.add_input("x_" + std::to_string(i)));
    std::uint64_t init = r.next();
    if (k < 6) init &= (std::uint64_t{1} << (1 << k)) - 1;
    net_id o = b.add_cell("l", lut_kind(k), ins, init);
    net_id one = b.add_cell("one", primitive_kind::const1, {});
    b.add_output("y", o);
    b.add_output("done", one);
    auto nl = b.finish();
    watch_spec w;
    w.out_a = {static_cast<std::size_t>(k)};
    w.done = nl.done_port;
    auto prog = compile(nl, w);
    for (std::uint64_t j = 0; j < (1u << k); ++j)
      EXPECT_EQ(run_gold(prog, stimulus::from_word(prog, j)).out_a, (init >> j) & 1U) << "k=" << k << " j=" << j;
  }
}

TEST(Sim, TraceDump) {
  auto nl = fixtures::mini_dmr(1, 1);
  auto prog = compile(nl);
  std::ostringstream os;
  dump_trace(prog, stimulus::from_word(prog, 0b11), fault_spec{}, 2, os);
  EXPECT_EQ(os.str(),
            "0 out_a 0\n0 out_b 0\n0 done 0\n"
            "1 out_a 2\n1 out_b 2\n1 done 1\n");
}

}  // namespace
}  // namespace dmrgnn
