#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dmrgnn/error.hpp"
#include "dmrgnn/netlist.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

/// Which primary outputs form the replica-A word, the replica-B word and
/// the done bit. Bit i of a word is the i-th listed port.
struct watch_spec {
  std::vector<std::size_t> out_a;  // port indices
  std::vector<std::size_t> out_b;
  std::size_t done = 0;
};

/// Default watch: the non-done outputs in declaration order, first half A,
/// second half B.
inline watch_spec default_watch(const netlist& nl) {
  watch_spec w;
  w.done = nl.done_port;
  std::vector<std::size_t> outs;
  for (auto p : nl.output_ports())
    if (p != nl.done_port) outs.push_back(p);
  std::size_t half = outs.size() / 2;
  w.out_a.assign(outs.begin(), outs.begin() + static_cast<std::ptrdiff_t>(half));
  w.out_b.assign(outs.begin() + static_cast<std::ptrdiff_t>(half), outs.end());
  return w;
}

struct sim_op {
  primitive_kind kind;
  std::uint8_t arity;
  std::uint32_t out;
  std::array<std::uint32_t, 6> in;
  std::uint64_t init;
};

/// Immutable evaluation plan for one netlist.
struct sim_program {
  std::size_t net_count = 0;
  std::vector<sim_op> ops;               // combinational cells in evaluation order
  std::vector<std::size_t> eval_order;   // cell indices matching ops
  std::vector<std::size_t> dff_cells;    // state slot -> cell index
  std::vector<std::uint32_t> dff_d, dff_q;
  std::vector<std::size_t> slot_of_cell; // cell index -> state slot (or npos)
  std::vector<std::uint32_t> input_nets; // primary inputs in port order
  std::vector<std::uint32_t> out_a_nets, out_b_nets;
  std::uint32_t done_net = 0;
  std::vector<std::string> cell_ids;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  [[nodiscard]] std::size_t state_slots() const { return dff_cells.size(); }
};

inline sim_program compile(const netlist& nl, const watch_spec& watch) {
  auto ends = connectivity(nl);
  auto order = combinational_order(nl, ends);
  sim_program prog;
  prog.net_count = nl.nets.size();
  prog.slot_of_cell.assign(nl.cells.size(), sim_program::npos);
  for (std::size_t c : order) {
    const auto& cell = nl.cells[c];
    sim_op op{};
    op.kind = cell.kind;
    op.arity = static_cast<std::uint8_t>(input_count(cell.kind));
    op.out = cell.output();
    for (int i = 0; i < op.arity; ++i) op.in[static_cast<std::size_t>(i)] = cell.pins[static_cast<std::size_t>(i)];
    op.init = cell.init_mask;
    prog.ops.push_back(op);
    prog.eval_order.push_back(c);
  }
  for (std::size_t c = 0; c < nl.cells.size(); ++c) {
    prog.cell_ids.push_back(nl.cells[c].id);
    if (nl.cells[c].kind != primitive_kind::dff) continue;
    prog.slot_of_cell[c] = prog.dff_cells.size();
    prog.dff_cells.push_back(c);
    prog.dff_d.push_back(nl.cells[c].pins[0]);
    prog.dff_q.push_back(nl.cells[c].pins[1]);
  }
  for (auto p : nl.input_ports()) prog.input_nets.push_back(nl.ports[p].net);
  for (auto p : watch.out_a) prog.out_a_nets.push_back(nl.ports[p].net);
  for (auto p : watch.out_b) prog.out_b_nets.push_back(nl.ports[p].net);
  if (prog.out_a_nets.size() > 64 || prog.out_b_nets.size() > 64)
    throw error(errc::interface_mismatch, "output words wider than 64 bits are not supported");
  prog.done_net = nl.ports[watch.done].net;
  return prog;
}

inline sim_program compile(const netlist& nl) { return compile(nl, default_watch(nl)); }

/// Primary-input assignment held for every cycle, in input-port order.
struct stimulus {
  std::vector<bool> inputs;
  int max_cycles = 64;

  /// Bit i of `value` drives the i-th primary input.
  static stimulus from_word(const sim_program& prog, std::uint64_t value, int max_cycles = 64) {
    stimulus s;
    s.max_cycles = max_cycles;
    for (std::size_t i = 0; i < prog.input_nets.size(); ++i) s.inputs.push_back(((value >> i) & 1U) != 0);
    return s;
  }
};

struct fault_injection {
  std::size_t ff;  // cell index of the flip-flop
  int cycle;
  bool operator==(const fault_injection&) const = default;
};

struct fault_spec {
  std::vector<fault_injection> injections;
};

struct run_result {
  std::optional<int> done_time;
  bool done_ok_at_t = true;
  std::uint64_t out_a = 0;
  std::uint64_t out_b = 0;
  bool operator==(const run_result&) const = default;
};

inline constexpr std::size_t sim_lanes = 64;

namespace sim_detail {

inline std::uint64_t eval_op(const sim_op& op, const std::vector<std::uint64_t>& v) {
  auto in = [&](int i) { return v[op.in[static_cast<std::size_t>(i)]]; };
  switch (op.kind) {
    case primitive_kind::const0: return 0;
    case primitive_kind::const1: return ~std::uint64_t{0};
    case primitive_kind::buf: return in(0);
    case primitive_kind::inv: return ~in(0);
    case primitive_kind::and2: return in(0) & in(1);
    case primitive_kind::or2: return in(0) | in(1);
    case primitive_kind::nand2: return ~(in(0) & in(1));
    case primitive_kind::nor2: return ~(in(0) | in(1));
    case primitive_kind::xor2: return in(0) ^ in(1);
    case primitive_kind::xnor2: return ~(in(0) ^ in(1));
    case primitive_kind::mux2: return (in(0) & ~in(2)) | (in(1) & in(2));
    case primitive_kind::dff: return 0;
    default: {
      // LUT: fold the truth table one input at a time (Shannon expansion).
      const int k = op.arity;
      std::array<std::uint64_t, 64> level{};
      const int rows = 1 << k;
      for (int j = 0; j < rows; ++j) level[static_cast<std::size_t>(j)] = ((op.init >> j) & 1U) ? ~std::uint64_t{0} : 0;
      for (int i = 0, width = rows; i < k; ++i, width /= 2) {
        const std::uint64_t x = in(i);
        for (int j = 0; j < width / 2; ++j)
          level[static_cast<std::size_t>(j)] =
              (level[static_cast<std::size_t>(2 * j)] & ~x) | (level[static_cast<std::size_t>(2 * j + 1)] & x);
      }
      return level[0];
    }
  }
}

inline void settle(const sim_program& prog, std::vector<std::uint64_t>& values) {
  for (const auto& op : prog.ops) values[op.out] = eval_op(op, values);
}

inline std::uint64_t gather(const std::vector<std::uint32_t>& nets, const std::vector<std::uint64_t>& values, int lane) {
  std::uint64_t w = 0;
  for (std::size_t i = 0; i < nets.size(); ++i) w |= ((values[nets[i]] >> lane) & 1U) << i;
  return w;
}

inline void check_stimulus(const sim_program& prog, const stimulus& stim) {
  if (stim.inputs.size() != prog.input_nets.size())
    throw error(errc::invalid_stimulus, "stimulus has " + std::to_string(stim.inputs.size()) + " bits, design has " +
                                            std::to_string(prog.input_nets.size()) + " primary inputs");
  if (stim.max_cycles <= 0) throw error(errc::invalid_stimulus, "max_cycles must be positive");
}

}  // namespace sim_detail

/// Per-lane observer for trace dumping; called after each cycle settles.
using cycle_observer = std::function<void(int cycle, const std::vector<std::uint64_t>& values)>;

/// Fault-free run up to the first cycle where done is 1.
inline run_result run_gold(const sim_program& prog, const stimulus& stim, const cycle_observer& observe = {}) {
  sim_detail::check_stimulus(prog, stim);
  std::vector<std::uint64_t> values(prog.net_count, 0);
  std::vector<std::uint64_t> state(prog.state_slots(), 0);
  for (std::size_t i = 0; i < prog.input_nets.size(); ++i) values[prog.input_nets[i]] = stim.inputs[i] ? ~0ULL : 0ULL;
  for (int cycle = 0; cycle < stim.max_cycles; ++cycle) {
    if (cycle > 0)
      for (std::size_t s = 0; s < state.size(); ++s) state[s] = values[prog.dff_d[s]];
    for (std::size_t s = 0; s < state.size(); ++s) values[prog.dff_q[s]] = state[s];
    sim_detail::settle(prog, values);
    if (observe) observe(cycle, values);
    if (values[prog.done_net] & 1U) {
      run_result r;
      r.done_time = cycle;
      r.done_ok_at_t = true;
      r.out_a = sim_detail::gather(prog.out_a_nets, values, 0);
      r.out_b = sim_detail::gather(prog.out_b_nets, values, 0);
      return r;
    }
  }
  throw error(errc::gold_never_done, "done not asserted within " + std::to_string(stim.max_cycles) + " cycles");
}

/// Simulates up to 64 independent faulty runs at once, one per bit lane, and
/// samples every lane at `sample_cycle`. Each flip inverts the DFF's stored
/// bit right after the clock edge that starts its cycle, before settling.
inline std::vector<run_result> run_fault_lanes(const sim_program& prog, const stimulus& stim,
                                               std::span<const fault_spec> faults, int sample_cycle,
                                               const cycle_observer& observe = {}) {
  sim_detail::check_stimulus(prog, stim);
  if (faults.size() > sim_lanes) throw error(errc::invalid_fault, "at most 64 lanes per batch");
  if (sample_cycle < 0 || sample_cycle >= stim.max_cycles)
    throw error(errc::invalid_fault, "sample cycle outside the stimulus horizon");
  // flips[cycle] holds (slot, lane mask) pairs.
  std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> flips(static_cast<std::size_t>(sample_cycle) + 1);
  for (std::size_t lane = 0; lane < faults.size(); ++lane) {
    for (const auto& inj : faults[lane].injections) {
      if (inj.ff >= prog.slot_of_cell.size() || prog.slot_of_cell[inj.ff] == sim_program::npos)
        throw error(errc::invalid_fault, "cell " + std::to_string(inj.ff) + " is not a flip-flop");
      if (inj.cycle < 0 || inj.cycle > sample_cycle)
        throw error(errc::invalid_fault, "injection cycle " + std::to_string(inj.cycle) + " outside [0, " +
                                             std::to_string(sample_cycle) + "]");
      flips[static_cast<std::size_t>(inj.cycle)].emplace_back(prog.slot_of_cell[inj.ff], std::uint64_t{1} << lane);
    }
  }
  std::vector<std::uint64_t> values(prog.net_count, 0);
  std::vector<std::uint64_t> state(prog.state_slots(), 0);
  for (std::size_t i = 0; i < prog.input_nets.size(); ++i) values[prog.input_nets[i]] = stim.inputs[i] ? ~0ULL : 0ULL;
  for (int cycle = 0; cycle <= sample_cycle; ++cycle) {
    if (cycle > 0)
      for (std::size_t s = 0; s < state.size(); ++s) state[s] = values[prog.dff_d[s]];
    for (auto [slot, mask] : flips[static_cast<std::size_t>(cycle)]) state[slot] ^= mask;
    for (std::size_t s = 0; s < state.size(); ++s) values[prog.dff_q[s]] = state[s];
    sim_detail::settle(prog, values);
    if (observe) observe(cycle, values);
  }
  std::vector<run_result> out(faults.size());
  for (std::size_t lane = 0; lane < faults.size(); ++lane) {
    const int l = static_cast<int>(lane);
    auto& r = out[lane];
    r.done_time = sample_cycle;
    r.done_ok_at_t = ((values[prog.done_net] >> l) & 1U) != 0;
    r.out_a = sim_detail::gather(prog.out_a_nets, values, l);
    r.out_b = sim_detail::gather(prog.out_b_nets, values, l);
  }
  return out;
}

/// Fault-free run where input i carries its own lane word `input_words[i]`,
/// so each lane sees a different input vector. Lanes are sampled at
/// `sample_cycle`; done_ok_at_t reports the done bit of each lane.
inline std::vector<run_result> run_input_lanes(const sim_program& prog, std::span<const std::uint64_t> input_words,
                                               int sample_cycle) {
  if (input_words.size() != prog.input_nets.size())
    throw error(errc::invalid_stimulus, "one lane word per primary input required");
  std::vector<std::uint64_t> values(prog.net_count, 0);
  std::vector<std::uint64_t> state(prog.state_slots(), 0);
  for (std::size_t i = 0; i < prog.input_nets.size(); ++i) values[prog.input_nets[i]] = input_words[i];
  for (int cycle = 0; cycle <= sample_cycle; ++cycle) {
    if (cycle > 0)
      for (std::size_t s = 0; s < state.size(); ++s) state[s] = values[prog.dff_d[s]];
    for (std::size_t s = 0; s < state.size(); ++s) values[prog.dff_q[s]] = state[s];
    sim_detail::settle(prog, values);
  }
  std::vector<run_result> out(sim_lanes);
  for (std::size_t lane = 0; lane < sim_lanes; ++lane) {
    const int l = static_cast<int>(lane);
    out[lane].done_time = sample_cycle;
    out[lane].done_ok_at_t = ((values[prog.done_net] >> l) & 1U) != 0;
    out[lane].out_a = sim_detail::gather(prog.out_a_nets, values, l);
    out[lane].out_b = sim_detail::gather(prog.out_b_nets, values, l);
  }
  return out;
}

/// Single faulty run sampled at the gold completion time.
inline run_result run_with_fault(const sim_program& prog, const stimulus& stim, const fault_spec& fault,
                                 const run_result& gold) {
  if (!gold.done_time) throw error(errc::gold_never_done, "gold run has no completion time");
  return run_fault_lanes(prog, stim, std::span<const fault_spec>(&fault, 1), *gold.done_time).front();
}

/// Value-change text dump of the watched signals, one line per cycle per
/// signal: `<cycle> <signal> <hex value>`. Lane 0 is reported.
inline void dump_trace(const sim_program& prog, const stimulus& stim, const fault_spec& fault, int cycles,
                       std::ostream& os) {
  const fault_spec* f = &fault;
  run_fault_lanes(prog, stim, std::span<const fault_spec>(f, 1), cycles - 1,
                  [&](int cycle, const std::vector<std::uint64_t>& values) {
                    os << cycle << " out_a " << to_hex(sim_detail::gather(prog.out_a_nets, values, 0)) << "\n";
                    os << cycle << " out_b " << to_hex(sim_detail::gather(prog.out_b_nets, values, 0)) << "\n";
                    os << cycle << " done " << (values[prog.done_net] & 1U) << "\n";
                  });
}

}  // namespace dmrgnn
