#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmrgnn/error.hpp"
#include "dmrgnn/ir.hpp"
#include "dmrgnn/netlist.hpp"
#include "dmrgnn/sim.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

// ---------------------------------------------------------------------------
// Transforms

struct region_transform {
  tree_style tree = tree_style::balanced;
  gate_style gates = gate_style::native;
  bool reorder = false;    // permute operands of n-ary nodes
  bool duplicate = false;  // one private copy of each shared node per consumer

  bool operator==(const region_transform&) const = default;
};

/// One entry per IR region plus the register cuts. A cut at level c puts a
/// register stage between logic levels c and c + 1 (c = 0 registers the
/// inputs).
struct transform_set {
  std::vector<region_transform> regions;
  std::vector<int> cuts;  // sorted, size = pipeline depth
  std::uint64_t reorder_seed = 0;

  [[nodiscard]] int pipeline_depth() const { return static_cast<int>(cuts.size()); }
  bool operator==(const transform_set&) const = default;
};

inline transform_set identity_transforms(const ir_design& d) {
  transform_set t;
  t.regions.resize(d.regions.size());
  return t;
}

namespace designgen_detail {

/// Logic level: inputs and constants 0, otherwise one more than the deepest argument.
inline std::vector<int> levels(const ir_design& d) {
  std::vector<int> lv(d.nodes.size(), 0);
  for (std::size_t i = 0; i < d.nodes.size(); ++i)
    for (auto a : d.nodes[i].args) lv[i] = std::max(lv[i], lv[a] + 1);
  return lv;
}

inline int depth(const ir_design& d) {
  const auto lv = levels(d);
  int m = 0;
  for (auto o : d.outputs) m = std::max(m, lv[o]);
  return m;
}

}  // namespace designgen_detail

inline constexpr int max_pipeline_depth = 3;
inline constexpr double duplicate_probability = 0.3;

/// Independent draw per region; pipeline depth uniform in 0..3 with cut
/// levels uniform in [0, depth - 1], repeats allowed.
inline transform_set sample_transforms(const ir_design& d, std::uint64_t seed) {
  rng r(seed);
  transform_set t;
  for (std::size_t i = 0; i < d.regions.size(); ++i) {
    region_transform rt;
    rt.tree = r.coin() ? tree_style::chain : tree_style::balanced;
    rt.gates = static_cast<gate_style>(r.below(3));
    rt.reorder = r.coin();
    rt.duplicate = r.uniform() < duplicate_probability;
    t.regions.push_back(rt);
  }
  const int levels = std::max(1, designgen_detail::depth(d));
  const int p = static_cast<int>(r.below(max_pipeline_depth + 1));
  for (int k = 0; k < p; ++k) t.cuts.push_back(static_cast<int>(r.below(static_cast<std::uint64_t>(levels))));
  std::sort(t.cuts.begin(), t.cuts.end());
  t.reorder_seed = r.next();
  return t;
}

/// Rewrites `d` under `t`. Duplication and operand reordering change the
/// node list; tree, gate and stage choices become node annotations used by
/// lowering. The function is preserved by construction.
inline ir_design apply_transforms(const ir_design& d, const transform_set& t) {
  if (t.regions.size() != d.regions.size())
    throw error(errc::interface_mismatch, "transform set has " + std::to_string(t.regions.size()) +
                                              " region entries, design has " + std::to_string(d.regions.size()));
  const std::uint32_t none = ~std::uint32_t{0};
  auto dup = [&](const ir_node& n) {
    return t.regions[n.region].duplicate && n.op != ir_op::input && n.op != ir_op::constant;
  };

  std::vector<std::uint32_t> uses(d.nodes.size(), 0);
  for (const auto& n : d.nodes)
    for (auto a : n.args) ++uses[a];
  for (auto o : d.outputs) ++uses[o];

  ir_design out;
  out.name = d.name;
  out.input_width = d.input_width;
  out.regions = d.regions;
  // Shared nodes of duplicating regions keep a template (args already
  // remapped) and are emitted once per consumer, right before it.
  std::vector<std::uint32_t> mapped(d.nodes.size(), none);
  std::vector<ir_node> templ(d.nodes.size());
  auto resolve = [&](std::uint32_t a) {
    if (mapped[a] != none) return mapped[a];
    out.nodes.push_back(templ[a]);
    return static_cast<std::uint32_t>(out.nodes.size() - 1);
  };
  for (std::size_t i = 0; i < d.nodes.size(); ++i) {
    ir_node n = d.nodes[i];
    for (auto& a : n.args) a = resolve(a);
    if (dup(n) && uses[i] > 1) {
      templ[i] = std::move(n);
      continue;
    }
    out.nodes.push_back(std::move(n));
    mapped[i] = static_cast<std::uint32_t>(out.nodes.size() - 1);
  }
  for (auto o : d.outputs) out.outputs.push_back(resolve(o));

  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    auto& n = out.nodes[i];
    const auto& rt = t.regions[n.region];
    n.tree = rt.tree;
    n.gates = rt.gates;
    if (rt.reorder && (n.op == ir_op::and_ || n.op == ir_op::or_ || n.op == ir_op::xor_)) {
      rng r(derive_seed(t.reorder_seed, i));
      r.shuffle(n.args);
    }
  }

  const auto lv = designgen_detail::levels(out);
  out.pipeline_depth = t.pipeline_depth();
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    auto& n = out.nodes[i];
    n.stage = 0;
    if (n.op == ir_op::input || n.op == ir_op::constant) continue;
    for (int c : t.cuts) n.stage += c < lv[i] ? 1 : 0;
  }
  validate_ir(out);
  return out;
}

inline std::pair<ir_design, transform_set> diversify(const ir_design& d, std::uint64_t seed) {
  auto t = sample_transforms(d, seed);
  return {apply_transforms(d, t), std::move(t)};
}

inline nlohmann::json to_json(const transform_set& t, const ir_design& seed) {
  nlohmann::json regions = nlohmann::json::array();
  for (std::size_t i = 0; i < t.regions.size(); ++i) {
    const auto& r = t.regions[i];
    regions.push_back({{"region", i < seed.regions.size() ? seed.regions[i] : std::to_string(i)},
                       {"tree", tree_name(r.tree)},
                       {"gates", gate_name(r.gates)},
                       {"operand_reorder", r.reorder},
                       {"cse", r.duplicate ? "duplicate" : "share"}});
  }
  return {{"regions", regions},
          {"pipeline_depth", t.pipeline_depth()},
          {"cuts", t.cuts},
          {"reorder_seed", to_hex(t.reorder_seed, 16)}};
}

// ---------------------------------------------------------------------------
// Lowering to primitives

namespace designgen_detail {

inline std::uint64_t op_mask(ir_op op, std::size_t k) {
  std::uint64_t m = 0;
  for (std::uint64_t idx = 0; idx < (std::uint64_t{1} << k); ++idx) {
    bool v = false;
    switch (op) {
      case ir_op::and_: v = idx == (std::uint64_t{1} << k) - 1; break;
      case ir_op::or_: v = idx != 0; break;
      case ir_op::xor_: v = (__builtin_popcountll(idx) & 1) != 0; break;
      default: break;
    }
    if (v) m |= std::uint64_t{1} << idx;
  }
  return m;
}

/// LUT3 over (I0 = s, I1 = a, I2 = b) computing s ? b : a.
inline constexpr std::uint64_t mux_lut_mask = [] {
  std::uint64_t m = 0;
  for (int idx = 0; idx < 8; ++idx) {
    const int s = idx & 1, a = idx >> 1 & 1, b = idx >> 2 & 1;
    if (s ? b : a) m |= std::uint64_t{1} << idx;
  }
  return m;
}();

/// Emits one replica's cells into a builder.
class lowerer {
 public:
  lowerer(netlist_builder& b, const ir_design& d, std::string prefix, replica_tag tag)
      : b_(b), d_(d), prefix_(std::move(prefix)), tag_(tag) {}

  /// Returns the registered outputs and the valid-chain tail; the chain has
  /// `chain_len` >= latency() stages.
  std::pair<std::vector<net_id>, net_id> lower(const std::vector<net_id>& inputs, int chain_len) {
    one_ = b_.add_cell(prefix_ + "one", primitive_kind::const1, {}, 0, tag_);
    std::vector<net_id> valid;
    net_id prev = one_;
    for (int k = 0; k < chain_len; ++k) {
      prev = b_.add_cell(prefix_ + "v" + std::to_string(k), primitive_kind::dff, {prev}, 0, tag_);
      valid.push_back(prev);
    }

    const int p = d_.pipeline_depth;
    at_.assign(d_.nodes.size(), std::vector<net_id>(static_cast<std::size_t>(p) + 1, unset));
    for (std::size_t i = 0; i < d_.nodes.size(); ++i) {
      const auto& n = d_.nodes[i];
      cur_ = &n;
      net_id v = unset;
      std::vector<net_id> args;
      for (auto a : n.args) args.push_back(value_at(a, n.stage));
      switch (n.op) {
        case ir_op::input: v = inputs[n.value]; break;
        case ir_op::constant: v = n.value ? one_ : zero(); break;
        case ir_op::not_: v = inv(args[0]); break;
        case ir_op::and_:
        case ir_op::or_:
        case ir_op::xor_: v = nary(n.op, args); break;
        case ir_op::mux: v = mux(args[0], args[1], args[2]); break;
        case ir_op::table: v = table(args, n.value); break;
      }
      at_[i][static_cast<std::size_t>(n.stage)] = v;
    }

    // Output register: holds its value until the valid chain reaches the
    // stage before the last, then loads. This ties the datapath to the
    // replica's own valid chain.
    const int latency = p + 1;
    const net_id enable = latency >= 2 ? valid[static_cast<std::size_t>(latency - 2)] : one_;
    std::vector<net_id> outs;
    for (std::size_t j = 0; j < d_.outputs.size(); ++j) {
      const net_id data = value_at(d_.outputs[j], p);
      const std::string id = prefix_ + "o" + std::to_string(j);
      const net_id q = b_.add_net(id + "_o");
      const net_id next = b_.add_cell(id + "_en", primitive_kind::mux2, {q, data, enable}, 0, tag_);
      const net_id dpin[] = {next};
      b_.add_cell_driving(id, primitive_kind::dff, dpin, q, 0, tag_);
      outs.push_back(q);
    }
    return {outs, valid.empty() ? one_ : valid.back()};
  }

  [[nodiscard]] int latency() const { return d_.pipeline_depth + 1; }

 private:
  static constexpr net_id unset = ~net_id{0};

  net_id zero() {
    if (zero_ == unset) zero_ = b_.add_cell(prefix_ + "zero", primitive_kind::const0, {}, 0, tag_);
    return zero_;
  }

  /// Value of node `n` at register stage `s`, inserting pipeline registers
  /// from the node's own stage up to s. Constants exist at every stage.
  net_id value_at(std::uint32_t n, int s) {
    auto& slot = at_[n][static_cast<std::size_t>(s)];
    if (slot != unset) return slot;
    const auto& node = d_.nodes[n];
    if (node.op == ir_op::constant) return slot = at_[n][static_cast<std::size_t>(node.stage)];
    const net_id below = value_at(n, s - 1);
    return slot = b_.add_cell(prefix_ + "p" + std::to_string(n) + "_" + std::to_string(s), primitive_kind::dff,
                              {below}, 0, tag_);
  }

  net_id cell(primitive_kind k, std::initializer_list<net_id> in, std::uint64_t init = 0) {
    return b_.add_cell(prefix_ + "g" + std::to_string(counter_++), k, in, init, tag_);
  }
  net_id lut(const std::vector<net_id>& in, std::uint64_t mask) {
    return b_.add_cell(prefix_ + "g" + std::to_string(counter_++), lut_kind(static_cast<int>(in.size())), in, mask,
                       tag_);
  }

  gate_style style() const { return cur_->gates; }

  net_id nand(net_id a, net_id b) { return cell(primitive_kind::nand2, {a, b}); }

  net_id inv(net_id a) {
    if (style() == gate_style::nand_net) return nand(a, a);
    return cell(primitive_kind::inv, {a});
  }

  net_id binary(ir_op op, net_id a, net_id b) {
    switch (style()) {
      case gate_style::native:
        return cell(op == ir_op::and_ ? primitive_kind::and2 : op == ir_op::or_ ? primitive_kind::or2 : primitive_kind::xor2,
                    {a, b});
      case gate_style::lut: return lut({a, b}, op_mask(op, 2));
      case gate_style::nand_net:
        if (op == ir_op::and_) return inv(nand(a, b));
        if (op == ir_op::or_) return nand(inv(a), inv(b));
        {
          const net_id t = nand(a, b);
          return nand(nand(a, t), nand(b, t));
        }
    }
    return unset;
  }

  net_id nary(ir_op op, std::vector<net_id> args) {
    const bool chain = cur_->tree == tree_style::chain;
    if (style() == gate_style::lut) {
      // Groups of up to six inputs per LUT.
      if (chain) {
        std::size_t i = std::min<std::size_t>(6, args.size());
        net_id acc = lut(std::vector<net_id>(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(i)), op_mask(op, i));
        while (i < args.size()) {
          const std::size_t take = std::min<std::size_t>(5, args.size() - i);
          std::vector<net_id> in{acc};
          in.insert(in.end(), args.begin() + static_cast<std::ptrdiff_t>(i),
                    args.begin() + static_cast<std::ptrdiff_t>(i + take));
          acc = lut(in, op_mask(op, in.size()));
          i += take;
        }
        return acc;
      }
      while (args.size() > 1) {
        std::vector<net_id> next;
        for (std::size_t i = 0; i < args.size(); i += 6) {
          const std::size_t take = std::min<std::size_t>(6, args.size() - i);
          if (take == 1) {
            next.push_back(args[i]);
            continue;
          }
          std::vector<net_id> in(args.begin() + static_cast<std::ptrdiff_t>(i),
                                 args.begin() + static_cast<std::ptrdiff_t>(i + take));
          next.push_back(lut(in, op_mask(op, take)));
        }
        args = std::move(next);
      }
      return args[0];
    }
    if (chain) {
      net_id acc = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) acc = binary(op, acc, args[i]);
      return acc;
    }
    while (args.size() > 1) {
      std::vector<net_id> next;
      for (std::size_t i = 0; i + 1 < args.size(); i += 2) next.push_back(binary(op, args[i], args[i + 1]));
      if (args.size() % 2) next.push_back(args.back());
      args = std::move(next);
    }
    return args[0];
  }

  net_id mux(net_id s, net_id a, net_id b) {
    switch (style()) {
      case gate_style::native: return cell(primitive_kind::mux2, {a, b, s});
      case gate_style::lut: return lut({s, a, b}, mux_lut_mask);
      case gate_style::nand_net: return nand(nand(a, inv(s)), nand(b, s));
    }
    return unset;
  }

  net_id table(const std::vector<net_id>& args, std::uint64_t mask) {
    if (args.size() >= 2) return lut(args, mask);
    switch (mask & 3) {
      case 0: return zero();
      case 1: return cell(primitive_kind::inv, {args[0]});
      case 2: return cell(primitive_kind::buf, {args[0]});
      default: return one_;
    }
  }

  netlist_builder& b_;
  const ir_design& d_;
  std::string prefix_;
  replica_tag tag_;
  const ir_node* cur_ = nullptr;
  net_id one_ = unset, zero_ = unset;
  std::vector<std::vector<net_id>> at_;
  int counter_ = 0;
};

inline std::vector<net_id> add_inputs(netlist_builder& b, std::uint32_t width) {
  std::vector<net_id> in;
  for (std::uint32_t i = 0; i < width; ++i) in.push_back(b.add_input("x_" + std::to_string(i)));
  return in;
}

}  // namespace designgen_detail

/// Lowers one IR standalone: ports x_*, y_*, done driven by its own valid chain.
inline netlist lower_single(const ir_design& d, const std::string& prefix = "u_a/") {
  validate_ir(d);
  netlist_builder b(d.name);
  auto in = designgen_detail::add_inputs(b, d.input_width);
  designgen_detail::lowerer low(b, d, prefix, replica_tag::a);
  auto [outs, tail] = low.lower(in, low.latency());
  for (std::size_t j = 0; j < outs.size(); ++j) b.add_output("y_" + std::to_string(j), outs[j]);
  b.add_output("done", tail);
  return b.finish();
}

/// Two-replica wrapper: shared inputs x_*, outputs y_* (replica A first),
/// done = AND of both valid chains, each chain as long as the slower replica.
inline netlist make_dmr(const ir_design& a, const ir_design& b, const std::string& name = {}) {
  validate_ir(a);
  validate_ir(b);
  if (a.input_width != b.input_width || a.outputs.size() != b.outputs.size())
    throw error(errc::interface_mismatch, "replica interfaces differ: " + std::to_string(a.input_width) + "->" +
                                              std::to_string(a.outputs.size()) + " vs " +
                                              std::to_string(b.input_width) + "->" + std::to_string(b.outputs.size()));
  netlist_builder nb(name.empty() ? a.name + "_dmr" : name);
  auto in = designgen_detail::add_inputs(nb, a.input_width);
  designgen_detail::lowerer la(nb, a, "u_a/", replica_tag::a), lb(nb, b, "u_b/", replica_tag::b);
  const int t = std::max(la.latency(), lb.latency());
  auto [outs_a, tail_a] = la.lower(in, t);
  auto [outs_b, tail_b] = lb.lower(in, t);
  std::size_t j = 0;
  for (auto n : outs_a) nb.add_output("y_" + std::to_string(j++), n);
  for (auto n : outs_b) nb.add_output("y_" + std::to_string(j++), n);
  nb.add_output("done", nb.add_cell("done_and", primitive_kind::and2, {tail_a, tail_b}));
  return nb.finish();
}

// ---------------------------------------------------------------------------
// Equivalence

inline constexpr std::uint32_t max_equivalence_width = 16;

struct equivalence_result {
  bool equal = true;
  std::optional<std::uint64_t> counterexample;  // input word where they differ
  std::uint64_t expected = 0;                   // reference outputs there
  std::uint64_t actual = 0;                     // design outputs there

  explicit operator bool() const { return equal; }
};

/// Lowers `design`, simulates every input vector to the first valid cycle
/// and compares outputs (and done) with the reference IR's function.
inline equivalence_result check_equivalence(const ir_design& design, const ir_design& reference) {
  if (design.input_width != reference.input_width || design.outputs.size() != reference.outputs.size())
    throw error(errc::interface_mismatch, "designs under comparison have different interfaces");
  if (design.input_width > max_equivalence_width)
    throw error(errc::input_space_too_large, std::to_string(design.input_width) + " input bits exceed the " +
                                                 std::to_string(max_equivalence_width) + "-bit exhaustive limit");
  const auto nl = lower_single(design);
  watch_spec w;
  w.done = nl.done_port;
  for (auto p : nl.output_ports())
    if (p != nl.done_port) w.out_a.push_back(p);
  const auto prog = compile(nl, w);
  const int sample = design.pipeline_depth + 1;
  const std::uint64_t space = std::uint64_t{1} << design.input_width;
  const std::size_t width = design.input_width;
  std::vector<std::uint64_t> words(width);
  for (std::uint64_t base = 0; base < space; base += sim_lanes) {
    std::fill(words.begin(), words.end(), 0);
    for (std::size_t lane = 0; lane < sim_lanes; ++lane) {
      const std::uint64_t x = (base + lane) % space;
      for (std::size_t i = 0; i < width; ++i) words[i] |= ((x >> i) & 1U) << lane;
    }
    const auto got = run_input_lanes(prog, words, sample);
    const auto want = eval_ir(reference, words);
    for (std::size_t lane = 0; lane < sim_lanes && base + lane < space; ++lane) {
      std::uint64_t expect = 0;
      for (std::size_t j = 0; j < want.size(); ++j) expect |= ((want[j] >> lane) & 1U) << j;
      if (got[lane].out_a != expect || !got[lane].done_ok_at_t)
        return {false, base + lane, expect, got[lane].out_a};
    }
  }
  return {};
}

inline void require_equivalent(const ir_design& design, const ir_design& reference, const std::string& what) {
  auto r = check_equivalence(design, reference);
  if (!r)
    throw error(errc::equivalence_failure, what + " differs from '" + reference.name + "' at input 0x" +
                                               to_hex(*r.counterexample) + ": expected 0x" + to_hex(r.expected) +
                                               ", got 0x" + to_hex(r.actual));
}

}  // namespace dmrgnn
