#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmrgnn/error.hpp"

namespace dmrgnn {

/// Bit-level dataflow operations. and/or/xor are n-ary; mux args are
/// (select, a, b) with select = 1 choosing b; table evaluates `value` as a
/// truth table over its args (arg 0 = LSB of the index).
enum class ir_op : std::uint8_t { input, constant, not_, and_, or_, xor_, mux, table };

enum class tree_style : std::uint8_t { balanced, chain };
enum class gate_style : std::uint8_t { native, nand_net, lut };

constexpr std::string_view tree_name(tree_style t) noexcept { return t == tree_style::chain ? "chain" : "balanced"; }
constexpr std::string_view gate_name(gate_style g) noexcept {
  switch (g) {
    case gate_style::native: return "native";
    case gate_style::nand_net: return "nand_net";
    case gate_style::lut: return "lut";
  }
  return "?";
}

struct ir_node {
  ir_op op = ir_op::constant;
  std::vector<std::uint32_t> args;
  std::uint64_t value = 0;  // input index, constant bit, or table mask
  std::uint16_t region = 0;
  // lowering annotations
  tree_style tree = tree_style::balanced;
  gate_style gates = gate_style::native;
  int stage = 0;

  bool operator==(const ir_node&) const = default;
};

/// Nodes are stored in topological order: every arg index is smaller than
/// the node's own index.
struct ir_design {
  std::string name;
  std::uint32_t input_width = 0;
  std::vector<ir_node> nodes;
  std::vector<std::uint32_t> outputs;
  std::vector<std::string> regions;
  int pipeline_depth = 0;  // register stages; every output is sampled at stage pipeline_depth

  bool operator==(const ir_design&) const = default;
};

inline void validate_ir(const ir_design& d) {
  auto bad = [&](std::size_t i, const std::string& why) {
    throw error(errc::syntax_error, "IR '" + d.name + "' node " + std::to_string(i) + ": " + why);
  };
  if (d.pipeline_depth < 0) throw error(errc::syntax_error, "IR '" + d.name + "' has negative pipeline depth");
  std::vector<bool> reach(d.nodes.size(), false);
  for (std::size_t i = 0; i < d.nodes.size(); ++i) {
    const auto& n = d.nodes[i];
    for (auto a : n.args)
      if (a >= i) bad(i, "argument is not an earlier node");
    if (n.region >= d.regions.size() && !d.regions.empty()) bad(i, "unknown region");
    switch (n.op) {
      case ir_op::input:
        if (n.value >= d.input_width || !n.args.empty()) bad(i, "input index out of range");
        reach[i] = true;
        break;
      case ir_op::constant:
        if (n.value > 1 || !n.args.empty()) bad(i, "constant must be a bit");
        break;
      case ir_op::not_:
        if (n.args.size() != 1) bad(i, "not takes one argument");
        break;
      case ir_op::and_:
      case ir_op::or_:
      case ir_op::xor_:
        if (n.args.size() < 2) bad(i, "n-ary operation needs two or more arguments");
        break;
      case ir_op::mux:
        if (n.args.size() != 3) bad(i, "mux takes select, a, b");
        break;
      case ir_op::table:
        if (n.args.empty() || n.args.size() > 6) bad(i, "table takes 1 to 6 arguments");
        if (n.args.size() < 6 && (n.value >> (1U << n.args.size())) != 0) bad(i, "table mask too wide");
        break;
    }
    for (auto a : n.args) {
      reach[i] = reach[i] || reach[a];
      if (n.stage < d.nodes[a].stage && d.nodes[a].op != ir_op::constant) bad(i, "argument from a later stage");
    }
    if (n.stage > d.pipeline_depth) bad(i, "stage beyond pipeline depth");
  }
  for (auto o : d.outputs) {
    if (o >= d.nodes.size()) throw error(errc::syntax_error, "IR '" + d.name + "' output refers to a missing node");
    if (!reach[o])
      throw error(errc::syntax_error, "IR '" + d.name + "' output node " + std::to_string(o) + " is not reachable from inputs");
  }
}

/// 64-lane evaluation: lane word per input bit in, lane word per output out.
inline std::vector<std::uint64_t> eval_ir(const ir_design& d, std::span<const std::uint64_t> inputs) {
  if (inputs.size() != d.input_width) throw error(errc::invalid_stimulus, "one lane word per IR input required");
  std::vector<std::uint64_t> v(d.nodes.size());
  for (std::size_t i = 0; i < d.nodes.size(); ++i) {
    const auto& n = d.nodes[i];
    std::uint64_t r = 0;
    switch (n.op) {
      case ir_op::input: r = inputs[n.value]; break;
      case ir_op::constant: r = n.value ? ~std::uint64_t{0} : 0; break;
      case ir_op::not_: r = ~v[n.args[0]]; break;
      case ir_op::and_:
        r = ~std::uint64_t{0};
        for (auto a : n.args) r &= v[a];
        break;
      case ir_op::or_:
        for (auto a : n.args) r |= v[a];
        break;
      case ir_op::xor_:
        for (auto a : n.args) r ^= v[a];
        break;
      case ir_op::mux: r = (v[n.args[0]] & v[n.args[2]]) | (~v[n.args[0]] & v[n.args[1]]); break;
      case ir_op::table:
        for (std::size_t lane = 0; lane < 64; ++lane) {
          std::uint64_t idx = 0;
          for (std::size_t k = 0; k < n.args.size(); ++k) idx |= ((v[n.args[k]] >> lane) & 1U) << k;
          r |= ((n.value >> idx) & 1U) << lane;
        }
        break;
    }
    v[i] = r;
  }
  std::vector<std::uint64_t> out;
  out.reserve(d.outputs.size());
  for (auto o : d.outputs) out.push_back(v[o]);
  return out;
}

/// Scalar evaluation: bit i of `x` drives input i, bit j of the result is output j.
inline std::uint64_t eval_ir_word(const ir_design& d, std::uint64_t x) {
  std::vector<std::uint64_t> in(d.input_width);
  for (std::uint32_t i = 0; i < d.input_width; ++i) in[i] = ((x >> i) & 1U) ? ~std::uint64_t{0} : 0;
  auto out = eval_ir(d, in);
  std::uint64_t r = 0;
  for (std::size_t j = 0; j < out.size(); ++j) r |= (out[j] & 1U) << j;
  return r;
}

using ir_bits = std::vector<std::uint32_t>;

/// Appends nodes in topological order. Degenerate n-ary calls fold: one
/// argument returns it, none returns the identity constant.
class ir_builder {
 public:
  ir_builder(std::string name, std::uint32_t input_width) {
    d_.name = std::move(name);
    d_.input_width = input_width;
    d_.regions.push_back("top");
    for (std::uint32_t i = 0; i < input_width; ++i) push({ir_op::input, {}, i});
  }

  void region(const std::string& name) {
    for (std::size_t r = 0; r < d_.regions.size(); ++r)
      if (d_.regions[r] == name) {
        region_ = static_cast<std::uint16_t>(r);
        return;
      }
    d_.regions.push_back(name);
    region_ = static_cast<std::uint16_t>(d_.regions.size() - 1);
  }

  [[nodiscard]] std::uint32_t input(std::uint32_t i) const { return i; }
  ir_bits inputs(std::uint32_t first, std::uint32_t count) const {
    ir_bits b;
    for (std::uint32_t i = 0; i < count; ++i) b.push_back(first + i);
    return b;
  }

  std::uint32_t constant(bool v) {
    auto& slot = v ? one_ : zero_;
    if (slot == none) slot = push({ir_op::constant, {}, v ? 1U : 0U});
    return slot;
  }
  std::uint32_t not_(std::uint32_t a) { return push({ir_op::not_, {a}}); }
  std::uint32_t and_(ir_bits a) { return nary(ir_op::and_, std::move(a), true); }
  std::uint32_t or_(ir_bits a) { return nary(ir_op::or_, std::move(a), false); }
  std::uint32_t xor_(ir_bits a) { return nary(ir_op::xor_, std::move(a), false); }
  std::uint32_t and_(std::uint32_t a, std::uint32_t b) { return and_(ir_bits{a, b}); }
  std::uint32_t or_(std::uint32_t a, std::uint32_t b) { return or_(ir_bits{a, b}); }
  std::uint32_t xor_(std::uint32_t a, std::uint32_t b) { return xor_(ir_bits{a, b}); }
  std::uint32_t mux(std::uint32_t s, std::uint32_t a, std::uint32_t b) { return push({ir_op::mux, {s, a, b}}); }
  std::uint32_t table(ir_bits args, std::uint64_t mask) { return push({ir_op::table, std::move(args), mask}); }

  void output(std::uint32_t n) { d_.outputs.push_back(n); }
  void outputs(const ir_bits& b) {
    for (auto n : b) output(n);
  }

  ir_design finish() {
    validate_ir(d_);
    return std::move(d_);
  }

 private:
  static constexpr std::uint32_t none = ~std::uint32_t{0};

  std::uint32_t push(ir_node n) {
    n.region = region_;
    d_.nodes.push_back(std::move(n));
    return static_cast<std::uint32_t>(d_.nodes.size() - 1);
  }
  std::uint32_t nary(ir_op op, ir_bits a, bool identity) {
    if (a.empty()) return constant(identity);
    if (a.size() == 1) return a[0];
    return push({op, std::move(a)});
  }

  ir_design d_;
  std::uint16_t region_ = 0;
  std::uint32_t zero_ = none, one_ = none;
};

}  // namespace dmrgnn
