#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmrgnn/error.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

enum class primitive_kind : std::uint8_t {
  const0,
  const1,
  buf,
  inv,
  and2,
  or2,
  nand2,
  nor2,
  xor2,
  xnor2,
  mux2,
  lut2,
  lut3,
  lut4,
  lut5,
  lut6,
  dff,
};

inline constexpr std::size_t primitive_kind_count = 17;

inline constexpr std::array<primitive_kind, primitive_kind_count> all_primitive_kinds = {
    primitive_kind::const0, primitive_kind::const1, primitive_kind::buf,   primitive_kind::inv,
    primitive_kind::and2,   primitive_kind::or2,    primitive_kind::nand2, primitive_kind::nor2,
    primitive_kind::xor2,   primitive_kind::xnor2,  primitive_kind::mux2,  primitive_kind::lut2,
    primitive_kind::lut3,   primitive_kind::lut4,   primitive_kind::lut5,  primitive_kind::lut6,
    primitive_kind::dff};

constexpr std::string_view kind_name(primitive_kind k) noexcept {
  switch (k) {
    case primitive_kind::const0: return "CONST0";
    case primitive_kind::const1: return "CONST1";
    case primitive_kind::buf: return "BUF";
    case primitive_kind::inv: return "NOT";
    case primitive_kind::and2: return "AND2";
    case primitive_kind::or2: return "OR2";
    case primitive_kind::nand2: return "NAND2";
    case primitive_kind::nor2: return "NOR2";
    case primitive_kind::xor2: return "XOR2";
    case primitive_kind::xnor2: return "XNOR2";
    case primitive_kind::mux2: return "MUX2";
    case primitive_kind::lut2: return "LUT2";
    case primitive_kind::lut3: return "LUT3";
    case primitive_kind::lut4: return "LUT4";
    case primitive_kind::lut5: return "LUT5";
    case primitive_kind::lut6: return "LUT6";
    case primitive_kind::dff: return "DFF";
  }
  return "?";
}

inline std::optional<primitive_kind> kind_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto k : all_primitive_kinds)
    if (kind_name(k) == upper) return k;
  if (upper == "INV") return primitive_kind::inv;
  return std::nullopt;
}

constexpr bool is_lut(primitive_kind k) noexcept {
  return k >= primitive_kind::lut2 && k <= primitive_kind::lut6;
}

constexpr bool is_combinational(primitive_kind k) noexcept { return k != primitive_kind::dff; }

/// Number of data inputs of a primitive. Every primitive has one output pin.
constexpr int input_count(primitive_kind k) noexcept {
  switch (k) {
    case primitive_kind::const0:
    case primitive_kind::const1: return 0;
    case primitive_kind::buf:
    case primitive_kind::inv:
    case primitive_kind::dff: return 1;
    case primitive_kind::mux2: return 3;
    case primitive_kind::lut2: return 2;
    case primitive_kind::lut3: return 3;
    case primitive_kind::lut4: return 4;
    case primitive_kind::lut5: return 5;
    case primitive_kind::lut6: return 6;
    default: return 2;
  }
}

constexpr primitive_kind lut_kind(int inputs) noexcept {
  return static_cast<primitive_kind>(static_cast<int>(primitive_kind::lut2) + inputs - 2);
}

/// Pin names in connection order: inputs first, output last.
/// MUX2 selects A when S = 0 and B when S = 1. DFF has an implicit clock.
inline std::vector<std::string_view> pin_names(primitive_kind k) {
  switch (k) {
    case primitive_kind::const0:
    case primitive_kind::const1: return {"Y"};
    case primitive_kind::buf:
    case primitive_kind::inv: return {"A", "Y"};
    case primitive_kind::mux2: return {"A", "B", "S", "Y"};
    case primitive_kind::dff: return {"D", "Q"};
    default:
      if (is_lut(k)) {
        static constexpr std::array<std::string_view, 6> names = {"I0", "I1", "I2", "I3", "I4", "I5"};
        std::vector<std::string_view> pins(names.begin(), names.begin() + input_count(k));
        pins.push_back("O");
        return pins;
      }
      return {"A", "B", "Y"};
  }
}

inline std::optional<int> pin_index(primitive_kind k, std::string_view pin) {
  std::string upper(pin);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  auto names = pin_names(k);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == upper) return static_cast<int>(i);
  return std::nullopt;
}

enum class replica_tag : std::uint8_t { a, b, shared };

constexpr std::string_view tag_name(replica_tag t) noexcept {
  switch (t) {
    case replica_tag::a: return "A";
    case replica_tag::b: return "B";
    case replica_tag::shared: return "Shared";
  }
  return "?";
}

using net_id = std::uint32_t;

struct cell_instance {
  std::string id;
  primitive_kind kind = primitive_kind::buf;
  /// LUT truth table; bit j is the output when the inputs encode j (I0 = LSB).
  std::uint64_t init_mask = 0;
  /// One net per pin, ordered as pin_names(kind).
  std::vector<net_id> pins;
  replica_tag tag = replica_tag::shared;

  [[nodiscard]] net_id output() const { return pins.back(); }
  [[nodiscard]] std::span<const net_id> inputs() const {
    return std::span<const net_id>(pins).first(pins.size() - 1);
  }
};

struct net {
  std::string name;
};

enum class port_direction : std::uint8_t { input, output };

struct primary_port {
  std::string name;
  port_direction direction = port_direction::input;
  net_id net = 0;
};

struct netlist {
  std::string name;
  std::vector<cell_instance> cells;
  std::vector<net> nets;
  std::vector<primary_port> ports;
  std::size_t done_port = 0;

  [[nodiscard]] std::size_t dff_count() const {
    return static_cast<std::size_t>(std::count_if(
        cells.begin(), cells.end(), [](const cell_instance& c) { return c.kind == primitive_kind::dff; }));
  }
  [[nodiscard]] std::vector<std::size_t> input_ports() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ports.size(); ++i)
      if (ports[i].direction == port_direction::input) out.push_back(i);
    return out;
  }
  [[nodiscard]] std::vector<std::size_t> output_ports() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ports.size(); ++i)
      if (ports[i].direction == port_direction::output) out.push_back(i);
    return out;
  }
};

/// Who drives a net and who listens to it.
struct net_endpoints {
  static constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::size_t driver_cell = none;
  std::size_t driver_port = none;
  std::vector<std::pair<std::size_t, int>> sinks;  // (cell, input pin)
  std::vector<std::size_t> sink_ports;             // primary outputs
};

/// Builds the per-net endpoint table, throwing on multiply-driven or
/// undriven nets.
inline std::vector<net_endpoints> connectivity(const netlist& nl) {
  std::vector<net_endpoints> ends(nl.nets.size());
  auto bad_net = [&](net_id n) {
    if (n >= nl.nets.size())
      throw error(errc::dangling_net, "reference to undefined net index " + std::to_string(n));
  };
  for (std::size_t p = 0; p < nl.ports.size(); ++p) {
    const auto& port = nl.ports[p];
    bad_net(port.net);
    auto& e = ends[port.net];
    if (port.direction == port_direction::input) {
      if (e.driver_cell != net_endpoints::none || e.driver_port != net_endpoints::none)
        throw error(errc::multi_driver, "net '" + nl.nets[port.net].name + "' has more than one driver");
      e.driver_port = p;
    } else {
      e.sink_ports.push_back(p);
    }
  }
  for (std::size_t c = 0; c < nl.cells.size(); ++c) {
    const auto& cell = nl.cells[c];
    if (cell.pins.size() != static_cast<std::size_t>(input_count(cell.kind) + 1))
      throw error(errc::dangling_net, "instance '" + cell.id + "' has " + std::to_string(cell.pins.size()) +
                                          " connected pins, expected " +
                                          std::to_string(input_count(cell.kind) + 1));
    for (net_id n : cell.pins) bad_net(n);
    auto& e = ends[cell.output()];
    if (e.driver_cell != net_endpoints::none || e.driver_port != net_endpoints::none)
      throw error(errc::multi_driver, "net '" + nl.nets[cell.output()].name + "' has more than one driver");
    e.driver_cell = c;
    for (int i = 0; i < input_count(cell.kind); ++i) ends[cell.pins[i]].sinks.emplace_back(c, i);
  }
  for (std::size_t n = 0; n < ends.size(); ++n)
    if (ends[n].driver_cell == net_endpoints::none && ends[n].driver_port == net_endpoints::none)
      throw error(errc::dangling_net, "net '" + nl.nets[n].name + "' has no driver");
  return ends;
}

/// Topological order of the combinational cells; DFF outputs and primary
/// inputs act as sources. Throws combinational_cycle with the instance ids
/// forming one cycle.
inline std::vector<std::size_t> combinational_order(const netlist& nl, const std::vector<net_endpoints>& ends) {
  const std::size_t n = nl.cells.size();
  std::vector<int> pending(n, 0);
  std::vector<std::size_t> ready;
  for (std::size_t c = 0; c < n; ++c) {
    const auto& cell = nl.cells[c];
    if (!is_combinational(cell.kind)) continue;
    for (net_id in : cell.inputs()) {
      std::size_t d = ends[in].driver_cell;
      if (d != net_endpoints::none && is_combinational(nl.cells[d].kind)) ++pending[c];
    }
    if (pending[c] == 0) ready.push_back(c);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  // FIFO over a vector keeps the order deterministic and close to netlist order.
  for (std::size_t head = 0; head < ready.size(); ++head) {
    std::size_t c = ready[head];
    order.push_back(c);
    for (auto [sink, pin] : ends[nl.cells[c].output()].sinks) {
      (void)pin;
      if (!is_combinational(nl.cells[sink].kind)) continue;
      if (--pending[sink] == 0) ready.push_back(sink);
    }
  }
  std::size_t comb = 0;
  for (const auto& cell : nl.cells) comb += is_combinational(cell.kind) ? 1 : 0;
  if (order.size() == comb) return order;

  // Walk backwards through unresolved drivers until a cell repeats.
  std::size_t start = 0;
  while (!(is_combinational(nl.cells[start].kind) && pending[start] > 0)) ++start;
  std::vector<std::size_t> path;
  std::vector<int> seen_at(n, -1);
  std::size_t cur = start;
  while (seen_at[cur] < 0) {
    seen_at[cur] = static_cast<int>(path.size());
    path.push_back(cur);
    for (net_id in : nl.cells[cur].inputs()) {
      std::size_t d = ends[in].driver_cell;
      if (d != net_endpoints::none && is_combinational(nl.cells[d].kind) && pending[d] > 0) {
        cur = d;
        break;
      }
    }
  }
  std::vector<std::string> witness;
  for (std::size_t i = static_cast<std::size_t>(seen_at[cur]); i < path.size(); ++i)
    witness.push_back(nl.cells[path[i]].id);
  std::reverse(witness.begin(), witness.end());
  std::string msg = "combinational cycle through";
  for (const auto& w : witness) msg += " " + w;
  throw error(errc::combinational_cycle, msg);
}

/// Checks every structural invariant of a netlist.
inline void validate(const netlist& nl) {
  auto ends = connectivity(nl);
  for (const auto& cell : nl.cells) {
    if (is_lut(cell.kind)) {
      int bits = 1 << input_count(cell.kind);
      if (bits < 64 && (cell.init_mask >> bits) != 0)
        throw error(errc::syntax_error, "INIT of '" + cell.id + "' is wider than " + std::to_string(bits) + " bits");
    }
  }
  if (nl.done_port >= nl.ports.size() || nl.ports[nl.done_port].direction != port_direction::output)
    throw error(errc::missing_done_port, "netlist '" + nl.name + "' has no done output");
  combinational_order(nl, ends);
}

/// Incremental construction helper. Names are taken verbatim; the caller is
/// responsible for uniqueness.
class netlist_builder {
 public:
  explicit netlist_builder(std::string name) { nl_.name = std::move(name); }

  net_id add_net(std::string name) {
    nl_.nets.push_back({std::move(name)});
    return static_cast<net_id>(nl_.nets.size() - 1);
  }

  net_id add_input(std::string name) {
    net_id n = add_net(name);
    nl_.ports.push_back({std::move(name), port_direction::input, n});
    return n;
  }

  void add_output(std::string name, net_id n) {
    nl_.ports.push_back({std::move(name), port_direction::output, n});
  }

  /// Adds a cell whose output drives a fresh net named `<id>_o`.
  net_id add_cell(std::string id, primitive_kind kind, std::span<const net_id> inputs, std::uint64_t init = 0,
                  replica_tag tag = replica_tag::shared) {
    net_id out = add_net(id + "_o");
    add_cell_driving(std::move(id), kind, inputs, out, init, tag);
    return out;
  }

  net_id add_cell(std::string id, primitive_kind kind, std::initializer_list<net_id> inputs, std::uint64_t init = 0,
                  replica_tag tag = replica_tag::shared) {
    return add_cell(std::move(id), kind, std::span<const net_id>(inputs.begin(), inputs.size()), init, tag);
  }

  std::size_t add_cell_driving(std::string id, primitive_kind kind, std::span<const net_id> inputs, net_id out,
                               std::uint64_t init = 0, replica_tag tag = replica_tag::shared) {
    cell_instance c;
    c.id = std::move(id);
    c.kind = kind;
    c.init_mask = init;
    c.pins.assign(inputs.begin(), inputs.end());
    c.pins.push_back(out);
    c.tag = tag;
    nl_.cells.push_back(std::move(c));
    return nl_.cells.size() - 1;
  }

  /// Rewires input pin `pin` of cell `cell` (used to close DFF feedback).
  void connect(std::size_t cell, int pin, net_id n) { nl_.cells[cell].pins[static_cast<std::size_t>(pin)] = n; }

  netlist& get() { return nl_; }

  netlist finish(std::string_view done_name = "done") {
    bool found = false;
    for (std::size_t i = 0; i < nl_.ports.size(); ++i)
      if (nl_.ports[i].name == done_name && nl_.ports[i].direction == port_direction::output) {
        nl_.done_port = i;
        found = true;
      }
    if (!found) throw error(errc::missing_done_port, "no output named '" + std::string(done_name) + "'");
    validate(nl_);
    return std::move(nl_);
  }

 private:
  netlist nl_;
};

/// Name-independent structural hash: a few rounds of neighbourhood label
/// refinement over (kind, INIT, ordered fanin, fanout multiset), then the
/// sorted multiset of labels together with primary-port attachment.
inline std::uint64_t canonical_hash(const netlist& nl, int rounds = 4) {
  auto ends = connectivity(nl);
  const std::size_t n = nl.cells.size();
  std::vector<std::uint64_t> label(n);
  for (std::size_t c = 0; c < n; ++c) {
    fnv1a h;
    h.add(static_cast<std::uint64_t>(nl.cells[c].kind));
    h.add(nl.cells[c].init_mask);
    label[c] = h.value();
  }
  // Label of whatever drives a net: a cell label or a tag for primary inputs.
  auto source_label = [&](net_id net, const std::vector<std::uint64_t>& lab) -> std::uint64_t {
    const auto& e = ends[net];
    if (e.driver_cell != net_endpoints::none) return lab[e.driver_cell];
    return 0x5052494d494e5055ULL;
  };
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t c = 0; c < n; ++c) {
      fnv1a h;
      h.add(label[c]);
      for (net_id in : nl.cells[c].inputs()) h.add(source_label(in, label));
      const auto& e = ends[nl.cells[c].output()];
      std::vector<std::uint64_t> outs;
      for (auto [s, pin] : e.sinks) outs.push_back(mix64(label[s] + static_cast<std::uint64_t>(pin)));
      std::sort(outs.begin(), outs.end());
      for (auto v : outs) h.add(v);
      h.add(static_cast<std::uint64_t>(e.sink_ports.size()));
      next[c] = h.value();
    }
    label = std::move(next);
  }
  std::vector<std::uint64_t> ports;
  for (const auto& p : nl.ports) ports.push_back(mix64(static_cast<std::uint64_t>(p.direction) ^ source_label(p.net, label)));
  std::sort(ports.begin(), ports.end());
  std::sort(label.begin(), label.end());
  fnv1a h;
  for (auto v : label) h.add(v);
  for (auto v : ports) h.add(v);
  return h.value();
}

/// Exact structural equality under instance/net/port names: same cells with
/// the same kinds, INIT masks and tags, and identical connectivity.
inline bool equivalent_by_name(const netlist& x, const netlist& y) {
  if (x.cells.size() != y.cells.size() || x.ports.size() != y.ports.size() || x.nets.size() != y.nets.size())
    return false;
  std::unordered_map<std::string_view, std::size_t> ycell;
  for (std::size_t i = 0; i < y.cells.size(); ++i) ycell.emplace(y.cells[i].id, i);
  std::unordered_map<std::string_view, std::size_t> yport;
  for (std::size_t i = 0; i < y.ports.size(); ++i) yport.emplace(y.ports[i].name, i);
  // Map x nets onto y nets through the pins that touch them.
  std::vector<std::optional<net_id>> net_map(x.nets.size());
  auto bind = [&](net_id xn, net_id yn) {
    if (net_map[xn] && *net_map[xn] != yn) return false;
    net_map[xn] = yn;
    return true;
  };
  for (const auto& xc : x.cells) {
    auto it = ycell.find(xc.id);
    if (it == ycell.end()) return false;
    const auto& yc = y.cells[it->second];
    if (xc.kind != yc.kind || xc.init_mask != yc.init_mask || xc.tag != yc.tag || xc.pins.size() != yc.pins.size())
      return false;
    for (std::size_t p = 0; p < xc.pins.size(); ++p)
      if (!bind(xc.pins[p], yc.pins[p])) return false;
  }
  for (const auto& xp : x.ports) {
    auto it = yport.find(xp.name);
    if (it == yport.end()) return false;
    const auto& yp = y.ports[it->second];
    if (xp.direction != yp.direction || !bind(xp.net, yp.net)) return false;
  }
  std::vector<bool> used(y.nets.size(), false);
  for (const auto& m : net_map) {
    if (!m) continue;
    if (used[*m]) return false;
    used[*m] = true;
  }
  return x.ports[x.done_port].name == y.ports[y.done_port].name;
}

// ---------------------------------------------------------------------------
// Replica membership

struct prefix_rule {
  std::string prefix;
  replica_tag tag = replica_tag::shared;
};

inline std::vector<prefix_rule> default_prefix_rules() {
  return {{"u_a/", replica_tag::a}, {"u_b/", replica_tag::b}};
}

/// Replica partition of the flip-flops; entries are cell indices.
struct module_map {
  std::vector<std::size_t> ffs_a;
  std::vector<std::size_t> ffs_b;
  std::vector<std::size_t> ffs_shared;

  [[nodiscard]] std::optional<replica_tag> tag_of(std::size_t cell) const {
    auto has = [cell](const std::vector<std::size_t>& v) { return std::binary_search(v.begin(), v.end(), cell); };
    if (has(ffs_a)) return replica_tag::a;
    if (has(ffs_b)) return replica_tag::b;
    if (has(ffs_shared)) return replica_tag::shared;
    return std::nullopt;
  }
};

inline std::optional<replica_tag> match_prefix(std::string_view id, std::span<const prefix_rule> rules,
                                               int* matches = nullptr) {
  std::optional<replica_tag> tag;
  int count = 0;
  for (const auto& r : rules)
    if (id.starts_with(r.prefix)) {
      tag = r.tag;
      ++count;
    }
  if (matches) *matches = count;
  return count == 1 ? tag : std::nullopt;
}

inline module_map partition_modules(const netlist& nl, std::span<const prefix_rule> rules) {
  module_map map;
  for (std::size_t c = 0; c < nl.cells.size(); ++c) {
    const auto& cell = nl.cells[c];
    if (cell.kind != primitive_kind::dff) continue;
    int matches = 0;
    auto tag = match_prefix(cell.id, rules, &matches);
    if (!tag)
      throw error(errc::unmatched_instance, "flip-flop '" + cell.id + "' matches " + std::to_string(matches) +
                                                " prefix rules, expected exactly one");
    switch (*tag) {
      case replica_tag::a: map.ffs_a.push_back(c); break;
      case replica_tag::b: map.ffs_b.push_back(c); break;
      case replica_tag::shared: map.ffs_shared.push_back(c); break;
    }
  }
  return map;
}

/// Stamps every cell's tag from the rules; cells matching no rule (or
/// several) are Shared.
inline void apply_prefix_tags(netlist& nl, std::span<const prefix_rule> rules) {
  for (auto& cell : nl.cells) cell.tag = match_prefix(cell.id, rules).value_or(replica_tag::shared);
}

}  // namespace dmrgnn
