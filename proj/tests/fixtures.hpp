#pragma once

// Small hand-built netlists shared by the unit tests.

#include <algorithm>
#include <string>
#include <vector>

#include "dmrgnn/graph.hpp"
#include "dmrgnn/netlist.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn::fixtures {

/// x -> BUF -> y, done tied to CONST1.
inline netlist buf_design() {
  netlist_builder b("buf_top");
  net_id x = b.add_input("x");
  net_id y = b.add_cell("g_buf", primitive_kind::buf, {x});
  net_id one = b.add_cell("g_one", primitive_kind::const1, {});
  b.add_output("y", y);
  b.add_output("done", one);
  return b.finish();
}

/// Only done, tied to CONST1.
inline netlist empty_design() {
  netlist_builder b("empty_top");
  net_id one = b.add_cell("g_one", primitive_kind::const1, {});
  b.add_output("done", one);
  return b.finish();
}

/// One replica of the mini DMR fixture: out = {x0 ^ x1, x0 & x1} through
/// `stages` register stages, plus a valid chain of length `valid_len`.
/// Returns the valid-chain tail.
inline net_id mini_replica(netlist_builder& b, const std::string& prefix, net_id x0, net_id x1, int stages,
                           int valid_len, std::vector<net_id>& outs, replica_tag tag) {
  net_id s = b.add_cell(prefix + "g_xor", primitive_kind::xor2, {x0, x1}, 0, tag);
  net_id c = b.add_cell(prefix + "g_and", primitive_kind::and2, {x0, x1}, 0, tag);
  for (int k = 0; k < stages; ++k) {
    s = b.add_cell(prefix + "r_s" + std::to_string(k), primitive_kind::dff, {s}, 0, tag);
    c = b.add_cell(prefix + "r_c" + std::to_string(k), primitive_kind::dff, {c}, 0, tag);
  }
  outs.push_back(s);
  outs.push_back(c);
  net_id v = b.add_cell(prefix + "v_one", primitive_kind::const1, {}, 0, tag);
  for (int k = 0; k < valid_len; ++k) v = b.add_cell(prefix + "v" + std::to_string(k), primitive_kind::dff, {v}, 0, tag);
  return v;
}

/// Two independent replicas with the given register depths; done is the AND
/// of both valid chains, each padded to the slower replica.
inline netlist mini_dmr(int stages_a = 1, int stages_b = 1, int valid_len = 0) {
  netlist_builder b("mini_dmr");
  net_id x0 = b.add_input("x_0");
  net_id x1 = b.add_input("x_1");
  const int t = valid_len > 0 ? valid_len : std::max(stages_a, stages_b);
  std::vector<net_id> outs_a, outs_b;
  net_id va = mini_replica(b, "u_a/", x0, x1, stages_a, t, outs_a, replica_tag::a);
  net_id vb = mini_replica(b, "u_b/", x0, x1, stages_b, t, outs_b, replica_tag::b);
  net_id done = b.add_cell("done_and", primitive_kind::and2, {va, vb});
  for (std::size_t i = 0; i < outs_a.size(); ++i) b.add_output("y_" + std::to_string(i), outs_a[i]);
  for (std::size_t i = 0; i < outs_b.size(); ++i) b.add_output("y_" + std::to_string(i + outs_a.size()), outs_b[i]);
  b.add_output("done", done);
  return b.finish();
}


/// Random acyclic netlist with `cells` cells over every primitive kind.
/// DFF inputs may come from later cells (state feedback), combinational
/// inputs only from earlier nets.
inline netlist random_netlist(std::uint64_t seed, std::size_t cells, std::size_t inputs = 4) {
  rng r(seed);
  netlist_builder b("rand_" + std::to_string(seed));
  std::vector<net_id> avail;
  for (std::size_t i = 0; i < inputs; ++i) avail.push_back(b.add_input("x_" + std::to_string(i)));
  std::vector<std::size_t> dffs;
  const std::string prefixes[3] = {"u_a/", "u_b/", "w/"};
  for (std::size_t c = 0; c < cells; ++c) {
    auto kind = all_primitive_kinds[r.below(primitive_kind_count)];
    std::vector<net_id> in;
    for (int i = 0; i < input_count(kind); ++i) in.push_back(avail[r.below(avail.size())]);
    std::uint64_t init = 0;
    if (is_lut(kind)) {
      int bits = 1 << input_count(kind);
      init = r.next();
      if (bits < 64) init &= (std::uint64_t{1} << bits) - 1;
    }
    std::string id = prefixes[r.below(3)] + "c" + std::to_string(c);
    net_id out = b.add_cell(id, kind, in, init);
    if (kind == primitive_kind::dff) dffs.push_back(b.get().cells.size() - 1);
    avail.push_back(out);
  }
  for (auto d : dffs) b.connect(d, 0, avail[r.below(avail.size())]);
  for (std::size_t i = 0; i < 3; ++i) b.add_output("y_" + std::to_string(i), avail[r.below(avail.size())]);
  b.add_output("done", avail.back());
  return b.finish();
}

/// Random graph with `n` nodes, about `extra` edges beyond a spanning path,
/// and random in-range features under the default vocabulary.
inline encoded_graph random_graph(std::uint64_t seed, std::uint32_t n, std::uint32_t extra = 0) {
  rng r(seed);
  const feature_vocab v = build_vocab(std::vector<circuit_graph>{});
  const auto size = v.sizes();
  const auto off = v.offsets();
  encoded_graph g;
  g.design_id = "g" + std::to_string(seed);
  g.node_count = n;
  g.total_dim = v.total_dim();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::array<std::uint32_t, feature_vocab::groups> row{};
    for (int k = 0; k < feature_vocab::groups; ++k)
      row[k] = static_cast<std::uint32_t>(off[k]) + static_cast<std::uint32_t>(r.below(static_cast<std::uint64_t>(std::min(size[k], 6))));
    g.rows.push_back(row);
  }
  for (std::uint32_t i = 1; i < n; ++i) g.edges.emplace_back(static_cast<std::uint32_t>(r.below(i)), i);
  for (std::uint32_t e = 0; e < extra && n > 1; ++e) {
    auto a = static_cast<std::uint32_t>(r.below(n)), b = static_cast<std::uint32_t>(r.below(n));
    if (a != b) g.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

/// Node relabeling: new index of node i is perm[i].
inline encoded_graph permute_graph(const encoded_graph& g, const std::vector<std::uint32_t>& perm) {
  encoded_graph out = g;
  for (std::uint32_t i = 0; i < g.node_count; ++i) out.rows[perm[i]] = g.rows[i];
  out.edges.clear();
  for (const auto& [a, b] : g.edges) out.edges.emplace_back(std::min(perm[a], perm[b]), std::max(perm[a], perm[b]));
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

inline std::vector<std::uint32_t> random_permutation(std::uint64_t seed, std::uint32_t n) {
  std::vector<std::uint32_t> p(n);
  for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
  rng r(seed);
  r.shuffle(p);
  return p;
}

}  // namespace dmrgnn::fixtures
