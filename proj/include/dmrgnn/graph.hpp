#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmrgnn/error.hpp"
#include "dmrgnn/netlist.hpp"

namespace dmrgnn {

/// Raw per-cell features before one-hot encoding.
struct node_features {
  int fanin = 0;
  int fanout = 0;
  primitive_kind kind = primitive_kind::buf;
  int pi = 0;
  int po = 0;

  bool operator==(const node_features&) const = default;
};

/// Cells are vertices; each cell-to-cell net connection is one undirected
/// edge stored as (i, j) with i < j, sorted, no duplicates.
struct circuit_graph {
  std::vector<std::string> node_ids;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<node_features> raw;

  [[nodiscard]] std::size_t node_count() const { return node_ids.size(); }
};

inline circuit_graph extract_graph(const netlist& nl) {
  const auto ends = connectivity(nl);
  circuit_graph g;
  const std::size_t n = nl.cells.size();
  g.node_ids.reserve(n);
  g.raw.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    g.node_ids.push_back(nl.cells[c].id);
    g.raw[c].kind = nl.cells[c].kind;
  }
  for (const auto& e : ends) {
    if (e.driver_cell != net_endpoints::none) {
      auto& drv = g.raw[e.driver_cell];
      drv.fanout += static_cast<int>(e.sinks.size());
      drv.po += static_cast<int>(e.sink_ports.size());
      for (const auto& [sink, pin] : e.sinks) {
        ++g.raw[sink].fanin;
        if (sink == e.driver_cell) continue;
        auto [lo, hi] = std::minmax(sink, e.driver_cell);
        g.edges.emplace_back(static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(hi));
      }
    } else {
      for (const auto& [sink, pin] : e.sinks) ++g.raw[sink].pi;
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

/// One-hot layout: fanin, fanout, kind, pi, po groups concatenated. Integer
/// groups hold exact values 0..cap plus one overflow bucket.
struct feature_vocab {
  static constexpr int groups = 5;
  int fanin_cap = 32;
  int fanout_cap = 32;
  int pi_cap = 8;
  int po_cap = 8;
  std::vector<primitive_kind> kinds;  // enum order

  [[nodiscard]] std::array<int, groups> sizes() const {
    return {fanin_cap + 2, fanout_cap + 2, static_cast<int>(kinds.size()), pi_cap + 2, po_cap + 2};
  }
  [[nodiscard]] std::array<int, groups> offsets() const {
    auto s = sizes();
    std::array<int, groups> o{};
    for (int g = 1; g < groups; ++g) o[g] = o[g - 1] + s[g - 1];
    return o;
  }
  [[nodiscard]] int total_dim() const {
    auto s = sizes();
    int t = 0;
    for (int v : s) t += v;
    return t;
  }

  bool operator==(const feature_vocab&) const = default;
};

/// Caps are fixed and the kind group spans every primitive kind, so the
/// result does not depend on the graphs and files encoded before a split
/// stay valid for any split.
inline feature_vocab build_vocab(const std::vector<const circuit_graph*>& /*graphs*/) {
  feature_vocab v;
  v.kinds.assign(all_primitive_kinds.begin(), all_primitive_kinds.end());
  return v;
}

inline feature_vocab build_vocab(const std::vector<circuit_graph>& graphs) {
  std::vector<const circuit_graph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  return build_vocab(ptrs);
}

/// Per-node column indices of the five ones; the dense matrix is implied.
using onehot_rows = std::vector<std::array<std::uint32_t, feature_vocab::groups>>;

inline onehot_rows encode_features(const circuit_graph& g, const feature_vocab& v) {
  const auto off = v.offsets();
  auto bucket = [](int value, int cap) { return value > cap ? cap + 1 : value; };
  onehot_rows rows(g.node_count());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = g.raw[i];
    auto it = std::find(v.kinds.begin(), v.kinds.end(), f.kind);
    if (it == v.kinds.end())
      throw error(errc::unknown_kind, "node '" + g.node_ids[i] + "' has kind " + std::string(kind_name(f.kind)) +
                                          " absent from the vocabulary");
    rows[i] = {static_cast<std::uint32_t>(off[0] + bucket(f.fanin, v.fanin_cap)),
               static_cast<std::uint32_t>(off[1] + bucket(f.fanout, v.fanout_cap)),
               static_cast<std::uint32_t>(off[2] + (it - v.kinds.begin())),
               static_cast<std::uint32_t>(off[3] + bucket(f.pi, v.pi_cap)),
               static_cast<std::uint32_t>(off[4] + bucket(f.po, v.po_cap))};
  }
  return rows;
}

inline std::vector<std::vector<double>> dense_features(const onehot_rows& rows, int total_dim) {
  std::vector<std::vector<double>> m(rows.size(), std::vector<double>(static_cast<std::size_t>(total_dim), 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (auto c : rows[i]) m[i][c] = 1.0;
  return m;
}

/// Graph ready for the model: structure plus encoded rows.
struct encoded_graph {
  std::string design_id;
  std::uint32_t node_count = 0;
  int total_dim = 0;
  onehot_rows rows;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;

  bool operator==(const encoded_graph&) const = default;
};

inline encoded_graph encode_graph(const circuit_graph& g, const feature_vocab& v, std::string design_id = {}) {
  return {std::move(design_id), static_cast<std::uint32_t>(g.node_count()), v.total_dim(), encode_features(g, v),
          g.edges};
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const feature_vocab& v) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : v.kinds) kinds.push_back(std::string(kind_name(k)));
  return {{"fanin_cap", v.fanin_cap}, {"fanout_cap", v.fanout_cap}, {"pi_cap", v.pi_cap},
          {"po_cap", v.po_cap},       {"kinds", kinds},             {"total_dim", v.total_dim()}};
}

inline feature_vocab vocab_from_json(const nlohmann::json& j) {
  feature_vocab v;
  try {
    v.fanin_cap = j.at("fanin_cap").get<int>();
    v.fanout_cap = j.at("fanout_cap").get<int>();
    v.pi_cap = j.at("pi_cap").get<int>();
    v.po_cap = j.at("po_cap").get<int>();
    for (const auto& k : j.at("kinds")) {
      auto kind = kind_from_name(k.get<std::string>());
      if (!kind) throw error(errc::unknown_kind, "vocabulary names unknown kind " + k.get<std::string>());
      v.kinds.push_back(*kind);
    }
    if (j.contains("total_dim") && j["total_dim"].get<int>() != v.total_dim())
      throw error(errc::vocabulary_mismatch, "stored total_dim disagrees with the group sizes");
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, std::string("malformed vocabulary: ") + e.what());
  }
  return v;
}

inline nlohmann::json to_json(const encoded_graph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& r : g.rows) nodes.push_back(nlohmann::json{{"onehot", r}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : g.edges) edges.push_back({i, j});
  return {{"meta", {{"design_id", g.design_id}, {"node_count", g.node_count}, {"total_dim", g.total_dim}}},
          {"nodes", nodes},
          {"edges", edges}};
}

inline encoded_graph graph_from_json(const nlohmann::json& j) {
  encoded_graph g;
  try {
    const auto& meta = j.at("meta");
    g.design_id = meta.at("design_id").get<std::string>();
    g.node_count = meta.at("node_count").get<std::uint32_t>();
    g.total_dim = meta.at("total_dim").get<int>();
    for (const auto& n : j.at("nodes")) g.rows.push_back(n.at("onehot").get<std::array<std::uint32_t, 5>>());
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>());
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, std::string("malformed graph file: ") + e.what());
  }
  if (g.rows.size() != g.node_count)
    throw error(errc::dimension_mismatch, "graph lists " + std::to_string(g.rows.size()) + " nodes, meta says " +
                                              std::to_string(g.node_count));
  for (const auto& r : g.rows)
    for (auto c : r)
      if (c >= static_cast<std::uint32_t>(g.total_dim))
        throw error(errc::dimension_mismatch, "one-hot index beyond total_dim");
  for (const auto& [a, b] : g.edges)
    if (a >= g.node_count || b >= g.node_count) throw error(errc::dimension_mismatch, "edge endpoint out of range");
  return g;
}

}  // namespace dmrgnn
