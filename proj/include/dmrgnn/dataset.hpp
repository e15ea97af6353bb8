#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmrgnn/campaign.hpp"
#include "dmrgnn/designgen.hpp"
#include "dmrgnn/edif.hpp"
#include "dmrgnn/error.hpp"
#include "dmrgnn/graph.hpp"
#include "dmrgnn/seeds.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes only when the content differs, so reruns leave identical files
/// untouched.
inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::error_code ec;
  if (std::filesystem::exists(p, ec)) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (ss.str() == text) return;
  }
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw error(errc::io_error, "cannot write " + p.string());
  out << text;
  if (!out) throw error(errc::io_error, "short write to " + p.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, "malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& p, const nlohmann::json& j) { write_text_file(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json to_json(const error_rates& r) {
  return {{"critical", r.critical}, {"detected", r.detected}, {"hang", r.hang},   {"silent", r.silent},
          {"denominator", r.denominator}, {"cer", r.cer()},   {"der", r.der()},   {"her", r.her()},
          {"ser", r.ser()}};
}

inline error_rates rates_from_json(const nlohmann::json& j) {
  error_rates r;
  r.critical = j.at("critical").get<std::uint64_t>();
  r.detected = j.at("detected").get<std::uint64_t>();
  r.hang = j.at("hang").get<std::uint64_t>();
  r.silent = j.at("silent").get<std::uint64_t>();
  r.denominator = j.at("denominator").get<std::uint64_t>();
  if (r.critical + r.detected + r.hang + r.silent != r.denominator)
    throw error(errc::io_error, "rate counts do not sum to the denominator");
  return r;
}

struct design_labels {
  int done_time = 0;
  error_rates sbf;
  error_rates dbf;

  bool operator==(const design_labels&) const = default;
};

struct manifest_row {
  std::string design_id;
  std::uint64_t index = 0;
  std::uint64_t seed = 0;  // derived from the master seed and index
  std::string seed_circuit;
  nlohmann::json transforms_a;
  nlohmann::json transforms_b;
  bool identical_transforms = false;
  std::uint64_t stimulus = 0;  // input word, bit i drives x_i
  int max_cycles = 64;
  std::string edif_path;   // relative to the workspace
  std::string graph_path;  // relative to the workspace
  std::size_t cells = 0;
  std::size_t dffs = 0;
  std::optional<design_labels> labels;
  std::string failure;  // campaign failure ("Code: message"); empty when fine
};

struct dataset_manifest {
  std::string seed_circuit;
  std::uint64_t master_seed = 0;
  nlohmann::json transform_ranges;
  std::vector<manifest_row> designs;

  [[nodiscard]] std::vector<const manifest_row*> labeled() const {
    std::vector<const manifest_row*> out;
    for (const auto& r : designs)
      if (r.labels && r.failure.empty()) out.push_back(&r);
    return out;
  }
};

inline nlohmann::json to_json(const manifest_row& r) {
  nlohmann::json j = {{"design_id", r.design_id},
                      {"index", r.index},
                      {"seed", to_hex(r.seed, 16)},
                      {"seed_circuit", r.seed_circuit},
                      {"transforms_a", r.transforms_a},
                      {"transforms_b", r.transforms_b},
                      {"identical_transforms", r.identical_transforms},
                      {"stimulus", r.stimulus},
                      {"max_cycles", r.max_cycles},
                      {"edif", r.edif_path},
                      {"graph", r.graph_path},
                      {"cells", r.cells},
                      {"dffs", r.dffs}};
  if (r.labels)
    j["labels"] = {{"done_time", r.labels->done_time}, {"sbf", to_json(r.labels->sbf)}, {"dbf", to_json(r.labels->dbf)}};
  if (!r.failure.empty()) j["failure"] = r.failure;
  return j;
}

inline manifest_row row_from_json(const nlohmann::json& j) {
  manifest_row r;
  r.design_id = j.at("design_id").get<std::string>();
  r.index = j.at("index").get<std::uint64_t>();
  r.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
  r.seed_circuit = j.at("seed_circuit").get<std::string>();
  r.transforms_a = j.at("transforms_a");
  r.transforms_b = j.at("transforms_b");
  r.identical_transforms = j.at("identical_transforms").get<bool>();
  r.stimulus = j.at("stimulus").get<std::uint64_t>();
  r.max_cycles = j.at("max_cycles").get<int>();
  r.edif_path = j.at("edif").get<std::string>();
  r.graph_path = j.at("graph").get<std::string>();
  r.cells = j.at("cells").get<std::size_t>();
  r.dffs = j.at("dffs").get<std::size_t>();
  if (j.contains("labels")) {
    const auto& l = j["labels"];
    r.labels = design_labels{l.at("done_time").get<int>(), rates_from_json(l.at("sbf")), rates_from_json(l.at("dbf"))};
  }
  if (j.contains("failure")) r.failure = j["failure"].get<std::string>();
  return r;
}

inline nlohmann::json to_json(const dataset_manifest& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : m.designs) rows.push_back(to_json(r));
  return {{"format", "dmrgnn-manifest"},
          {"version", 1},
          {"seed_circuit", m.seed_circuit},
          {"master_seed", m.master_seed},
          {"transform_ranges", m.transform_ranges},
          {"designs", rows}};
}

inline dataset_manifest manifest_from_json(const nlohmann::json& j) {
  dataset_manifest m;
  try {
    if (j.at("format").get<std::string>() != "dmrgnn-manifest") throw error(errc::io_error, "not a manifest");
    m.seed_circuit = j.at("seed_circuit").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.transform_ranges = j.at("transform_ranges");
    for (const auto& r : j.at("designs")) m.designs.push_back(row_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline dataset_manifest load_manifest(const std::filesystem::path& p) { return manifest_from_json(read_json_file(p)); }
inline void save_manifest(const std::filesystem::path& p, const dataset_manifest& m) { write_json_file(p, to_json(m)); }

// ---------------------------------------------------------------------------
// Generation

struct dataset_config {
  std::size_t count = 0;
  std::string seed_circuit = "sbox_towerfield";
  std::uint64_t master_seed = 1;
  std::filesystem::path workspace;  // empty: nothing written
  double identical_fraction = 0.1;  // chance that replica B reuses A's transforms
  int max_cycles = 64;
};

inline nlohmann::json transform_ranges() {
  return {{"tree", {"balanced", "chain"}},
          {"gates", {"native", "nand_net", "lut"}},
          {"operand_reorder", {false, true}},
          {"cse", {{"duplicate_probability", duplicate_probability}}},
          {"pipeline_depth", {0, max_pipeline_depth}},
          {"cut_levels", "uniform over [0, depth - 1], with repetition"}};
}

/// One generated design: the netlist plus its manifest row (no labels yet).
struct generated_design {
  netlist nl;
  manifest_row row;
};

/// Design `index` of a dataset: every random choice comes from
/// derive_seed(master, index), and both replicas are checked against the
/// seed circuit before the design is returned.
inline generated_design generate_design(const ir_design& seed_ir, const dataset_config& cfg, std::uint64_t index) {
  const std::uint64_t ds = derive_seed(cfg.master_seed, index);
  const auto ta = sample_transforms(seed_ir, derive_seed(ds, 1));
  rng pick(derive_seed(ds, 4));
  const bool identical = pick.uniform() < cfg.identical_fraction;
  const auto tb = identical ? ta : sample_transforms(seed_ir, derive_seed(ds, 2));
  const auto a = apply_transforms(seed_ir, ta);
  const auto b = apply_transforms(seed_ir, tb);
  require_equivalent(a, seed_ir, "replica A of design " + std::to_string(index));
  require_equivalent(b, seed_ir, "replica B of design " + std::to_string(index));

  rng stim(derive_seed(ds, 3));
  generated_design g{make_dmr(a, b, seed_ir.name + "_" + std::to_string(index)), {}};
  auto& r = g.row;
  const std::string edif = emit_edif(g.nl);
  fnv1a h;
  h.add(edif);
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "d%04llu_", static_cast<unsigned long long>(index));
  r.design_id = prefix + to_hex(h.value() & 0xffffffffULL, 8);
  r.index = index;
  r.seed = ds;
  r.seed_circuit = seed_ir.name;
  r.transforms_a = to_json(ta, seed_ir);
  r.transforms_b = to_json(tb, seed_ir);
  r.identical_transforms = identical;
  r.stimulus = stim.below(std::uint64_t{1} << seed_ir.input_width);
  r.max_cycles = cfg.max_cycles;
  r.edif_path = "designs/" + r.design_id + ".edif";
  r.graph_path = "graphs/" + r.design_id + ".json";
  r.cells = g.nl.cells.size();
  r.dffs = g.nl.dff_count();
  return g;
}

/// Generates `cfg.count` designs. With a workspace, writes
/// designs/<id>.edif, graphs/<id>.json and manifest.json under it.
inline dataset_manifest generate_dataset(const dataset_config& cfg) {
  if (cfg.count == 0) throw error(errc::invalid_stimulus, "dataset count must be at least 1");
  const auto seed_ir = build_seed(cfg.seed_circuit);
  dataset_manifest m;
  m.seed_circuit = cfg.seed_circuit;
  m.master_seed = cfg.master_seed;
  m.transform_ranges = transform_ranges();
  const auto vocab = build_vocab(std::vector<circuit_graph>{});
  for (std::size_t i = 0; i < cfg.count; ++i) {
    auto g = generate_design(seed_ir, cfg, i);
    if (!cfg.workspace.empty()) {
      write_text_file(cfg.workspace / g.row.edif_path, emit_edif(g.nl));
      write_json_file(cfg.workspace / g.row.graph_path, to_json(encode_graph(extract_graph(g.nl), vocab, g.row.design_id)));
    }
    m.designs.push_back(std::move(g.row));
  }
  if (!cfg.workspace.empty()) save_manifest(cfg.workspace / "manifest.json", m);
  return m;
}

}  // namespace dmrgnn
