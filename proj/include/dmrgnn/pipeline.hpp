#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmrgnn/campaign.hpp"
#include "dmrgnn/dataset.hpp"
#include "dmrgnn/edif.hpp"
#include "dmrgnn/gcn.hpp"
#include "dmrgnn/graph.hpp"
#include "dmrgnn/sim.hpp"

namespace dmrgnn {

// Stage outputs live under one workspace, keyed by design id:
//   manifest.json, designs/<id>.edif, graphs/<id>.json, campaigns/<id>.csv,
//   models/<label>.json, models/<label>_report.json, timings.json,
//   predictions.csv, timing_report.json.
// Wall-clock measurements go to timings.json only, so the manifest, labels
// and checkpoints stay byte-identical across runs.

struct pipeline_config {
  std::filesystem::path workspace;
  std::filesystem::path manifest;  // empty: <workspace>/manifest.json
  std::filesystem::path models;    // empty: <workspace>/models
  int jobs = 1;
  train_config train;
  std::vector<rate_label> labels{rate_label::cer, rate_label::der, rate_label::her, rate_label::ser};
  bool trace = false;  // write per-epoch training traces next to the checkpoints

  [[nodiscard]] std::filesystem::path manifest_path() const {
    return manifest.empty() ? workspace / "manifest.json" : manifest;
  }
  [[nodiscard]] std::filesystem::path models_dir() const { return models.empty() ? workspace / "models" : models; }
  [[nodiscard]] std::filesystem::path timings_path() const { return workspace / "timings.json"; }

  void validate() const {
    if (workspace.empty()) throw error(errc::io_error, "no workspace given");
    if (jobs < 1) throw error(errc::invalid_stimulus, "parallelism must be at least 1");
    std::error_code ec;
    std::filesystem::create_directories(workspace, ec);
    if (ec || !std::filesystem::is_directory(workspace))
      throw error(errc::io_error, "cannot create workspace " + workspace.string());
  }
};

// ---------------------------------------------------------------------------
// Timings

struct design_timing {
  double sbf_seconds = 0;
  double dbf_seconds = 0;
};

struct train_timing {
  double seconds = 0;
  std::size_t designs = 0;  // labeled designs the model consumed
};

struct predict_timing {
  std::string design;
  std::string label;
  double seconds = 0;
};

struct timings {
  double generate_seconds = 0;
  std::map<std::string, design_timing> campaign;
  std::map<std::string, train_timing> train;
  std::vector<predict_timing> predict;
};

inline nlohmann::json to_json(const timings& t) {
  nlohmann::json c = nlohmann::json::object(), tr = nlohmann::json::object(), p = nlohmann::json::array();
  for (const auto& [id, d] : t.campaign) c[id] = {{"sbf_seconds", d.sbf_seconds}, {"dbf_seconds", d.dbf_seconds}};
  for (const auto& [l, d] : t.train) tr[l] = {{"seconds", d.seconds}, {"designs", d.designs}};
  for (const auto& r : t.predict) p.push_back({{"design", r.design}, {"label", r.label}, {"seconds", r.seconds}});
  return {{"generate_seconds", t.generate_seconds}, {"campaign", c}, {"train", tr}, {"predict", p}};
}

inline timings timings_from_json(const nlohmann::json& j) {
  timings t;
  try {
    t.generate_seconds = j.value("generate_seconds", 0.0);
    if (j.contains("campaign"))
      for (const auto& [id, d] : j["campaign"].items())
        t.campaign[id] = {d.at("sbf_seconds").get<double>(), d.at("dbf_seconds").get<double>()};
    if (j.contains("train"))
      for (const auto& [l, d] : j["train"].items())
        t.train[l] = {d.at("seconds").get<double>(), d.at("designs").get<std::size_t>()};
    if (j.contains("predict"))
      for (const auto& r : j["predict"])
        t.predict.push_back(
            {r.at("design").get<std::string>(), r.at("label").get<std::string>(), r.at("seconds").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, std::string("malformed timings: ") + e.what());
  }
  return t;
}

inline timings load_timings(const std::filesystem::path& p) {
  return std::filesystem::exists(p) ? timings_from_json(read_json_file(p)) : timings{};
}

namespace pipeline_detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) {
  return std::chrono::duration<double>(clock::now() - t0).count();
}

inline double label_value(const error_rates& r, rate_label l) {
  switch (l) {
    case rate_label::cer: return r.cer();
    case rate_label::der: return r.der();
    case rate_label::her: return r.her();
    case rate_label::ser: return r.ser();
  }
  return 0.0;
}

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Stages

inline dataset_manifest cmd_generate(const pipeline_config& pc, dataset_config dc) {
  pc.validate();
  dc.workspace = pc.workspace;
  const auto t0 = pipeline_detail::clock::now();
  auto m = generate_dataset(dc);
  if (pc.manifest_path() != pc.workspace / "manifest.json") save_manifest(pc.manifest_path(), m);
  auto t = load_timings(pc.timings_path());
  t.generate_seconds = pipeline_detail::seconds_since(t0);
  write_json_file(pc.timings_path(), to_json(t));
  return m;
}

/// Everything one campaign produces for a design.
struct design_campaign {
  sim_program prog;
  module_map map;
  sbf_campaign sbf;
  design_labels labels;
  design_timing timing;
};

/// Exhaustive SBF campaign plus DBF derivation for one netlist; the SBF time
/// covers compilation and the gold run.
inline design_campaign run_design_campaign(const netlist& nl, std::uint64_t stimulus_word, int max_cycles,
                                           int jobs = 1) {
  using namespace pipeline_detail;
  design_campaign out;
  auto t0 = clock::now();
  const auto rules = default_prefix_rules();
  out.map = partition_modules(nl, rules);
  out.prog = compile(nl);
  const auto stim = stimulus::from_word(out.prog, stimulus_word, max_cycles);
  out.sbf = run_sbf_campaign(out.prog, stim, out.map, jobs);
  out.labels.done_time = *out.sbf.gold.done_time;
  out.labels.sbf = sbf_rates(out.sbf.records);
  out.timing.sbf_seconds = seconds_since(t0);
  t0 = clock::now();
  out.labels.dbf = derive_dbf(out.sbf, out.map);
  out.timing.dbf_seconds = seconds_since(t0);
  return out;
}

struct campaign_summary {
  std::size_t labeled = 0;
  std::size_t skipped = 0;  // already labeled, left as is
  std::vector<std::string> failures;
};

/// Labels every design of the manifest that has no labels yet. Designs run
/// in parallel across `jobs` threads; each writes only its own row, so the
/// result does not depend on the thread count. A failing design keeps its
/// error in the row and is excluded from training.
inline campaign_summary cmd_campaign(const pipeline_config& pc, bool relabel = false) {
  pc.validate();
  auto m = load_manifest(pc.manifest_path());
  auto t = load_timings(pc.timings_path());
  std::vector<std::size_t> todo;
  campaign_summary sum;
  for (std::size_t i = 0; i < m.designs.size(); ++i) {
    const auto& r = m.designs[i];
    const bool done = (r.labels || !r.failure.empty()) &&
                      std::filesystem::exists(pc.workspace / "campaigns" / (r.design_id + ".csv"));
    if (done && !relabel)
      ++sum.skipped;
    else
      todo.push_back(i);
  }
  std::vector<design_timing> times(todo.size());
  std::vector<std::string> files(todo.size());
  campaign_detail::parallel_for(todo.size(), pc.jobs, [&](std::size_t k) {
    auto& row = m.designs[todo[k]];
    row.labels.reset();
    row.failure.clear();
    try {
      const auto nl = parse_edif(read_text_file(pc.workspace / row.edif_path));
      auto c = run_design_campaign(nl, row.stimulus, row.max_cycles);
      std::ostringstream os;
      write_campaign_file(os, c.sbf, c.prog, c.labels.sbf, c.labels.dbf);
      files[k] = os.str();
      row.labels = c.labels;
      times[k] = c.timing;
    } catch (const error& e) {
      row.failure = e.what();
      files[k] = "# failure " + row.failure + "\n";
    }
  });
  for (std::size_t k = 0; k < todo.size(); ++k) {
    const auto& row = m.designs[todo[k]];
    write_text_file(pc.workspace / "campaigns" / (row.design_id + ".csv"), files[k]);
    if (row.failure.empty()) {
      ++sum.labeled;
      t.campaign[row.design_id] = times[k];
    } else {
      sum.failures.push_back(row.design_id + ": " + row.failure);
      t.campaign.erase(row.design_id);
    }
  }
  save_manifest(pc.manifest_path(), m);
  write_json_file(pc.timings_path(), to_json(t));
  return sum;
}

/// Per-label training result as written to models/<label>_report.json.
struct train_summary {
  rate_label label = rate_label::cer;
  fold_report report;
  std::filesystem::path checkpoint;
  double seconds = 0;
};

/// Reports name designs by id rather than by index into the labeled list.
inline nlohmann::json report_json(const fold_report& rep, const std::vector<std::string>& ids) {
  auto j = to_json(rep);
  auto names = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(ids[i]);
    return out;
  };
  j["test_designs"] = names(rep.test_ids);
  nlohmann::json val = nlohmann::json::array();
  for (const auto& v : rep.val_ids) val.push_back(names(v));
  j["val_designs"] = val;
  return j;
}

inline void write_trace(const std::filesystem::path& p, const std::vector<epoch_trace>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "fold,epoch,train_mse,val_mse,lr,improved\n";
  for (const auto& e : trace)
    os << e.fold << ',' << e.epoch << ',' << e.train_mse << ',' << e.val_mse << ',' << e.lr << ','
       << (e.improved ? 1 : 0) << '\n';
  write_text_file(p, os.str());
}

/// One model per label, trained on the DBF rates of the labeled designs in
/// manifest order.
inline std::vector<train_summary> cmd_train(const pipeline_config& pc) {
  using namespace pipeline_detail;
  pc.validate();
  const auto m = load_manifest(pc.manifest_path());
  const auto rows = m.labeled();
  if (rows.size() < 20)
    throw error(errc::dataset_too_small, std::to_string(rows.size()) + " labeled designs, need at least 20");
  std::vector<encoded_graph> graphs;
  std::vector<std::string> ids;
  graphs.reserve(rows.size());
  for (const auto* r : rows) {
    graphs.push_back(graph_from_json(read_json_file(pc.workspace / r->graph_path)));
    ids.push_back(r->design_id);
  }
  const auto vocab = build_vocab(std::vector<circuit_graph>{});
  auto t = load_timings(pc.timings_path());
  std::vector<train_summary> out;
  for (auto label : pc.labels) {
    std::vector<labeled_graph> data;
    for (std::size_t i = 0; i < rows.size(); ++i) data.push_back({&graphs[i], label_value(rows[i]->labels->dbf, label)});
    std::vector<epoch_trace> trace;
    const auto t0 = clock::now();
    auto [model, rep] = train_kfold(data, vocab, label, label_transform::default_for(label), pc.train,
                                    pc.trace ? &trace : nullptr);
    train_summary s{label, std::move(rep), pc.models_dir() / (std::string(label_name(label)) + ".json"),
                    seconds_since(t0)};
    const std::string name(label_name(label));
    write_json_file(s.checkpoint, to_json(model));
    write_json_file(pc.models_dir() / (name + "_report.json"), report_json(s.report, ids));
    if (pc.trace) write_trace(pc.models_dir() / (name + "_trace.csv"), trace);
    t.train[name] = {s.seconds, rows.size()};
    out.push_back(std::move(s));
  }
  write_json_file(pc.timings_path(), to_json(t));
  return out;
}

struct prediction {
  std::string design;  // EDIF path as given
  rate_label label = rate_label::cer;
  double rate = 0;
  double seconds = 0;  // parse, graph extraction and inference
};

inline gcn_model load_model(const std::filesystem::path& p) { return model_from_json(read_json_file(p)); }

/// Predicts for one EDIF file or for every *.edif in a directory (sorted by
/// name). Rows are appended to <workspace>/predictions.csv and each call's
/// time is recorded in the timings file.
inline std::vector<prediction> cmd_predict(const pipeline_config& pc, const std::filesystem::path& checkpoint,
                                           const std::filesystem::path& target) {
  using namespace pipeline_detail;
  pc.validate();
  const auto model = load_model(checkpoint);
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(target)) {
    for (const auto& e : std::filesystem::directory_iterator(target))
      if (e.is_regular_file() && e.path().extension() == ".edif") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw error(errc::io_error, "no .edif files in " + target.string());
  } else {
    files.push_back(target);
  }
  std::vector<prediction> out;
  for (const auto& f : files) {
    const auto text = read_text_file(f);
    const auto t0 = clock::now();
    const double rate = predict(model, extract_graph(parse_edif(text)));
    out.push_back({f.string(), model.label, rate, seconds_since(t0)});
  }
  const auto pred_path = pc.workspace / "predictions.csv";
  const bool fresh = !std::filesystem::exists(pred_path);
  std::ofstream os(pred_path, std::ios::app);
  if (!os) throw error(errc::io_error, "cannot append to " + pred_path.string());
  os.precision(17);
  if (fresh) os << "design,label,rate,seconds\n";
  auto t = load_timings(pc.timings_path());
  for (const auto& p : out) {
    os << p.design << ',' << label_name(p.label) << ',' << p.rate << ',' << p.seconds << '\n';
    t.predict.push_back({p.design, std::string(label_name(p.label)), p.seconds});
  }
  write_json_file(pc.timings_path(), to_json(t));
  return out;
}

// ---------------------------------------------------------------------------
// Timing report

struct timing_row {
  double designs = 0;
  double fi_seconds = 0;
  double ml_seconds = 0;
  double speedup = 0;
};

/// Cost model from local measurements. FI labels every design by campaign.
/// The ML flow labels the training designs by campaign, trains one model per
/// label and predicts every label for the remaining designs.
struct timing_report {
  double fi_per_design = 0;       // mean SBF campaign plus DBF derivation
  double sbf_per_design = 0;
  double dbf_per_design = 0;
  double train_seconds = 0;       // all trained labels
  std::size_t train_designs = 0;  // designs labeled by campaign for training
  std::size_t labels = 0;
  double predict_per_design = 0;  // mean per-call time times the label count
  std::optional<double> break_even;  // designs at which both flows cost the same
  std::vector<timing_row> rows;

  [[nodiscard]] double fi_total(double n) const { return n * fi_per_design; }
  [[nodiscard]] double ml_total(double n) const {
    const double nt = static_cast<double>(train_designs);
    return nt * fi_per_design + train_seconds + std::max(0.0, n - nt) * predict_per_design;
  }
};

inline timing_report make_timing_report(const timings& t) {
  if (t.campaign.empty()) throw error(errc::missing_timings, "no campaign timings recorded; run campaign first");
  if (t.train.empty()) throw error(errc::missing_timings, "no training timings recorded; run train first");
  if (t.predict.empty()) throw error(errc::missing_timings, "no prediction timings recorded; run predict first");
  timing_report r;
  for (const auto& [id, d] : t.campaign) {
    r.sbf_per_design += d.sbf_seconds;
    r.dbf_per_design += d.dbf_seconds;
  }
  r.sbf_per_design /= static_cast<double>(t.campaign.size());
  r.dbf_per_design /= static_cast<double>(t.campaign.size());
  r.fi_per_design = r.sbf_per_design + r.dbf_per_design;
  for (const auto& [l, d] : t.train) {
    r.train_seconds += d.seconds;
    r.train_designs = std::max(r.train_designs, d.designs);
  }
  r.labels = t.train.size();
  double pred = 0.0;
  for (const auto& p : t.predict) pred += p.seconds;
  r.predict_per_design = pred / static_cast<double>(t.predict.size()) * static_cast<double>(r.labels);
  if (r.fi_per_design > r.predict_per_design)
    r.break_even = static_cast<double>(r.train_designs) + r.train_seconds / (r.fi_per_design - r.predict_per_design);
  for (double n : {1e2, 1e3, 1e4, 1e5, 1e6}) {
    const double fi = r.fi_total(n), ml = r.ml_total(n);
    r.rows.push_back({n, fi, ml, fi / ml});
  }
  return r;
}

inline nlohmann::json to_json(const timing_report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows)
    rows.push_back({{"designs", x.designs}, {"fi_seconds", x.fi_seconds}, {"ml_seconds", x.ml_seconds},
                    {"speedup", x.speedup}});
  return {{"fi_seconds_per_design", r.fi_per_design},
          {"sbf_seconds_per_design", r.sbf_per_design},
          {"dbf_seconds_per_design", r.dbf_per_design},
          {"train_seconds", r.train_seconds},
          {"train_designs", r.train_designs},
          {"labels", r.labels},
          {"predict_seconds_per_design", r.predict_per_design},
          {"break_even_designs", r.break_even ? nlohmann::json(*r.break_even) : nlohmann::json(nullptr)},
          {"rows", rows}};
}

inline std::string format_report(const timing_report& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "per design: FI %.6f s (SBF %.6f, DBF %.6f), prediction %.6f s (%zu labels)\n",
                r.fi_per_design, r.sbf_per_design, r.dbf_per_design, r.predict_per_design, r.labels);
  os << line;
  std::snprintf(line, sizeof line, "training: %.2f s on %zu campaign-labeled designs\n", r.train_seconds,
                r.train_designs);
  os << line;
  std::snprintf(line, sizeof line, "%10s %16s %16s %10s\n", "designs", "FI seconds", "ML seconds", "speedup");
  os << line;
  for (const auto& x : r.rows) {
    std::snprintf(line, sizeof line, "%10.0f %16.3f %16.3f %10.3f\n", x.designs, x.fi_seconds, x.ml_seconds,
                  x.speedup);
    os << line;
  }
  if (r.break_even) {
    std::snprintf(line, sizeof line, "break-even: %.0f designs\n", std::ceil(*r.break_even));
    os << line;
  } else {
    os << "break-even: none, prediction costs at least as much per design as a campaign\n";
  }
  return os.str();
}

inline timing_report cmd_report(const pipeline_config& pc) {
  pc.validate();
  if (!std::filesystem::exists(pc.timings_path()))
    throw error(errc::missing_timings, "no timings file at " + pc.timings_path().string());
  auto r = make_timing_report(load_timings(pc.timings_path()));
  write_json_file(pc.workspace / "timing_report.json", to_json(r));
  return r;
}

}  // namespace dmrgnn
