#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dmrgnn/pipeline.hpp"

namespace {

using namespace dmrgnn;

std::vector<rate_label> parse_labels(const std::vector<std::string>& names) {
  if (names.empty()) return {rate_label::cer, rate_label::der, rate_label::her, rate_label::ser};
  std::vector<rate_label> out;
  for (const auto& n : names) out.push_back(*label_from_name(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DMR fault-attack vulnerability: dataset generation, campaigns and GCN prediction"};
  app.require_subcommand(1);

  pipeline_config pc;
  std::string workspace = "workspace", manifest, models;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::vector<std::string> labels;
  int hidden = 128;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
    sub->add_option("--manifest", manifest, "Manifest path (default <workspace>/manifest.json)");
  };
  const auto label_check = CLI::IsMember({"cer", "der", "her", "ser"});

  auto* gen = app.add_subcommand("generate", "Generate a DMR design dataset");
  common(gen);
  dataset_config dc;
  gen->add_option("--seed", seed, "Master seed")->capture_default_str();
  gen->add_option("--count", dc.count, "Number of designs")->required();
  gen->add_option("--seed-circuit", dc.seed_circuit, "Seed circuit")
      ->check(CLI::IsMember(seed_names()))
      ->capture_default_str();

  auto* camp = app.add_subcommand("campaign", "Run SBF campaigns and derive DBF labels");
  common(camp);
  bool relabel = false;
  camp->add_option("--jobs", jobs, "Designs simulated in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  camp->add_flag("--relabel", relabel, "Rerun designs that already have labels");

  auto* train = app.add_subcommand("train", "Train one GCN per label with k-fold selection");
  common(train);
  train->add_option("--models", models, "Checkpoint directory (default <workspace>/models)");
  train->add_option("--seed", seed, "Training seed")->capture_default_str();
  train->add_option("--label", labels, "Labels to train (repeatable; default all)")->check(label_check);
  train->add_option("--hidden", hidden, "Hidden width")->check(CLI::IsMember({64, 128}))->capture_default_str();
  train->add_option("--max-epochs", pc.train.max_epochs, "Epoch cap")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_flag("--trace", pc.trace, "Write per-epoch traces");

  auto* pred = app.add_subcommand("predict", "Predict a rate for an EDIF file or every EDIF in a directory");
  common(pred);
  std::string checkpoint, target;
  std::string label = "der";
  pred->add_option("--models", models, "Checkpoint directory (default <workspace>/models)");
  pred->add_option("--label", label, "Label whose checkpoint to use")->check(label_check)->capture_default_str();
  pred->add_option("--checkpoint", checkpoint, "Checkpoint file (overrides --label)");
  pred->add_option("edif", target, "EDIF file or directory")->required();

  auto* rep = app.add_subcommand("report", "Extrapolate FI and prediction costs from recorded timings");
  common(rep);

  CLI11_PARSE(app, argc, argv);

  try {
    pc.workspace = workspace;
    pc.manifest = manifest;
    pc.models = models;
    pc.jobs = jobs;
    pc.train.seed = seed;
    pc.train.hidden = hidden;
    pc.labels = parse_labels(labels);

    if (gen->parsed()) {
      dc.master_seed = seed;
      auto m = cmd_generate(pc, dc);
      std::printf("generated %zu designs in %s\n", m.designs.size(), pc.workspace.string().c_str());
    } else if (camp->parsed()) {
      auto s = cmd_campaign(pc, relabel);
      std::printf("labeled %zu designs, skipped %zu, failed %zu\n", s.labeled, s.skipped, s.failures.size());
      for (const auto& f : s.failures) std::printf("failed %s\n", f.c_str());
    } else if (train->parsed()) {
      for (const auto& s : cmd_train(pc)) {
        const auto& f = s.report.folds[s.report.selected];
        std::printf("%s: fold %zu selected, test R2 %.4f, %.1f s, %s\n", std::string(label_name(s.label)).c_str(),
                    s.report.selected, f.test_r2, s.seconds, s.checkpoint.string().c_str());
      }
    } else if (pred->parsed()) {
      const std::filesystem::path ck =
          checkpoint.empty() ? pc.models_dir() / (label + ".json") : std::filesystem::path(checkpoint);
      for (const auto& p : cmd_predict(pc, ck, target))
        std::printf("%s %s %.9g %.6f\n", p.design.c_str(), std::string(label_name(p.label)).c_str(), p.rate,
                    p.seconds);
    } else if (rep->parsed()) {
      std::fputs(format_report(cmd_report(pc)).c_str(), stdout);
    }
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: IoError: %s\n", e.what());
    return 1;
  }
  return 0;
}
