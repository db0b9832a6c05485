#pragma once

#include "tdlab/evalproto/protocol.hpp"
#include "tdlab/regimes/regimes.hpp"

namespace tdlab::cli {

// Parses the TOML-style config text ([section], [[array-of-tables]],
// key = value with strings/numbers/booleans/flat arrays, # comments) into a
// JSON tree. Errors carry the offending line number.
nlohmann::json parse_toml_subset(const std::string& text);
nlohmann::json parse_toml_file(const std::filesystem::path& path);

struct ExperimentConfig {
  int schema_version = 1;
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "runs/out";
  std::uint64_t dataset_seed = 1;
  synth::GeneratorConfig dataset;
  // teacher knobs (vocab/regions are filled from the dataset)
  int teacher_d_embed = 32;
  int teacher_text_layers = 2;
  int teacher_vision_layers = 2;
  int teacher_heads = 4;
  int teacher_pretrain_steps = 600;
  int teacher_batch_size = 32;
  double teacher_lr = 1e-3;
  double teacher_temperature = 0.07;
  std::uint64_t teacher_seed = 7;
  std::string zero_shot_mode = "iqa";
  std::string student_preset = "small";
  distill::DistillConfig distill;
  int keyword_n_max = 2;
  evalproto::SplitPlan plan;
  std::vector<std::string> eval_modes = {"std"};
  // training defaults shared by all regimes
  int epochs = 15;
  int af_epochs = 2;
  double lr = 3e-4;
  std::string optimizer = "adam";
  int warmup_steps = 20;
  int batch_size = 8;
  int patience = 5;
  int unlabeled_per_epoch = 0;
  std::vector<std::string> regime_names;
  bool run_analysis = true;
  int trace_samples = 5;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_toml_file(const std::filesystem::path& path);
  // Cross-reference checks; collects human-readable problems.
  std::vector<std::string> validate() const;
  regimes::RegimeSpec regime_spec(const std::string& name, std::uint64_t seed) const;
  teacher::TeacherConfig teacher_config(const synth::Dataset& ds) const;
};

}  // namespace tdlab::cli
