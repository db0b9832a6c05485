#pragma once

#include <functional>

#include "tdlab/distill/pipeline.hpp"

namespace tdlab::regimes {

enum class RegimeName {
  Baseline,
  Naive,
  ClipTd,
  SemiSupervised,
  SecondStagePretrain,
};

RegimeName regime_from_string(const std::string& s);
std::string regime_to_string(RegimeName r);

struct RegimeSpec {
  RegimeName name = RegimeName::Baseline;
  distill::DistillConfig distill;
  int epochs = 15;
  int af_epochs = 2;
  double lr = 3e-4;
  nn::OptimKind optimizer = nn::OptimKind::Adam;
  int warmup_steps = 20;
  int batch_size = 8;
  int patience = 5;          // early stopping on val accuracy; <=0 disables
  double mlm_mask_rate = 0.15;
  std::uint64_t seed = 1;
  int unlabeled_per_epoch = 0;  // semi: unlabeled instances per epoch, 0 = all
  bool zero_regions = false;    // text-only variant (implicit-mitigation probe)

  // Applies the per-regime mechanism contract (baseline forces w = 0,
  // naive/second-stage disable TS+CW, second-stage zeroes the AF distill
  // weight) and validates ranges.
  void normalize();
  static RegimeSpec make(RegimeName name, const distill::DistillConfig& base);
};

struct TrainLogRow {
  long step = 0;
  double l_t = 0.0;
  double l_dv = 0.0;
  double l_dt = 0.0;
  double l_dt_prime = 0.0;
  double gate_value = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// Every row satisfies total = L_t + gate_value*(L_dv + L_dt + L_dt_prime),
// for adaptive-finetune rows L_t carries the pretraining (MLM+ITM) term.
struct TrainLog {
  std::vector<TrainLogRow> rows;
  double best_val_accuracy = -1.0;
  int best_epoch = -1;
  int epochs_run = 0;

  std::string to_csv() const;
  std::uint64_t content_hash() const { return fnv1a64(to_csv()); }
  void write_csv(const std::filesystem::path& path) const;
  static std::vector<TrainLogRow> parse_csv(const std::string& text);
};

using TeacherCacheMap = std::map<long, distill::TeacherInstanceCache>;
TeacherCacheMap build_teacher_cache_map(const teacher::TeacherModel& teacher,
                                        std::span<const synth::Instance> instances,
                                        const distill::CorpusStats* stats,
                                        const distill::DistillConfig& config);

using TraceSink = std::function<void(const nlohmann::json&)>;

struct TrainResult {
  student::StudentModel model;
  TrainLog log;
};

// Runs the regime's stages on a copy of `init`. The teacher is frozen;
// `unlabeled` must be empty unless the regime is semi-supervised.
TrainResult train(const RegimeSpec& spec, const teacher::TeacherModel& teacher,
                  const student::StudentModel& init, const synth::Dataset& ds,
                  std::span<const synth::Instance> labeled,
                  std::span<const synth::Instance> unlabeled,
                  std::span<const synth::Instance> val,
                  const distill::CorpusStats* stats,
                  const TeacherCacheMap* shared_cache = nullptr,
                  TraceSink trace = nullptr);

// Checks pool disjointness, redacts unlabeled gold labels (they are never
// read), then runs the shared loop.
TrainResult train_semi_supervised(const RegimeSpec& spec,
                                  const teacher::TeacherModel& teacher,
                                  const student::StudentModel& init,
                                  const synth::Dataset& ds,
                                  std::span<const synth::Instance> labeled,
                                  std::span<const synth::Instance> unlabeled,
                                  std::span<const synth::Instance> val,
                                  const distill::CorpusStats* stats,
                                  const TeacherCacheMap* shared_cache = nullptr,
                                  TraceSink trace = nullptr);

// Fraction of instances whose argmax student logit hits gold.
double accuracy(const student::StudentModel& model,
                std::span<const synth::Instance> split, bool zero_regions = false);

}  // namespace tdlab::regimes
