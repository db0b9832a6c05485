#pragma once

#include "tdlab/distill/corpus.hpp"
#include "tdlab/student/student.hpp"
#include "tdlab/teacher/teacher.hpp"

namespace tdlab::evalproto {

enum class PlanRegime { ZeroShot, LowShotA, LowShotB, Semi, Full };
PlanRegime plan_regime_from_string(const std::string& s);
std::string plan_regime_to_string(PlanRegime r);

struct SplitPlan {
  PlanRegime regime = PlanRegime::Full;
  std::optional<int> per_category_count;  // required for low-shot and semi
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<synth::Instance> train_subset;
  std::vector<synth::Instance> unlabeled_pool;  // semi only: train \ train_subset
  std::vector<synth::Instance> val;
  std::vector<synth::Instance> test;
};

// Exact per-category sampling; deterministic in (plan, dataset).
Splits make_splits(const synth::Dataset& ds, const SplitPlan& plan);

// Inverse of the generator's shortcut injection: removes the copied n-gram
// from each gold answer, restoring overlap parity. Labels untouched.
std::vector<synth::Instance> shortcut_mitigated_transform(
    std::span<const synth::Instance> test_split);

struct EmRecord {
  long instance_id = 0;
  int answer = 0;
  int position = 0;
  int from_token = 0;
  int to_token = 0;
};

struct EmResult {
  std::vector<synth::Instance> instances;
  std::vector<EmRecord> replacements;
  std::vector<std::vector<int>> replaced_ngrams;       // unique triggering n-grams
  std::vector<std::pair<long, int>> skipped_no_alias;  // (instance_id, token)
  nlohmann::json log_json() const;
};

// Replaces answer tokens that overlap question/scene-object tokens and whose
// corpus co-occurrence clears the top-decile threshold with their synonym
// alias. gold_index unchanged; tokens without an alias are left and logged.
EmResult explicit_mitigation(std::span<const synth::Instance> test_split,
                             const distill::CorpusStats& stats,
                             const synth::Vocab& vocab, int n_max);

struct ImPartition {
  std::vector<synth::Instance> language_biased;  // text-only correct, confident
  std::vector<synth::Instance> image_biased;     // text-only incorrect
  std::vector<synth::Instance> neither;          // correct but low confidence
};

// gamma in (0, 1); the text-only model sees zeroed region features.
ImPartition implicit_mitigation_partition(std::span<const synth::Instance> test_split,
                                          const student::StudentModel& text_only_model,
                                          double gamma = 0.9);

struct KmeansResult {
  std::vector<double> centroids;   // ascending
  std::vector<int> assignments;    // cluster index per input point
  double accuracy = 0.0;
};

// Exact 1-D k-means (dynamic programming over sorted values). Clusters map
// to classes by ascending centroid; labels are only used for the final
// accuracy, never for clustering.
KmeansResult kmeans_zero_shot(const std::vector<double>& similarities, int k,
                              const std::vector<int>& labels);

struct MetricsReport {
  std::string model;
  std::string mode;
  int n = 0;
  double accuracy = 0.0;
  std::map<std::string, double> extra;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport evaluate(const student::StudentModel& model,
                       std::span<const synth::Instance> split,
                       const std::string& mode_label, bool zero_regions = false);
MetricsReport evaluate(const teacher::TeacherModel& model,
                       std::span<const synth::Instance> split,
                       teacher::ZeroShotMode mode);

struct MitigationReport {
  double mean_overlap_gold = 0.0;
  double mean_overlap_distractor = 0.0;
  double pct_gold_more_overlap = 0.0;  // percent of instances, in [0, 100]
  std::vector<std::vector<int>> replaced_ngrams;
  nlohmann::json to_json() const;
};

MitigationReport bias_statistics(std::span<const synth::Instance> split);

}  // namespace tdlab::evalproto
