#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tdlab/common.hpp"
#include "tdlab/synth/vocab.hpp"

namespace tdlab::synth {

using TextSequence = std::vector<int>;

struct SceneObject {
  int shape_id = 0;
  int color_id = 0;
  int row = 0;
  int col = 0;
};

struct Scene {
  int grid_size = 4;
  std::vector<SceneObject> objects;
  long scene_id = 0;

  void validate(int num_shapes, int num_colors) const;
};

// One multiple-choice item: a scene, a question, four candidate answers.
struct Instance {
  Scene scene;
  TextSequence question;
  std::array<TextSequence, 4> answers;
  int gold_index = 0;
  int category = 0;
  double shortcut_strength = 0.0;
  long instance_id = 0;
};

struct GeneratorConfig {
  int train_count = 0;
  int val_count = 0;
  int test_count = 0;
  int num_categories = 7;
  int num_colors = 6;
  int num_shapes = 6;
  int grid_size = 4;
  int max_objects = 4;
  double shortcut_strength = 0.0;
  // Optional per-category sampling weights (e.g. the skewed real-world
  // proportions); empty means uniform. Counts are allocated exactly by
  // largest remainder.
  std::vector<double> category_weights;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

struct Dataset {
  GeneratorConfig config;
  Vocab vocab;
  std::vector<Instance> train, val, test;
};

// Fully deterministic in (config, seed). Splits are disjoint by scene_id and
// per-category counts match the config allocation exactly.
Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed);

// With probability `strength` copies one content n-gram (n<=2) from the
// question into the gold answer at a random position. Deterministic in the
// instance identity, so the decision can be replayed and inverted.
Instance inject_shortcut(const Instance& instance, double strength);

// Exact inverse of inject_shortcut (replays the same draws).
Instance remove_injected_shortcut(const Instance& instance);

// Fixed (learning-free) region features: one row per object
// [one-hot shape | one-hot color | (row+0.5)/g | (col+0.5)/g], plus a final
// whole-scene row equal to the mean of the object rows.
Eigen::MatrixXd render_scene_features(const Scene& scene, int num_shapes,
                                      int num_colors);
inline int region_feature_dim(int num_shapes, int num_colors) {
  return num_shapes + num_colors + 2;
}

// Full scene description used for contrastive teacher pretraining. QA text
// never appears in captions.
TextSequence scene_caption(const Scene& scene, const Vocab& vocab);

// Three-way entailment analog: hypothesis statements that are true about the
// scene (2), false about a present shape's attribute (0), or about a shape
// absent from the scene (1).
struct EntailmentInstance {
  Scene scene;
  TextSequence hypothesis;
  int label = 0;  // 0 contradiction, 1 neutral, 2 entailment
};
std::vector<EntailmentInstance> generate_entailment(std::span<const Instance> pool,
                                                    const Vocab& vocab, int count,
                                                    std::uint64_t seed);

// Number of answer token positions whose token also occurs in the question.
int token_overlap(const TextSequence& question, const TextSequence& answer);

// Exact per-category target counts for `total` instances.
std::vector<int> category_targets(int total, int num_categories,
                                  const std::vector<double>& weights);

// ---- serialization ----
nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);
void write_jsonl(const std::filesystem::path& path, std::span<const Instance> list);
std::vector<Instance> read_jsonl(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace tdlab::synth
