#pragma once

#include "tdlab/distill/pipeline.hpp"

namespace tdlab::analysis {

// Per-layer/head attention mass on vision vs text positions, measured from
// the [CLS] query row and renormalized over the two modality sets, so
// mi_vision + mi_text = 1 elementwise.
struct MITable {
  Eigen::MatrixXd mi_vision;  // layers x heads
  Eigen::MatrixXd mi_text;
  Eigen::VectorXd per_layer_mean_vision;
  Eigen::VectorXd per_layer_mean_text;

  double mean_abs_difference() const;
  std::string to_csv() const;
  static MITable from_csv(const std::string& text);
};

// Probes each instance with its gold question-answer pair.
MITable modality_importance(const student::StudentModel& model,
                            std::span<const synth::Instance> probe_split);

// MI from an explicit attention record and sequence layout (unit-testable).
MITable modality_importance_from_attention(const nn::AttentionRecord& attn,
                                           int text_len);

// Per-text-token comparison record: [CLS] attention before/after
// distillation plus the token-selection scores, as JSON.
nlohmann::json attention_trace(const student::StudentModel& model_pre,
                               const student::StudentModel& model_post,
                               const teacher::TeacherModel& teacher,
                               const synth::Instance& inst,
                               const distill::DistillConfig& config,
                               const distill::CorpusStats& stats);

struct EnsemblePrediction {
  int predicted_index = 0;
  Eigen::VectorXd averaged_probs;
};

// Softmax each model's logits, average the probabilities, argmax with
// lowest-index tie-break.
EnsemblePrediction ensemble_predict(
    std::span<const student::StudentModel* const> models,
    const synth::Instance& inst);

void write_mi_csv(const std::filesystem::path& path, const MITable& table);
MITable read_mi_csv(const std::filesystem::path& path);
// Per-layer mean MI line chart / per-head heatmaps, self-contained SVG.
void write_mi_line_svg(const std::filesystem::path& path, const MITable& table);
void write_mi_heat_svg(const std::filesystem::path& path, const MITable& table);

}  // namespace tdlab::analysis
