#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "tdlab/common.hpp"

namespace tdlab::distill {

enum class Reduction { Mean, Sum };
enum class CwScope { GoldOnly, AllChoices };

struct DistillConfig {
  double w = 0.05;            // base distillation weight
  double w_prime = 0.05 * 2.0 / 3.0;  // token-selective weight; default 2w/3
  double temperature = 1.0;   // T in the confidence ratio
  int tokens_selected = 2;    // m
  bool enable_ts = false;
  bool enable_cw = false;
  bool enable_af = false;
  CwScope cw_scope = CwScope::AllChoices;
  Reduction l1_reduction = Reduction::Mean;
  bool enable_vision_term = true;   // L_dv on/off (modality ablations)
  bool enable_text_term = true;     // L_dt on/off

  void validate() const;
  static DistillConfig with_weight(double w);  // keeps w_prime = 2w/3
};

// Mean (default) or sum of |a_i - b_i|. Symmetric, nonnegative.
double l1_feature_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       Reduction reduction = Reduction::Mean);

// Cosine similarity between the image embedding and every token embedding row.
Eigen::VectorXd visual_relevance_scores(const Eigen::VectorXd& image_emb,
                                        const Eigen::MatrixXd& token_embs);

struct CombinedScores {
  Eigen::VectorXd combined;
  bool no_signal = false;  // both inputs had zero L1 norm; caller skips TS
};

// Sum of the two L1-normalized score vectors; a zero-norm side contributes
// a zero vector.
CombinedScores combine_scores(const Eigen::VectorXd& s_vr,
                              const Eigen::VectorXd& s_si);

struct TokenScores {
  Eigen::VectorXd s_vr;
  Eigen::VectorXd s_si;
  Eigen::VectorXd combined;
  bool no_signal = false;
};

// Indices of the min(m, len) largest scores, ties broken by lowest index,
// returned sorted ascending.
std::vector<int> select_tokens(const Eigen::VectorXd& combined, int m);

// Mean over selected rows of the per-row L1 feature loss.
double token_selective_loss(const std::vector<int>& indices,
                            const Eigen::MatrixXd& teacher_token_feats,
                            const Eigen::MatrixXd& student_token_feats,
                            Reduction reduction = Reduction::Mean);

// r = T * max softmax(teacher) / max softmax(student).
double confidence_ratio(const Eigen::VectorXd& teacher_logits,
                        const Eigen::VectorXd& student_logits, double temperature);

// 0 if r <= 1, else w.
double gate_weight(double r, double w);

// Final loss composition. Without TS: task + w_eff*(L_dv + L_dt); with TS:
// task + w_eff*(L_dv + L_dt + L_dt'). When CW is enabled the gated weight
// replaces w / w_prime; passing a gate with CW disabled is a config error.
double total_loss(double task, double l_dv, double l_dt, double l_dt_prime,
                  const DistillConfig& config, std::optional<double> gate);

// L_AF = (mlm + itm) + w * L_d.
double adaptive_finetune_loss(double mlm, double itm, double l_d, double w);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace tdlab::distill
