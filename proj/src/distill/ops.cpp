#include "tdlab/distill/ops.hpp"

#include <algorithm>
#include <cmath>

namespace tdlab::distill {

void DistillConfig::validate() const {
  if (w < 0.0) throw ConfigError("distill: w must be >= 0");
  if (w_prime < 0.0) throw ConfigError("distill: w_prime must be >= 0");
  if (temperature <= 0.0) throw ConfigError("distill: temperature must be > 0");
  if (tokens_selected < 1) throw ConfigError("distill: m must be >= 1");
}

DistillConfig DistillConfig::with_weight(double w) {
  DistillConfig c;
  c.w = w;
  c.w_prime = 2.0 * w / 3.0;
  return c;
}

double l1_feature_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       Reduction reduction) {
  if (a.size() != b.size())
    throw ValidationError("l1_feature_loss: length mismatch");
  double s = (a - b).cwiseAbs().sum();
  return reduction == Reduction::Mean ? s / static_cast<double>(a.size()) : s;
}

Eigen::VectorXd visual_relevance_scores(const Eigen::VectorXd& image_emb,
                                        const Eigen::MatrixXd& token_embs) {
  double inorm = image_emb.norm();
  if (inorm == 0.0)
    throw ValidationError("visual_relevance_scores: zero-norm image embedding");
  Eigen::VectorXd out(token_embs.rows());
  for (Eigen::Index r = 0; r < token_embs.rows(); ++r) {
    double tnorm = token_embs.row(r).norm();
    if (tnorm == 0.0)
      throw ValidationError("visual_relevance_scores: zero-norm token embedding");
    out(r) = token_embs.row(r).dot(image_emb) / (tnorm * inorm);
  }
  return out;
}

CombinedScores combine_scores(const Eigen::VectorXd& s_vr,
                              const Eigen::VectorXd& s_si) {
  if (s_vr.size() != s_si.size())
    throw ValidationError("combine_scores: length mismatch");
  double n_vr = s_vr.cwiseAbs().sum();
  double n_si = s_si.cwiseAbs().sum();
  CombinedScores out;
  out.combined = Eigen::VectorXd::Zero(s_vr.size());
  if (n_vr > 0.0) out.combined += s_vr / n_vr;
  if (n_si > 0.0) out.combined += s_si / n_si;
  out.no_signal = (n_vr == 0.0 && n_si == 0.0);
  return out;
}

std::vector<int> select_tokens(const Eigen::VectorXd& combined, int m) {
  if (m < 1) throw ValidationError("select_tokens: m must be >= 1");
  int n = static_cast<int>(combined.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  // stable sort by descending score keeps lowest-index-first among ties
  std::stable_sort(idx.begin(), idx.end(), [&combined](int a, int b) {
    return combined(a) > combined(b);
  });
  int k = std::min(m, n);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double token_selective_loss(const std::vector<int>& indices,
                            const Eigen::MatrixXd& teacher_token_feats,
                            const Eigen::MatrixXd& student_token_feats,
                            Reduction reduction) {
  if (indices.empty())
    throw ValidationError("token_selective_loss: no indices selected");
  if (teacher_token_feats.cols() != student_token_feats.cols())
    throw ValidationError("token_selective_loss: feature dim mismatch");
  double total = 0.0;
  for (int i : indices) {
    if (i < 0 || i >= teacher_token_feats.rows() || i >= student_token_feats.rows())
      throw ValidationError("token_selective_loss: index out of range");
    total += l1_feature_loss(teacher_token_feats.row(i), student_token_feats.row(i),
                             reduction);
  }
  return total / static_cast<double>(indices.size());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double confidence_ratio(const Eigen::VectorXd& teacher_logits,
                        const Eigen::VectorXd& student_logits, double temperature) {
  if (temperature <= 0.0)
    throw ValidationError("confidence_ratio: temperature must be > 0");
  if (teacher_logits.size() == 0 || student_logits.size() == 0)
    throw ValidationError("confidence_ratio: empty logits");
  double pt = softmax(teacher_logits).maxCoeff();
  double ps = softmax(student_logits).maxCoeff();
  return temperature * pt / ps;
}

double gate_weight(double r, double w) {
  if (w < 0.0) throw ValidationError("gate_weight: w must be >= 0");
  return r > 1.0 ? w : 0.0;
}

double total_loss(double task, double l_dv, double l_dt, double l_dt_prime,
                  const DistillConfig& config, std::optional<double> gate) {
  config.validate();
  if (gate.has_value() && !config.enable_cw)
    throw ConfigError("total_loss: gate provided while CW disabled");
  if (task < 0.0 || l_dv < 0.0 || l_dt < 0.0 || l_dt_prime < 0.0)
    throw ValidationError("total_loss: loss terms must be nonnegative");
  if (config.enable_ts) {
    double w_eff = gate.has_value() ? *gate : config.w_prime;
    return task + w_eff * (l_dv + l_dt + l_dt_prime);
  }
  double w_eff = gate.has_value() ? *gate : config.w;
  return task + w_eff * (l_dv + l_dt);
}

double adaptive_finetune_loss(double mlm, double itm, double l_d, double w) {
  if (mlm < 0.0 || itm < 0.0 || l_d < 0.0 || w < 0.0)
    throw ValidationError("adaptive_finetune_loss: terms must be nonnegative");
  return (mlm + itm) + w * l_d;
}

}  // namespace tdlab::distill
