#pragma once

#include <filesystem>

#include "tdlab/nn/optim.hpp"
#include "tdlab/nn/transformer.hpp"
#include "tdlab/synth/world.hpp"

namespace tdlab::student {

struct StudentConfig {
  int d_model = 32;
  int layers = 2;
  int heads = 4;
  int vocab_size = 0;
  int max_seq = 96;
  int num_shapes = 0;
  int num_colors = 0;
  // 0 means "match d_model" (no projection); otherwise a learned linear map
  // carries student features into the teacher space for distillation.
  int teacher_d_embed = 0;

  int d_vis() const { return synth::region_feature_dim(num_shapes, num_colors); }
  int feature_dim() const { return teacher_d_embed > 0 ? teacher_d_embed : d_model; }
  bool needs_projection() const {
    return teacher_d_embed > 0 && teacher_d_embed != d_model;
  }
  void validate() const;
  nlohmann::json to_json() const;
  static StudentConfig from_json(const nlohmann::json& j);
  // "small" / "base" / "large" stand in for the paper-scale student variants
  static StudentConfig preset(const std::string& name, const synth::Dataset& ds,
                              int teacher_d_embed);
};

struct StudentOutput {
  double task_logit = 0.0;
  Eigen::VectorXd cls_feature;         // teacher-space when projection enabled
  Eigen::VectorXd img_feature;
  Eigen::MatrixXd text_token_features; // (z+1) x feature_dim
  nn::AttentionRecord attentions;      // filled only when requested
};

class StudentModel {
 public:
  StudentModel(StudentConfig config, std::uint64_t seed);

  const StudentConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::uint64_t param_hash() const { return params_.content_hash(); }

  // graph pieces reused by inference and by the training loops
  struct PairGraph {
    nn::Var logit;       // 1x1
    nn::Var cls_feat;    // 1 x feature_dim
    nn::Var img_feat;    // 1 x feature_dim
    nn::Var text_feats;  // (z+1) x feature_dim
  };
  PairGraph build_pair(nn::Tape& tape, nn::ParamBinder& bind,
                       const Eigen::MatrixXd& regions,
                       const synth::TextSequence& text,
                       nn::AttentionRecord* attn = nullptr) const;
  nn::Var build_mlm_loss(nn::Tape& tape, nn::ParamBinder& bind,
                         const Eigen::MatrixXd& regions,
                         const synth::TextSequence& text,
                         const std::vector<int>& mask_positions) const;
  nn::Var build_itm_loss(nn::Tape& tape, nn::ParamBinder& bind,
                         const Eigen::MatrixXd& regions,
                         const synth::TextSequence& text, bool is_matched) const;
  // 3-class entailment head over the same fused representation
  nn::Var build_entail_logits(nn::Tape& tape, nn::ParamBinder& bind,
                              const Eigen::MatrixXd& regions,
                              const synth::TextSequence& hypothesis) const;

  StudentOutput forward(const Eigen::MatrixXd& regions, const synth::TextSequence& text,
                        bool want_attentions = false) const;
  Eigen::MatrixXd render_regions(const synth::Scene& scene) const;
  // one logit per (question ++ answer_k) pass
  Eigen::VectorXd choice_logits(const synth::Instance& inst,
                                bool zero_regions = false) const;

  double task_loss(const synth::Instance& inst) const;
  double entail_loss(const synth::EntailmentInstance& inst) const;
  // mask_rate in (0,1); if sampling masks nothing it resamples once, then errors
  double mlm_loss(const Eigen::MatrixXd& regions, const synth::TextSequence& text,
                  double mask_rate, Rng& rng) const;
  double itm_loss(const Eigen::MatrixXd& regions, const synth::TextSequence& text,
                  bool is_matched) const;

  void save(const std::filesystem::path& dir) const;
  static StudentModel load(const std::filesystem::path& dir);

 private:
  StudentConfig config_;
  std::uint64_t seed_;
  nn::ParamStore params_;
  nn::TransformerSpec spec() const;
  // encodes [CLS] ++ text ++ [IMG] ++ regions; returns final hidden states
  nn::Var encode(nn::Tape& tape, nn::ParamBinder& bind, const Eigen::MatrixXd& regions,
                 const synth::TextSequence& text, nn::AttentionRecord* attn) const;
  nn::Var to_feature_space(nn::ParamBinder& bind, nn::Var x) const;
};

std::vector<int> sample_mlm_positions(const synth::TextSequence& text, double mask_rate,
                                      Rng& rng);

}  // namespace tdlab::student
