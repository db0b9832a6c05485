#pragma once

#include <filesystem>

#include "tdlab/nn/optim.hpp"
#include "tdlab/nn/transformer.hpp"
#include "tdlab/synth/world.hpp"

namespace tdlab::teacher {

struct TeacherConfig {
  int d_embed = 32;          // shared projection dim (also the encoder width)
  int text_layers = 2;
  int vision_layers = 2;
  int heads = 4;
  double temperature_contrastive = 0.07;
  int vocab_size = 0;
  int num_shapes = 0;        // region feature layout
  int num_colors = 0;
  int max_seq = 96;
  int max_regions = 16;
  // contrastive pretraining plumbing
  int pretrain_steps = 600;
  int batch_size = 32;
  double lr = 1e-3;

  int d_vis() const { return synth::region_feature_dim(num_shapes, num_colors); }
  void validate() const;
  nlohmann::json to_json() const;
  static TeacherConfig from_json(const nlohmann::json& j);
  static TeacherConfig for_dataset(const synth::Dataset& ds);
};

enum class ZeroShotMode { IQA, IA };
ZeroShotMode zero_shot_mode_from_string(const std::string& s);

struct TeacherOutput {
  Eigen::VectorXd image_cls;      // unit L2 norm
  Eigen::MatrixXd text_tokens;    // (z+1) x d_embed, post-projection
  Eigen::VectorXd text_eos;       // unit L2 norm
  Eigen::VectorXd choice_logits;  // 4, cosine similarities
};

struct TextEncoding {
  Eigen::MatrixXd tokens;  // (z+1) x d_embed
  Eigen::VectorXd eos;     // unit L2 norm
};

class TeacherModel {
 public:
  TeacherModel(TeacherConfig config, std::uint64_t seed);

  const TeacherConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::uint64_t param_hash() const { return params_.content_hash(); }

  Eigen::VectorXd encode_image(const synth::Scene& scene) const;
  TextEncoding encode_text(const synth::TextSequence& text) const;

  // IQA: cos(image, eos(question ++ answer_k)); IA: cos(image, eos(answer_k)).
  // Ties resolve to the lowest index.
  std::pair<int, Eigen::VectorXd> zero_shot_answer(const synth::Instance& inst,
                                                   ZeroShotMode mode) const;
  // zero-shot cosines scaled by 1/temperature (softmax-ready)
  Eigen::VectorXd teacher_logits(const synth::Instance& inst,
                                 ZeroShotMode mode = ZeroShotMode::IQA) const;

  TeacherOutput full_output(const synth::Instance& inst, int answer_index,
                            ZeroShotMode mode = ZeroShotMode::IQA) const;

  void save(const std::filesystem::path& dir) const;
  static TeacherModel load(const std::filesystem::path& dir);

  // --- graph builders shared with pretraining (public for tests) ---
  nn::Var build_image_embedding(nn::ParamBinder& bind, const synth::Scene& scene) const;
  nn::Var build_text_eos(nn::ParamBinder& bind, const synth::TextSequence& text) const;

 private:
  TeacherConfig config_;
  std::uint64_t seed_;
  nn::ParamStore params_;
  nn::TransformerSpec text_spec() const;
  nn::TransformerSpec vision_spec() const;
};

// Symmetric InfoNCE over row-normalized embedding matrices (B x d).
nn::Var info_nce_symmetric(nn::Var image_embs, nn::Var text_embs, double tau);

struct PretrainLog {
  std::vector<double> loss_per_step;
  double heldout_retrieval_top1 = 0.0;
  int heldout_pairs = 0;
};

// Contrastive pretraining on (scene, caption) pairs from the train split;
// captions only, QA text is never seen. Returns the trained model.
TeacherModel pretrain_contrastive(const synth::Dataset& ds, const TeacherConfig& config,
                                  std::uint64_t seed, PretrainLog* log = nullptr);

// ---- adapter baseline (teacher stays frozen) ----
struct AdapterSpec {
  int num_layers = 1;
  enum class Kind { Mlp, Attention } kind = Kind::Mlp;
  enum class Fusion { Concat, Cosine } fusion = Fusion::Concat;
  int epochs = 5;
  int batch_size = 16;
  double lr = 1e-3;

  static Kind kind_from_string(const std::string& s);
  static Fusion fusion_from_string(const std::string& s);
};

class AdapterModel {
 public:
  AdapterModel(AdapterSpec spec, const TeacherConfig& teacher_config,
               std::uint64_t seed);
  const AdapterSpec& spec() const { return spec_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // builds the per-pair logit graph from frozen teacher embeddings
  nn::Var build_logit(nn::Tape& tape, nn::ParamBinder& bind,
                      const Eigen::VectorXd& image_emb,
                      const Eigen::VectorXd& text_eos) const;
  Eigen::VectorXd choice_logits(const TeacherModel& teacher,
                                const synth::Instance& inst) const;

 private:
  AdapterSpec spec_;
  int d_ = 0;
  int heads_ = 1;
  double tau_ = 0.07;
  nn::ParamStore params_;
};

AdapterModel adapter_finetune(const TeacherModel& teacher, const synth::Dataset& ds,
                              std::span<const synth::Instance> train_split,
                              const AdapterSpec& spec, std::uint64_t seed);

}  // namespace tdlab::teacher
