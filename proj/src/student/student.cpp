#include "tdlab/student/student.hpp"

#include <numeric>

namespace tdlab::student {

using nn::Matrix;
using nn::Var;

void StudentConfig::validate() const {
  if (d_model < 1 || layers < 1 || heads < 1)
    throw ConfigError("student: all counts must be >= 1");
  if (d_model % heads != 0)
    throw ConfigError("student: d_model must be divisible by heads");
  if (vocab_size < 1) throw ConfigError("student: vocab_size unset");
  if (num_shapes < 1 || num_colors < 1)
    throw ConfigError("student: region feature layout unset");
}

nlohmann::json StudentConfig::to_json() const {
  return {{"d_model", d_model},       {"layers", layers},
          {"heads", heads},           {"vocab_size", vocab_size},
          {"max_seq", max_seq},       {"num_shapes", num_shapes},
          {"num_colors", num_colors}, {"teacher_d_embed", teacher_d_embed}};
}

StudentConfig StudentConfig::from_json(const nlohmann::json& j) {
  StudentConfig c;
  c.d_model = j.at("d_model");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.vocab_size = j.at("vocab_size");
  c.max_seq = j.at("max_seq");
  c.num_shapes = j.at("num_shapes");
  c.num_colors = j.at("num_colors");
  c.teacher_d_embed = j.at("teacher_d_embed");
  return c;
}

StudentConfig StudentConfig::preset(const std::string& name, const synth::Dataset& ds,
                                    int teacher_d_embed) {
  StudentConfig c;
  if (name == "small") {
    c.d_model = 32;
    c.layers = 2;
    c.heads = 4;
  } else if (name == "base") {
    c.d_model = 48;
    c.layers = 3;
    c.heads = 6;
  } else if (name == "large") {
    c.d_model = 64;
    c.layers = 4;
    c.heads = 8;
  } else {
    throw ConfigError("unknown student preset: " + name);
  }
  c.vocab_size = ds.vocab.size();
  c.num_shapes = ds.config.num_shapes;
  c.num_colors = ds.config.num_colors;
  c.teacher_d_embed = teacher_d_embed;
  return c;
}

nn::TransformerSpec StudentModel::spec() const {
  return {config_.d_model, config_.layers, config_.heads, 0};
}

StudentModel::StudentModel(StudentConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  int d = config_.d_model;
  params_.add("tok_emb", config_.vocab_size, d);
  params_.add("pos_emb", config_.max_seq, d);
  params_.add("seg_emb", 2, d);  // 0 text (incl CLS), 1 vision (incl IMG)
  params_.add("region.w", config_.d_vis(), d);
  params_.add("region.b", 1, d);
  nn::register_transformer(params_, "enc", spec());
  params_.add("task.w", 3 * d, 1);
  params_.add("task.b", 1, 1);
  params_.add("entail.w", 3 * d, 3);
  params_.add("entail.b", 1, 3);
  params_.add("mlm.w", d, config_.vocab_size);
  params_.add("mlm.b", 1, config_.vocab_size);
  params_.add("itm.w", d, 1);
  params_.add("itm.b", 1, 1);
  if (config_.needs_projection())
    params_.add("proj.w", d, config_.teacher_d_embed);
  Rng rng(mix_seed(seed, fnv1a64("student-init")));
  params_.init_standard(rng);
  if (config_.needs_projection()) {
    // start near a truncated identity
    Matrix& w = params_.at("proj.w");
    for (int i = 0; i < std::min(config_.d_model, config_.teacher_d_embed); ++i)
      w(i, i) += 1.0;
  }
}

Var StudentModel::encode(nn::Tape& tape, nn::ParamBinder& bind,
                         const Eigen::MatrixXd& regions,
                         const synth::TextSequence& text,
                         nn::AttentionRecord* attn) const {
  if (text.empty()) throw ValidationError("student: empty text");
  int z1 = static_cast<int>(text.size());
  int r = static_cast<int>(regions.rows());
  int s = 1 + z1 + 1 + r;
  if (s > config_.max_seq)
    throw ValidationError("student: sequence of " + std::to_string(s) +
                          " exceeds max_seq " + std::to_string(config_.max_seq));
  if (regions.cols() != config_.d_vis())
    throw ValidationError("student: region feature dim mismatch");

  std::vector<int> text_ids = {synth::Vocab::kCls};
  text_ids.insert(text_ids.end(), text.begin(), text.end());
  for (int id : text)
    if (id < 0 || id >= config_.vocab_size)
      throw ValidationError("student: token id out of range");
  Var txt = gather_rows(bind("tok_emb"), text_ids);
  Var img_tok = gather_rows(bind("tok_emb"), std::vector<int>{synth::Vocab::kImg});
  Var reg = add_rowvec(matmul(tape.leaf(regions, false), bind("region.w")),
                       bind("region.b"));
  std::array<Var, 3> parts = {txt, img_tok, reg};
  Var x = concat_rows(parts);

  std::vector<int> pos(static_cast<std::size_t>(s));
  std::iota(pos.begin(), pos.end(), 0);
  x = add(x, gather_rows(bind("pos_emb"), pos));
  std::vector<int> seg(static_cast<std::size_t>(s), 1);
  for (int i = 0; i < 1 + z1; ++i) seg[static_cast<std::size_t>(i)] = 0;
  x = add(x, gather_rows(bind("seg_emb"), seg));

  return transformer_encode(bind, "enc", spec(), x, attn);
}

Var StudentModel::to_feature_space(nn::ParamBinder& bind, Var x) const {
  if (!config_.needs_projection()) return x;
  return matmul(x, bind("proj.w"));
}

StudentModel::PairGraph StudentModel::build_pair(nn::Tape& tape, nn::ParamBinder& bind,
                                                 const Eigen::MatrixXd& regions,
                                                 const synth::TextSequence& text,
                                                 nn::AttentionRecord* attn) const {
  Var enc = encode(tape, bind, regions, text, attn);
  int z1 = static_cast<int>(text.size());
  Var cls = slice_rows(enc, 0, 1);
  Var img = slice_rows(enc, 1 + z1, 1);
  Var toks = slice_rows(enc, 1, z1);
  std::array<Var, 3> fused_parts = {cls, img, cmul(cls, img)};
  Var fused = concat_cols(fused_parts);
  PairGraph out;
  out.logit = add(matmul(fused, bind("task.w")), bind("task.b"));
  out.cls_feat = to_feature_space(bind, cls);
  out.img_feat = to_feature_space(bind, img);
  out.text_feats = to_feature_space(bind, toks);
  return out;
}

Var StudentModel::build_mlm_loss(nn::Tape& tape, nn::ParamBinder& bind,
                                 const Eigen::MatrixXd& regions,
                                 const synth::TextSequence& text,
                                 const std::vector<int>& mask_positions) const {
  if (mask_positions.empty())
    throw ValidationError("mlm: no positions masked");
  synth::TextSequence masked = text;
  std::vector<int> targets;
  for (int p : mask_positions) {
    if (p < 0 || p >= static_cast<int>(text.size()))
      throw ValidationError("mlm: mask position out of range");
    targets.push_back(text[static_cast<std::size_t>(p)]);
    masked[static_cast<std::size_t>(p)] = synth::Vocab::kMask;
  }
  Var enc = encode(tape, bind, regions, masked, nullptr);
  // text token t sits at sequence position 1 + t
  std::vector<int> rows;
  for (int p : mask_positions) rows.push_back(1 + p);
  Var hidden = gather_rows(enc, rows);
  Var logits = add_rowvec(matmul(hidden, bind("mlm.w")), bind("mlm.b"));
  return cross_entropy_rows(logits, targets);
}

Var StudentModel::build_itm_loss(nn::Tape& tape, nn::ParamBinder& bind,
                                 const Eigen::MatrixXd& regions,
                                 const synth::TextSequence& text, bool is_matched) const {
  Var enc = encode(tape, bind, regions, text, nullptr);
  Var cls = slice_rows(enc, 0, 1);
  Var logit = add(matmul(cls, bind("itm.w")), bind("itm.b"));
  return bce_with_logit(logit, is_matched ? 1.0 : 0.0);
}

Var StudentModel::build_entail_logits(nn::Tape& tape, nn::ParamBinder& bind,
                                      const Eigen::MatrixXd& regions,
                                      const synth::TextSequence& hypothesis) const {
  Var enc = encode(tape, bind, regions, hypothesis, nullptr);
  int z1 = static_cast<int>(hypothesis.size());
  Var cls = slice_rows(enc, 0, 1);
  Var img = slice_rows(enc, 1 + z1, 1);
  std::array<Var, 3> fused_parts = {cls, img, cmul(cls, img)};
  Var fused = concat_cols(fused_parts);
  return add(matmul(fused, bind("entail.w")), bind("entail.b"));
}

StudentOutput StudentModel::forward(const Eigen::MatrixXd& regions,
                                    const synth::TextSequence& text,
                                    bool want_attentions) const {
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  nn::AttentionRecord attn;
  PairGraph g = build_pair(tape, bind, regions, text,
                           want_attentions ? &attn : nullptr);
  StudentOutput out;
  out.task_logit = tape.value(g.logit)(0, 0);
  out.cls_feature = tape.value(g.cls_feat).row(0).transpose();
  out.img_feature = tape.value(g.img_feat).row(0).transpose();
  out.text_token_features = tape.value(g.text_feats);
  if (want_attentions) out.attentions = std::move(attn);
  return out;
}

Eigen::MatrixXd StudentModel::render_regions(const synth::Scene& scene) const {
  return synth::render_scene_features(scene, config_.num_shapes, config_.num_colors);
}

Eigen::VectorXd StudentModel::choice_logits(const synth::Instance& inst,
                                            bool zero_regions) const {
  Eigen::MatrixXd regions = render_regions(inst.scene);
  if (zero_regions) regions.setZero();
  Eigen::VectorXd out(4);
  for (int k = 0; k < 4; ++k) {
    synth::TextSequence text = inst.question;
    const auto& ans = inst.answers[static_cast<std::size_t>(k)];
    text.insert(text.end(), ans.begin(), ans.end());
    out(k) = forward(regions, text).task_logit;
  }
  return out;
}

double StudentModel::task_loss(const synth::Instance& inst) const {
  Eigen::VectorXd logits = choice_logits(inst);
  double m = logits.maxCoeff();
  double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(inst.gold_index);
}

double StudentModel::entail_loss(const synth::EntailmentInstance& inst) const {
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  Var logits = build_entail_logits(tape, bind, render_regions(inst.scene),
                                   inst.hypothesis);
  Var loss = cross_entropy_rows(logits, {inst.label});
  return tape.value(loss)(0, 0);
}

std::vector<int> sample_mlm_positions(const synth::TextSequence& text, double mask_rate,
                                      Rng& rng) {
  if (mask_rate <= 0.0 || mask_rate >= 1.0)
    throw ValidationError("mlm: mask_rate must be in (0, 1)");
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<int> out;
    for (std::size_t i = 0; i < text.size(); ++i)
      if (rng.uniform() < mask_rate) out.push_back(static_cast<int>(i));
    if (!out.empty()) return out;
  }
  throw ValidationError("mlm: no position masked after resampling");
}

double StudentModel::mlm_loss(const Eigen::MatrixXd& regions,
                              const synth::TextSequence& text, double mask_rate,
                              Rng& rng) const {
  std::vector<int> positions = sample_mlm_positions(text, mask_rate, rng);
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  Var loss = build_mlm_loss(tape, bind, regions, text, positions);
  return tape.value(loss)(0, 0);
}

double StudentModel::itm_loss(const Eigen::MatrixXd& regions,
                              const synth::TextSequence& text, bool is_matched) const {
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  Var loss = build_itm_loss(tape, bind, regions, text, is_matched);
  return tape.value(loss)(0, 0);
}

void StudentModel::save(const std::filesystem::path& dir) const {
  nlohmann::json extra;
  extra["model"] = "student";
  extra["seed"] = seed_;
  extra["config"] = config_.to_json();
  params_.save(dir, extra);
}

StudentModel StudentModel::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  nn::ParamStore store = nn::ParamStore::load(dir, &manifest);
  StudentModel model(StudentConfig::from_json(manifest.at("config")),
                     manifest.at("seed").get<std::uint64_t>());
  model.params_ = std::move(store);
  return model;
}

}  // namespace tdlab::student
