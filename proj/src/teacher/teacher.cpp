#include "tdlab/teacher/teacher.hpp"

#include <algorithm>
#include <numeric>

namespace tdlab::teacher {

using nn::Matrix;
using nn::Var;

void TeacherConfig::validate() const {
  if (d_embed < 1 || text_layers < 1 || vision_layers < 1 || heads < 1)
    throw ConfigError("teacher: all counts must be >= 1");
  if (d_embed % heads != 0)
    throw ConfigError("teacher: d_embed must be divisible by heads");
  if (temperature_contrastive <= 0.0)
    throw ConfigError("teacher: contrastive temperature must be > 0");
  if (vocab_size < 1) throw ConfigError("teacher: vocab_size unset");
  if (num_shapes < 1 || num_colors < 1)
    throw ConfigError("teacher: region feature layout unset");
}

nlohmann::json TeacherConfig::to_json() const {
  return {{"d_embed", d_embed},
          {"text_layers", text_layers},
          {"vision_layers", vision_layers},
          {"heads", heads},
          {"temperature_contrastive", temperature_contrastive},
          {"vocab_size", vocab_size},
          {"num_shapes", num_shapes},
          {"num_colors", num_colors},
          {"max_seq", max_seq},
          {"max_regions", max_regions},
          {"pretrain_steps", pretrain_steps},
          {"batch_size", batch_size},
          {"lr", lr}};
}

TeacherConfig TeacherConfig::from_json(const nlohmann::json& j) {
  TeacherConfig c;
  c.d_embed = j.at("d_embed");
  c.text_layers = j.at("text_layers");
  c.vision_layers = j.at("vision_layers");
  c.heads = j.at("heads");
  c.temperature_contrastive = j.at("temperature_contrastive");
  c.vocab_size = j.at("vocab_size");
  c.num_shapes = j.at("num_shapes");
  c.num_colors = j.at("num_colors");
  c.max_seq = j.at("max_seq");
  c.max_regions = j.at("max_regions");
  c.pretrain_steps = j.at("pretrain_steps");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  return c;
}

TeacherConfig TeacherConfig::for_dataset(const synth::Dataset& ds) {
  TeacherConfig c;
  c.vocab_size = ds.vocab.size();
  c.num_shapes = ds.config.num_shapes;
  c.num_colors = ds.config.num_colors;
  return c;
}

ZeroShotMode zero_shot_mode_from_string(const std::string& s) {
  if (s == "iqa" || s == "IQA") return ZeroShotMode::IQA;
  if (s == "ia" || s == "IA") return ZeroShotMode::IA;
  throw ConfigError("unknown zero-shot mode: " + s);
}

nn::TransformerSpec TeacherModel::text_spec() const {
  return {config_.d_embed, config_.text_layers, config_.heads, 0};
}

nn::TransformerSpec TeacherModel::vision_spec() const {
  return {config_.d_embed, config_.vision_layers, config_.heads, 0};
}

TeacherModel::TeacherModel(TeacherConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  int d = config_.d_embed;
  params_.add("txt.tok_emb", config_.vocab_size, d);
  params_.add("txt.pos_emb", config_.max_seq, d);
  nn::register_transformer(params_, "txt.enc", text_spec());
  params_.add("txt.proj", d, d);
  params_.add("vis.emb.w", config_.d_vis(), d);
  params_.add("vis.emb.b", 1, d);
  params_.add("vis.cls", 1, d);
  params_.add("vis.pos_emb", config_.max_regions + 1, d);
  nn::register_transformer(params_, "vis.enc", vision_spec());
  params_.add("vis.proj", d, d);
  Rng rng(mix_seed(seed, fnv1a64("teacher-init")));
  params_.init_standard(rng);
  // identity-leaning projections keep early cosines informative
  params_.at("txt.proj") += Matrix::Identity(d, d);
  params_.at("vis.proj") += Matrix::Identity(d, d);
}

Var TeacherModel::build_text_eos(nn::ParamBinder& bind,
                                 const synth::TextSequence& text) const {
  if (text.empty()) throw ValidationError("encode_text: empty text");
  if (static_cast<int>(text.size()) > config_.max_seq)
    throw ValidationError("encode_text: text longer than max_seq");
  std::vector<int> pos(text.size());
  std::iota(pos.begin(), pos.end(), 0);
  Var x = add(gather_rows(bind("txt.tok_emb"), std::vector<int>(text.begin(), text.end())),
              gather_rows(bind("txt.pos_emb"), pos));
  Var enc = transformer_encode(bind, "txt.enc", text_spec(), x);
  Var proj = matmul(enc, bind("txt.proj"));
  Var eos = slice_rows(proj, static_cast<int>(text.size()) - 1, 1);
  return l2_normalize_rows(eos);
}

Var TeacherModel::build_image_embedding(nn::ParamBinder& bind,
                                        const synth::Scene& scene) const {
  Eigen::MatrixXd feats =
      synth::render_scene_features(scene, config_.num_shapes, config_.num_colors);
  if (feats.rows() > config_.max_regions)
    throw ValidationError("encode_image: too many regions");
  nn::Tape& tape = *bind("vis.cls").tape;
  Var regions = tape.leaf(feats, false);
  Var emb = add_rowvec(matmul(regions, bind("vis.emb.w")), bind("vis.emb.b"));
  std::array<Var, 2> parts = {bind("vis.cls"), emb};
  Var x = concat_rows(parts);
  std::vector<int> pos(static_cast<std::size_t>(feats.rows()) + 1);
  std::iota(pos.begin(), pos.end(), 0);
  x = add(x, gather_rows(bind("vis.pos_emb"), pos));
  Var enc = transformer_encode(bind, "vis.enc", vision_spec(), x);
  Var cls = slice_rows(enc, 0, 1);
  Var proj = matmul(cls, bind("vis.proj"));
  return l2_normalize_rows(proj);
}

Eigen::VectorXd TeacherModel::encode_image(const synth::Scene& scene) const {
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  Var v = build_image_embedding(bind, scene);
  return tape.value(v).row(0).transpose();
}

TextEncoding TeacherModel::encode_text(const synth::TextSequence& text) const {
  if (text.empty()) throw ValidationError("encode_text: empty text");
  if (static_cast<int>(text.size()) > config_.max_seq)
    throw ValidationError("encode_text: text longer than max_seq");
  nn::Tape tape;
  nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
  std::vector<int> pos(text.size());
  std::iota(pos.begin(), pos.end(), 0);
  Var x = add(gather_rows(bind("txt.tok_emb"), std::vector<int>(text.begin(), text.end())),
              gather_rows(bind("txt.pos_emb"), pos));
  Var enc = transformer_encode(bind, "txt.enc", text_spec(), x);
  Var proj = matmul(enc, bind("txt.proj"));
  TextEncoding out;
  out.tokens = tape.value(proj);
  Eigen::VectorXd eos = out.tokens.row(out.tokens.rows() - 1).transpose();
  out.eos = eos / eos.norm();
  return out;
}

namespace {

synth::TextSequence concat_text(const synth::TextSequence& a,
                                const synth::TextSequence& b) {
  synth::TextSequence out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace

std::pair<int, Eigen::VectorXd> TeacherModel::zero_shot_answer(
    const synth::Instance& inst, ZeroShotMode mode) const {
  Eigen::VectorXd img = encode_image(inst.scene);
  Eigen::VectorXd logits(4);
  for (int k = 0; k < 4; ++k) {
    const auto& ans = inst.answers[static_cast<std::size_t>(k)];
    synth::TextSequence text =
        mode == ZeroShotMode::IQA ? concat_text(inst.question, ans) : ans;
    logits(k) = encode_text(text).eos.dot(img);
  }
  return {argmax_lowest(logits), logits};
}

Eigen::VectorXd TeacherModel::teacher_logits(const synth::Instance& inst,
                                             ZeroShotMode mode) const {
  return zero_shot_answer(inst, mode).second / config_.temperature_contrastive;
}

TeacherOutput TeacherModel::full_output(const synth::Instance& inst, int answer_index,
                                        ZeroShotMode mode) const {
  if (answer_index < 0 || answer_index > 3)
    throw ValidationError("full_output: answer index out of range");
  TeacherOutput out;
  out.image_cls = encode_image(inst.scene);
  synth::TextSequence pair_text =
      concat_text(inst.question, inst.answers[static_cast<std::size_t>(answer_index)]);
  TextEncoding enc = encode_text(pair_text);
  out.text_tokens = enc.tokens;
  out.text_eos = enc.eos;
  out.choice_logits = zero_shot_answer(inst, mode).second;
  return out;
}

void TeacherModel::save(const std::filesystem::path& dir) const {
  nlohmann::json extra;
  extra["model"] = "teacher";
  extra["seed"] = seed_;
  extra["config"] = config_.to_json();
  params_.save(dir, extra);
}

TeacherModel TeacherModel::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  nn::ParamStore store = nn::ParamStore::load(dir, &manifest);
  TeacherModel model(TeacherConfig::from_json(manifest.at("config")),
                     manifest.at("seed").get<std::uint64_t>());
  model.params_ = std::move(store);
  return model;
}

nn::Var info_nce_symmetric(Var image_embs, Var text_embs, double tau) {
  nn::Tape& t = *image_embs.tape;
  Eigen::Index b = t.value(image_embs).rows();
  if (b < 2) throw ValidationError("InfoNCE undefined without in-batch negatives");
  Var logits = scale(matmul(image_embs, transpose(text_embs)), 1.0 / tau);
  std::vector<int> diag(static_cast<std::size_t>(b));
  std::iota(diag.begin(), diag.end(), 0);
  Var i2t = cross_entropy_rows(logits, diag);
  Var t2i = cross_entropy_rows(transpose(logits), diag);
  return scale(add(i2t, t2i), 0.5);
}

TeacherModel pretrain_contrastive(const synth::Dataset& ds, const TeacherConfig& config,
                                  std::uint64_t seed, PretrainLog* log) {
  if (ds.train.empty()) throw ValidationError("pretrain: empty dataset");
  if (config.batch_size < 2)
    throw ValidationError("pretrain: batch size must be >= 2 (InfoNCE needs negatives)");
  TeacherModel model(config, seed);
  nn::Optimizer opt({nn::OptimKind::Adam, config.lr, 20});
  Rng rng(mix_seed(seed, fnv1a64("teacher-pretrain")));

  std::vector<int> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // force initial shuffle

  for (int step = 0; step < config.pretrain_steps; ++step) {
    std::vector<const synth::Instance*> batch;
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&ds.train[static_cast<std::size_t>(order[cursor++])]);
    }
    nn::Tape tape;
    nn::ParamBinder bind(tape, model.params(), true);
    std::vector<Var> img_rows, txt_rows;
    for (const auto* inst : batch) {
      img_rows.push_back(model.build_image_embedding(bind, inst->scene));
      txt_rows.push_back(
          model.build_text_eos(bind, synth::scene_caption(inst->scene, ds.vocab)));
    }
    Var I = concat_rows(img_rows);
    Var T = concat_rows(txt_rows);
    Var loss = info_nce_symmetric(I, T, config.temperature_contrastive);
    if (log) log->loss_per_step.push_back(tape.value(loss)(0, 0));
    tape.backward(loss);
    nn::GradMap grads;
    bind.collect_grads(grads);
    opt.step(model.params(), grads);
  }

  if (log) {
    int b = std::min<int>(config.batch_size, static_cast<int>(ds.val.size()));
    if (b >= 2) {
      Eigen::MatrixXd I(b, config.d_embed), T(b, config.d_embed);
      for (int i = 0; i < b; ++i) {
        const auto& inst = ds.val[static_cast<std::size_t>(i)];
        I.row(i) = model.encode_image(inst.scene).transpose();
        T.row(i) =
            model.encode_text(synth::scene_caption(inst.scene, ds.vocab)).eos.transpose();
      }
      Eigen::MatrixXd sims = I * T.transpose();
      int hits = 0;
      for (int i = 0; i < b; ++i) {
        Eigen::VectorXd row = sims.row(i).transpose();
        if (argmax_lowest(row) == i) hits++;
      }
      log->heldout_retrieval_top1 = static_cast<double>(hits) / b;
      log->heldout_pairs = b;
    }
  }
  return model;
}

// ---- adapters ----

AdapterSpec::Kind AdapterSpec::kind_from_string(const std::string& s) {
  if (s == "mlp") return Kind::Mlp;
  if (s == "attention") return Kind::Attention;
  throw ConfigError("unknown adapter kind: " + s);
}

AdapterSpec::Fusion AdapterSpec::fusion_from_string(const std::string& s) {
  if (s == "concat") return Fusion::Concat;
  if (s == "cosine") return Fusion::Cosine;
  throw ConfigError("unknown adapter fusion: " + s);
}

AdapterModel::AdapterModel(AdapterSpec spec, const TeacherConfig& teacher_config,
                           std::uint64_t seed)
    : spec_(spec),
      d_(teacher_config.d_embed),
      heads_(teacher_config.heads),
      tau_(teacher_config.temperature_contrastive) {
  if (spec_.num_layers < 1) throw ConfigError("adapter: num_layers must be >= 1");
  int d = d_;
  if (spec_.kind == AdapterSpec::Kind::Mlp) {
    if (spec_.fusion == AdapterSpec::Fusion::Concat) {
      for (int l = 0; l < spec_.num_layers; ++l) {
        params_.add("mlp.l" + std::to_string(l) + ".w", 2 * d, 2 * d);
        params_.add("mlp.l" + std::to_string(l) + ".b", 1, 2 * d);
      }
      params_.add("head.w", 2 * d, 1);
      params_.add("head.b", 1, 1);
    } else {
      for (int l = 0; l < spec_.num_layers; ++l) {
        for (const char* side : {"v", "t"}) {
          params_.add(std::string("tower.") + side + ".l" + std::to_string(l) + ".w", d, d);
          params_.add(std::string("tower.") + side + ".l" + std::to_string(l) + ".b", 1, d);
        }
      }
    }
  } else {
    nn::TransformerSpec ts{d, spec_.num_layers, heads_, 0};
    if (spec_.fusion == AdapterSpec::Fusion::Concat) {
      params_.add("attn.cls", 1, d);
      nn::register_transformer(params_, "attn.enc", ts);
      params_.add("head.w", d, 1);
      params_.add("head.b", 1, 1);
    } else {
      for (const char* side : {"v", "t"}) {
        params_.add(std::string("attn.") + side + ".cls", 1, d);
        nn::register_transformer(params_, std::string("attn.") + side + ".enc", ts);
      }
    }
  }
  Rng rng(mix_seed(seed, fnv1a64("adapter-init")));
  params_.init_standard(rng);
}

nn::Var AdapterModel::build_logit(nn::Tape& tape, nn::ParamBinder& bind,
                                  const Eigen::VectorXd& image_emb,
                                  const Eigen::VectorXd& text_eos) const {
  Var u = tape.leaf(image_emb.transpose(), false);
  Var v = tape.leaf(text_eos.transpose(), false);
  if (spec_.kind == AdapterSpec::Kind::Mlp) {
    if (spec_.fusion == AdapterSpec::Fusion::Concat) {
      std::array<Var, 2> uv = {u, v};
      Var x = concat_cols(uv);
      for (int l = 0; l < spec_.num_layers; ++l) {
        std::string p = "mlp.l" + std::to_string(l) + ".";
        x = gelu(add_rowvec(matmul(x, bind(p + "w")), bind(p + "b")));
      }
      return add(matmul(x, bind("head.w")), bind("head.b"));
    }
    Var a = u, b = v;
    for (int l = 0; l < spec_.num_layers; ++l) {
      std::string lv = "tower.v.l" + std::to_string(l) + ".";
      std::string lt = "tower.t.l" + std::to_string(l) + ".";
      a = gelu(add_rowvec(matmul(a, bind(lv + "w")), bind(lv + "b")));
      b = gelu(add_rowvec(matmul(b, bind(lt + "w")), bind(lt + "b")));
    }
    return scale(cosine_rowvec(a, b), 1.0 / tau_);
  }
  nn::TransformerSpec ts{d_, spec_.num_layers, heads_, 0};
  if (spec_.fusion == AdapterSpec::Fusion::Concat) {
    std::array<Var, 3> seq = {bind("attn.cls"), u, v};
    Var x = concat_rows(seq);
    Var enc = transformer_encode(bind, "attn.enc", ts, x);
    Var cls = slice_rows(enc, 0, 1);
    return add(matmul(cls, bind("head.w")), bind("head.b"));
  }
  Var sides[2];
  int si = 0;
  for (const char* side : {"v", "t"}) {
    std::string p = std::string("attn.") + side;
    std::array<Var, 2> seq = {bind(p + ".cls"), si == 0 ? u : v};
    Var x = concat_rows(seq);
    Var enc = transformer_encode(bind, p + ".enc", ts, x);
    sides[si++] = slice_rows(enc, 0, 1);
  }
  return scale(cosine_rowvec(sides[0], sides[1]), 1.0 / tau_);
}

Eigen::VectorXd AdapterModel::choice_logits(const TeacherModel& teacher,
                                            const synth::Instance& inst) const {
  Eigen::VectorXd img = teacher.encode_image(inst.scene);
  Eigen::VectorXd out(4);
  for (int k = 0; k < 4; ++k) {
    synth::TextSequence text = inst.question;
    const auto& ans = inst.answers[static_cast<std::size_t>(k)];
    text.insert(text.end(), ans.begin(), ans.end());
    Eigen::VectorXd eos = teacher.encode_text(text).eos;
    nn::Tape tape;
    nn::ParamBinder bind(tape, const_cast<nn::ParamStore&>(params_), false);
    Var logit = build_logit(tape, bind, img, eos);
    out(k) = tape.value(logit)(0, 0);
  }
  return out;
}

AdapterModel adapter_finetune(const TeacherModel& teacher, const synth::Dataset& ds,
                              std::span<const synth::Instance> train_split,
                              const AdapterSpec& spec, std::uint64_t seed) {
  AdapterModel adapter(spec, teacher.config(), seed);
  if (train_split.empty()) return adapter;

  // frozen-teacher embeddings, computed once
  struct Cached {
    Eigen::VectorXd img;
    std::array<Eigen::VectorXd, 4> eos;
    int gold;
  };
  std::vector<Cached> cache;
  cache.reserve(train_split.size());
  for (const auto& inst : train_split) {
    Cached c;
    c.img = teacher.encode_image(inst.scene);
    for (int k = 0; k < 4; ++k) {
      synth::TextSequence text = inst.question;
      const auto& ans = inst.answers[static_cast<std::size_t>(k)];
      text.insert(text.end(), ans.begin(), ans.end());
      c.eos[static_cast<std::size_t>(k)] = teacher.encode_text(text).eos;
    }
    c.gold = inst.gold_index;
    cache.push_back(std::move(c));
  }

  nn::Optimizer opt({nn::OptimKind::Adam, spec.lr, 10});
  Rng rng(mix_seed(seed, fnv1a64("adapter-train")));
  std::vector<int> order(cache.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t batch_end = std::min(order.size(), i + static_cast<std::size_t>(spec.batch_size));
      nn::GradMap grads;
      double inv_b = 1.0 / static_cast<double>(batch_end - i);
      for (; i < batch_end; ++i) {
        const Cached& c = cache[static_cast<std::size_t>(order[i])];
        nn::Tape tape;
        nn::ParamBinder bind(tape, adapter.params(), true);
        std::vector<Var> logits;
        for (int k = 0; k < 4; ++k)
          logits.push_back(adapter.build_logit(tape, bind, c.img, c.eos[static_cast<std::size_t>(k)]));
        Var lv = concat_cols(logits);
        Var loss = scale(cross_entropy_rows(lv, {c.gold}), inv_b);
        tape.backward(loss);
        bind.collect_grads(grads);
      }
      opt.step(adapter.params(), grads);
    }
  }
  return adapter;
}

}  // namespace tdlab::teacher
