#include "tdlab/regimes/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tdlab::regimes {

using nn::Matrix;
using nn::Var;

RegimeName regime_from_string(const std::string& s) {
  if (s == "baseline") return RegimeName::Baseline;
  if (s == "naive") return RegimeName::Naive;
  if (s == "clip_td") return RegimeName::ClipTd;
  if (s == "semi_supervised") return RegimeName::SemiSupervised;
  if (s == "second_stage_pretrain") return RegimeName::SecondStagePretrain;
  throw ConfigError("unknown regime: " + s);
}

std::string regime_to_string(RegimeName r) {
  switch (r) {
    case RegimeName::Baseline: return "baseline";
    case RegimeName::Naive: return "naive";
    case RegimeName::ClipTd: return "clip_td";
    case RegimeName::SemiSupervised: return "semi_supervised";
    case RegimeName::SecondStagePretrain: return "second_stage_pretrain";
  }
  throw std::logic_error("bad regime enum");
}

void RegimeSpec::normalize() {
  switch (name) {
    case RegimeName::Baseline:
      distill.w = 0.0;
      distill.w_prime = 0.0;
      distill.enable_ts = false;
      distill.enable_cw = false;
      distill.enable_af = false;
      break;
    case RegimeName::Naive:
      distill.enable_ts = false;
      distill.enable_cw = false;
      distill.enable_af = false;
      break;
    case RegimeName::SecondStagePretrain:
      distill.w = 0.0;
      distill.w_prime = 0.0;
      distill.enable_ts = false;
      distill.enable_cw = false;
      distill.enable_af = true;
      break;
    case RegimeName::ClipTd:
    case RegimeName::SemiSupervised:
      break;
  }
  distill.validate();
  if (epochs < 0 || af_epochs < 0) throw ConfigError("regime: negative epoch count");
  if (batch_size < 1) throw ConfigError("regime: batch_size must be >= 1");
  if (lr <= 0.0) throw ConfigError("regime: lr must be > 0");
  if (mlm_mask_rate <= 0.0 || mlm_mask_rate >= 1.0)
    throw ConfigError("regime: mlm_mask_rate must be in (0, 1)");
}

RegimeSpec RegimeSpec::make(RegimeName name, const distill::DistillConfig& base) {
  RegimeSpec s;
  s.name = name;
  s.distill = base;
  if (name == RegimeName::ClipTd || name == RegimeName::SemiSupervised) {
    s.distill.enable_ts = true;
    s.distill.enable_cw = true;
    s.distill.enable_af = true;
  }
  s.normalize();
  return s;
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "step,L_t,L_dv,L_dt,L_dt_prime,gate_value,total,lr\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_double(r.l_t) << ',' << format_double(r.l_dv)
        << ',' << format_double(r.l_dt) << ',' << format_double(r.l_dt_prime) << ','
        << format_double(r.gate_value) << ',' << format_double(r.total) << ','
        << format_double(r.lr) << '\n';
  }
  return out.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

std::vector<TrainLogRow> TrainLog::parse_csv(const std::string& text) {
  std::vector<TrainLogRow> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    TrainLogRow r;
    std::getline(ls, field, ',');
    r.step = std::stol(field);
    std::getline(ls, field, ',');
    r.l_t = std::stod(field);
    std::getline(ls, field, ',');
    r.l_dv = std::stod(field);
    std::getline(ls, field, ',');
    r.l_dt = std::stod(field);
    std::getline(ls, field, ',');
    r.l_dt_prime = std::stod(field);
    std::getline(ls, field, ',');
    r.gate_value = std::stod(field);
    std::getline(ls, field, ',');
    r.total = std::stod(field);
    std::getline(ls, field, ',');
    r.lr = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

TeacherCacheMap build_teacher_cache_map(const teacher::TeacherModel& teacher,
                                        std::span<const synth::Instance> instances,
                                        const distill::CorpusStats* stats,
                                        const distill::DistillConfig& config) {
  TeacherCacheMap out;
  for (const auto& inst : instances)
    out.emplace(inst.instance_id,
                distill::build_teacher_cache(teacher, inst, stats, config));
  return out;
}

double accuracy(const student::StudentModel& model,
                std::span<const synth::Instance> split, bool zero_regions) {
  if (split.empty()) throw ValidationError("accuracy: empty split");
  int hits = 0;
  for (const auto& inst : split) {
    Eigen::VectorXd logits = model.choice_logits(inst, zero_regions);
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (logits(i) > logits(best)) best = i;
    if (best == inst.gold_index) hits++;
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

namespace {

struct LoopContext {
  const RegimeSpec& spec;
  const teacher::TeacherModel& teacher;
  const synth::Dataset& ds;
  const distill::CorpusStats* stats;
  const TeacherCacheMap* shared_cache;
  TeacherCacheMap local_cache;
  TrainLog* log;
  TraceSink trace;
  long step = 0;

  const distill::TeacherInstanceCache& cache_for(const synth::Instance& inst) {
    if (shared_cache) {
      auto it = shared_cache->find(inst.instance_id);
      if (it != shared_cache->end()) return it->second;
    }
    auto it = local_cache.find(inst.instance_id);
    if (it != local_cache.end()) return it->second;
    auto [ins, ok] = local_cache.emplace(
        inst.instance_id,
        distill::build_teacher_cache(teacher, inst, stats, spec.distill));
    return ins->second;
  }
};

void ensure_finite(double v, const char* what, long step,
                   const std::vector<long>& batch_ids,
                   const nlohmann::json& components) {
  if (std::isfinite(v)) return;
  nlohmann::json dump = {{"failed_term", what},
                         {"step", step},
                         {"batch_instance_ids", batch_ids},
                         {"components", components}};
  throw TrainingError("non-finite loss at step " + std::to_string(step),
                      dump.dump(2));
}

// masked-position sampling that never fails: falls back to one uniform
// position if two rate-driven draws mask nothing
std::vector<int> mask_positions_forced(const synth::TextSequence& text, double rate,
                                       Rng& rng) {
  try {
    return student::sample_mlm_positions(text, rate, rng);
  } catch (const ValidationError&) {
    return {rng.uniform_int(static_cast<int>(text.size()))};
  }
}

struct PairTerms {
  Var l_dv;
  Var l_dt;
  Var l_dt_prime;
  bool has_ts = false;
};

// Distillation terms for one QA-pair graph against frozen teacher features.
PairTerms pair_distill_terms(nn::Tape& tape, const student::StudentModel::PairGraph& g,
                             const distill::TeacherInstanceCache& tc, int k,
                             const distill::DistillConfig& cfg) {
  PairTerms out;
  bool mean_red = cfg.l1_reduction == distill::Reduction::Mean;
  const auto& pair = tc.pairs[static_cast<std::size_t>(k)];
  Var zero = tape.leaf(Matrix::Zero(1, 1), false);
  if (cfg.enable_vision_term) {
    Var t_img = tape.leaf(tc.image_cls.transpose(), false);
    out.l_dv = l1_distance(g.img_feat, t_img, mean_red);
  } else {
    out.l_dv = zero;
  }
  if (cfg.enable_text_term) {
    Var t_eos = tape.leaf(pair.text_eos.transpose(), false);
    out.l_dt = l1_distance(g.cls_feat, t_eos, mean_red);
  } else {
    out.l_dt = zero;
  }
  out.l_dt_prime = zero;
  if (cfg.enable_ts && !pair.selected.empty()) {
    Var sel = gather_rows(g.text_feats, pair.selected);
    Var t_sel = tape.leaf(pair.selected_feats, false);
    if (mean_red) {
      out.l_dt_prime = l1_distance(sel, t_sel, true);
    } else {
      out.l_dt_prime = scale(l1_distance(sel, t_sel, false),
                             1.0 / static_cast<double>(pair.selected.size()));
    }
    out.has_ts = true;
  }
  return out;
}

struct InstanceLoss {
  Var total;          // graph node to backprop (unscaled)
  TrainLogRow row;    // logged component values
};

// Builds the full per-instance loss graph (4 QA pairs). For unlabeled
// instances the task term is omitted and gold_index is never touched.
InstanceLoss build_instance_loss(nn::Tape& tape, nn::ParamBinder& bind,
                                 LoopContext& ctx, const student::StudentModel& model,
                                 const synth::Instance& inst, bool labeled) {
  const auto& cfg = ctx.spec.distill;
  Eigen::MatrixXd regions = model.render_regions(inst.scene);
  if (ctx.spec.zero_regions) regions.setZero();
  std::array<student::StudentModel::PairGraph, 4> pairs;
  std::vector<Var> logit_cells;
  for (int k = 0; k < 4; ++k) {
    synth::TextSequence text = inst.question;
    const auto& ans = inst.answers[static_cast<std::size_t>(k)];
    text.insert(text.end(), ans.begin(), ans.end());
    pairs[static_cast<std::size_t>(k)] = model.build_pair(tape, bind, regions, text);
    logit_cells.push_back(pairs[static_cast<std::size_t>(k)].logit);
  }
  Var logits = concat_cols(logit_cells);

  InstanceLoss out;
  Var task = tape.leaf(Matrix::Zero(1, 1), false);
  if (labeled) task = cross_entropy_rows(logits, {inst.gold_index});

  bool distill_active = cfg.w > 0.0 || cfg.w_prime > 0.0 || cfg.enable_cw;
  double gate_value = cfg.enable_ts ? cfg.w_prime : cfg.w;
  Var dv_sum = tape.leaf(Matrix::Zero(1, 1), false);
  Var dt_sum = dv_sum;
  Var dtp_sum = dv_sum;
  int used_pairs = 0;
  double r = 0.0;
  if (distill_active) {
    const auto& tc = ctx.cache_for(inst);
    if (cfg.enable_cw) {
      Eigen::VectorXd student_logits = tape.value(logits).row(0).transpose();
      r = distill::confidence_ratio(tc.logits, student_logits, cfg.temperature);
      gate_value = distill::gate_weight(r, cfg.enable_ts ? cfg.w_prime : cfg.w);
    }
    bool gold_pair_only =
        labeled && cfg.enable_cw && cfg.cw_scope == distill::CwScope::GoldOnly;
    for (int k = 0; k < 4; ++k) {
      if (gold_pair_only && k != inst.gold_index) continue;
      PairTerms terms =
          pair_distill_terms(tape, pairs[static_cast<std::size_t>(k)], tc, k, cfg);
      dv_sum = add(dv_sum, terms.l_dv);
      dt_sum = add(dt_sum, terms.l_dt);
      dtp_sum = add(dtp_sum, terms.l_dt_prime);
      used_pairs++;
    }
  }

  Var dv_mean = dv_sum, dt_mean = dt_sum, dtp_mean = dtp_sum;
  if (used_pairs > 1) {
    double inv = 1.0 / static_cast<double>(used_pairs);
    dv_mean = scale(dv_sum, inv);
    dt_mean = scale(dt_sum, inv);
    dtp_mean = scale(dtp_sum, inv);
  }
  Var distill_sum = add(add(dv_mean, dt_mean), dtp_mean);
  Var total = add(task, scale(distill_sum, gate_value));

  out.total = total;
  out.row.l_t = tape.value(task)(0, 0);
  out.row.l_dv = tape.value(dv_mean)(0, 0);
  out.row.l_dt = tape.value(dt_mean)(0, 0);
  out.row.l_dt_prime = tape.value(dtp_mean)(0, 0);
  out.row.gate_value = gate_value;
  out.row.total = tape.value(total)(0, 0);

  if (ctx.trace && distill_active) {
    const auto& tc = ctx.cache_for(inst);
    nlohmann::json pairs_json = nlohmann::json::array();
    for (int k = 0; k < 4; ++k) {
      const auto& pc = tc.pairs[static_cast<std::size_t>(k)];
      nlohmann::json pj = {{"pair", k}, {"selected", pc.selected}};
      if (pc.scores.combined.size() > 0) {
        pj["s_vr"] = std::vector<double>(pc.scores.s_vr.data(),
                                         pc.scores.s_vr.data() + pc.scores.s_vr.size());
        pj["s_si"] = std::vector<double>(pc.scores.s_si.data(),
                                         pc.scores.s_si.data() + pc.scores.s_si.size());
        pj["combined"] = std::vector<double>(
            pc.scores.combined.data(),
            pc.scores.combined.data() + pc.scores.combined.size());
      }
      pairs_json.push_back(std::move(pj));
    }
    ctx.trace({{"instance_id", inst.instance_id},
               {"labeled", labeled},
               {"confidence_ratio", r},
               {"gate_value", gate_value},
               {"L_dv", out.row.l_dv},
               {"L_dt", out.row.l_dt},
               {"L_dt_prime", out.row.l_dt_prime},
               {"pairs", pairs_json}});
  }
  return out;
}

// --- adaptive finetuning stage (MLM + ITM + naive distillation on captions) ---
void run_af_stage(LoopContext& ctx, student::StudentModel& model,
                  std::vector<const synth::Instance*> pool) {
  const RegimeSpec& spec = ctx.spec;
  if (!spec.distill.enable_af || spec.af_epochs <= 0 || pool.empty()) return;
  nn::Optimizer opt({spec.optimizer, spec.lr, spec.warmup_steps});
  Rng rng(mix_seed(spec.seed, fnv1a64("af-stage")));

  // frozen-teacher caption embeddings
  std::map<long, Eigen::VectorXd> caption_eos;
  std::map<long, Eigen::VectorXd> image_emb;
  for (const auto* inst : pool) {
    caption_eos.emplace(inst->instance_id,
                        ctx.teacher
                            .encode_text(synth::scene_caption(inst->scene, ctx.ds.vocab))
                            .eos);
    image_emb.emplace(inst->instance_id, ctx.teacher.encode_image(inst->scene));
  }

  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < spec.af_epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(spec.batch_size));
      double inv_b = 1.0 / static_cast<double>(end - i);
      nn::GradMap grads;
      std::vector<long> batch_ids;
      for (std::size_t j = i; j < end; ++j)
        batch_ids.push_back(pool[static_cast<std::size_t>(order[j])]->instance_id);
      for (; i < end; ++i) {
        const synth::Instance& inst = *pool[static_cast<std::size_t>(order[i])];
        synth::TextSequence caption = synth::scene_caption(inst.scene, ctx.ds.vocab);
        std::vector<int> masked = mask_positions_forced(caption, spec.mlm_mask_rate, rng);
        bool matched = rng.uniform() < 0.5;
        const synth::Instance* scene_source = &inst;
        if (!matched) {
          int other = rng.uniform_int(static_cast<int>(pool.size()));
          if (pool[static_cast<std::size_t>(other)] == &inst) matched = true;
          else scene_source = pool[static_cast<std::size_t>(other)];
        }
        Eigen::MatrixXd own_regions = model.render_regions(inst.scene);
        Eigen::MatrixXd itm_regions = model.render_regions(scene_source->scene);
        if (spec.zero_regions) {
          own_regions.setZero();
          itm_regions.setZero();
        }

        nn::Tape tape;
        nn::ParamBinder bind(tape, model.params(), true);
        Var mlm = model.build_mlm_loss(tape, bind, own_regions, caption, masked);
        Var itm = model.build_itm_loss(tape, bind, itm_regions, caption, matched);
        Var pretraining = add(mlm, itm);

        Var dv = tape.leaf(Matrix::Zero(1, 1), false);
        Var dt = dv;
        if (spec.distill.w > 0.0) {
          // distill on the ITM forward's (scene, caption) pairing
          auto g = model.build_pair(tape, bind, itm_regions, caption);
          bool mean_red = spec.distill.l1_reduction == distill::Reduction::Mean;
          if (spec.distill.enable_vision_term) {
            Var t_img =
                tape.leaf(image_emb.at(scene_source->instance_id).transpose(), false);
            dv = l1_distance(g.img_feat, t_img, mean_red);
          }
          if (spec.distill.enable_text_term) {
            Var t_eos = tape.leaf(caption_eos.at(inst.instance_id).transpose(), false);
            dt = l1_distance(g.cls_feat, t_eos, mean_red);
          }
        }
        Var distill_sum = add(add(dv, dt), tape.leaf(Matrix::Zero(1, 1), false));
        Var total = add(pretraining, scale(distill_sum, spec.distill.w));

        TrainLogRow row;
        row.step = ctx.step++;
        row.l_t = tape.value(pretraining)(0, 0);
        row.l_dv = tape.value(dv)(0, 0);
        row.l_dt = tape.value(dt)(0, 0);
        row.l_dt_prime = 0.0;
        row.gate_value = spec.distill.w;
        row.total = tape.value(total)(0, 0);
        row.lr = opt.current_lr();
        ensure_finite(row.total, "L_AF", row.step, batch_ids,
                      {{"mlm_itm", row.l_t}, {"l_dv", row.l_dv}, {"l_dt", row.l_dt}});
        ctx.log->rows.push_back(row);

        tape.backward(scale(total, inv_b));
        bind.collect_grads(grads);
      }
      opt.step(model.params(), grads);
    }
  }
}

struct BatchPlan {
  bool labeled = true;
  std::vector<int> indices;
};

std::vector<BatchPlan> interleave_batches(const std::vector<int>& labeled_order,
                                          const std::vector<int>& unlabeled_order,
                                          int batch_size) {
  auto chunk = [batch_size](const std::vector<int>& order, bool labeled) {
    std::vector<BatchPlan> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
      BatchPlan p;
      p.labeled = labeled;
      for (std::size_t j = i;
           j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j)
        p.indices.push_back(order[j]);
      out.push_back(std::move(p));
    }
    return out;
  };
  std::vector<BatchPlan> lab = chunk(labeled_order, true);
  std::vector<BatchPlan> unl = chunk(unlabeled_order, false);
  std::vector<BatchPlan> plan;
  std::size_t li = 0, ui = 0;
  while (li < lab.size() || ui < unl.size()) {
    if (ui >= unl.size() ||
        (li < lab.size() &&
         (li + 1) * (unl.size() + 1) <= (ui + 1) * (lab.size() + 1))) {
      plan.push_back(std::move(lab[li++]));
    } else {
      plan.push_back(std::move(unl[ui++]));
    }
  }
  return plan;
}

TrainResult run_regime(const RegimeSpec& spec_in, const teacher::TeacherModel& teacher,
                       const student::StudentModel& init, const synth::Dataset& ds,
                       std::span<const synth::Instance> labeled,
                       std::vector<synth::Instance> unlabeled,  // already redacted
                       std::span<const synth::Instance> val,
                       const distill::CorpusStats* stats,
                       const TeacherCacheMap* shared_cache, TraceSink trace) {
  RegimeSpec spec = spec_in;
  spec.normalize();
  if (!unlabeled.empty() && spec.name != RegimeName::SemiSupervised)
    throw ConfigError("unlabeled pool requires the semi_supervised regime");
  if (spec.distill.enable_ts && stats == nullptr)
    throw ConfigError("token-selective distillation requires corpus stats");

  std::uint64_t teacher_hash_before = teacher.param_hash();

  TrainResult result{init, {}};
  student::StudentModel& model = result.model;
  LoopContext ctx{spec, teacher, ds, stats, shared_cache, {}, &result.log, trace};

  // stage 1: adaptive finetuning over the regime's full text/image pool
  std::vector<const synth::Instance*> af_pool;
  for (const auto& inst : labeled) af_pool.push_back(&inst);
  for (const auto& inst : unlabeled) af_pool.push_back(&inst);
  run_af_stage(ctx, model, std::move(af_pool));

  // stage 2: task finetuning
  nn::Optimizer opt({spec.optimizer, spec.lr, spec.warmup_steps});
  Rng rng(mix_seed(spec.seed, fnv1a64("task-stage")));
  std::vector<int> labeled_order(labeled.size());
  std::iota(labeled_order.begin(), labeled_order.end(), 0);
  std::vector<int> unlabeled_ids(unlabeled.size());
  std::iota(unlabeled_ids.begin(), unlabeled_ids.end(), 0);

  nn::ParamStore best_params = model.params();
  double best_val = -1.0;
  int best_epoch = -1;
  int bad_epochs = 0;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(labeled_order);
    std::vector<int> unlabeled_order;
    if (!unlabeled.empty()) {
      rng.shuffle(unlabeled_ids);
      int take = spec.unlabeled_per_epoch > 0
                     ? std::min<int>(spec.unlabeled_per_epoch,
                                     static_cast<int>(unlabeled_ids.size()))
                     : static_cast<int>(unlabeled_ids.size());
      unlabeled_order.assign(unlabeled_ids.begin(), unlabeled_ids.begin() + take);
    }
    for (const BatchPlan& batch :
         interleave_batches(labeled_order, unlabeled_order, spec.batch_size)) {
      nn::GradMap grads;
      double inv_b = 1.0 / static_cast<double>(batch.indices.size());
      std::vector<long> batch_ids;
      for (int idx : batch.indices)
        batch_ids.push_back(batch.labeled
                                ? labeled[static_cast<std::size_t>(idx)].instance_id
                                : unlabeled[static_cast<std::size_t>(idx)].instance_id);
      for (int idx : batch.indices) {
        const synth::Instance& inst =
            batch.labeled ? labeled[static_cast<std::size_t>(idx)]
                          : unlabeled[static_cast<std::size_t>(idx)];
        nn::Tape tape;
        nn::ParamBinder bind(tape, model.params(), true);
        InstanceLoss il = build_instance_loss(tape, bind, ctx, model, inst, batch.labeled);
        il.row.step = ctx.step++;
        il.row.lr = opt.current_lr();
        ensure_finite(il.row.total, "L_final", il.row.step, batch_ids,
                      {{"l_t", il.row.l_t},
                       {"l_dv", il.row.l_dv},
                       {"l_dt", il.row.l_dt},
                       {"l_dt_prime", il.row.l_dt_prime}});
        ctx.log->rows.push_back(il.row);
        tape.backward(scale(il.total, inv_b));
        bind.collect_grads(grads);
      }
      opt.step(model.params(), grads);
    }
    result.log.epochs_run = epoch + 1;
    if (!val.empty() && spec.patience > 0) {
      double acc = accuracy(model, val, spec.zero_regions);
      if (acc > best_val) {
        best_val = acc;
        best_epoch = epoch;
        best_params = model.params();
        bad_epochs = 0;
      } else {
        bad_epochs++;
        if (bad_epochs >= spec.patience) break;
      }
    }
  }
  if (best_epoch >= 0) {
    model.params() = best_params;
    result.log.best_val_accuracy = best_val;
    result.log.best_epoch = best_epoch;
  }

  if (teacher.param_hash() != teacher_hash_before)
    throw std::logic_error("teacher parameters changed during training");
  return result;
}

}  // namespace

TrainResult train(const RegimeSpec& spec, const teacher::TeacherModel& teacher,
                  const student::StudentModel& init, const synth::Dataset& ds,
                  std::span<const synth::Instance> labeled,
                  std::span<const synth::Instance> unlabeled,
                  std::span<const synth::Instance> val,
                  const distill::CorpusStats* stats,
                  const TeacherCacheMap* shared_cache, TraceSink trace) {
  if (spec.name == RegimeName::SemiSupervised)
    return train_semi_supervised(spec, teacher, init, ds, labeled, unlabeled, val,
                                 stats, shared_cache, trace);
  if (!unlabeled.empty())
    throw ConfigError("unlabeled pool requires the semi_supervised regime");
  return run_regime(spec, teacher, init, ds, labeled, {}, val, stats, shared_cache,
                    trace);
}

TrainResult train_semi_supervised(const RegimeSpec& spec,
                                  const teacher::TeacherModel& teacher,
                                  const student::StudentModel& init,
                                  const synth::Dataset& ds,
                                  std::span<const synth::Instance> labeled,
                                  std::span<const synth::Instance> unlabeled,
                                  std::span<const synth::Instance> val,
                                  const distill::CorpusStats* stats,
                                  const TeacherCacheMap* shared_cache,
                                  TraceSink trace) {
  if (spec.name != RegimeName::SemiSupervised)
    throw ConfigError("train_semi_supervised requires the semi_supervised regime");
  std::set<long> labeled_ids;
  for (const auto& inst : labeled) labeled_ids.insert(inst.instance_id);
  std::vector<synth::Instance> redacted;
  redacted.reserve(unlabeled.size());
  for (const auto& inst : unlabeled) {
    if (labeled_ids.count(inst.instance_id))
      throw ValidationError("semi_supervised: labeled/unlabeled pools overlap");
    synth::Instance copy = inst;
    copy.gold_index = 0;  // redacted: the loop never reads it on unlabeled batches
    redacted.push_back(std::move(copy));
  }
  return run_regime(spec, teacher, init, ds, labeled, std::move(redacted), val, stats,
                    shared_cache, trace);
}

}  // namespace tdlab::regimes
