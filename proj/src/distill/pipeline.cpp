#include "tdlab/distill/pipeline.hpp"

namespace tdlab::distill {

VlLoss naive_vl_loss(const teacher::TeacherOutput& t, const student::StudentOutput& s,
                     const DistillConfig& config) {
  VlLoss out;
  if (config.enable_vision_term) {
    if (t.image_cls.size() != s.img_feature.size())
      throw ValidationError("naive_vl_loss: vision feature dim mismatch (projection?)");
    out.l_dv = l1_feature_loss(t.image_cls, s.img_feature, config.l1_reduction);
  }
  if (config.enable_text_term) {
    if (t.text_eos.size() != s.cls_feature.size())
      throw ValidationError("naive_vl_loss: text feature dim mismatch (projection?)");
    out.l_dt = l1_feature_loss(t.text_eos, s.cls_feature, config.l1_reduction);
  }
  out.l_d = out.l_dv + out.l_dt;
  return out;
}

TokenScores compute_token_scores(const Eigen::VectorXd& image_emb,
                                 const Eigen::MatrixXd& teacher_tokens,
                                 const synth::TextSequence& pair_text,
                                 const CorpusStats& stats, int n_max) {
  if (teacher_tokens.rows() != static_cast<Eigen::Index>(pair_text.size()))
    throw ValidationError("compute_token_scores: token row count mismatch");
  TokenScores ts;
  ts.s_vr = visual_relevance_scores(image_emb, teacher_tokens);
  ts.s_si = keyword_scores(pair_text, stats, n_max);
  CombinedScores c = combine_scores(ts.s_vr, ts.s_si);
  ts.combined = c.combined;
  ts.no_signal = c.no_signal;
  return ts;
}

TeacherInstanceCache build_teacher_cache(const teacher::TeacherModel& teacher,
                                         const synth::Instance& inst,
                                         const CorpusStats* stats,
                                         const DistillConfig& config) {
  TeacherInstanceCache out;
  out.image_cls = teacher.encode_image(inst.scene);
  Eigen::VectorXd cosines(4);
  for (int k = 0; k < 4; ++k) {
    synth::TextSequence pair_text = inst.question;
    const auto& ans = inst.answers[static_cast<std::size_t>(k)];
    pair_text.insert(pair_text.end(), ans.begin(), ans.end());
    teacher::TextEncoding enc = teacher.encode_text(pair_text);
    TeacherPairCache& pc = out.pairs[static_cast<std::size_t>(k)];
    pc.text_eos = enc.eos;
    cosines(k) = enc.eos.dot(out.image_cls);
    if (stats != nullptr && config.enable_ts) {
      pc.scores = compute_token_scores(out.image_cls, enc.tokens, pair_text, *stats,
                                       stats->params().n_max);
      if (!pc.scores.no_signal) {
        pc.selected = select_tokens(pc.scores.combined, config.tokens_selected);
        pc.selected_feats.resize(static_cast<Eigen::Index>(pc.selected.size()),
                                 enc.tokens.cols());
        for (std::size_t i = 0; i < pc.selected.size(); ++i)
          pc.selected_feats.row(static_cast<Eigen::Index>(i)) =
              enc.tokens.row(pc.selected[i]);
      }
    }
  }
  out.logits = cosines / teacher.config().temperature_contrastive;
  return out;
}

}  // namespace tdlab::distill
