#pragma once

#include "tdlab/distill/corpus.hpp"
#include "tdlab/student/student.hpp"
#include "tdlab/teacher/teacher.hpp"

namespace tdlab::distill {

struct VlLoss {
  double l_dv = 0.0;
  double l_dt = 0.0;
  double l_d = 0.0;
};

// L_dv = L1(teacher image cls, student img token); L_dt = L1(teacher text
// eos, student cls token); L_d is their sum. Modality toggles zero the
// corresponding term exactly.
VlLoss naive_vl_loss(const teacher::TeacherOutput& t, const student::StudentOutput& s,
                     const DistillConfig& config);

// Hybrid token scoring: visual relevance (teacher image/token cosines) plus
// keyword importance, each L1-normalized.
TokenScores compute_token_scores(const Eigen::VectorXd& image_emb,
                                 const Eigen::MatrixXd& teacher_tokens,
                                 const synth::TextSequence& pair_text,
                                 const CorpusStats& stats, int n_max);

// Frozen-teacher quantities needed repeatedly during training; computed once
// per instance. `selected` is empty when both score vectors had zero norm
// (TS is skipped for the instance).
struct TeacherPairCache {
  Eigen::VectorXd text_eos;
  TokenScores scores;
  std::vector<int> selected;
  Eigen::MatrixXd selected_feats;  // |selected| x d_embed
};

struct TeacherInstanceCache {
  Eigen::VectorXd image_cls;
  Eigen::VectorXd logits;  // 4, scaled by 1/temperature
  std::array<TeacherPairCache, 4> pairs;
};

TeacherInstanceCache build_teacher_cache(const teacher::TeacherModel& teacher,
                                         const synth::Instance& inst,
                                         const CorpusStats* stats,
                                         const DistillConfig& config);

}  // namespace tdlab::distill
