#include "tdlab/evalproto/protocol.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

namespace tdlab::evalproto {

PlanRegime plan_regime_from_string(const std::string& s) {
  if (s == "zero_shot") return PlanRegime::ZeroShot;
  if (s == "low_shot_A") return PlanRegime::LowShotA;
  if (s == "low_shot_B") return PlanRegime::LowShotB;
  if (s == "semi") return PlanRegime::Semi;
  if (s == "full") return PlanRegime::Full;
  throw ConfigError("unknown split plan regime: " + s);
}

std::string plan_regime_to_string(PlanRegime r) {
  switch (r) {
    case PlanRegime::ZeroShot: return "zero_shot";
    case PlanRegime::LowShotA: return "low_shot_A";
    case PlanRegime::LowShotB: return "low_shot_B";
    case PlanRegime::Semi: return "semi";
    case PlanRegime::Full: return "full";
  }
  throw std::logic_error("bad plan enum");
}

Splits make_splits(const synth::Dataset& ds, const SplitPlan& plan) {
  Splits out;
  out.val = ds.val;
  out.test = ds.test;
  if (plan.regime == PlanRegime::ZeroShot) return out;
  if (plan.regime == PlanRegime::Full) {
    out.train_subset = ds.train;
    return out;
  }
  if (!plan.per_category_count.has_value() || *plan.per_category_count < 1)
    throw ConfigError("make_splits: per_category_count required and positive");
  int want = *plan.per_category_count;

  std::map<int, std::vector<int>> by_category;
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    by_category[ds.train[i].category].push_back(static_cast<int>(i));
  Rng rng(mix_seed(plan.seed, fnv1a64("make-splits")));
  std::set<int> chosen;
  for (auto& [cat, idxs] : by_category) {
    if (static_cast<int>(idxs.size()) < want)
      throw ValidationError("make_splits: category " + std::to_string(cat) +
                            " has only " + std::to_string(idxs.size()) +
                            " instances, need " + std::to_string(want));
    rng.shuffle(idxs);
    for (int i = 0; i < want; ++i) chosen.insert(idxs[static_cast<std::size_t>(i)]);
  }
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    if (chosen.count(static_cast<int>(i))) {
      out.train_subset.push_back(ds.train[i]);
    } else if (plan.regime == PlanRegime::Semi) {
      out.unlabeled_pool.push_back(ds.train[i]);
    }
  }
  return out;
}

std::vector<synth::Instance> shortcut_mitigated_transform(
    std::span<const synth::Instance> test_split) {
  std::vector<synth::Instance> out;
  out.reserve(test_split.size());
  for (const auto& inst : test_split)
    out.push_back(synth::remove_injected_shortcut(inst));
  return out;
}

nlohmann::json EmResult::log_json() const {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : replacements)
    reps.push_back({{"instance_id", r.instance_id},
                    {"answer", r.answer},
                    {"position", r.position},
                    {"from", r.from_token},
                    {"to", r.to_token}});
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [id, tok] : skipped_no_alias)
    skipped.push_back({{"instance_id", id}, {"token", tok}});
  return {{"replacements", reps}, {"skipped_no_alias", skipped}};
}

EmResult explicit_mitigation(std::span<const synth::Instance> test_split,
                             const distill::CorpusStats& stats,
                             const synth::Vocab& vocab, int n_max) {
  if (n_max < 1) throw ConfigError("explicit_mitigation: n_max must be >= 1");
  EmResult out;
  std::set<std::vector<int>> triggering;
  std::vector<bool> stopword(static_cast<std::size_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i)
    stopword[static_cast<std::size_t>(i)] = vocab.is_stopword(i);

  for (const auto& inst : test_split) {
    synth::Instance copy = inst;
    std::set<std::vector<int>> question_ngrams;
    for (int n = 1; n <= n_max; ++n)
      for (auto& [pos, g] :
           distill::content_ngram_occurrences(inst.question, stopword, n))
        question_ngrams.insert(g);
    std::set<int> scene_tokens;
    for (const auto& o : inst.scene.objects) {
      scene_tokens.insert(vocab.color_ids[static_cast<std::size_t>(o.color_id)]);
      scene_tokens.insert(vocab.shape_ids[static_cast<std::size_t>(o.shape_id)]);
    }

    for (int a = 0; a < 4; ++a) {
      synth::TextSequence& ans = copy.answers[static_cast<std::size_t>(a)];
      std::vector<bool> replace(ans.size(), false);
      for (int n = 1; n <= n_max; ++n) {
        for (auto& [pos, g] : distill::content_ngram_occurrences(ans, stopword, n)) {
          bool shared = question_ngrams.count(g) &&
                        stats.qa_cooccurrence(g) >= stats.qa_cooc_threshold();
          bool scene_shared = n == 1 && scene_tokens.count(g[0]) &&
                              stats.ia_cooccurrence(g[0]) >= stats.ia_cooc_threshold();
          if (!shared && !scene_shared) continue;
          for (int k = 0; k < n; ++k) replace[static_cast<std::size_t>(pos + k)] = true;
          triggering.insert(g);
        }
      }
      for (std::size_t i = 0; i < ans.size(); ++i) {
        if (!replace[i]) continue;
        int tok = ans[i];
        if (!vocab.has_alias(tok)) {
          out.skipped_no_alias.emplace_back(inst.instance_id, tok);
          continue;
        }
        int alias = vocab.alias(tok);
        out.replacements.push_back({inst.instance_id, a, static_cast<int>(i), tok, alias});
        ans[i] = alias;
      }
    }
    out.instances.push_back(std::move(copy));
  }
  out.replaced_ngrams.assign(triggering.begin(), triggering.end());
  return out;
}

ImPartition implicit_mitigation_partition(std::span<const synth::Instance> test_split,
                                          const student::StudentModel& text_only_model,
                                          double gamma) {
  if (gamma <= 0.0 || gamma >= 1.0)
    throw ValidationError("implicit_mitigation: gamma must be in (0, 1)");
  ImPartition out;
  for (const auto& inst : test_split) {
    Eigen::VectorXd logits = text_only_model.choice_logits(inst, /*zero_regions=*/true);
    Eigen::VectorXd probs = distill::softmax(logits);
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (probs(i) > probs(best)) best = i;
    bool correct = best == inst.gold_index;
    if (!correct) {
      out.image_biased.push_back(inst);
    } else if (probs(best) >= gamma) {
      out.language_biased.push_back(inst);
    } else {
      out.neither.push_back(inst);
    }
  }
  return out;
}

KmeansResult kmeans_zero_shot(const std::vector<double>& similarities, int k,
                              const std::vector<int>& labels) {
  int n = static_cast<int>(similarities.size());
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (labels.size() != similarities.size())
    throw ValidationError("kmeans: label count mismatch");
  std::set<double> distinct(similarities.begin(), similarities.end());
  if (static_cast<int>(distinct.size()) < k)
    throw ValidationError("kmeans: fewer distinct values than clusters");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return similarities[static_cast<std::size_t>(a)] <
           similarities[static_cast<std::size_t>(b)];
  });
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    x[static_cast<std::size_t>(i)] = similarities[static_cast<std::size_t>(order[i])];

  // prefix sums for O(1) within-cluster SSE
  std::vector<double> ps(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> ps2(static_cast<std::size_t>(n) + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    ps[static_cast<std::size_t>(i) + 1] = ps[static_cast<std::size_t>(i)] + x[static_cast<std::size_t>(i)];
    ps2[static_cast<std::size_t>(i) + 1] =
        ps2[static_cast<std::size_t>(i)] + x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
  }
  auto sse = [&](int i, int j) {  // cost of x[i..j] inclusive
    double cnt = j - i + 1;
    double s = ps[static_cast<std::size_t>(j) + 1] - ps[static_cast<std::size_t>(i)];
    double s2 = ps2[static_cast<std::size_t>(j) + 1] - ps2[static_cast<std::size_t>(i)];
    return s2 - s * s / cnt;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(
      static_cast<std::size_t>(k) + 1,
      std::vector<double>(static_cast<std::size_t>(n) + 1, kInf));
  std::vector<std::vector<int>> back(
      static_cast<std::size_t>(k) + 1, std::vector<int>(static_cast<std::size_t>(n) + 1, -1));
  cost[0][0] = 0.0;
  for (int c = 1; c <= k; ++c) {
    for (int j = c; j <= n; ++j) {
      for (int i = c - 1; i < j; ++i) {
        if (cost[static_cast<std::size_t>(c) - 1][static_cast<std::size_t>(i)] == kInf)
          continue;
        double v = cost[static_cast<std::size_t>(c) - 1][static_cast<std::size_t>(i)] +
                   sse(i, j - 1);
        if (v < cost[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]) {
          cost[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = v;
          back[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = i;
        }
      }
    }
  }

  std::vector<int> cluster_of_sorted(static_cast<std::size_t>(n), 0);
  KmeansResult out;
  out.centroids.assign(static_cast<std::size_t>(k), 0.0);
  int j = n;
  for (int c = k; c >= 1; --c) {
    int i = back[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
    double mean = (ps[static_cast<std::size_t>(j)] - ps[static_cast<std::size_t>(i)]) /
                  static_cast<double>(j - i);
    out.centroids[static_cast<std::size_t>(c) - 1] = mean;
    for (int t = i; t < j; ++t) cluster_of_sorted[static_cast<std::size_t>(t)] = c - 1;
    j = i;
  }

  out.assignments.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    out.assignments[static_cast<std::size_t>(order[i])] =
        cluster_of_sorted[static_cast<std::size_t>(i)];

  int hits = 0;
  for (int i = 0; i < n; ++i)
    if (out.assignments[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)])
      hits++;
  out.accuracy = n > 0 ? static_cast<double>(hits) / n : 0.0;
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"model", model},
          {"mode", mode},
          {"n", n},
          {"accuracy", accuracy},
          {"extra", extra}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.model = j.at("model");
  r.mode = j.at("mode");
  r.n = j.at("n");
  r.accuracy = j.at("accuracy");
  r.extra = j.at("extra").get<std::map<std::string, double>>();
  return r;
}

MetricsReport evaluate(const student::StudentModel& model,
                       std::span<const synth::Instance> split,
                       const std::string& mode_label, bool zero_regions) {
  if (split.empty()) throw ValidationError("evaluate: empty split");
  MetricsReport r;
  r.model = "student";
  r.mode = mode_label;
  r.n = static_cast<int>(split.size());
  int hits = 0;
  for (const auto& inst : split) {
    Eigen::VectorXd logits = model.choice_logits(inst, zero_regions);
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (logits(i) > logits(best)) best = i;
    if (best == inst.gold_index) hits++;
  }
  r.accuracy = static_cast<double>(hits) / r.n;
  return r;
}

MetricsReport evaluate(const teacher::TeacherModel& model,
                       std::span<const synth::Instance> split,
                       teacher::ZeroShotMode mode) {
  if (split.empty()) throw ValidationError("evaluate: empty split");
  MetricsReport r;
  r.model = "teacher";
  r.mode = mode == teacher::ZeroShotMode::IQA ? "zero_shot_iqa" : "zero_shot_ia";
  r.n = static_cast<int>(split.size());
  int hits = 0;
  for (const auto& inst : split)
    if (model.zero_shot_answer(inst, mode).first == inst.gold_index) hits++;
  r.accuracy = static_cast<double>(hits) / r.n;
  return r;
}

nlohmann::json MitigationReport::to_json() const {
  return {{"mean_overlap_gold", mean_overlap_gold},
          {"mean_overlap_distractor", mean_overlap_distractor},
          {"pct_gold_more_overlap", pct_gold_more_overlap},
          {"replaced_ngrams", replaced_ngrams}};
}

MitigationReport bias_statistics(std::span<const synth::Instance> split) {
  if (split.empty()) throw ValidationError("bias_statistics: empty split");
  MitigationReport r;
  double gold_sum = 0.0, distractor_sum = 0.0;
  int gold_more = 0;
  for (const auto& inst : split) {
    int g = synth::token_overlap(inst.question,
                                 inst.answers[static_cast<std::size_t>(inst.gold_index)]);
    double d = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (k == inst.gold_index) continue;
      d += synth::token_overlap(inst.question, inst.answers[static_cast<std::size_t>(k)]);
    }
    d /= 3.0;
    gold_sum += g;
    distractor_sum += d;
    if (g > d) gold_more++;
  }
  double n = static_cast<double>(split.size());
  r.mean_overlap_gold = gold_sum / n;
  r.mean_overlap_distractor = distractor_sum / n;
  r.pct_gold_more_overlap = 100.0 * gold_more / n;
  return r;
}

}  // namespace tdlab::evalproto
