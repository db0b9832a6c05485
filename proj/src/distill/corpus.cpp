#include "tdlab/distill/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace tdlab::distill {

namespace {

bool stop(const std::vector<bool>& stopword, int id) {
  if (id < 0 || id >= static_cast<int>(stopword.size()))
    throw ValidationError("unknown token id " + std::to_string(id));
  return stopword[static_cast<std::size_t>(id)];
}

double nearest_rank_p90(std::vector<int> values) {
  if (values.empty()) return std::numeric_limits<double>::infinity();
  std::sort(values.begin(), values.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.9 * static_cast<double>(values.size())));
  if (rank == 0) rank = 1;
  return static_cast<double>(values[rank - 1]);
}

}  // namespace

std::vector<std::pair<int, std::vector<int>>> content_ngram_occurrences(
    const synth::TextSequence& seg, const std::vector<bool>& stopword, int n) {
  std::vector<std::pair<int, std::vector<int>>> out;
  if (n < 1) return out;
  for (int i = 0; i + n <= static_cast<int>(seg.size()); ++i) {
    bool ok = true;
    for (int k = 0; k < n; ++k) {
      if (stop(stopword, seg[static_cast<std::size_t>(i + k)])) {
        ok = false;
        break;
      }
    }
    if (ok)
      out.emplace_back(i, std::vector<int>(seg.begin() + i, seg.begin() + i + n));
  }
  return out;
}

CorpusStats CorpusStats::build(std::span<const synth::Instance> split,
                               const synth::Vocab& vocab, KeywordParams params) {
  if (params.n_max < 1) throw ConfigError("keyword params: n_max must be >= 1");
  CorpusStats s;
  s.params_ = params;
  s.vocab_size_ = vocab.size();
  s.stopword_.assign(static_cast<std::size_t>(vocab.size()), false);
  for (int i = 0; i < vocab.size(); ++i)
    s.stopword_[static_cast<std::size_t>(i)] = vocab.is_stopword(i);
  s.num_docs_ = static_cast<int>(split.size());

  for (const auto& inst : split) {
    std::vector<const synth::TextSequence*> segments = {&inst.question};
    for (const auto& a : inst.answers) segments.push_back(&a);

    std::set<int> doc_tokens;
    std::set<std::vector<int>> doc_ngrams;
    std::set<std::vector<int>> q_ngrams;       // all sizes 1..n_max
    std::set<std::vector<int>> ans_ngrams;
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const auto& seg = *segments[si];
      for (int id : seg) {
        stop(s.stopword_, id);  // range check
        doc_tokens.insert(id);
      }
      for (int n = 1; n <= params.n_max; ++n) {
        for (auto& [pos, g] : content_ngram_occurrences(seg, s.stopword_, n)) {
          if (n >= 2) doc_ngrams.insert(g);
          if (si == 0) {
            q_ngrams.insert(g);
          } else {
            ans_ngrams.insert(g);
          }
        }
      }
    }
    for (int id : doc_tokens) s.df_[id]++;
    for (const auto& g : doc_ngrams) s.ngram_df_[g]++;
    for (const auto& g : q_ngrams)
      if (ans_ngrams.count(g)) s.qa_cooc_[g]++;

    std::set<int> scene_tokens;
    for (const auto& o : inst.scene.objects) {
      scene_tokens.insert(vocab.color_ids[static_cast<std::size_t>(o.color_id)]);
      scene_tokens.insert(vocab.shape_ids[static_cast<std::size_t>(o.shape_id)]);
    }
    std::set<int> counted;
    for (std::size_t si = 1; si < segments.size(); ++si)
      for (int id : *segments[si])
        if (scene_tokens.count(id) && counted.insert(id).second) s.ia_cooc_[id]++;
  }

  std::vector<int> qa_vals;
  for (const auto& [g, c] : s.qa_cooc_) qa_vals.push_back(c);
  s.qa_thr_ = nearest_rank_p90(std::move(qa_vals));
  std::vector<int> ia_vals;
  for (const auto& [t, c] : s.ia_cooc_) ia_vals.push_back(c);
  s.ia_thr_ = nearest_rank_p90(std::move(ia_vals));
  return s;
}

int CorpusStats::doc_freq(int token) const {
  if (token < 0 || token >= vocab_size_)
    throw ValidationError("unknown token id " + std::to_string(token));
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

double CorpusStats::idf(int token) const {
  int df = doc_freq(token);
  return std::log(static_cast<double>(num_docs_) / std::max(1, df));
}

int CorpusStats::ngram_doc_freq(const std::vector<int>& g) const {
  auto it = ngram_df_.find(g);
  return it == ngram_df_.end() ? 0 : it->second;
}

double CorpusStats::ngram_idf(const std::vector<int>& g) const {
  int df = ngram_doc_freq(g);
  return std::log(static_cast<double>(num_docs_) / std::max(1, df));
}

bool CorpusStats::ngram_scores_as_unit(const std::vector<int>& g) const {
  return ngram_doc_freq(g) >= params_.min_ngram_df;
}

int CorpusStats::qa_cooccurrence(const std::vector<int>& g) const {
  auto it = qa_cooc_.find(g);
  return it == qa_cooc_.end() ? 0 : it->second;
}

int CorpusStats::ia_cooccurrence(int token) const {
  auto it = ia_cooc_.find(token);
  return it == ia_cooc_.end() ? 0 : it->second;
}

bool CorpusStats::is_stopword(int token) const {
  return stop(stopword_, token);
}

Eigen::VectorXd keyword_scores(const synth::TextSequence& text,
                               const CorpusStats& stats, int n_max) {
  if (n_max < 1) throw ValidationError("keyword_scores: n_max must be >= 1");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(text.size()));
  std::unordered_map<int, int> tf;
  for (int id : text) {
    if (id < 0 || id >= stats.vocab_size())
      throw ValidationError("keyword_scores: unknown token id " + std::to_string(id));
    tf[id]++;
  }
  std::vector<double> bonus(text.size(), 0.0);
  std::vector<bool> stopword(static_cast<std::size_t>(stats.vocab_size()));
  for (int i = 0; i < stats.vocab_size(); ++i)
    stopword[static_cast<std::size_t>(i)] = stats.is_stopword(i);
  for (int n = 2; n <= n_max; ++n) {
    for (auto& [pos, g] : content_ngram_occurrences(text, stopword, n)) {
      if (!stats.ngram_scores_as_unit(g)) continue;
      double gi = stats.ngram_idf(g);
      for (int k = 0; k < n; ++k) {
        auto& b = bonus[static_cast<std::size_t>(pos + k)];
        b = std::max(b, gi);
      }
    }
  }
  double decay = stats.params().position_decay;
  for (std::size_t l = 0; l < text.size(); ++l) {
    int id = text[l];
    if (stats.is_stopword(id)) continue;
    double base = tf[id] * stats.idf(id);
    out(static_cast<Eigen::Index>(l)) =
        (base + bonus[l]) / (1.0 + decay * static_cast<double>(l));
  }
  return out;
}

}  // namespace tdlab::distill
