#pragma once

#include <map>
#include <span>
#include <unordered_map>

#include "tdlab/distill/ops.hpp"
#include "tdlab/synth/world.hpp"

namespace tdlab::distill {

struct KeywordParams {
  int n_max = 2;            // longest n-gram treated as a unit
  int min_ngram_df = 2;     // n-gram must occur in >= this many docs to score
  double position_decay = 0.05;
};

// Immutable statistics over a training split. One document per instance:
// the question plus its four answers, each treated as a separate segment
// (n-grams never span segment boundaries, and only cover content tokens).
class CorpusStats {
 public:
  static CorpusStats build(std::span<const synth::Instance> split,
                           const synth::Vocab& vocab, KeywordParams params = {});

  int num_docs() const { return num_docs_; }
  const KeywordParams& params() const { return params_; }

  int doc_freq(int token) const;
  // idf(w) = ln(N / max(1, df(w))); a token present in every doc scores 0.
  double idf(int token) const;

  int ngram_doc_freq(const std::vector<int>& g) const;
  double ngram_idf(const std::vector<int>& g) const;
  bool ngram_scores_as_unit(const std::vector<int>& g) const;

  // question<->answer co-occurrence count of an n-gram across the corpus
  int qa_cooccurrence(const std::vector<int>& g) const;
  // scene-object<->answer co-occurrence of a unigram
  int ia_cooccurrence(int token) const;
  // top-decile (90th percentile, nearest rank) thresholds over nonzero counts
  double qa_cooc_threshold() const { return qa_thr_; }
  double ia_cooc_threshold() const { return ia_thr_; }

  int vocab_size() const { return vocab_size_; }
  bool is_stopword(int token) const;

 private:
  int num_docs_ = 0;
  int vocab_size_ = 0;
  KeywordParams params_;
  std::vector<bool> stopword_;
  std::unordered_map<int, int> df_;
  std::map<std::vector<int>, int> ngram_df_;
  std::map<std::vector<int>, int> qa_cooc_;
  std::unordered_map<int, int> ia_cooc_;
  double qa_thr_ = 0.0;
  double ia_thr_ = 0.0;
};

// Per-token importance from the simplified statistical extractor:
//   score(l) = 0 for stopwords/specials, otherwise
//   score(l) = (tf(w_l, text) * idf(w_l) + bonus(l)) / (1 + decay * l)
// where bonus(l) is the largest n-gram idf (2 <= n <= n_max) over
// content-only n-gram occurrences covering position l that clear the
// min_ngram_df bar. Unknown token ids are an error.
Eigen::VectorXd keyword_scores(const synth::TextSequence& text,
                               const CorpusStats& stats, int n_max);

// All content-only contiguous n-gram occurrences of a segment.
std::vector<std::pair<int, std::vector<int>>> content_ngram_occurrences(
    const synth::TextSequence& seg, const std::vector<bool>& stopword, int n);

}  // namespace tdlab::distill
