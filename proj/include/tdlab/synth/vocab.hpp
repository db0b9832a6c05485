#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace tdlab::synth {

// Shared token table for questions, answers and captions. Function/template
// words are flagged as stopwords; every content word (colors, shapes,
// numbers, relations) gets exactly one same-meaning alias used by the
// explicit-mitigation transform. Alias words are never produced by the
// generator templates themselves.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kImg = 2;
  static constexpr int kMask = 3;

  std::vector<std::string> tokens;
  std::vector<bool> stopword;        // indexed by id; specials count as stopwords
  std::map<int, int> alias_of;       // content id -> alias id
  std::vector<int> color_ids;        // indexed by color_id
  std::vector<int> shape_ids;        // indexed by shape_id
  std::vector<int> number_ids;       // 0..9
  std::vector<int> relation_ids;     // left, right, above, below

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& word) const;
  const std::string& word(int id) const;
  bool is_stopword(int id) const;
  bool is_content(int id) const { return id >= 4 && !is_stopword(id); }
  bool has_alias(int id) const { return alias_of.count(id) > 0; }
  int alias(int id) const;

  static Vocab build(int num_colors, int num_shapes);

  // Ids below this are the fixed specials+stopwords prefix shared by every
  // built table; ids at or above it are content words (or their aliases).
  static int first_content_id();

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
};

}  // namespace tdlab::synth
