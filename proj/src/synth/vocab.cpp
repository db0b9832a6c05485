#include "tdlab/synth/vocab.hpp"

#include <stdexcept>

#include "tdlab/common.hpp"

namespace tdlab::synth {

namespace {

const std::vector<std::string> kStopwords = {
    "the", "a",  "is",  "are", "there", "what",  "which", "how",
    "many", "where", "at", "in", "it", "of", "and", "with",
    "scene", "object", "objects", "row", "col", "relative", "to",
    "most", "often", "color", "shape", "holds"};

const std::vector<std::string> kColors = {"red",    "green",  "blue", "yellow",
                                          "purple", "orange", "cyan", "brown"};
const std::vector<std::string> kColorAliases = {"crimson", "emerald", "azure",
                                                "gold",    "violet",  "amber",
                                                "teal",    "sienna"};
const std::vector<std::string> kShapes = {"square", "circle",  "triangle", "star",
                                          "hexagon", "diamond", "cross",   "heart"};
const std::vector<std::string> kShapeAliases = {"box",     "disk",    "wedge",
                                                "starlet", "hexcell", "lozenge",
                                                "plus",    "valentine"};
const std::vector<std::string> kNumbers = {"zero", "one", "two",   "three", "four",
                                           "five", "six", "seven", "eight", "nine"};
const std::vector<std::string> kNumberAliases = {"naught",  "solo",    "duo",
                                                 "trio",    "quartet", "quintet",
                                                 "sextet",  "septet",  "octet",
                                                 "ennead"};
const std::vector<std::string> kRelations = {"left", "right", "above", "below"};
const std::vector<std::string> kRelationAliases = {"leftward", "rightward", "over",
                                                   "under"};

}  // namespace

int Vocab::first_content_id() { return 4 + static_cast<int>(kStopwords.size()); }

int Vocab::id_of(const std::string& word) const {
  for (int i = 0; i < size(); ++i)
    if (tokens[static_cast<std::size_t>(i)] == word) return i;
  throw std::out_of_range("unknown word: " + word);
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens[static_cast<std::size_t>(id)];
}

bool Vocab::is_stopword(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return stopword[static_cast<std::size_t>(id)];
}

int Vocab::alias(int id) const {
  auto it = alias_of.find(id);
  if (it == alias_of.end()) throw std::out_of_range("token has no alias");
  return it->second;
}

Vocab Vocab::build(int num_colors, int num_shapes) {
  if (num_colors < 1 || num_colors > static_cast<int>(kColors.size()))
    throw ConfigError("num_colors out of range [1, 8]");
  if (num_shapes < 1 || num_shapes > static_cast<int>(kShapes.size()))
    throw ConfigError("num_shapes out of range [1, 8]");

  Vocab v;
  auto push = [&v](const std::string& w, bool stop) {
    v.tokens.push_back(w);
    v.stopword.push_back(stop);
    return static_cast<int>(v.tokens.size()) - 1;
  };

  push("<pad>", true);
  push("<cls>", true);
  push("<img>", true);
  push("<mask>", true);
  for (const auto& w : kStopwords) push(w, true);

  std::vector<std::pair<int, std::string>> pending_aliases;
  auto push_content = [&](const std::string& w, const std::string& alias_word,
                          std::vector<int>& bucket) {
    int id = push(w, false);
    bucket.push_back(id);
    pending_aliases.emplace_back(id, alias_word);
  };

  for (int i = 0; i < num_colors; ++i)
    push_content(kColors[static_cast<std::size_t>(i)],
                 kColorAliases[static_cast<std::size_t>(i)], v.color_ids);
  for (int i = 0; i < num_shapes; ++i)
    push_content(kShapes[static_cast<std::size_t>(i)],
                 kShapeAliases[static_cast<std::size_t>(i)], v.shape_ids);
  for (std::size_t i = 0; i < kNumbers.size(); ++i)
    push_content(kNumbers[i], kNumberAliases[i], v.number_ids);
  for (std::size_t i = 0; i < kRelations.size(); ++i)
    push_content(kRelations[i], kRelationAliases[i], v.relation_ids);

  for (const auto& [id, alias_word] : pending_aliases) {
    int alias_id = push(alias_word, false);
    v.alias_of[id] = alias_id;
  }
  return v;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json j;
  j["tokens"] = tokens;
  nlohmann::json stops = nlohmann::json::array();
  for (int i = 0; i < size(); ++i)
    if (stopword[static_cast<std::size_t>(i)]) stops.push_back(i);
  j["stopword_ids"] = stops;
  nlohmann::json aliases = nlohmann::json::object();
  for (const auto& [k, a] : alias_of) aliases[std::to_string(k)] = a;
  j["alias_of"] = aliases;
  j["color_ids"] = color_ids;
  j["shape_ids"] = shape_ids;
  j["number_ids"] = number_ids;
  j["relation_ids"] = relation_ids;
  j["specials"] = {{"pad", kPad}, {"cls", kCls}, {"img", kImg}, {"mask", kMask}};
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  v.tokens = j.at("tokens").get<std::vector<std::string>>();
  v.stopword.assign(v.tokens.size(), false);
  for (int id : j.at("stopword_ids").get<std::vector<int>>())
    v.stopword[static_cast<std::size_t>(id)] = true;
  for (const auto& [k, a] : j.at("alias_of").items())
    v.alias_of[std::stoi(k)] = a.get<int>();
  v.color_ids = j.at("color_ids").get<std::vector<int>>();
  v.shape_ids = j.at("shape_ids").get<std::vector<int>>();
  v.number_ids = j.at("number_ids").get<std::vector<int>>();
  v.relation_ids = j.at("relation_ids").get<std::vector<int>>();
  return v;
}

}  // namespace tdlab::synth
