#include "tdlab/synth/world.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace tdlab::synth {

namespace fs = std::filesystem;

void Scene::validate(int num_shapes, int num_colors) const {
  if (grid_size < 1) throw ValidationError("scene: grid_size must be >= 1");
  std::size_t cap = static_cast<std::size_t>(grid_size) * grid_size;
  if (objects.empty() || objects.size() > cap)
    throw ValidationError("scene: object count out of range");
  std::set<std::pair<int, int>> cells;
  for (const auto& o : objects) {
    if (o.shape_id < 0 || o.shape_id >= num_shapes)
      throw ValidationError("scene: shape_id out of vocabulary");
    if (o.color_id < 0 || o.color_id >= num_colors)
      throw ValidationError("scene: color_id out of vocabulary");
    if (o.row < 0 || o.row >= grid_size || o.col < 0 || o.col >= grid_size)
      throw ValidationError("scene: object off the grid");
    if (!cells.emplace(o.row, o.col).second)
      throw ValidationError("scene: two objects share a cell");
  }
}

void GeneratorConfig::validate() const {
  if (train_count < 0 || val_count < 0 || test_count < 0)
    throw ConfigError("generator: negative split count");
  if (num_categories < 1 || num_categories > 7)
    throw ConfigError("generator: num_categories must be in [1, 7]");
  if (num_colors < 4) throw ConfigError("generator: need >= 4 colors for distinct answers");
  if (num_shapes < 4) throw ConfigError("generator: need >= 4 shapes for distinct answers");
  if (grid_size < 2 || grid_size > 10)
    throw ConfigError("generator: grid_size must be in [2, 10]");
  if (max_objects < 1 || max_objects > grid_size * grid_size || max_objects > 9)
    throw ConfigError("generator: max_objects out of range (counting answers use number words 0-9)");
  if (shortcut_strength < 0.0 || shortcut_strength > 1.0)
    throw ConfigError("generator: shortcut_strength must be in [0, 1]");
  if (!category_weights.empty() &&
      static_cast<int>(category_weights.size()) != num_categories)
    throw ConfigError("generator: category_weights size mismatch");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"train_count", train_count},   {"val_count", val_count},
          {"test_count", test_count},     {"num_categories", num_categories},
          {"num_colors", num_colors},     {"num_shapes", num_shapes},
          {"grid_size", grid_size},       {"max_objects", max_objects},
          {"shortcut_strength", shortcut_strength},
          {"category_weights", category_weights}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.train_count = j.at("train_count");
  c.val_count = j.at("val_count");
  c.test_count = j.at("test_count");
  c.num_categories = j.at("num_categories");
  c.num_colors = j.at("num_colors");
  c.num_shapes = j.at("num_shapes");
  c.grid_size = j.at("grid_size");
  c.max_objects = j.at("max_objects");
  c.shortcut_strength = j.at("shortcut_strength");
  c.category_weights = j.at("category_weights").get<std::vector<double>>();
  return c;
}

std::vector<int> category_targets(int total, int num_categories,
                                  const std::vector<double>& weights) {
  std::vector<double> w = weights;
  if (w.empty()) w.assign(static_cast<std::size_t>(num_categories), 1.0);
  double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<int> out(static_cast<std::size_t>(num_categories), 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < num_categories; ++c) {
    double exact = total * w[static_cast<std::size_t>(c)] / wsum;
    int floor_count = static_cast<int>(exact);
    out[static_cast<std::size_t>(c)] = floor_count;
    assigned += floor_count;
    remainders.emplace_back(exact - floor_count, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < total - assigned; ++i)
    out[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second)]++;
  return out;
}

namespace {

Scene sample_scene(Rng& rng, const GeneratorConfig& cfg, long scene_id) {
  Scene s;
  s.grid_size = cfg.grid_size;
  s.scene_id = scene_id;
  int n = 1 + rng.uniform_int(cfg.max_objects);
  std::vector<int> cells(static_cast<std::size_t>(cfg.grid_size) * cfg.grid_size);
  std::iota(cells.begin(), cells.end(), 0);
  rng.shuffle(cells);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.shape_id = rng.uniform_int(cfg.num_shapes);
    o.color_id = rng.uniform_int(cfg.num_colors);
    o.row = cells[static_cast<std::size_t>(i)] / cfg.grid_size;
    o.col = cells[static_cast<std::size_t>(i)] % cfg.grid_size;
    s.objects.push_back(o);
  }
  return s;
}

// Sample `want` distinct values from [0, n) excluding `taboo`.
std::vector<int> sample_distinct(Rng& rng, int n, int want, int taboo) {
  std::vector<int> pool;
  for (int i = 0; i < n; ++i)
    if (i != taboo) pool.push_back(i);
  if (static_cast<int>(pool.size()) < want)
    throw ConfigError("vocabulary too small to build distinct answers");
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(want));
  return pool;
}

struct QaDraft {
  TextSequence question;
  TextSequence gold;
  std::vector<TextSequence> distractors;
};

// Shapes with exactly one object in the scene.
std::vector<int> unique_shapes(const Scene& s) {
  std::map<int, int> counts;
  for (const auto& o : s.objects) counts[o.shape_id]++;
  std::vector<int> out;
  for (const auto& [k, c] : counts)
    if (c == 1) out.push_back(k);
  return out;
}

std::vector<int> unique_colors(const Scene& s) {
  std::map<int, int> counts;
  for (const auto& o : s.objects) counts[o.color_id]++;
  std::vector<int> out;
  for (const auto& [k, c] : counts)
    if (c == 1) out.push_back(k);
  return out;
}

// Objects whose (color, shape) descriptor is unique in the scene.
std::vector<int> unique_descriptor_objects(const Scene& s) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& o : s.objects) counts[{o.color_id, o.shape_id}]++;
  std::vector<int> out;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    if (counts[{o.color_id, o.shape_id}] == 1) out.push_back(static_cast<int>(i));
  }
  return out;
}

const SceneObject* find_object(const Scene& s, int idx) {
  return &s.objects[static_cast<std::size_t>(idx)];
}

std::optional<QaDraft> build_qa(Rng& rng, const GeneratorConfig& cfg,
                                const Vocab& v, const Scene& s, int category) {
  auto W = [&v](const std::string& w) { return v.id_of(w); };
  QaDraft d;
  switch (category) {
    case 0: {  // attribute: color of a uniquely-shaped object
      auto shapes = unique_shapes(s);
      if (shapes.empty()) return std::nullopt;
      int shape = shapes[static_cast<std::size_t>(rng.uniform_int(
          static_cast<int>(shapes.size())))];
      int color = -1;
      for (const auto& o : s.objects)
        if (o.shape_id == shape) color = o.color_id;
      d.question = {W("what"), W("color"), W("is"), W("the"), v.shape_ids[shape]};
      d.gold = {W("the"), v.shape_ids[shape], W("is"), v.color_ids[color]};
      for (int c : sample_distinct(rng, cfg.num_colors, 3, color))
        d.distractors.push_back({W("the"), v.shape_ids[shape], W("is"), v.color_ids[c]});
      return d;
    }
    case 1: {  // attribute: shape of a uniquely-colored object
      auto colors = unique_colors(s);
      if (colors.empty()) return std::nullopt;
      int color = colors[static_cast<std::size_t>(rng.uniform_int(
          static_cast<int>(colors.size())))];
      int shape = -1;
      for (const auto& o : s.objects)
        if (o.color_id == color) shape = o.shape_id;
      d.question = {W("what"), W("shape"), W("is"), W("the"), v.color_ids[color],
                    W("object")};
      d.gold = {W("the"), v.color_ids[color], W("object"), W("is"), W("a"),
                v.shape_ids[shape]};
      for (int sh : sample_distinct(rng, cfg.num_shapes, 3, shape))
        d.distractors.push_back({W("the"), v.color_ids[color], W("object"), W("is"),
                                 W("a"), v.shape_ids[sh]});
      return d;
    }
    case 2: {  // counting objects of a shape
      int shape = rng.uniform_int(cfg.num_shapes);
      int count = 0;
      for (const auto& o : s.objects)
        if (o.shape_id == shape) count++;
      d.question = {W("how"), W("many"), v.shape_ids[shape], W("objects"),
                    W("are"), W("there")};
      d.gold = {W("there"), W("are"), v.number_ids[count]};
      for (int n : sample_distinct(rng, 10, 3, count))
        d.distractors.push_back({W("there"), W("are"), v.number_ids[n]});
      return d;
    }
    case 3: {  // row of a uniquely-described object
      auto objs = unique_descriptor_objects(s);
      if (objs.empty()) return std::nullopt;
      const SceneObject* o = find_object(
          s, objs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(objs.size())))]);
      d.question = {W("which"), W("row"), W("holds"), W("the"),
                    v.color_ids[o->color_id], v.shape_ids[o->shape_id]};
      d.gold = {W("row"), v.number_ids[o->row]};
      for (int n : sample_distinct(rng, 10, 3, o->row))
        d.distractors.push_back({W("row"), v.number_ids[n]});
      return d;
    }
    case 4: {  // relation between two uniquely-described objects
      auto objs = unique_descriptor_objects(s);
      if (objs.size() < 2) return std::nullopt;
      rng.shuffle(objs);
      const SceneObject* a = find_object(s, objs[0]);
      const SceneObject* b = find_object(s, objs[1]);
      int rel;  // 0 left, 1 right, 2 above, 3 below (of a relative to b)
      if (a->row != b->row) {
        rel = a->row < b->row ? 2 : 3;
      } else {
        rel = a->col < b->col ? 0 : 1;
      }
      d.question = {W("where"), W("is"), W("the"), v.color_ids[a->color_id],
                    v.shape_ids[a->shape_id], W("relative"), W("to"), W("the"),
                    v.color_ids[b->color_id], v.shape_ids[b->shape_id]};
      d.gold = {W("it"), W("is"), v.relation_ids[static_cast<std::size_t>(rel)]};
      for (int r : sample_distinct(rng, 4, 3, rel))
        d.distractors.push_back({W("it"), W("is"), v.relation_ids[static_cast<std::size_t>(r)]});
      return d;
    }
    case 5: {  // identify the object at a position
      int oi = rng.uniform_int(static_cast<int>(s.objects.size()));
      const SceneObject* o = find_object(s, oi);
      d.question = {W("what"), W("is"), W("at"), W("row"), v.number_ids[o->row],
                    W("col"), v.number_ids[o->col]};
      d.gold = {W("a"), v.color_ids[o->color_id], v.shape_ids[o->shape_id]};
      std::set<std::pair<int, int>> used = {{o->color_id, o->shape_id}};
      int guard = 0;
      while (d.distractors.size() < 3) {
        int c = rng.uniform_int(cfg.num_colors);
        int sh = rng.uniform_int(cfg.num_shapes);
        if (used.emplace(c, sh).second)
          d.distractors.push_back({W("a"), v.color_ids[c], v.shape_ids[sh]});
        if (++guard > 1000)
          throw ConfigError("vocabulary too small to build distinct answers");
      }
      return d;
    }
    case 6: {  // strictly most frequent shape
      std::map<int, int> counts;
      for (const auto& o : s.objects) counts[o.shape_id]++;
      int best = -1, best_count = -1;
      bool strict = false;
      for (const auto& [sh, c] : counts) {
        if (c > best_count) {
          best = sh;
          best_count = c;
          strict = true;
        } else if (c == best_count) {
          strict = false;
        }
      }
      if (!strict) return std::nullopt;
      d.question = {W("which"), W("shape"), W("is"), W("most"), W("often"),
                    W("in"), W("the"), W("scene")};
      d.gold = {W("the"), v.shape_ids[best]};
      for (int sh : sample_distinct(rng, cfg.num_shapes, 3, best))
        d.distractors.push_back({W("the"), v.shape_ids[sh]});
      return d;
    }
    default:
      throw ConfigError("unknown question category");
  }
}

Instance make_instance(const GeneratorConfig& cfg, const Vocab& v,
                       std::uint64_t seed, long instance_id, int category) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(instance_id)));
  for (int attempt = 0; attempt < 500; ++attempt) {
    Scene s = sample_scene(rng, cfg, instance_id);
    auto draft = build_qa(rng, cfg, v, s, category);
    if (!draft) continue;
    Instance inst;
    inst.scene = std::move(s);
    inst.question = std::move(draft->question);
    inst.category = category;
    inst.instance_id = instance_id;
    inst.gold_index = rng.uniform_int(4);
    int di = 0;
    for (int k = 0; k < 4; ++k) {
      if (k == inst.gold_index) {
        inst.answers[static_cast<std::size_t>(k)] = draft->gold;
      } else {
        inst.answers[static_cast<std::size_t>(k)] =
            draft->distractors[static_cast<std::size_t>(di++)];
      }
    }
    return inject_shortcut(inst, cfg.shortcut_strength);
  }
  throw ConfigError("could not satisfy scene constraints for category " +
                    std::to_string(category));
}

std::vector<Instance> make_split(const GeneratorConfig& cfg, const Vocab& v,
                                 std::uint64_t seed, long first_id, int count) {
  std::vector<int> targets = category_targets(count, cfg.num_categories,
                                              cfg.category_weights);
  std::vector<int> cats;
  for (int c = 0; c < cfg.num_categories; ++c)
    cats.insert(cats.end(), static_cast<std::size_t>(targets[static_cast<std::size_t>(c)]), c);
  Rng order_rng(mix_seed(seed, static_cast<std::uint64_t>(first_id) + 0x51ULL));
  order_rng.shuffle(cats);
  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(make_instance(cfg, v, seed, first_id + i,
                                cats[static_cast<std::size_t>(i)]));
  return out;
}

}  // namespace

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.vocab = Vocab::build(config.num_colors, config.num_shapes);
  long id = 0;
  ds.train = make_split(config, ds.vocab, seed, id, config.train_count);
  id += config.train_count;
  ds.val = make_split(config, ds.vocab, seed, id, config.val_count);
  id += config.val_count;
  ds.test = make_split(config, ds.vocab, seed, id, config.test_count);
  return ds;
}

namespace {

// Content unigrams and adjacent-content bigrams occurring in the question.
// The specials+stopwords prefix of the token table is fixed, so content
// membership is decidable from the id alone.
std::vector<TextSequence> shortcut_candidates(const TextSequence& question) {
  std::vector<TextSequence> out;
  auto is_content = [](int id) { return id >= Vocab::first_content_id(); };
  for (std::size_t i = 0; i < question.size(); ++i)
    if (is_content(question[i])) out.push_back({question[i]});
  for (std::size_t i = 0; i + 1 < question.size(); ++i)
    if (is_content(question[i]) && is_content(question[i + 1]))
      out.push_back({question[i], question[i + 1]});
  return out;
}

Rng injection_rng(const Instance& inst) {
  std::uint64_t h = fnv1a64("shortcut-injection");
  h = mix_seed(h, static_cast<std::uint64_t>(inst.instance_id));
  h = mix_seed(h, fnv1a64(inst.question));
  return Rng(h);
}

}  // namespace

Instance inject_shortcut(const Instance& instance, double strength) {
  if (strength < 0.0 || strength > 1.0)
    throw ValidationError("inject_shortcut: strength must be in [0, 1]");
  Instance out = instance;
  out.shortcut_strength = strength;
  if (strength == 0.0) return out;
  Rng rng = injection_rng(instance);
  double u = rng.uniform();
  if (u >= strength) return out;
  auto candidates = shortcut_candidates(instance.question);
  if (candidates.empty()) return out;
  const TextSequence& ngram =
      candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
  TextSequence& gold = out.answers[static_cast<std::size_t>(out.gold_index)];
  int pos = rng.uniform_int(static_cast<int>(gold.size()) + 1);
  gold.insert(gold.begin() + pos, ngram.begin(), ngram.end());
  return out;
}

Instance remove_injected_shortcut(const Instance& instance) {
  Instance out = instance;
  if (instance.shortcut_strength == 0.0) return out;
  out.shortcut_strength = 0.0;
  Rng rng = injection_rng(instance);
  double u = rng.uniform();
  if (u >= instance.shortcut_strength) return out;
  auto candidates = shortcut_candidates(instance.question);
  if (candidates.empty()) return out;
  const TextSequence& ngram =
      candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
  TextSequence& gold = out.answers[static_cast<std::size_t>(out.gold_index)];
  int n = static_cast<int>(ngram.size());
  int pos = rng.uniform_int(static_cast<int>(gold.size()) - n + 1);
  for (int i = 0; i < n; ++i) {
    if (gold[static_cast<std::size_t>(pos + i)] != ngram[static_cast<std::size_t>(i)])
      throw std::logic_error("shortcut replay mismatch; instance was modified");
  }
  gold.erase(gold.begin() + pos, gold.begin() + pos + n);
  return out;
}

Eigen::MatrixXd render_scene_features(const Scene& scene, int num_shapes,
                                      int num_colors) {
  scene.validate(num_shapes, num_colors);
  int d = region_feature_dim(num_shapes, num_colors);
  int n = static_cast<int>(scene.objects.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n + 1, d);
  for (int i = 0; i < n; ++i) {
    const auto& o = scene.objects[static_cast<std::size_t>(i)];
    out(i, o.shape_id) = 1.0;
    out(i, num_shapes + o.color_id) = 1.0;
    out(i, num_shapes + num_colors) = (o.row + 0.5) / scene.grid_size;
    out(i, num_shapes + num_colors + 1) = (o.col + 0.5) / scene.grid_size;
  }
  out.row(n) = out.topRows(n).colwise().mean();
  return out;
}

TextSequence scene_caption(const Scene& scene, const Vocab& vocab) {
  auto W = [&vocab](const std::string& w) { return vocab.id_of(w); };
  TextSequence t = {W("a"), W("scene"), W("with")};
  bool first = true;
  for (const auto& o : scene.objects) {
    if (!first) t.push_back(W("and"));
    first = false;
    t.push_back(W("a"));
    t.push_back(vocab.color_ids[static_cast<std::size_t>(o.color_id)]);
    t.push_back(vocab.shape_ids[static_cast<std::size_t>(o.shape_id)]);
    t.push_back(W("at"));
    t.push_back(W("row"));
    t.push_back(vocab.number_ids[static_cast<std::size_t>(o.row)]);
    t.push_back(W("col"));
    t.push_back(vocab.number_ids[static_cast<std::size_t>(o.col)]);
  }
  return t;
}

std::vector<EntailmentInstance> generate_entailment(std::span<const Instance> pool,
                                                    const Vocab& vocab, int count,
                                                    std::uint64_t seed) {
  if (pool.empty()) throw ValidationError("generate_entailment: empty pool");
  int num_shapes = static_cast<int>(vocab.shape_ids.size());
  int num_colors = static_cast<int>(vocab.color_ids.size());
  auto W = [&vocab](const std::string& w) { return vocab.id_of(w); };
  std::vector<EntailmentInstance> out;
  Rng rng(mix_seed(seed, 0xE17A11ULL));
  std::size_t pi = 0;
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++guard > count * 50 + 1000)
      throw ConfigError("generate_entailment: could not satisfy class constraints");
    const Scene& s = pool[pi % pool.size()].scene;
    pi++;
    int want = static_cast<int>(out.size()) % 3;  // 0 contra, 1 neutral, 2 entail
    std::set<int> present_shapes;
    for (const auto& o : s.objects) present_shapes.insert(o.shape_id);
    EntailmentInstance e;
    e.scene = s;
    e.label = want;
    if (want == 2) {
      const auto& o = s.objects[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(s.objects.size())))];
      e.hypothesis = {W("there"), W("is"), W("a"), vocab.color_ids[o.color_id],
                      vocab.shape_ids[o.shape_id]};
    } else if (want == 0) {
      const auto& o = s.objects[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(s.objects.size())))];
      std::set<int> colors_of_shape;
      for (const auto& q : s.objects)
        if (q.shape_id == o.shape_id) colors_of_shape.insert(q.color_id);
      if (static_cast<int>(colors_of_shape.size()) >= num_colors) continue;
      int c;
      do { c = rng.uniform_int(num_colors); } while (colors_of_shape.count(c));
      e.hypothesis = {W("there"), W("is"), W("a"), vocab.color_ids[c],
                      vocab.shape_ids[o.shape_id]};
    } else {
      if (static_cast<int>(present_shapes.size()) >= num_shapes) continue;
      int sh;
      do { sh = rng.uniform_int(num_shapes); } while (present_shapes.count(sh));
      int c = rng.uniform_int(num_colors);
      e.hypothesis = {W("there"), W("is"), W("a"), vocab.color_ids[c],
                      vocab.shape_ids[sh]};
    }
    out.push_back(std::move(e));
  }
  return out;
}

int token_overlap(const TextSequence& question, const TextSequence& answer) {
  std::set<int> q(question.begin(), question.end());
  int n = 0;
  for (int id : answer)
    if (q.count(id)) n++;
  return n;
}

nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : inst.scene.objects)
    objs.push_back({o.shape_id, o.color_id, o.row, o.col});
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& a : inst.answers) answers.push_back(a);
  return {{"instance_id", inst.instance_id},
          {"scene", {{"grid_size", inst.scene.grid_size}, {"objects", objs}}},
          {"question", inst.question},
          {"answers", answers},
          {"gold_index", inst.gold_index},
          {"category", inst.category},
          {"shortcut_strength", inst.shortcut_strength}};
}

Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.instance_id = j.at("instance_id");
  inst.scene.grid_size = j.at("scene").at("grid_size");
  inst.scene.scene_id = inst.instance_id;
  for (const auto& o : j.at("scene").at("objects")) {
    SceneObject so;
    so.shape_id = o.at(0);
    so.color_id = o.at(1);
    so.row = o.at(2);
    so.col = o.at(3);
    inst.scene.objects.push_back(so);
  }
  inst.question = j.at("question").get<TextSequence>();
  auto answers = j.at("answers");
  if (answers.size() != 4) throw ValidationError("instance: need exactly 4 answers");
  for (std::size_t k = 0; k < 4; ++k)
    inst.answers[k] = answers[k].get<TextSequence>();
  inst.gold_index = j.at("gold_index");
  if (inst.gold_index < 0 || inst.gold_index > 3)
    throw ValidationError("instance: gold_index out of range");
  inst.category = j.at("category");
  inst.shortcut_strength = j.at("shortcut_strength");
  return inst;
}

void write_jsonl(const fs::path& path, std::span<const Instance> list) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& inst : list) out << instance_to_json(inst).dump() << "\n";
}

std::vector<Instance> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Instance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(instance_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  write_jsonl(dir / "train.jsonl", ds.train);
  write_jsonl(dir / "val.jsonl", ds.val);
  write_jsonl(dir / "test.jsonl", ds.test);
  std::ofstream vo(dir / "vocab.json", std::ios::trunc);
  vo << ds.vocab.to_json().dump(2) << "\n";
  std::ofstream co(dir / "gen_config.json", std::ios::trunc);
  co << ds.config.to_json().dump(2) << "\n";
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  std::ifstream ci(dir / "gen_config.json");
  if (!ci) throw std::runtime_error("missing gen_config.json in " + dir.string());
  ds.config = GeneratorConfig::from_json(nlohmann::json::parse(ci));
  std::ifstream vi(dir / "vocab.json");
  if (!vi) throw std::runtime_error("missing vocab.json in " + dir.string());
  ds.vocab = Vocab::from_json(nlohmann::json::parse(vi));
  ds.train = read_jsonl(dir / "train.jsonl");
  ds.val = read_jsonl(dir / "val.jsonl");
  ds.test = read_jsonl(dir / "test.jsonl");
  return ds;
}

}  // namespace tdlab::synth
