#include "tdlab/cli/config.hpp"

#include <fstream>
#include <sstream>

namespace tdlab::cli {

namespace {

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// removes a trailing comment that is not inside a string literal
std::string strip_comment(const std::string& s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

nlohmann::json parse_scalar(const std::string& raw, int line) {
  std::string v = strip(raw);
  if (v.empty()) fail(line, "empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') fail(line, "unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  try {
    if (v.find_first_of(".eE") != std::string::npos &&
        v.find_first_not_of("+-0123456789.eE") == std::string::npos) {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used == v.size()) return d;
    }
    std::size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(line, "cannot parse value: " + v);
}

nlohmann::json parse_value(const std::string& raw, int line) {
  std::string v = strip(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') fail(line, "unterminated array");
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string cur;
    bool in_string = false;
    for (char c : inner) {
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        if (!strip(cur).empty()) arr.push_back(parse_scalar(cur, line));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!strip(cur).empty()) arr.push_back(parse_scalar(cur, line));
    return arr;
  }
  return parse_scalar(v, line);
}

nlohmann::json* descend(nlohmann::json& root, const std::string& dotted, int line) {
  nlohmann::json* cur = &root;
  std::istringstream parts(dotted);
  std::string key;
  while (std::getline(parts, key, '.')) {
    key = strip(key);
    if (key.empty()) fail(line, "empty section name component");
    if (!cur->contains(key)) (*cur)[key] = nlohmann::json::object();
    cur = &(*cur)[key];
    if (cur->is_array()) cur = &cur->back();
  }
  return cur;
}

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    line_no++;
    std::string line = strip(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      bool array_table = line.size() > 1 && line[1] == '[';
      std::size_t close = line.find(array_table ? "]]" : "]");
      if (close == std::string::npos) fail(line_no, "unterminated section header");
      std::string name = strip(line.substr(array_table ? 2 : 1,
                                           close - (array_table ? 2 : 1)));
      if (name.empty()) fail(line_no, "empty section name");
      if (array_table) {
        nlohmann::json* parent = &root;
        std::size_t dot = name.rfind('.');
        std::string leaf = name;
        if (dot != std::string::npos) {
          parent = descend(root, name.substr(0, dot), line_no);
          leaf = strip(name.substr(dot + 1));
        }
        if (!parent->contains(leaf)) (*parent)[leaf] = nlohmann::json::array();
        if (!(*parent)[leaf].is_array()) fail(line_no, "section conflicts with value");
        (*parent)[leaf].push_back(nlohmann::json::object());
        current = &(*parent)[leaf].back();
      } else {
        current = descend(root, name, line_no);
        if (!current->is_object()) fail(line_no, "section conflicts with value");
      }
      continue;
    }
    std::size_t eq = std::string::npos;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '=' && !in_string) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    std::string key = strip(line.substr(0, eq));
    if (key.empty()) fail(line_no, "empty key");
    (*current)[key] = parse_value(line.substr(eq + 1), line_no);
  }
  return root;
}

nlohmann::json parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml_subset(ss.str());
}

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.schema_version = get_or(j, "schema_version", 1);
  c.name = get_or<std::string>(j, "name", "experiment");
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = get_or<std::string>(j, "out_dir", "runs/out");

  nlohmann::json d = j.value("dataset", nlohmann::json::object());
  c.dataset_seed = get_or<std::uint64_t>(d, "seed", 1);
  c.dataset.train_count = get_or(d, "train", 200);
  c.dataset.val_count = get_or(d, "val", 50);
  c.dataset.test_count = get_or(d, "test", 100);
  c.dataset.num_categories = get_or(d, "categories", 7);
  c.dataset.num_colors = get_or(d, "colors", 6);
  c.dataset.num_shapes = get_or(d, "shapes", 6);
  c.dataset.grid_size = get_or(d, "grid", 4);
  c.dataset.max_objects = get_or(d, "max_objects", 4);
  c.dataset.shortcut_strength = get_or(d, "shortcut_strength", 0.0);
  if (d.contains("category_weights"))
    c.dataset.category_weights = d.at("category_weights").get<std::vector<double>>();

  nlohmann::json t = j.value("teacher", nlohmann::json::object());
  c.teacher_d_embed = get_or(t, "d_embed", 32);
  c.teacher_text_layers = get_or(t, "text_layers", 2);
  c.teacher_vision_layers = get_or(t, "vision_layers", 2);
  c.teacher_heads = get_or(t, "heads", 4);
  c.teacher_pretrain_steps = get_or(t, "steps", 600);
  c.teacher_batch_size = get_or(t, "batch", 32);
  c.teacher_lr = get_or(t, "lr", 1e-3);
  c.teacher_temperature = get_or(t, "temperature", 0.07);
  c.teacher_seed = get_or<std::uint64_t>(t, "seed", 7);
  c.zero_shot_mode = get_or<std::string>(t, "zero_shot_mode", "iqa");

  nlohmann::json s = j.value("student", nlohmann::json::object());
  c.student_preset = get_or<std::string>(s, "preset", "small");

  nlohmann::json di = j.value("distill", nlohmann::json::object());
  c.distill = distill::DistillConfig::with_weight(get_or(di, "w", 0.05));
  if (di.contains("w_prime")) c.distill.w_prime = di.at("w_prime").get<double>();
  c.distill.temperature = get_or(di, "T", 1.0);
  c.distill.tokens_selected = get_or(di, "m", 2);
  std::string scope = get_or<std::string>(di, "cw_scope", "all_choices");
  if (scope == "all_choices") {
    c.distill.cw_scope = distill::CwScope::AllChoices;
  } else if (scope == "gold_only") {
    c.distill.cw_scope = distill::CwScope::GoldOnly;
  } else {
    throw ConfigError("distill.cw_scope: unknown value " + scope);
  }
  std::string red = get_or<std::string>(di, "l1_reduction", "mean");
  if (red == "mean") {
    c.distill.l1_reduction = distill::Reduction::Mean;
  } else if (red == "sum") {
    c.distill.l1_reduction = distill::Reduction::Sum;
  } else {
    throw ConfigError("distill.l1_reduction: unknown value " + red);
  }
  c.distill.enable_vision_term = get_or(di, "vision_term", true);
  c.distill.enable_text_term = get_or(di, "text_term", true);
  c.keyword_n_max = get_or(di, "n_max", 2);

  nlohmann::json p = j.value("plan", nlohmann::json::object());
  c.plan.regime = evalproto::plan_regime_from_string(
      get_or<std::string>(p, "regime", "full"));
  if (p.contains("per_category"))
    c.plan.per_category_count = p.at("per_category").get<int>();
  c.plan.seed = get_or<std::uint64_t>(p, "seed", 11);

  nlohmann::json e = j.value("eval", nlohmann::json::object());
  if (e.contains("modes")) c.eval_modes = e.at("modes").get<std::vector<std::string>>();

  nlohmann::json tr = j.value("train", nlohmann::json::object());
  c.epochs = get_or(tr, "epochs", 15);
  c.af_epochs = get_or(tr, "af_epochs", 2);
  c.lr = get_or(tr, "lr", 3e-4);
  c.optimizer = get_or<std::string>(tr, "optimizer", "adam");
  c.warmup_steps = get_or(tr, "warmup", 20);
  c.batch_size = get_or(tr, "batch", 8);
  c.patience = get_or(tr, "patience", 5);
  c.unlabeled_per_epoch = get_or(tr, "unlabeled_per_epoch", 0);

  if (j.contains("regime")) {
    for (const auto& r : j.at("regime"))
      c.regime_names.push_back(r.at("name").get<std::string>());
  }
  nlohmann::json a = j.value("analysis", nlohmann::json::object());
  c.run_analysis = get_or(a, "enabled", true);
  c.trace_samples = get_or(a, "trace_samples", 5);
  return c;
}

ExperimentConfig ExperimentConfig::from_toml_file(const std::filesystem::path& path) {
  return from_json(parse_toml_file(path));
}

std::vector<std::string> ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  if (schema_version != 1)
    problems.push_back("schema_version: expected 1, got " +
                       std::to_string(schema_version));
  if (seeds.empty()) problems.push_back("seeds: must list at least one seed");
  try {
    dataset.validate();
  } catch (const std::exception& e) {
    problems.push_back(std::string("dataset: ") + e.what());
  }
  try {
    distill.validate();
  } catch (const std::exception& e) {
    problems.push_back(std::string("distill: ") + e.what());
  }
  if (student_preset != "small" && student_preset != "base" && student_preset != "large")
    problems.push_back("student.preset: unknown preset " + student_preset);
  if (zero_shot_mode != "iqa" && zero_shot_mode != "ia")
    problems.push_back("teacher.zero_shot_mode: must be iqa or ia");
  for (const auto& m : eval_modes)
    if (m != "std" && m != "sm" && m != "em" && m != "im")
      problems.push_back("eval.modes: unknown mode " + m);
  if (regime_names.empty()) problems.push_back("regime: at least one [[regime]] required");
  for (const auto& r : regime_names) {
    try {
      regimes::regime_from_string(r);
    } catch (const std::exception& e) {
      problems.push_back(std::string("regime.name: ") + e.what());
    }
  }
  bool needs_count = plan.regime == evalproto::PlanRegime::LowShotA ||
                     plan.regime == evalproto::PlanRegime::LowShotB ||
                     plan.regime == evalproto::PlanRegime::Semi;
  if (needs_count) {
    if (!plan.per_category_count.has_value()) {
      problems.push_back("plan.per_category: required for low-shot and semi plans");
    } else {
      auto targets = synth::category_targets(dataset.train_count,
                                             dataset.num_categories,
                                             dataset.category_weights);
      for (int cat = 0; cat < dataset.num_categories; ++cat) {
        if (targets[static_cast<std::size_t>(cat)] < *plan.per_category_count) {
          problems.push_back("plan.per_category: category " + std::to_string(cat) +
                             " has only " +
                             std::to_string(targets[static_cast<std::size_t>(cat)]) +
                             " training instances");
          break;
        }
      }
    }
  }
  bool has_semi = false;
  for (const auto& r : regime_names)
    if (r == "semi_supervised") has_semi = true;
  if (has_semi && plan.regime != evalproto::PlanRegime::Semi)
    problems.push_back("plan.regime: semi_supervised regime requires plan regime 'semi'");
  if (optimizer != "adam" && optimizer != "sgd")
    problems.push_back("train.optimizer: must be adam or sgd");
  if (epochs < 0 || af_epochs < 0) problems.push_back("train.epochs: negative");
  if (batch_size < 1) problems.push_back("train.batch: must be >= 1");
  return problems;
}

regimes::RegimeSpec ExperimentConfig::regime_spec(const std::string& name,
                                                  std::uint64_t seed) const {
  regimes::RegimeSpec spec =
      regimes::RegimeSpec::make(regimes::regime_from_string(name), distill);
  spec.epochs = epochs;
  spec.af_epochs = af_epochs;
  spec.lr = lr;
  spec.optimizer = optimizer == "sgd" ? nn::OptimKind::Sgd : nn::OptimKind::Adam;
  spec.warmup_steps = warmup_steps;
  spec.batch_size = batch_size;
  spec.patience = patience;
  spec.seed = seed;
  spec.unlabeled_per_epoch = unlabeled_per_epoch;
  spec.normalize();
  return spec;
}

teacher::TeacherConfig ExperimentConfig::teacher_config(const synth::Dataset& ds) const {
  teacher::TeacherConfig tc = teacher::TeacherConfig::for_dataset(ds);
  tc.d_embed = teacher_d_embed;
  tc.text_layers = teacher_text_layers;
  tc.vision_layers = teacher_vision_layers;
  tc.heads = teacher_heads;
  tc.pretrain_steps = teacher_pretrain_steps;
  tc.batch_size = teacher_batch_size;
  tc.lr = teacher_lr;
  tc.temperature_contrastive = teacher_temperature;
  return tc;
}

}  // namespace tdlab::cli
