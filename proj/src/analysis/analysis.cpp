#include "tdlab/analysis/analysis.hpp"

#include <fstream>
#include <sstream>

namespace tdlab::analysis {

double MITable::mean_abs_difference() const {
  return (mi_vision - mi_text).cwiseAbs().mean();
}

std::string MITable::to_csv() const {
  std::ostringstream out;
  out << "layer,head,mi_vision,mi_text\n";
  for (Eigen::Index l = 0; l < mi_vision.rows(); ++l)
    for (Eigen::Index h = 0; h < mi_vision.cols(); ++h)
      out << l << ',' << h << ',' << format_double(mi_vision(l, h)) << ','
          << format_double(mi_text(l, h)) << '\n';
  return out.str();
}

MITable MITable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  struct Row {
    int l, h;
    double v, t;
  };
  std::vector<Row> rows;
  int max_l = -1, max_h = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f;
    Row r{};
    std::getline(ls, f, ',');
    r.l = std::stoi(f);
    std::getline(ls, f, ',');
    r.h = std::stoi(f);
    std::getline(ls, f, ',');
    r.v = std::stod(f);
    std::getline(ls, f, ',');
    r.t = std::stod(f);
    max_l = std::max(max_l, r.l);
    max_h = std::max(max_h, r.h);
    rows.push_back(r);
  }
  MITable out;
  out.mi_vision = Eigen::MatrixXd::Zero(max_l + 1, max_h + 1);
  out.mi_text = Eigen::MatrixXd::Zero(max_l + 1, max_h + 1);
  for (const auto& r : rows) {
    out.mi_vision(r.l, r.h) = r.v;
    out.mi_text(r.l, r.h) = r.t;
  }
  out.per_layer_mean_vision = out.mi_vision.rowwise().mean();
  out.per_layer_mean_text = out.mi_text.rowwise().mean();
  return out;
}

MITable modality_importance_from_attention(const nn::AttentionRecord& attn,
                                           int text_len) {
  if (attn.maps.empty()) throw ValidationError("modality_importance: no attentions");
  MITable out;
  out.mi_vision = Eigen::MatrixXd::Zero(attn.layers, attn.heads);
  out.mi_text = Eigen::MatrixXd::Zero(attn.layers, attn.heads);
  // layout: [CLS] text[0..z] [IMG] regions...
  int s = static_cast<int>(attn.maps[0].rows());
  int text_begin = 1, text_end = 1 + text_len;       // exclusive
  int vis_begin = text_end, vis_end = s;             // [IMG] + regions
  for (int l = 0; l < attn.layers; ++l) {
    for (int h = 0; h < attn.heads; ++h) {
      const Eigen::MatrixXd& a = attn.at(l, h);
      double mass_t = a.row(0).segment(text_begin, text_end - text_begin).sum();
      double mass_v = a.row(0).segment(vis_begin, vis_end - vis_begin).sum();
      double denom = mass_t + mass_v;
      out.mi_vision(l, h) = denom > 0 ? mass_v / denom : 0.5;
      out.mi_text(l, h) = denom > 0 ? mass_t / denom : 0.5;
    }
  }
  out.per_layer_mean_vision = out.mi_vision.rowwise().mean();
  out.per_layer_mean_text = out.mi_text.rowwise().mean();
  return out;
}

MITable modality_importance(const student::StudentModel& model,
                            std::span<const synth::Instance> probe_split) {
  if (probe_split.empty())
    throw ValidationError("modality_importance: empty probe split");
  MITable acc;
  bool first = true;
  for (const auto& inst : probe_split) {
    synth::TextSequence text = inst.question;
    const auto& gold = inst.answers[static_cast<std::size_t>(inst.gold_index)];
    text.insert(text.end(), gold.begin(), gold.end());
    student::StudentOutput out =
        model.forward(model.render_regions(inst.scene), text, /*want_attentions=*/true);
    MITable one = modality_importance_from_attention(out.attentions,
                                                     static_cast<int>(text.size()));
    if (first) {
      acc = one;
      first = false;
    } else {
      acc.mi_vision += one.mi_vision;
      acc.mi_text += one.mi_text;
    }
  }
  double n = static_cast<double>(probe_split.size());
  acc.mi_vision /= n;
  acc.mi_text /= n;
  acc.per_layer_mean_vision = acc.mi_vision.rowwise().mean();
  acc.per_layer_mean_text = acc.mi_text.rowwise().mean();
  return acc;
}

nlohmann::json attention_trace(const student::StudentModel& model_pre,
                               const student::StudentModel& model_post,
                               const teacher::TeacherModel& teacher,
                               const synth::Instance& inst,
                               const distill::DistillConfig& config,
                               const distill::CorpusStats& stats) {
  synth::TextSequence text = inst.question;
  const auto& gold = inst.answers[static_cast<std::size_t>(inst.gold_index)];
  text.insert(text.end(), gold.begin(), gold.end());

  auto cls_attention = [&text](const student::StudentModel& m,
                               const synth::Instance& i) {
    student::StudentOutput out =
        m.forward(m.render_regions(i.scene), text, /*want_attentions=*/true);
    // mean over layers and heads of the [CLS] row at each text position
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(text.size()));
    const auto& attn = out.attentions;
    for (int l = 0; l < attn.layers; ++l)
      for (int h = 0; h < attn.heads; ++h)
        for (std::size_t t = 0; t < text.size(); ++t)
          mass(static_cast<Eigen::Index>(t)) +=
              attn.at(l, h)(0, 1 + static_cast<Eigen::Index>(t));
    mass /= static_cast<double>(attn.layers * attn.heads);
    return mass;
  };

  Eigen::VectorXd pre = cls_attention(model_pre, inst);
  Eigen::VectorXd post = cls_attention(model_post, inst);

  Eigen::VectorXd image_emb = teacher.encode_image(inst.scene);
  teacher::TextEncoding enc = teacher.encode_text(text);
  distill::TokenScores scores = distill::compute_token_scores(
      image_emb, enc.tokens, text, stats, stats.params().n_max);
  std::vector<int> selected;
  if (!scores.no_signal)
    selected = distill::select_tokens(scores.combined, config.tokens_selected);

  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t t = 0; t < text.size(); ++t) {
    bool sel = std::find(selected.begin(), selected.end(), static_cast<int>(t)) !=
               selected.end();
    tokens.push_back({{"position", t},
                      {"token", text[t]},
                      {"cls_attention_pre", pre(static_cast<Eigen::Index>(t))},
                      {"cls_attention_post", post(static_cast<Eigen::Index>(t))},
                      {"s_vr", scores.s_vr(static_cast<Eigen::Index>(t))},
                      {"s_si", scores.s_si(static_cast<Eigen::Index>(t))},
                      {"combined", scores.combined(static_cast<Eigen::Index>(t))},
                      {"selected", sel}});
  }
  return {{"instance_id", inst.instance_id},
          {"no_signal", scores.no_signal},
          {"tokens", tokens}};
}

EnsemblePrediction ensemble_predict(
    std::span<const student::StudentModel* const> models,
    const synth::Instance& inst) {
  if (models.empty()) throw ValidationError("ensemble_predict: no models");
  EnsemblePrediction out;
  out.averaged_probs = Eigen::VectorXd::Zero(4);
  for (const auto* m : models)
    out.averaged_probs += distill::softmax(m->choice_logits(inst));
  out.averaged_probs /= static_cast<double>(models.size());
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (out.averaged_probs(i) > out.averaged_probs(best)) best = i;
  out.predicted_index = best;
  return out;
}

void write_mi_csv(const std::filesystem::path& path, const MITable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << table.to_csv();
}

MITable read_mi_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return MITable::from_csv(ss.str());
}

namespace {

std::string svg_header(int w, int h) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

std::string polyline(const Eigen::VectorXd& y, double x0, double x_step, double y0,
                     double y_scale, const std::string& color) {
  std::ostringstream out;
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  for (Eigen::Index i = 0; i < y.size(); ++i)
    out << x0 + x_step * static_cast<double>(i) << ',' << y0 - y(i) * y_scale << ' ';
  out << "\"/>\n";
  return out.str();
}

}  // namespace

void write_mi_line_svg(const std::filesystem::path& path, const MITable& table) {
  const int w = 480, h = 320, margin = 40;
  double x_step = table.per_layer_mean_vision.size() > 1
                      ? static_cast<double>(w - 2 * margin) /
                            (static_cast<double>(table.per_layer_mean_vision.size()) - 1)
                      : 0.0;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg_header(w, h);
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  double y_scale = h - 2 * margin;
  out << polyline(table.per_layer_mean_vision, margin, x_step, h - margin, y_scale,
                  "seagreen");
  out << polyline(table.per_layer_mean_text, margin, x_step, h - margin, y_scale,
                  "steelblue");
  out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">per-layer mean MI "
      << "(green: vision, blue: text)</text>\n";
  out << "</svg>\n";
}

void write_mi_heat_svg(const std::filesystem::path& path, const MITable& table) {
  const int cell = 24, margin = 50;
  int layers = static_cast<int>(table.mi_vision.rows());
  int heads = static_cast<int>(table.mi_vision.cols());
  int w = margin * 2 + heads * cell * 2 + cell;
  int h = margin * 2 + layers * cell;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg_header(w, h);
  auto heat = [&](const Eigen::MatrixXd& m, int x0, const char* label) {
    out << "<text x=\"" << x0 << "\" y=\"" << margin - 10 << "\" font-size=\"12\">"
        << label << "</text>\n";
    for (int l = 0; l < layers; ++l) {
      for (int hh = 0; hh < heads; ++hh) {
        int v = static_cast<int>(255.0 * (1.0 - m(l, hh)));
        out << "<rect x=\"" << x0 + hh * cell << "\" y=\"" << margin + l * cell
            << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << v
            << ',' << v << ",255)\" stroke=\"white\"/>\n";
      }
    }
  };
  heat(table.mi_vision, margin, "MI vision");
  heat(table.mi_text, margin + heads * cell + cell, "MI text");
  out << "</svg>\n";
}

}  // namespace tdlab::analysis
