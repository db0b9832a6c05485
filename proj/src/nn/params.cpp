#include "tdlab/nn/params.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace tdlab::nn {

namespace fs = std::filesystem;

Matrix& ParamStore::add(const std::string& name, int rows, int cols) {
  auto [it, inserted] = params_.emplace(name, Matrix::Zero(rows, cols));
  if (!inserted) throw std::logic_error("duplicate parameter: " + name);
  return it->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParamStore::init_normal(Rng& rng, double stddev) {
  for (auto& [name, m] : params_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal() * stddev;
  }
}

void ParamStore::init_standard(Rng& rng, double stddev) {
  init_normal(rng, stddev);
  for (auto& [name, m] : params_) {
    bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                   name.ends_with(".b2") || name.ends_with(".bias");
    if (is_bias) m.setZero();
    if (name.ends_with(".g")) m.setOnes();
  }
}

namespace {

std::vector<float> to_f32_row_major(const Matrix& m) {
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
  return buf;
}

}  // namespace

std::uint64_t ParamStore::content_hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& [name, m] : params_) {
    h = fnv1a64(name, h);
    auto buf = to_f32_row_major(m);
    h = fnv1a64(buf.data(), buf.size() * sizeof(float), h);
  }
  return h;
}

void ParamStore::save(const fs::path& dir, const nlohmann::json& manifest_extra) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "tdlab-checkpoint-v1";
  manifest["layout"] = "row_major_f32_le";
  for (const auto& [k, v] : manifest_extra.items()) manifest[k] = v;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, m] : params_) {
    std::string fname = name + ".bin";
    plist.push_back({{"name", name},
                     {"rows", m.rows()},
                     {"cols", m.cols()},
                     {"file", fname}});
    auto buf = to_f32_row_major(m);
    std::ofstream out(dir / fname, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / fname).string());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  manifest["params"] = plist;
  std::ofstream mo(dir / "manifest.json", std::ios::trunc);
  mo << manifest.dump(2) << "\n";
}

ParamStore ParamStore::load(const fs::path& dir, nlohmann::json* manifest_out) {
  std::ifstream mi(dir / "manifest.json");
  if (!mi) throw std::runtime_error("missing manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(mi);
  if (manifest_out) *manifest_out = manifest;
  ParamStore store;
  for (const auto& entry : manifest.at("params")) {
    std::string name = entry.at("name");
    int rows = entry.at("rows");
    int cols = entry.at("cols");
    std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
    if (!in) throw std::runtime_error("missing tensor file for " + name);
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
      throw std::runtime_error("truncated tensor file for " + name);
    Matrix& m = store.add(name, rows, cols);
    std::size_t k = 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = static_cast<double>(buf[k++]);
  }
  return store;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(store_->at(name), trainable_);
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::collect_grads(GradMap& out) const {
  for (const auto& [name, var] : bound_) {
    Matrix g = tape_->grad(var);
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, std::move(g));
    } else {
      it->second += g;
    }
  }
}

}  // namespace tdlab::nn
