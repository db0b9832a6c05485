#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tdlab/common.hpp"
#include "tdlab/nn/tape.hpp"

#include <json.hpp>

namespace tdlab::nn {

using GradMap = std::map<std::string, Matrix>;

// Named parameter tensors. std::map keeps iteration (and thus hashing,
// serialization and optimizer order) deterministic.
class ParamStore {
 public:
  Matrix& add(const std::string& name, int rows, int cols);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  std::map<std::string, Matrix>& all() { return params_; }
  const std::map<std::string, Matrix>& all() const { return params_; }
  std::size_t count() const { return params_.size(); }

  void init_normal(Rng& rng, double stddev);

  // normal(0, stddev) for weights, zeros for *.b/*.b1/*.b2/*.bias,
  // ones for layer-norm gains (*.g).
  void init_standard(Rng& rng, double stddev = 0.02);

  // Hash of the float32 little-endian serialization, in name order.
  std::uint64_t content_hash() const;

  // Checkpoint directory: manifest.json plus one row-major float32
  // little-endian .bin file per tensor, named by parameter path.
  void save(const std::filesystem::path& dir, const nlohmann::json& manifest_extra) const;
  static ParamStore load(const std::filesystem::path& dir,
                         nlohmann::json* manifest_out = nullptr);

 private:
  std::map<std::string, Matrix> params_;
};

// Binds parameters into a tape as gradient-tracked leaves, one leaf per
// name per tape, and collects their gradients after backward().
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store, bool trainable = true)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Var operator()(const std::string& name);

  // Adds d(loss)/d(param) into `out` for every bound parameter.
  void collect_grads(GradMap& out) const;

 private:
  Tape* tape_;
  ParamStore* store_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

}  // namespace tdlab::nn
