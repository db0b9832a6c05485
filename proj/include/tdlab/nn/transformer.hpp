#pragma once

#include <optional>
#include <string>

#include "tdlab/nn/params.hpp"

namespace tdlab::nn {

struct TransformerSpec {
  int d_model = 32;
  int layers = 2;
  int heads = 4;
  int d_ff = 0;  // 0 -> 4*d_model

  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  void validate() const;
};

// Registers all encoder parameters under `prefix.` into the store.
void register_transformer(ParamStore& store, const std::string& prefix,
                          const TransformerSpec& spec);

// Captured softmax attention matrices, row-major over (layer, head).
struct AttentionRecord {
  int layers = 0;
  int heads = 0;
  std::vector<Matrix> maps;  // each SxS, rows sum to 1
  const Matrix& at(int layer, int head) const {
    return maps[static_cast<std::size_t>(layer * heads + head)];
  }
};

// Pre-LN transformer encoder stack with a final layer norm.
// x is SxD. If attn != nullptr the per-layer/head softmax maps are copied out.
Var transformer_encode(ParamBinder& bind, const std::string& prefix,
                       const TransformerSpec& spec, Var x,
                       AttentionRecord* attn = nullptr);

}  // namespace tdlab::nn
