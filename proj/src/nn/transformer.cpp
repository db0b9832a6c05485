#include "tdlab/nn/transformer.hpp"

#include <cmath>

#include "tdlab/common.hpp"

namespace tdlab::nn {

void TransformerSpec::validate() const {
  if (d_model < 1 || layers < 1 || heads < 1)
    throw ConfigError("transformer: all counts must be >= 1");
  if (d_model % heads != 0)
    throw ConfigError("transformer: d_model must be divisible by heads");
}

void register_transformer(ParamStore& store, const std::string& prefix,
                          const TransformerSpec& spec) {
  spec.validate();
  int d = spec.d_model;
  int ff = spec.ff_dim();
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = prefix + ".l" + std::to_string(l) + ".";
    store.add(p + "wq", d, d);
    store.add(p + "wk", d, d);
    store.add(p + "wv", d, d);
    store.add(p + "wo", d, d);
    store.add(p + "ln1.g", 1, d);
    store.add(p + "ln1.b", 1, d);
    store.add(p + "ln2.g", 1, d);
    store.add(p + "ln2.b", 1, d);
    store.add(p + "ff.w1", d, ff);
    store.add(p + "ff.b1", 1, ff);
    store.add(p + "ff.w2", ff, d);
    store.add(p + "ff.b2", 1, d);
  }
  store.add(prefix + ".lnf.g", 1, d);
  store.add(prefix + ".lnf.b", 1, d);
}

namespace {

Var attention_block(ParamBinder& bind, const std::string& p, const TransformerSpec& spec,
                    Var x_norm, AttentionRecord* attn, int layer) {
  int dh = spec.d_model / spec.heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = matmul(x_norm, bind(p + "wq"));
  Var k = matmul(x_norm, bind(p + "wk"));
  Var v = matmul(x_norm, bind(p + "wv"));
  std::vector<Var> heads_out;
  heads_out.reserve(static_cast<std::size_t>(spec.heads));
  for (int h = 0; h < spec.heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    Var a = softmax_rows(scores);
    if (attn) attn->maps[static_cast<std::size_t>(layer * spec.heads + h)] = a.tape->value(a);
    heads_out.push_back(matmul(a, vh));
  }
  Var merged = concat_cols(heads_out);
  return matmul(merged, bind(p + "wo"));
}

}  // namespace

Var transformer_encode(ParamBinder& bind, const std::string& prefix,
                       const TransformerSpec& spec, Var x, AttentionRecord* attn) {
  if (attn) {
    attn->layers = spec.layers;
    attn->heads = spec.heads;
    attn->maps.assign(static_cast<std::size_t>(spec.layers * spec.heads), Matrix());
  }
  Var h = x;
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = prefix + ".l" + std::to_string(l) + ".";
    Var n1 = layer_norm_rows(h, bind(p + "ln1.g"), bind(p + "ln1.b"));
    h = add(h, attention_block(bind, p, spec, n1, attn, l));
    Var n2 = layer_norm_rows(h, bind(p + "ln2.g"), bind(p + "ln2.b"));
    Var ff = matmul(gelu(add_rowvec(matmul(n2, bind(p + "ff.w1")), bind(p + "ff.b1"))),
                    bind(p + "ff.w2"));
    h = add(h, add_rowvec(ff, bind(p + "ff.b2")));
  }
  return layer_norm_rows(h, bind(prefix + ".lnf.g"), bind(prefix + ".lnf.b"));
}

}  // namespace tdlab::nn
