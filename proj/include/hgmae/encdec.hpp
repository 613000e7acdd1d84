#pragma once

// Attention encoder and the three decoders.
//
// The encoder projects target attributes to the hidden width, runs one
// multi-head node-level attention layer per metapath view (weights shared
// across views) and fuses the per-view outputs with semantic attention. The
// edge decoder is one more attention layer followed by a sigmoid row Gram
// matrix; the attribute decoder is an attention layer per view, fused, then
// projected back to attribute width; the positional decoder is a plain MLP.

#include "hgmae/autodiff.hpp"
#include "hgmae/random.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hgmae {

using ad::Index;
using ad::Matrix;

struct ModelShape {
  Index attr_dim = 0;
  Index hidden_dim = 256;
  Index heads = 4;
  Index semantic_dim = 128;
  Index positional_dim = 64;

  bool operator==(const ModelShape&) const = default;
};

inline constexpr double kAttentionSlope = 0.2;

/// K heads of GAT-style attention: W_k (d_in x d_out), a_src and a_dst
/// (d_out x 1) per head.
struct AttentionParams {
  std::vector<ad::Tensor> weight;
  std::vector<ad::Tensor> attn_src;
  std::vector<ad::Tensor> attn_dst;
};

/// Score s = mean_i q^T tanh(W^T h_i + b) per view, softmax across views.
struct SemanticAttentionParams {
  ad::Tensor weight;  // d x d_s
  ad::Tensor bias;    // 1 x d_s
  ad::Tensor query;   // d_s x 1
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

struct ModelParams {
  ModelShape shape;

  ad::Tensor proj_weight, proj_bias;
  AttentionParams encoder;
  SemanticAttentionParams encoder_fusion;
  // Weights the per-metapath edge reconstruction losses; independent of the
  // encoder's fusion.
  SemanticAttentionParams loss_fusion;
  AttentionParams edge_decoder;
  AttentionParams attr_decoder;
  SemanticAttentionParams decoder_fusion;
  ad::Tensor attr_out_weight, attr_out_bias;
  ad::Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  ad::Tensor attr_mask_token;    // 1 x attr_dim
  ad::Tensor latent_mask_token;  // 1 x hidden_dim

  /// Xavier-uniform weights, zero biases and tokens.
  static ModelParams initialize(const ModelShape& shape, Rng& rng);

  /// Every parameter with a stable dotted name. The first component names
  /// the group: encoder, loss_fusion, edge_decoder, attr_decoder,
  /// mlp_decoder or tokens.
  std::vector<NamedTensor> named() const;

  /// Deep copy with fresh parameter nodes.
  ModelParams clone() const;
  void zero_grad() const;
};

/// Group prefix of a parameter name ("edge_decoder.head0.weight" ->
/// "edge_decoder").
std::string parameter_group(const std::string& name);

/// Dense mask with 1 at (i, j) for each neighbour j of i.
Matrix neighbor_mask(const std::vector<std::vector<Index>>& neighbors);

/// One attention layer applied to several neighbourhood masks with the same
/// weights. Output k corresponds to masks[k]; each is N x d_out.
std::vector<ad::Tensor> node_attention(const AttentionParams& p, const ad::Tensor& x,
                                       std::span<const Matrix> masks);
ad::Tensor node_attention_layer(const AttentionParams& p, const ad::Tensor& x,
                                const std::vector<std::vector<Index>>& neighbors);

struct SemanticFusion {
  ad::Tensor weights;  // 1 x P
  ad::Tensor fused;
};

SemanticFusion semantic_attention(const SemanticAttentionParams& p,
                                  std::span<const ad::Tensor> embeddings);

struct EncodedViews {
  std::vector<ad::Tensor> per_view;
  ad::Tensor fused;
  ad::Tensor weights;  // 1 x P
};

EncodedViews encode(const ModelParams& p, std::span<const Matrix> views, const ad::Tensor& x);

/// sigmoid(H2 H2^T) where H2 is the edge decoder applied over `view`.
ad::Tensor decode_edges(const ModelParams& p, const Matrix& view, const ad::Tensor& h1);

ad::Tensor decode_attributes(const ModelParams& p, std::span<const Matrix> views,
                             const ad::Tensor& h3_masked);

ad::Tensor predict_positions(const ModelParams& p, const ad::Tensor& h3);

/// JSON container: format tag, version, shape header, then every tensor with
/// its rows/cols. Doubles are written in shortest round-trip form.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& file);
ModelParams load_checkpoint(const std::filesystem::path& file);

}  // namespace hgmae
