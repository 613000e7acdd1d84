#include "hgmae/encdec.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/textio.hpp"

#include "json.hpp"

#include <cmath>

namespace hgmae {

using ad::Tensor;
using nlohmann::json;

namespace {

Matrix xavier(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

Tensor weight(Index rows, Index cols, Rng& rng) { return Tensor::parameter(xavier(rows, cols, rng)); }
Tensor zeros(Index rows, Index cols) { return Tensor::parameter(Matrix::Zero(rows, cols)); }

AttentionParams make_attention(Index d_in, Index d_out, Index heads, Rng& rng) {
  AttentionParams p;
  for (Index k = 0; k < heads; ++k) {
    p.weight.push_back(weight(d_in, d_out, rng));
    p.attn_src.push_back(weight(d_out, 1, rng));
    p.attn_dst.push_back(weight(d_out, 1, rng));
  }
  return p;
}

SemanticAttentionParams make_semantic(Index d, Index d_s, Rng& rng) {
  return {weight(d, d_s, rng), zeros(1, d_s), weight(d_s, 1, rng)};
}

void name_attention(std::vector<NamedTensor>& out, const std::string& prefix, const AttentionParams& p) {
  for (std::size_t k = 0; k < p.weight.size(); ++k) {
    const std::string h = prefix + ".head" + std::to_string(k);
    out.push_back({h + ".weight", p.weight[k]});
    out.push_back({h + ".attn_src", p.attn_src[k]});
    out.push_back({h + ".attn_dst", p.attn_dst[k]});
  }
}

void name_semantic(std::vector<NamedTensor>& out, const std::string& prefix,
                   const SemanticAttentionParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
  out.push_back({prefix + ".query", p.query});
}

void require_square_views(std::span<const Matrix> views, Index n, const char* op) {
  if (views.empty()) throw ShapeError(std::string(op) + ": no views");
  for (const auto& v : views) {
    if (v.rows() != n || v.cols() != n) {
      throw ShapeError(std::string(op) + ": view is " + std::to_string(v.rows()) + "x" +
                       std::to_string(v.cols()) + " but there are " + std::to_string(n) + " nodes");
    }
  }
}

}  // namespace

ModelParams ModelParams::initialize(const ModelShape& s, Rng& rng) {
  if (s.attr_dim < 1 || s.hidden_dim < 1 || s.heads < 1 || s.semantic_dim < 1 || s.positional_dim < 1) {
    throw ParameterError("model shape dimensions must be >= 1");
  }
  ModelParams p;
  p.shape = s;
  p.proj_weight = weight(s.attr_dim, s.hidden_dim, rng);
  p.proj_bias = zeros(1, s.hidden_dim);
  p.encoder = make_attention(s.hidden_dim, s.hidden_dim, s.heads, rng);
  p.encoder_fusion = make_semantic(s.hidden_dim, s.semantic_dim, rng);
  p.loss_fusion = make_semantic(s.hidden_dim, s.semantic_dim, rng);
  p.edge_decoder = make_attention(s.hidden_dim, s.hidden_dim, s.heads, rng);
  p.attr_decoder = make_attention(s.hidden_dim, s.hidden_dim, s.heads, rng);
  p.decoder_fusion = make_semantic(s.hidden_dim, s.semantic_dim, rng);
  p.attr_out_weight = weight(s.hidden_dim, s.attr_dim, rng);
  p.attr_out_bias = zeros(1, s.attr_dim);
  p.mlp_w1 = weight(s.hidden_dim, s.hidden_dim, rng);
  p.mlp_b1 = zeros(1, s.hidden_dim);
  p.mlp_w2 = weight(s.hidden_dim, s.positional_dim, rng);
  p.mlp_b2 = zeros(1, s.positional_dim);
  p.attr_mask_token = zeros(1, s.attr_dim);
  p.latent_mask_token = zeros(1, s.hidden_dim);
  return p;
}

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  out.push_back({"encoder.proj.weight", proj_weight});
  out.push_back({"encoder.proj.bias", proj_bias});
  name_attention(out, "encoder.attn", encoder);
  name_semantic(out, "encoder.fusion", encoder_fusion);
  name_semantic(out, "loss_fusion", loss_fusion);
  name_attention(out, "edge_decoder", edge_decoder);
  name_attention(out, "attr_decoder", attr_decoder);
  name_semantic(out, "attr_decoder.fusion", decoder_fusion);
  out.push_back({"attr_decoder.out.weight", attr_out_weight});
  out.push_back({"attr_decoder.out.bias", attr_out_bias});
  out.push_back({"mlp_decoder.w1", mlp_w1});
  out.push_back({"mlp_decoder.b1", mlp_b1});
  out.push_back({"mlp_decoder.w2", mlp_w2});
  out.push_back({"mlp_decoder.b2", mlp_b2});
  out.push_back({"tokens.attr_mask", attr_mask_token});
  out.push_back({"tokens.latent_mask", latent_mask_token});
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  auto fresh = [](Tensor& t) { t = Tensor::parameter(t.value()); };
  auto fresh_attention = [&](AttentionParams& a) {
    for (auto& t : a.weight) fresh(t);
    for (auto& t : a.attn_src) fresh(t);
    for (auto& t : a.attn_dst) fresh(t);
  };
  auto fresh_semantic = [&](SemanticAttentionParams& s) {
    fresh(s.weight);
    fresh(s.bias);
    fresh(s.query);
  };
  fresh(c.proj_weight);
  fresh(c.proj_bias);
  fresh_attention(c.encoder);
  fresh_semantic(c.encoder_fusion);
  fresh_semantic(c.loss_fusion);
  fresh_attention(c.edge_decoder);
  fresh_attention(c.attr_decoder);
  fresh_semantic(c.decoder_fusion);
  for (Tensor* t : {&c.attr_out_weight, &c.attr_out_bias, &c.mlp_w1, &c.mlp_b1, &c.mlp_w2, &c.mlp_b2,
                    &c.attr_mask_token, &c.latent_mask_token}) {
    fresh(*t);
  }
  return c;
}

void ModelParams::zero_grad() const {
  for (auto& nt : named()) {
    Tensor t = nt.tensor;
    t.zero_grad();
  }
}

std::string parameter_group(const std::string& name) { return name.substr(0, name.find('.')); }

// ---------------------------------------------------------------------------

Matrix neighbor_mask(const std::vector<std::vector<Index>>& neighbors) {
  const Index n = static_cast<Index>(neighbors.size());
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    if (neighbors[static_cast<std::size_t>(i)].empty()) {
      throw Error("node_attention: node " + std::to_string(i) + " has no neighbours");
    }
    for (Index j : neighbors[static_cast<std::size_t>(i)]) m(i, j) = 1.0;
  }
  return m;
}

std::vector<Tensor> node_attention(const AttentionParams& p, const Tensor& x,
                                   std::span<const Matrix> masks) {
  require_square_views(masks, x.rows(), "node_attention");
  const std::size_t heads = p.weight.size();
  std::vector<std::vector<Tensor>> per_mask(masks.size());
  for (std::size_t k = 0; k < heads; ++k) {
    // Projection and the two score halves do not depend on the mask.
    const Tensor wx = ad::matmul(x, p.weight[k]);
    const Tensor src = ad::matmul(wx, p.attn_src[k]);
    const Tensor dst = ad::transpose(ad::matmul(wx, p.attn_dst[k]));
    const Tensor logits = ad::leaky_relu(ad::outer_sum(src, dst), kAttentionSlope);
    for (std::size_t v = 0; v < masks.size(); ++v) {
      const Tensor alpha = ad::rowwise_softmax(logits, &masks[v]);
      per_mask[v].push_back(ad::elu(ad::matmul(alpha, wx)));
    }
  }
  std::vector<Tensor> out;
  out.reserve(masks.size());
  for (auto& hs : per_mask) {
    out.push_back(ad::scale(ad::add_all(hs), 1.0 / static_cast<double>(heads)));
  }
  return out;
}

Tensor node_attention_layer(const AttentionParams& p, const Tensor& x,
                            const std::vector<std::vector<Index>>& neighbors) {
  const Matrix mask = neighbor_mask(neighbors);
  return node_attention(p, x, std::span<const Matrix>(&mask, 1)).front();
}

SemanticFusion semantic_attention(const SemanticAttentionParams& p, std::span<const Tensor> embeddings) {
  if (embeddings.empty()) throw ShapeError("semantic_attention: no embeddings");
  std::vector<Tensor> scores;
  scores.reserve(embeddings.size());
  for (const auto& h : embeddings) {
    const Tensor t = ad::tanh(ad::add_row(ad::matmul(h, p.weight), p.bias));
    scores.push_back(ad::matmul(ad::mean_rows(t), p.query));
  }
  const Tensor weights = ad::rowwise_softmax(ad::hstack(scores));
  std::vector<Tensor> terms;
  terms.reserve(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    terms.push_back(ad::scalar_mul(ad::element(weights, 0, static_cast<Index>(k)), embeddings[k]));
  }
  return {weights, ad::add_all(terms)};
}

EncodedViews encode(const ModelParams& p, std::span<const Matrix> views, const Tensor& x) {
  if (x.cols() != p.shape.attr_dim) {
    throw ShapeError("encode: attributes have " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(p.shape.attr_dim));
  }
  require_square_views(views, x.rows(), "encode");
  const Tensor h0 = ad::add_row(ad::matmul(x, p.proj_weight), p.proj_bias);
  EncodedViews out;
  out.per_view = node_attention(p.encoder, h0, views);
  auto fusion = semantic_attention(p.encoder_fusion, out.per_view);
  out.fused = fusion.fused;
  out.weights = fusion.weights;
  return out;
}

Tensor decode_edges(const ModelParams& p, const Matrix& view, const Tensor& h1) {
  const Tensor h2 = node_attention(p.edge_decoder, h1, std::span<const Matrix>(&view, 1)).front();
  return ad::sigmoid(ad::matmul_nt(h2, h2));
}

Tensor decode_attributes(const ModelParams& p, std::span<const Matrix> views, const Tensor& h3_masked) {
  if (h3_masked.cols() != p.shape.hidden_dim) {
    throw ShapeError("decode_attributes: embeddings have " + std::to_string(h3_masked.cols()) +
                     " columns, model expects " + std::to_string(p.shape.hidden_dim));
  }
  require_square_views(views, h3_masked.rows(), "decode_attributes");
  const auto per_view = node_attention(p.attr_decoder, h3_masked, views);
  const auto fusion = semantic_attention(p.decoder_fusion, per_view);
  return ad::add_row(ad::matmul(fusion.fused, p.attr_out_weight), p.attr_out_bias);
}

Tensor predict_positions(const ModelParams& p, const Tensor& h3) {
  if (h3.cols() != p.shape.hidden_dim) {
    throw ShapeError("predict_positions: embeddings have " + std::to_string(h3.cols()) +
                     " columns, model expects " + std::to_string(p.shape.hidden_dim));
  }
  const Tensor hidden = ad::elu(ad::add_row(ad::matmul(h3, p.mlp_w1), p.mlp_b1));
  return ad::add_row(ad::matmul(hidden, p.mlp_w2), p.mlp_b2);
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "hgmae-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelParams& p, const std::filesystem::path& file) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["shape"] = {{"attr_dim", p.shape.attr_dim},       {"hidden_dim", p.shape.hidden_dim},
                {"heads", p.shape.heads},             {"semantic_dim", p.shape.semantic_dim},
                {"positional_dim", p.shape.positional_dim}};
  json tensors = json::array();
  for (const auto& [name, t] : p.named()) {
    const Matrix& v = t.value();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.rows(); ++i)
      for (Index c = 0; c < v.cols(); ++c) data.push_back(v(i, c));
    tensors.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}, {"data", std::move(data)}});
  }
  j["tensors"] = std::move(tensors);
  textio::write_text(file, j.dump() + "\n");
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(textio::read_text(file));
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError(file.string() + ": not a checkpoint file");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(file.string() + ": unsupported checkpoint version");
    }
    ModelShape shape;
    const auto& s = j.at("shape");
    shape.attr_dim = s.at("attr_dim").get<Index>();
    shape.hidden_dim = s.at("hidden_dim").get<Index>();
    shape.heads = s.at("heads").get<Index>();
    shape.semantic_dim = s.at("semantic_dim").get<Index>();
    shape.positional_dim = s.at("positional_dim").get<Index>();

    Rng rng(0);
    ModelParams p = ModelParams::initialize(shape, rng);
    auto named = p.named();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != named.size()) {
      throw DataError(file.string() + ": expected " + std::to_string(named.size()) + " tensors, found " +
                      std::to_string(tensors.size()));
    }
    for (std::size_t k = 0; k < named.size(); ++k) {
      const auto& tj = tensors[k];
      const auto name = tj.at("name").get<std::string>();
      if (name != named[k].name) {
        throw DataError(file.string() + ": tensor " + std::to_string(k) + " is '" + name + "', expected '" +
                        named[k].name + "'");
      }
      Matrix& v = named[k].tensor.mutable_value();
      const Index rows = tj.at("rows").get<Index>();
      const Index cols = tj.at("cols").get<Index>();
      const auto data = tj.at("data").get<std::vector<double>>();
      if (rows != v.rows() || cols != v.cols() || static_cast<Index>(data.size()) != rows * cols) {
        throw DataError(file.string() + ": tensor '" + name + "' has inconsistent shape");
      }
      for (Index i = 0; i < rows; ++i)
        for (Index c = 0; c < cols; ++c) v(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

}  // namespace hgmae
