#include "hgmae/objectives.hpp"

#include "hgmae/errors.hpp"

namespace hgmae {

using ad::Tensor;

void LossWeights::validate() const {
  if (lambda < 0.0 || mu < 0.0 || eta < 0.0) throw ParameterError("loss weights must be non-negative");
  if (lambda == 0.0 && mu == 0.0 && eta == 0.0) throw ConfigError("loss weights are all zero");
  if (!(gamma_mer >= 1.0) || !(gamma_tar >= 1.0) || !(gamma_pfp >= 1.0)) {
    throw ParameterError("loss scaling factors must be >= 1");
  }
}

MerResult mer_loss(const ModelParams& p, std::span<const Matrix> targets, std::span<const Matrix> masked,
                   const Tensor& x, double gamma) {
  if (targets.empty()) throw ConfigError("mer_loss: no metapath views");
  if (targets.size() != masked.size()) throw ShapeError("mer_loss: one masked view per target required");

  std::vector<Tensor> encodings, losses;
  MerResult out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto enc = encode(p, masked.subspan(k, 1), x);
    const Tensor recon = decode_edges(p, masked[k], enc.fused);
    const Tensor loss = ad::sce_rows(Tensor::constant(targets[k]), recon, gamma);
    encodings.push_back(enc.fused);
    losses.push_back(loss);
    out.per_view_loss.push_back(loss.item());
  }
  const auto fusion = semantic_attention(p.loss_fusion, encodings);
  const Tensor stacked = ad::hstack(losses);
  // sum_phi alpha_phi * L_phi
  out.loss = ad::matmul(fusion.weights, ad::transpose(stacked));
  for (Index k = 0; k < fusion.weights.cols(); ++k) out.alpha.push_back(fusion.weights.value()(0, k));
  return out;
}

TarResult tar_loss(const ModelParams& p, std::span<const Matrix> views, const Tensor& x,
                   const AttributeMaskPlan& plan, double gamma, TarTarget target) {
  if (plan.node_count != x.rows()) throw ParameterError("tar_loss: plan was drawn for a different node count");
  const Tensor corrupted = apply_attribute_mask(x, plan, p.attr_mask_token);
  const Tensor h3 = encode(p, views, corrupted).fused;
  const Tensor remasked = remask_latent(h3, plan.masked, p.latent_mask_token);
  const Tensor z = decode_attributes(p, views, remasked);
  const Tensor& reference = target == TarTarget::Original ? x : corrupted;
  return {ad::sce_rows(reference, z, gamma, plan.masked), h3};
}

Tensor pfp_loss(const ModelParams& p, const Tensor& h3, const Tensor& positions, double gamma,
                std::size_t* excluded) {
  if (positions.rows() != h3.rows()) {
    throw ShapeError("pfp_loss: " + std::to_string(positions.rows()) + " positional rows for " +
                     std::to_string(h3.rows()) + " nodes");
  }
  return ad::sce_rows(positions, predict_positions(p, h3), gamma, excluded);
}

Tensor total_loss(const Tensor& mer, const Tensor& tar, const Tensor& pfp, const LossWeights& w) {
  w.validate();
  const Tensor terms[] = {ad::scale(mer, w.lambda), ad::scale(tar, w.mu), ad::scale(pfp, w.eta)};
  return ad::add_all(terms);
}

LossBundle compute_losses(const ModelParams& p, const LossInputs& in, const LossWeights& w) {
  if (!in.attributes || !in.positions || !in.plan) throw ParameterError("compute_losses: missing inputs");
  const auto mer = mer_loss(p, in.views, in.masked, *in.attributes, w.gamma_mer);
  const auto tar = tar_loss(p, in.views, *in.attributes, *in.plan, w.gamma_tar, in.tar_target);
  const Tensor pfp = pfp_loss(p, tar.h3, *in.positions, w.gamma_pfp);

  LossBundle out;
  out.total = total_loss(mer.loss, tar.loss, pfp, w);
  out.report.mer = mer.loss.item();
  out.report.tar = tar.loss.item();
  out.report.pfp = pfp.item();
  out.report.total = out.total.item();
  out.report.per_view_loss = mer.per_view_loss;
  out.report.alpha = mer.alpha;
  return out;
}

}  // namespace hgmae
