#pragma once

// Edge reconstruction (MER), attribute restoration (TAR) and positional
// feature prediction (PFP) losses, and their weighted total.

#include "hgmae/autodiff.hpp"
#include "hgmae/encdec.hpp"
#include "hgmae/masking.hpp"

#include <span>
#include <string>
#include <vector>

namespace hgmae {

struct LossWeights {
  double lambda = 1.0;  // MER
  double mu = 1.0;      // TAR
  double eta = 1.0;     // PFP
  double gamma_mer = 2.0;
  double gamma_tar = 2.0;
  double gamma_pfp = 2.0;

  void validate() const;
};

/// Which rows TAR compares Z against: the original attributes, or the
/// corrupted input X~ exactly as fed to the encoder.
enum class TarTarget { Original, Literal };

struct MerResult {
  ad::Tensor loss;
  std::vector<double> per_view_loss;
  std::vector<double> alpha;
};

/// For each view: encode over the masked adjacency, decode edges, compare
/// against the unmasked adjacency row by row; fuse the per-view losses with
/// the loss-fusion semantic attention on the per-view encodings.
MerResult mer_loss(const ModelParams& p, std::span<const Matrix> targets,
                   std::span<const Matrix> masked, const ad::Tensor& x, double gamma);

struct TarResult {
  ad::Tensor loss;
  ad::Tensor h3;  // encoder output on the corrupted attributes
};

TarResult tar_loss(const ModelParams& p, std::span<const Matrix> views, const ad::Tensor& x,
                   const AttributeMaskPlan& plan, double gamma, TarTarget target = TarTarget::Original);

ad::Tensor pfp_loss(const ModelParams& p, const ad::Tensor& h3, const ad::Tensor& positions,
                    double gamma, std::size_t* excluded = nullptr);

struct LossReport {
  double mer = 0.0, tar = 0.0, pfp = 0.0, total = 0.0;
  std::vector<double> per_view_loss;
  std::vector<double> alpha;
};

/// lambda * mer + mu * tar + eta * pfp, differentiable.
ad::Tensor total_loss(const ad::Tensor& mer, const ad::Tensor& tar, const ad::Tensor& pfp,
                      const LossWeights& w);

/// Everything one training step needs, already corrupted.
struct LossInputs {
  std::span<const Matrix> views;   // unmasked A^phi
  std::span<const Matrix> masked;  // masked A~^phi, same order
  const ad::Tensor* attributes = nullptr;
  const ad::Tensor* positions = nullptr;
  const AttributeMaskPlan* plan = nullptr;
  TarTarget tar_target = TarTarget::Original;
};

struct LossBundle {
  ad::Tensor total;
  LossReport report;
};

LossBundle compute_losses(const ModelParams& p, const LossInputs& in, const LossWeights& w);

}  // namespace hgmae
