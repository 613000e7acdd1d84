#pragma once

// Stochastic corruption used during training: metapath edge masking,
// scheduled attribute masking with leave-unchanged / replace, and latent
// re-masking before the attribute decoder.

#include "hgmae/autodiff.hpp"
#include "hgmae/hetgraph.hpp"
#include "hgmae/random.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hgmae {

struct MaskSchedule {
  double min_rate = 0.5;
  double max_rate = 0.8;
  double step = 0.005;

  void validate() const;
};

/// Attribute mask rate for epoch m: min(min_rate + m * step, max_rate).
double schedule_rate(const MaskSchedule& s, long epoch);

struct EdgeMask {
  std::string metapath_name;
  Matrix mask;  // 1 = kept
  Matrix kept;  // mask .* adjacency
  std::vector<std::pair<Index, Index>> held_out;
};

/// Removes every off-diagonal edge independently with probability p_e. For a
/// symmetric view each unordered pair is decided once, so the result stays
/// symmetric. Held-out pairs are listed with i < j in the symmetric case.
EdgeMask mask_edges(const MetapathView& view, double p_e, Rng& rng);

struct AttributeMaskPlan {
  Index node_count = 0;
  std::vector<Index> masked;  // the sampled set, sorted
  std::vector<Index> token_rows;
  std::vector<Index> unchanged_rows;
  std::vector<std::pair<Index, Index>> replaced_rows;  // (row, donor)
  double p_a = 0.0, p_u = 0.0, p_r = 0.0;
};

/// Half-to-even rounding of a non-negative count.
Index round_count(double x);

AttributeMaskPlan plan_attribute_mask(Index node_count, double p_a, double p_u, double p_r,
                                      Rng& rng);

/// X with token rows set to the token, replaced rows copied from their donor,
/// and every other row untouched.
ad::Tensor apply_attribute_mask(const ad::Tensor& x, const AttributeMaskPlan& plan,
                                const ad::Tensor& mask_token);

/// H with every row of the masked set overwritten by the latent mask token.
ad::Tensor remask_latent(const ad::Tensor& h, std::span<const Index> masked,
                         const ad::Tensor& dm_token);

}  // namespace hgmae
