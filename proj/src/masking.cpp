#include "hgmae/masking.hpp"

#include "hgmae/errors.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>

namespace hgmae {

void MaskSchedule::validate() const {
  if (!(min_rate > 0.0 && min_rate <= 1.0) || !(max_rate > 0.0 && max_rate <= 1.0)) {
    throw ParameterError("mask schedule rates must lie in (0, 1]");
  }
  if (min_rate > max_rate) throw ParameterError("mask schedule: min_rate exceeds max_rate");
  if (!(step > 0.0)) throw ParameterError("mask schedule: step must be positive");
}

double schedule_rate(const MaskSchedule& s, long epoch) {
  if (epoch < 0) throw ParameterError("schedule_rate: epoch must be >= 0");
  return std::min(s.min_rate + static_cast<double>(epoch) * s.step, s.max_rate);
}

EdgeMask mask_edges(const MetapathView& view, double p_e, Rng& rng) {
  if (!(p_e >= 0.0 && p_e < 1.0)) throw ParameterError("mask_edges: p_e must lie in [0, 1)");
  const Matrix& a = view.adjacency;
  const Index n = a.rows();
  const bool symmetric = a.isApprox(a.transpose(), 0.0);

  EdgeMask out;
  out.metapath_name = view.metapath_name;
  out.mask = Matrix::Ones(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = symmetric ? i + 1 : 0; j < n; ++j) {
      if (i == j || a(i, j) == 0.0) continue;
      if (rng.bernoulli(p_e)) {
        out.mask(i, j) = 0.0;
        if (symmetric) out.mask(j, i) = 0.0;
        out.held_out.emplace_back(i, j);
      }
    }
  }
  out.kept = out.mask.cwiseProduct(a);
  return out;
}

Index round_count(double x) {
  // nearbyint follows the current rounding mode, which defaults to
  // round-half-to-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(x);
  std::fesetround(saved);
  return static_cast<Index>(r);
}

AttributeMaskPlan plan_attribute_mask(Index node_count, double p_a, double p_u, double p_r,
                                      Rng& rng) {
  if (!(p_a > 0.0 && p_a <= 1.0)) throw ParameterError("plan_attribute_mask: p_a must lie in (0, 1]");
  if (!(p_u >= 0.0) || !(p_r >= 0.0)) throw ParameterError("plan_attribute_mask: p_u and p_r must be >= 0");
  if (p_u + p_r > 1.0 + 1e-12) throw ParameterError("plan_attribute_mask: p_u + p_r exceeds 1");
  if (node_count < 1) throw ParameterError("plan_attribute_mask: no nodes");

  AttributeMaskPlan plan;
  plan.node_count = node_count;
  plan.p_a = p_a;
  plan.p_u = p_u;
  plan.p_r = p_r;

  const Index size = std::min(round_count(p_a * static_cast<double>(node_count)), node_count);
  // Partial Fisher-Yates: the first `size` entries are a uniform sample
  // without replacement, in random order.
  std::vector<Index> perm(static_cast<std::size_t>(node_count));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = 0; i < size; ++i) {
    const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(node_count - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<Index> chosen(perm.begin(), perm.begin() + size);

  const Index unchanged = std::min(round_count(p_u * static_cast<double>(size)), size);
  const Index replaced = std::min(round_count(p_r * static_cast<double>(size)), size - unchanged);
  if (replaced > 0 && node_count < 2) {
    throw ParameterError("plan_attribute_mask: replacement needs at least two nodes");
  }

  // `chosen` is already in random order, so consecutive slices are uniform
  // random disjoint subsets.
  for (Index i = 0; i < size; ++i) {
    const Index v = chosen[static_cast<std::size_t>(i)];
    if (i < unchanged) {
      plan.unchanged_rows.push_back(v);
    } else if (i < unchanged + replaced) {
      Index donor = static_cast<Index>(rng.below(static_cast<std::uint64_t>(node_count - 1)));
      if (donor >= v) ++donor;
      plan.replaced_rows.emplace_back(v, donor);
    } else {
      plan.token_rows.push_back(v);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::sort(plan.unchanged_rows.begin(), plan.unchanged_rows.end());
  std::sort(plan.token_rows.begin(), plan.token_rows.end());
  std::sort(plan.replaced_rows.begin(), plan.replaced_rows.end());
  plan.masked = std::move(chosen);
  return plan;
}

ad::Tensor apply_attribute_mask(const ad::Tensor& x, const AttributeMaskPlan& plan,
                                const ad::Tensor& mask_token) {
  if (mask_token.rows() != 1 || mask_token.cols() != x.cols()) {
    throw ShapeError("apply_attribute_mask: token width " + std::to_string(mask_token.cols()) +
                     " does not match attribute width " + std::to_string(x.cols()));
  }
  const Index n = x.rows();
  auto check = [n](Index r) {
    if (r < 0 || r >= n) throw ParameterError("attribute mask plan: row " + std::to_string(r) + " out of range");
  };
  for (Index r : plan.token_rows) check(r);
  for (Index r : plan.unchanged_rows) check(r);

  ad::Tensor base = x;
  if (!plan.replaced_rows.empty()) {
    std::vector<Index> source(static_cast<std::size_t>(n));
    std::iota(source.begin(), source.end(), Index{0});
    for (const auto& [row, donor] : plan.replaced_rows) {
      check(row);
      check(donor);
      source[static_cast<std::size_t>(row)] = donor;
    }
    base = ad::gather_rows(x, source);
  }
  if (plan.token_rows.empty()) return base;
  return ad::replace_rows(base, plan.token_rows, mask_token);
}

ad::Tensor remask_latent(const ad::Tensor& h, std::span<const Index> masked,
                         const ad::Tensor& dm_token) {
  if (dm_token.rows() != 1 || dm_token.cols() != h.cols()) {
    throw ShapeError("remask_latent: token width " + std::to_string(dm_token.cols()) +
                     " does not match embedding width " + std::to_string(h.cols()));
  }
  if (masked.empty()) return h;
  return ad::replace_rows(h, masked, dm_token);
}

}  // namespace hgmae
