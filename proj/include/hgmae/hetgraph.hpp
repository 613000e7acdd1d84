#pragma once

// Heterogeneous graph data model, dataset directory IO, metapath-based
// adjacency over target nodes, and a planted-partition generator.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hgmae {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;

struct Relation {
  std::string name;
  std::string src_type;
  std::string dst_type;
  std::vector<std::pair<Index, Index>> edges;
};

/// One hop of a metapath: a stored relation, optionally walked dst -> src.
struct MetapathStep {
  std::string relation;
  bool reversed = false;
};

struct Metapath {
  std::string name;
  std::vector<MetapathStep> steps;

  std::size_t length() const { return steps.size(); }
  /// True when the step sequence reads the same backwards with each step
  /// flipped (e.g. P-A-P stored as pa, pa^T).
  bool palindromic() const;
};

struct HeteroGraph {
  std::map<std::string, Index> node_counts;
  std::map<std::string, Relation> relations;
  std::map<std::string, Matrix> attributes;
  std::vector<Metapath> metapaths;
  std::string target_type;
  std::optional<std::vector<int>> labels;
  std::map<std::string, std::vector<Index>> splits;

  Index target_count() const;
  const Matrix& target_attributes() const;
  const Metapath& metapath(const std::string& name) const;

  /// Types at both ends of a step, honouring its direction.
  std::pair<std::string, std::string> step_types(const MetapathStep& step) const;

  /// Throws ValidationError naming the offending item.
  void validate() const;
};

struct MetapathView {
  std::string metapath_name;
  Matrix adjacency;  // N_t x N_t, entries 0/1, unit diagonal
};

/// Reads a dataset directory (meta.json, edges/, features/, labels.tsv,
/// splits.json). Throws DataError naming file and line, or ValidationError.
HeteroGraph load_dataset(const std::filesystem::path& dir);
void save_dataset(const HeteroGraph& g, const std::filesystem::path& dir);

/// Dense biadjacency of a relation step, oriented src -> dst of the step.
Matrix step_biadjacency(const HeteroGraph& g, const MetapathStep& step);

/// adjacency(i, j) = 1 iff some instance of mp joins target i to target j;
/// the diagonal is forced to 1.
MetapathView build_metapath_adjacency(const HeteroGraph& g, const Metapath& mp);
std::vector<MetapathView> build_all_views(const HeteroGraph& g);

std::vector<std::vector<Index>> neighbor_lists(const MetapathView& view);

struct SyntheticSpec {
  int communities = 3;
  Index targets_per_community = 100;
  Index aux_per_community = 140;
  int relations = 2;  // each yields one target-aux-target metapath
  double p_intra = 0.015;
  double p_inter = 0.0001;
  Index attr_dim = 512;
  Index signal_dims = 0;  // leading attribute columns that carry community means; 0 = all
  double mean_scale = 0.0;
  double noise_std = 1.0;
  std::uint64_t seed = 7;
};

/// Planted-partition graph: target nodes split into communities, one
/// auxiliary type linked with probability p_intra within a community and
/// p_inter across. Attributes are community means (mean_scale * N(0, 1) per
/// signal column) plus Gaussian noise; with the default mean_scale of 0 they
/// are random identity features and the communities live in the graph only.
/// Labels are community ids. Deterministic in spec.seed.
HeteroGraph generate_synthetic(const SyntheticSpec& spec);

}  // namespace hgmae
