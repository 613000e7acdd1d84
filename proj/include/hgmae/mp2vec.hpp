#pragma once

// Metapath-guided random walks and skip-gram with negative sampling. The
// centre embeddings of target nodes become the positional features that the
// MLP decoder learns to predict.

#include "hgmae/hetgraph.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgmae {

struct WalkConfig {
  int walks_per_node = 10;
  int walk_length = 20;
  int window = 5;
  int negatives = 5;
  Index dim = 64;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NodeRef {
  std::string type;
  Index index = 0;
  bool operator==(const NodeRef&) const = default;
};

using Walk = std::vector<NodeRef>;

/// Follows mp's relation sequence cyclically from every target node,
/// cfg.walks_per_node times each; stops early at a node with no neighbour
/// under the next relation.
std::vector<Walk> generate_walks(const HeteroGraph& g, const Metapath& mp, const WalkConfig& cfg);

/// Maps (type, index) to a contiguous vocabulary id, types in name order.
class NodeVocabulary {
 public:
  explicit NodeVocabulary(const HeteroGraph& g);
  Index id(const NodeRef& n) const;
  Index size() const { return total_; }
  Index offset(const std::string& type) const;
  int type_of(Index id) const { return type_of_[static_cast<std::size_t>(id)]; }
  int type_count() const { return static_cast<int>(types_.size()); }

 private:
  std::vector<std::string> types_;
  std::vector<Index> offsets_;
  std::vector<int> type_of_;
  Index total_ = 0;
};

struct SkipGramModel {
  Matrix center;   // vocabulary x dim
  Matrix context;  // vocabulary x dim
  std::vector<double> epoch_loss;  // mean pair loss per epoch
};

/// Loss of one (centre, context, negatives) example:
/// -log sigma(u_c . v_w) - sum_n log sigma(-u_n . v_w).
double skipgram_example_loss(const Eigen::RowVectorXd& center, const Eigen::RowVectorXd& context,
                             const std::vector<Eigen::RowVectorXd>& negatives);

struct SkipGramGradients {
  Eigen::RowVectorXd center;
  Eigen::RowVectorXd context;
  std::vector<Eigen::RowVectorXd> negatives;
};

SkipGramGradients skipgram_example_gradients(const Eigen::RowVectorXd& center,
                                             const Eigen::RowVectorXd& context,
                                             const std::vector<Eigen::RowVectorXd>& negatives);

/// SGD over every (centre, context) pair inside the window; negatives come
/// from the unigram^0.75 distribution restricted to the context node's type.
/// The step size decays linearly to 1e-4 of its initial value.
SkipGramModel train_skipgram(std::span<const Walk> walks, const NodeVocabulary& vocab,
                             const WalkConfig& cfg);

/// Walks for every metapath pooled into one corpus, skip-gram trained, target
/// rows of the centre embedding scaled to unit norm (never-visited nodes stay
/// zero).
Matrix positional_features(const HeteroGraph& g, const WalkConfig& cfg);

}  // namespace hgmae
