#pragma once

// Downstream evaluation of frozen embeddings: stratified splits, a
// multinomial logistic-regression probe, k-means, and the usual metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace hgmae {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;

struct Split {
  std::vector<Index> train, val, test;
  int labels_per_class = 0;
};

/// labels_per_class training nodes per class, then val_size and test_size
/// nodes drawn uniformly from the rest.
Split make_splits(std::span<const int> labels, int labels_per_class, Index val_size, Index test_size,
                  std::uint64_t seed);

struct LogisticModel {
  Matrix weight;  // d x C
  Eigen::RowVectorXd bias;
  int iterations = 0;
  bool converged = false;

  Matrix probabilities(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
};

/// Minimises mean cross-entropy + reg/2 * |W|^2 (bias unpenalised) by
/// accelerated full-batch gradient descent until the gradient max-norm drops
/// below 1e-8.
LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, int classes, double reg);

inline constexpr double kProbeRegularization[] = {1e-3, 1e-2, 1e-1, 1.0};

struct ClassificationScores {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double auc = 0.0;
  double reg = 0.0;
  std::vector<int> predictions;  // on split.test
};

/// Probe trained on split.train, regularisation picked by val micro-F1,
/// scored on split.test.
ClassificationScores linear_probe(const Matrix& h, const Split& split, std::span<const int> labels);

double micro_f1(std::span<const int> pred, std::span<const int> truth);
double macro_f1(std::span<const int> pred, std::span<const int> truth);
/// Mann-Whitney AUC with tied scores counted as one half.
double binary_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);
/// Macro one-vs-rest AUC over classes with both positives and negatives.
double macro_auc(const Matrix& probabilities, std::span<const int> truth);

struct KMeansResult {
  std::vector<int> assignment;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // best restart, after each assignment step
};

/// Lloyd's algorithm from k-means++ seeds; best inertia over restarts.
KMeansResult kmeans_cluster(const Matrix& h, int k, int restarts, std::uint64_t seed);

struct ClusterScores {
  double nmi = 0.0;
  double ari = 0.0;
};

/// NMI with arithmetic-mean normalisation and the adjusted Rand index.
ClusterScores nmi_ari(std::span<const int> pred, std::span<const int> truth);

using EdgeList = std::vector<std::pair<Index, Index>>;

/// Up to `count` distinct off-diagonal zero entries of the adjacency (i < j
/// when it is symmetric), uniformly without replacement.
EdgeList sample_non_edges(const Matrix& adjacency, std::size_t count, std::uint64_t seed);

/// Ranking AUC of scores: held-out edges positive, non-edges negative.
/// nullopt when there are no held-out edges.
std::optional<double> edge_auc(const EdgeList& held_out, const EdgeList& non_edges, const Matrix& scores);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population standard deviation.
MeanStd summarize(std::span<const double> values);

}  // namespace hgmae
