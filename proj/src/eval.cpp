#include "hgmae/eval.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace hgmae {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

int class_count(std::span<const int> labels) {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

Matrix softmax_rows(Matrix logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

Matrix rows_of(const Matrix& h, std::span<const Index> idx) {
  Matrix out(static_cast<Index>(idx.size()), h.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = h.row(idx[i]);
  return out;
}

std::vector<int> labels_of(std::span<const int> labels, std::span<const Index> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

Split make_splits(std::span<const int> labels, int labels_per_class, Index val_size, Index test_size,
                  std::uint64_t seed) {
  if (labels_per_class < 1 || val_size < 0 || test_size < 0) {
    throw ProtocolError("make_splits: sizes must be positive");
  }
  const int classes = class_count(labels);
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw ProtocolError("make_splits: negative label");
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }
  Rng rng(derive_seed(seed, "eval/split"));
  Split s;
  s.labels_per_class = labels_per_class;
  std::vector<Index> rest;
  for (int c = 0; c < classes; ++c) {
    auto& m = members[static_cast<std::size_t>(c)];
    if (m.empty()) continue;
    if (static_cast<int>(m.size()) < labels_per_class) {
      throw ProtocolError("make_splits: class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                          " members, fewer than " + std::to_string(labels_per_class));
    }
    shuffle(m, rng);
    s.train.insert(s.train.end(), m.begin(), m.begin() + labels_per_class);
    rest.insert(rest.end(), m.begin() + labels_per_class, m.end());
  }
  if (static_cast<Index>(rest.size()) < val_size + test_size) {
    throw ProtocolError("make_splits: " + std::to_string(s.train.size()) + " train + " + std::to_string(val_size) +
                        " val + " + std::to_string(test_size) + " test exceeds " + std::to_string(labels.size()) +
                        " labelled nodes");
  }
  std::sort(rest.begin(), rest.end());
  shuffle(rest, rng);
  s.val.assign(rest.begin(), rest.begin() + val_size);
  s.test.assign(rest.begin() + val_size, rest.begin() + val_size + test_size);
  return s;
}

// ---------------------------------------------------------------------------

Matrix LogisticModel::probabilities(const Matrix& x) const {
  Matrix logits = x * weight;
  logits.rowwise() += bias;
  return softmax_rows(std::move(logits));
}

std::vector<int> LogisticModel::predict(const Matrix& x) const {
  const Matrix p = probabilities(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) {
    Index best = 0;
    p.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, int classes, double reg) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || x.rows() == 0) {
    throw ParameterError("fit_logistic: need one label per row");
  }
  if (!(reg >= 0.0)) throw ParameterError("fit_logistic: regularisation must be >= 0");
  const Index n = x.rows();
  const Index d = x.cols();
  Matrix xb(n, d + 1);
  xb.leftCols(d) = x;
  xb.col(d).setOnes();
  Matrix onehot = Matrix::Zero(n, classes);
  for (Index i = 0; i < n; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;

  // Lipschitz constant of the gradient: softmax curvature is at most 1/2.
  const Matrix gram = xb.transpose() * xb / static_cast<double>(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1);
  double lmax = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = gram * v;
    const double norm = w.norm();
    if (norm == 0.0) break;
    lmax = norm / v.norm();
    v = w / norm;
  }
  const double lipschitz = 0.5 * lmax + reg + 1e-12;
  const double step = 1.0 / lipschitz;

  auto gradient = [&](const Matrix& theta) {
    const Matrix p = softmax_rows(xb * theta);
    Matrix g = xb.transpose() * (p - onehot) / static_cast<double>(n);
    g.topRows(d) += reg * theta.topRows(d);
    return g;
  };

  Matrix theta = Matrix::Zero(d + 1, classes);
  Matrix look = theta;
  double t = 1.0;
  LogisticModel model;
  constexpr int kMaxIterations = 50000;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Matrix g = gradient(look);
    model.iterations = it + 1;
    if (g.cwiseAbs().maxCoeff() < 1e-8) {
      theta = look;
      model.converged = true;
      break;
    }
    const Matrix next = look - step * g;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Restart momentum when it points uphill.
    if ((g.array() * (next - theta).array()).sum() > 0.0) {
      look = next;
      t = 1.0;
    } else {
      look = next + ((t - 1.0) / t_next) * (next - theta);
      t = t_next;
    }
    theta = next;
  }
  model.weight = theta.topRows(d);
  model.bias = theta.row(d);
  return model;
}

double micro_f1(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ParameterError("micro_f1: length mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double macro_f1(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ParameterError("macro_f1: length mismatch or empty");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(pred.begin(), pred.end());
  double total = 0.0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      else if (pred[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    const double denom = 2 * tp + fp + fn;
    total += denom > 0 ? 2 * tp / denom : 0.0;
  }
  return total / static_cast<double>(classes.size());
}

double binary_auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw ParameterError("binary_auc: need positives and negatives");
  std::vector<double> all(pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  const auto ranks = average_ranks(all);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) rank_sum += ranks[i];
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double macro_auc(const Matrix& probabilities, std::span<const int> truth) {
  double total = 0.0;
  int used = 0;
  for (Index c = 0; c < probabilities.cols(); ++c) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      (truth[i] == c ? pos : neg).push_back(probabilities(static_cast<Index>(i), c));
    }
    if (pos.empty() || neg.empty()) continue;
    total += binary_auc(pos, neg);
    ++used;
  }
  if (used == 0) throw ProtocolError("macro_auc: no class has both positives and negatives");
  return total / used;
}

ClassificationScores linear_probe(const Matrix& h, const Split& split, std::span<const int> labels) {
  const auto train_y = labels_of(labels, split.train);
  if (std::set<int>(train_y.begin(), train_y.end()).size() < 2) {
    throw ProtocolError("linear_probe: training split has a single class");
  }
  if (split.test.empty()) throw ProtocolError("linear_probe: empty test split");
  const int classes = class_count(labels);
  const Matrix train_x = rows_of(h, split.train);

  const std::span<const Index> select = split.val.empty() ? std::span<const Index>(split.train)
                                                          : std::span<const Index>(split.val);
  const Matrix select_x = rows_of(h, select);
  const auto select_y = labels_of(labels, select);

  LogisticModel best;
  double best_score = -1.0;
  double best_reg = 0.0;
  for (double reg : kProbeRegularization) {
    LogisticModel m = fit_logistic(train_x, train_y, classes, reg);
    const double score = micro_f1(m.predict(select_x), select_y);
    if (score > best_score) {
      best_score = score;
      best = std::move(m);
      best_reg = reg;
    }
  }

  const Matrix test_x = rows_of(h, split.test);
  const auto test_y = labels_of(labels, split.test);
  ClassificationScores out;
  out.reg = best_reg;
  out.predictions = best.predict(test_x);
  out.micro_f1 = micro_f1(out.predictions, test_y);
  out.macro_f1 = macro_f1(out.predictions, test_y);
  out.auc = macro_auc(best.probabilities(test_x), test_y);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

KMeansResult lloyd(const Matrix& h, int k, Rng& rng) {
  const Index n = h.rows();
  Matrix centers(k, h.cols());
  // k-means++ seeding.
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  centers.row(0) = h.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      dist[static_cast<std::size_t>(i)] =
          std::min(dist[static_cast<std::size_t>(i)], (h.row(i) - centers.row(c - 1)).squaredNorm());
      total += dist[static_cast<std::size_t>(i)];
    }
    Index pick = -1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        u -= dist[static_cast<std::size_t>(i)];
        if (u < 0.0 && dist[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Index i = n - 1; i >= 0; --i)
          if (dist[static_cast<std::size_t>(i)] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      // Every point coincides with a centre; take any unused point.
      std::vector<Index> unused;
      for (Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) unused.push_back(i);
      pick = unused[static_cast<std::size_t>(rng.below(unused.size()))];
    }
    chosen[static_cast<std::size_t>(pick)] = true;
    centers.row(c) = h.row(pick);
  }

  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), -1);
  constexpr int kMaxIterations = 300;
  for (int it = 0; it < kMaxIterations; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (h.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      inertia += best_d;
      if (r.assignment[static_cast<std::size_t>(i)] != best) {
        r.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    r.inertia_trace.push_back(inertia);
    r.inertia = inertia;
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, h.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.assignment[static_cast<std::size_t>(i)]) += h.row(i);
      ++counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      // An empty cluster keeps its previous centre.
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  return r;
}

}  // namespace

KMeansResult kmeans_cluster(const Matrix& h, int k, int restarts, std::uint64_t seed) {
  if (k < 1 || restarts < 1) throw ParameterError("kmeans_cluster: k and restarts must be >= 1");
  if (k > h.rows()) throw ParameterError("kmeans_cluster: k exceeds the number of points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "eval/kmeans", static_cast<std::uint64_t>(r)));
    KMeansResult run = lloyd(h, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

ClusterScores nmi_ari(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw ParameterError("nmi_ari: empty input");
  if (pred.size() != truth.size()) throw ParameterError("nmi_ari: length mismatch");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> a, b;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    joint[{pred[i], truth[i]}] += 1.0;
    a[pred[i]] += 1.0;
    b[truth[i]] += 1.0;
  }
  const double n = static_cast<double>(pred.size());

  double mi = 0.0;
  for (const auto& [key, nij] : joint) {
    mi += nij / n * std::log(n * nij / (a[key.first] * b[key.second]));
  }
  auto entropy = [n](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [_, c] : m) h -= c / n * std::log(c / n);
    return h;
  };
  const double ha = entropy(a);
  const double hb = entropy(b);
  ClusterScores s;
  s.nmi = (ha + hb) > 0.0 ? std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0) : 1.0;

  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, c] : joint) sum_ij += choose2(c);
  for (const auto& [_, c] : a) sum_a += choose2(c);
  for (const auto& [_, c] : b) sum_b += choose2(c);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  s.ari = max_index - expected != 0.0 ? (sum_ij - expected) / (max_index - expected) : 1.0;
  return s;
}

EdgeList sample_non_edges(const Matrix& adjacency, std::size_t count, std::uint64_t seed) {
  const bool symmetric = adjacency.isApprox(adjacency.transpose(), 0.0);
  EdgeList pool;
  for (Index i = 0; i < adjacency.rows(); ++i) {
    for (Index j = symmetric ? i + 1 : 0; j < adjacency.cols(); ++j) {
      if (i != j && adjacency(i, j) == 0.0) pool.emplace_back(i, j);
    }
  }
  Rng rng(derive_seed(seed, "eval/non_edges"));
  const std::size_t take = std::min(count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

std::optional<double> edge_auc(const EdgeList& held_out, const EdgeList& non_edges, const Matrix& scores) {
  if (held_out.empty() || non_edges.empty()) return std::nullopt;
  std::vector<double> pos, neg;
  for (const auto& [i, j] : held_out) pos.push_back(scores(i, j));
  for (const auto& [i, j] : non_edges) neg.push_back(scores(i, j));
  return binary_auc(pos, neg);
}

MeanStd summarize(std::span<const double> values) {
  MeanStd s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

}  // namespace hgmae
