#include "hgmae/mp2vec.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hgmae {

void WalkConfig::validate() const {
  if (walks_per_node < 1 || walk_length < 1 || window < 1 || negatives < 1 || dim < 1 || epochs < 0) {
    throw ParameterError("walk config: counts must be positive");
  }
  if (window >= walk_length) throw ParameterError("walk config: window must be smaller than walk_length");
  if (!(learning_rate > 0.0)) throw ParameterError("walk config: learning_rate must be positive");
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Neighbour lists of one metapath step, indexed by the step's source node.
std::vector<std::vector<Index>> step_neighbors(const HeteroGraph& g, const MetapathStep& step) {
  const Relation& rel = g.relations.at(step.relation);
  const auto [from, to] = g.step_types(step);
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(g.node_counts.at(from)));
  for (const auto& [s, d] : rel.edges) {
    if (step.reversed) {
      lists[static_cast<std::size_t>(d)].push_back(s);
    } else {
      lists[static_cast<std::size_t>(s)].push_back(d);
    }
  }
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return lists;
}

}  // namespace

std::vector<Walk> generate_walks(const HeteroGraph& g, const Metapath& mp, const WalkConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<std::vector<Index>>> steps;
  std::vector<std::string> dst_types;
  for (const auto& step : mp.steps) {
    steps.push_back(step_neighbors(g, step));
    dst_types.push_back(g.step_types(step).second);
  }

  const Index n = g.target_count();
  std::vector<Walk> walks;
  walks.reserve(static_cast<std::size_t>(n * cfg.walks_per_node));
  for (Index start = 0; start < n; ++start) {
    for (int rep = 0; rep < cfg.walks_per_node; ++rep) {
      // Per-start seeds make each walk independent of iteration order.
      Rng rng(derive_seed(cfg.seed, "mp2vec/walk/" + mp.name, static_cast<std::uint64_t>(start),
                          static_cast<std::uint64_t>(rep)));
      Walk walk;
      walk.reserve(static_cast<std::size_t>(cfg.walk_length));
      walk.push_back({g.target_type, start});
      Index current = start;
      for (int t = 1; t < cfg.walk_length; ++t) {
        const std::size_t k = static_cast<std::size_t>(t - 1) % steps.size();
        const auto& nbrs = steps[k][static_cast<std::size_t>(current)];
        if (nbrs.empty()) break;
        current = nbrs[static_cast<std::size_t>(rng.below(nbrs.size()))];
        walk.push_back({dst_types[k], current});
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

NodeVocabulary::NodeVocabulary(const HeteroGraph& g) {
  for (const auto& [type, count] : g.node_counts) {
    types_.push_back(type);
    offsets_.push_back(total_);
    for (Index i = 0; i < count; ++i) type_of_.push_back(static_cast<int>(types_.size() - 1));
    total_ += count;
  }
}

Index NodeVocabulary::offset(const std::string& type) const {
  auto it = std::find(types_.begin(), types_.end(), type);
  if (it == types_.end()) throw ValidationError("vocabulary: unknown node type '" + type + "'");
  return offsets_[static_cast<std::size_t>(it - types_.begin())];
}

Index NodeVocabulary::id(const NodeRef& n) const { return offset(n.type) + n.index; }

double skipgram_example_loss(const Eigen::RowVectorXd& center, const Eigen::RowVectorXd& context,
                             const std::vector<Eigen::RowVectorXd>& negatives) {
  double loss = -std::log(sigmoid(center.dot(context)));
  for (const auto& neg : negatives) loss -= std::log(sigmoid(-center.dot(neg)));
  return loss;
}

SkipGramGradients skipgram_example_gradients(const Eigen::RowVectorXd& center,
                                             const Eigen::RowVectorXd& context,
                                             const std::vector<Eigen::RowVectorXd>& negatives) {
  SkipGramGradients g;
  const double pos = sigmoid(center.dot(context)) - 1.0;
  g.center = pos * context;
  g.context = pos * center;
  for (const auto& neg : negatives) {
    const double s = sigmoid(center.dot(neg));
    g.center += s * neg;
    g.negatives.push_back(s * center);
  }
  return g;
}

SkipGramModel train_skipgram(std::span<const Walk> walks, const NodeVocabulary& vocab, const WalkConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<Index>> corpus;
  std::size_t positions = 0;
  for (const auto& w : walks) {
    if (w.size() < 2) continue;
    std::vector<Index> ids;
    ids.reserve(w.size());
    for (const auto& node : w) ids.push_back(vocab.id(node));
    positions += ids.size();
    corpus.push_back(std::move(ids));
  }
  if (corpus.empty()) throw DataError("train_skipgram: corpus has no walk with two or more nodes");

  const Index dim = cfg.dim;
  Rng init_rng(derive_seed(cfg.seed, "mp2vec/init"));
  SkipGramModel model;
  model.center.resize(vocab.size(), dim);
  for (Index i = 0; i < vocab.size(); ++i)
    for (Index j = 0; j < dim; ++j) model.center(i, j) = init_rng.uniform(-0.5, 0.5) / static_cast<double>(dim);
  model.context = Matrix::Zero(vocab.size(), dim);

  // Per-type negative sampling tables over unigram counts ^ 0.75.
  std::vector<double> counts(static_cast<std::size_t>(vocab.size()), 0.0);
  for (const auto& walk : corpus)
    for (Index id : walk) counts[static_cast<std::size_t>(id)] += 1.0;
  std::vector<std::vector<Index>> table_ids(static_cast<std::size_t>(vocab.type_count()));
  std::vector<std::vector<double>> table_cdf(static_cast<std::size_t>(vocab.type_count()));
  for (Index id = 0; id < vocab.size(); ++id) {
    const double c = counts[static_cast<std::size_t>(id)];
    if (c == 0.0) continue;
    const auto t = static_cast<std::size_t>(vocab.type_of(id));
    const double prev = table_cdf[t].empty() ? 0.0 : table_cdf[t].back();
    table_ids[t].push_back(id);
    table_cdf[t].push_back(prev + std::pow(c, 0.75));
  }
  Rng rng(derive_seed(cfg.seed, "mp2vec/skipgram"));
  auto draw_negative = [&](int type) {
    const auto& cdf = table_cdf[static_cast<std::size_t>(type)];
    const double u = rng.uniform() * cdf.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    return table_ids[static_cast<std::size_t>(type)][std::min(k, cdf.size() - 1)];
  };

  const double total_steps = static_cast<double>(positions) * static_cast<double>(std::max(cfg.epochs, 1));
  double done = 0.0;
  Eigen::RowVectorXd accum(dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    for (const auto& walk : corpus) {
      const auto len = static_cast<std::ptrdiff_t>(walk.size());
      for (std::ptrdiff_t i = 0; i < len; ++i) {
        const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - done / total_steps);
        done += 1.0;
        const Index w = walk[static_cast<std::size_t>(i)];
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - cfg.window);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len - 1, i + cfg.window);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const Index c = walk[static_cast<std::size_t>(j)];
          accum.setZero();
          auto v = model.center.row(w);
          auto update = [&](Index target, double label) {
            auto u = model.context.row(target);
            const double f = sigmoid(v.dot(u));
            loss_sum -= std::log(label > 0.0 ? std::max(f, 1e-300) : std::max(1.0 - f, 1e-300));
            const double g = (label - f) * lr;
            accum += g * u;
            u += g * v;
          };
          update(c, 1.0);
          const int type = vocab.type_of(c);
          for (int k = 0; k < cfg.negatives; ++k) {
            const Index neg = draw_negative(type);
            if (neg == c) continue;
            update(neg, 0.0);
          }
          v += accum;
          ++pairs;
        }
      }
    }
    model.epoch_loss.push_back(pairs ? loss_sum / static_cast<double>(pairs) : 0.0);
  }
  return model;
}

Matrix positional_features(const HeteroGraph& g, const WalkConfig& cfg) {
  if (g.metapaths.empty()) throw ValidationError("positional_features: no metapaths");
  std::vector<Walk> corpus;
  for (const auto& mp : g.metapaths) {
    auto walks = generate_walks(g, mp, cfg);
    corpus.insert(corpus.end(), std::make_move_iterator(walks.begin()), std::make_move_iterator(walks.end()));
  }
  const NodeVocabulary vocab(g);
  const SkipGramModel model = train_skipgram(corpus, vocab, cfg);

  std::vector<bool> seen(static_cast<std::size_t>(vocab.size()), false);
  for (const auto& w : corpus) {
    if (w.size() < 2) continue;
    for (const auto& node : w) seen[static_cast<std::size_t>(vocab.id(node))] = true;
  }
  const Index n = g.target_count();
  const Index offset = vocab.offset(g.target_type);
  Matrix p = Matrix::Zero(n, cfg.dim);
  for (Index i = 0; i < n; ++i) {
    if (!seen[static_cast<std::size_t>(offset + i)]) continue;
    const auto row = model.center.row(offset + i);
    const double norm = row.norm();
    if (norm > 0.0) p.row(i) = row / norm;
  }
  return p;
}

}  // namespace hgmae
