#include "doctest.h"

#include "hgmae/errors.hpp"
#include "hgmae/eval.hpp"
#include "hgmae/mp2vec.hpp"
#include "hgmae/random.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace hgmae;
using testutil::random_matrix;

namespace {

// p0 - a0 - p1 plus an isolated paper p2.
HeteroGraph chain() {
  HeteroGraph g;
  g.target_type = "P";
  g.node_counts = {{"P", 3}, {"A", 1}};
  g.relations["PA"] = {"PA", "P", "A", {{0, 0}, {1, 0}}};
  g.attributes["P"] = Matrix::Identity(3, 3);
  g.metapaths = {{"PAP", {{"PA", false}, {"PA", true}}}};
  return g;
}

std::string type_at(const HeteroGraph& g, const Metapath& mp, std::size_t pos) {
  if (pos == 0) return g.target_type;
  return g.step_types(mp.steps[(pos - 1) % mp.steps.size()]).second;
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

WalkConfig small_walks(std::uint64_t seed = 1) {
  WalkConfig c;
  c.walks_per_node = 10;
  c.walk_length = 20;
  c.window = 3;
  c.negatives = 3;
  c.dim = 16;
  c.epochs = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("walks on a chain alternate types and only take legal moves") {
  const HeteroGraph g = chain();
  WalkConfig c = small_walks();
  c.walk_length = 9;
  const auto walks = generate_walks(g, g.metapaths[0], c);
  CHECK(walks.size() == 30);
  for (const auto& w : walks) {
    const Index start = w.front().index;
    if (start == 2) {
      CHECK(w.size() == 1);
      continue;
    }
    REQUIRE(w.size() == 9);
    for (std::size_t t = 0; t < w.size(); ++t) {
      if (t % 2 == 1) {
        CHECK(w[t] == NodeRef{"A", 0});
      } else {
        CHECK(w[t].type == "P");
        CHECK(w[t].index <= 1);
      }
    }
  }
}

TEST_CASE("walk type pattern follows the metapath cyclically") {
  SyntheticSpec s = testutil::small_synthetic(5);
  s.relations = 2;
  const HeteroGraph g = generate_synthetic(s);
  WalkConfig c = small_walks(2);
  c.walks_per_node = 250;
  c.walk_length = 11;
  std::size_t total = 0;
  for (const auto& mp : g.metapaths) {
    const auto walks = generate_walks(g, mp, c);
    total += walks.size();
    for (const auto& w : walks) {
      CHECK(w.size() <= 11);
      for (std::size_t t = 0; t < w.size(); ++t) {
        CHECK(w[t].type == type_at(g, mp, t));
        CHECK(w[t].index < g.node_counts.at(w[t].type));
      }
    }
  }
  CHECK(total >= 10000);
}

TEST_CASE("walks are deterministic in the seed") {
  const HeteroGraph g = generate_synthetic(testutil::small_synthetic());
  CHECK(generate_walks(g, g.metapaths[0], small_walks(3)) == generate_walks(g, g.metapaths[0], small_walks(3)));
  CHECK(generate_walks(g, g.metapaths[0], small_walks(3)) != generate_walks(g, g.metapaths[0], small_walks(4)));
}

TEST_CASE("walk config validation") {
  WalkConfig c;
  c.window = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = WalkConfig{};
  c.dim = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = WalkConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("vocabulary is contiguous in type-name order") {
  const HeteroGraph g = chain();
  const NodeVocabulary v(g);
  CHECK(v.size() == 4);
  CHECK(v.offset("A") == 0);
  CHECK(v.offset("P") == 1);
  CHECK(v.id({"P", 2}) == 3);
  CHECK(v.type_of(0) == 0);
  CHECK(v.type_count() == 2);
}

TEST_CASE("skip-gram example gradients match finite differences") {
  const Eigen::RowVectorXd u = random_matrix(1, 6, 10);
  const Eigen::RowVectorXd v = random_matrix(1, 6, 11);
  std::vector<Eigen::RowVectorXd> neg{random_matrix(1, 6, 12), random_matrix(1, 6, 13), random_matrix(1, 6, 14)};
  const auto g = skipgram_example_gradients(u, v, neg);
  const double h = 1e-6;

  const auto check_vector = [&](const Eigen::RowVectorXd& analytic, const auto& loss_with) {
    for (Index j = 0; j < analytic.size(); ++j) {
      const double numeric = (loss_with(j, h) - loss_with(j, -h)) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic(j)), 1e-8});
      CHECK(std::abs(numeric - analytic(j)) / denom < 1e-4);
    }
  };
  check_vector(g.center, [&](Index j, double d) {
    Eigen::RowVectorXd x = u;
    x(j) += d;
    return skipgram_example_loss(x, v, neg);
  });
  check_vector(g.context, [&](Index j, double d) {
    Eigen::RowVectorXd x = v;
    x(j) += d;
    return skipgram_example_loss(u, x, neg);
  });
  for (std::size_t k = 0; k < neg.size(); ++k) {
    check_vector(g.negatives[k], [&](Index j, double d) {
      auto n = neg;
      n[k](j) += d;
      return skipgram_example_loss(u, v, n);
    });
  }
}

TEST_CASE("skip-gram example loss by hand") {
  Eigen::RowVectorXd u(2), v(2);
  u << 1.0, 0.0;
  v << 2.0, 0.0;
  const std::vector<Eigen::RowVectorXd> none;
  CHECK(skipgram_example_loss(u, v, none) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
  // Negatives are scored against the centre vector: n . u = 3.
  Eigen::RowVectorXd n(2);
  n << 3.0, 1.0;
  const std::vector<Eigen::RowVectorXd> one{n};
  CHECK(skipgram_example_loss(u, v, one) ==
        doctest::Approx(std::log1p(std::exp(-2.0)) + std::log1p(std::exp(3.0))).epsilon(1e-14));
}

TEST_CASE("skip-gram loss decreases over epochs") {
  const HeteroGraph g = generate_synthetic(testutil::small_synthetic(6));
  const WalkConfig c = small_walks(7);
  const auto walks = generate_walks(g, g.metapaths[0], c);
  const auto model = train_skipgram(walks, NodeVocabulary(g), c);
  REQUIRE(model.epoch_loss.size() == 5);
  CHECK(model.epoch_loss.back() < model.epoch_loss.front());
}

TEST_CASE("zero epochs leave the initialization") {
  const HeteroGraph g = generate_synthetic(testutil::small_synthetic(8));
  WalkConfig c = small_walks(9);
  c.epochs = 0;
  const NodeVocabulary vocab(g);
  const auto model = train_skipgram(generate_walks(g, g.metapaths[0], c), vocab, c);
  CHECK(model.epoch_loss.empty());
  CHECK(model.context.isZero(0.0));
  Rng rng(derive_seed(c.seed, "mp2vec/init"));
  Matrix expected(vocab.size(), c.dim);
  for (Index i = 0; i < vocab.size(); ++i)
    for (Index j = 0; j < c.dim; ++j) expected(i, j) = rng.uniform(-0.5, 0.5) / static_cast<double>(c.dim);
  CHECK(model.center == expected);
}

TEST_CASE("skip-gram needs a walk with two nodes") {
  const HeteroGraph g = chain();
  const std::vector<Walk> walks{{{"P", 2}}};
  CHECK_THROWS_AS(train_skipgram(walks, NodeVocabulary(g), small_walks()), DataError);
}

TEST_CASE("always co-occurring nodes end closer than any cross-block pair") {
  // Block one: p0 and p1 share the single author a0. Block two: p2..p7 with authors a1..a3.
  HeteroGraph g;
  g.target_type = "P";
  g.node_counts = {{"P", 8}, {"A", 4}};
  g.relations["PA"] = {"PA", "P", "A", {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {3, 2}, {4, 2}, {5, 2}, {5, 3}, {6, 3}, {7, 3}, {7, 1}}};
  g.attributes["P"] = Matrix::Identity(8, 8);
  g.metapaths = {{"PAP", {{"PA", false}, {"PA", true}}}};
  WalkConfig c = small_walks(10);
  c.epochs = 20;
  c.dim = 8;
  const Matrix p = positional_features(g, c);
  const double inside = cosine(p.row(0), p.row(1));
  double cross = -1.0;
  for (Index i : {0, 1})
    for (Index j = 2; j < 8; ++j) cross = std::max(cross, cosine(p.row(i), p.row(j)));
  CHECK(inside > cross);
}

TEST_CASE("positional features are unit rows, zero for unvisited nodes, and reproducible") {
  const HeteroGraph g = chain();
  const WalkConfig c = small_walks(11);
  const Matrix p = positional_features(g, c);
  CHECK(p.rows() == 3);
  CHECK(p.cols() == 16);
  CHECK(std::abs(p.row(0).norm() - 1.0) <= 1e-9);
  CHECK(std::abs(p.row(1).norm() - 1.0) <= 1e-9);
  CHECK(p.row(2).isZero(0.0));
  CHECK(positional_features(g, c) == p);

  const HeteroGraph s = generate_synthetic(testutil::small_synthetic(12));
  const Matrix q = positional_features(s, small_walks(13));
  for (Index i = 0; i < q.rows(); ++i) {
    const double n = q.row(i).norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) <= 1e-9));
  }
}

TEST_CASE("positional features recover the planted communities") {
  const HeteroGraph g = generate_synthetic(SyntheticSpec{});
  WalkConfig c;
  c.seed = 7;
  const Matrix p = positional_features(g, c);
  const auto km = kmeans_cluster(p, 3, 10, 7);
  const double nmi = nmi_ari(km.assignment, *g.labels).nmi;
  INFO("NMI " << nmi);
  CHECK(nmi >= 0.5);
}
