#include "doctest.h"

#include "hgmae/errors.hpp"
#include "hgmae/trainer.hpp"
#include "hgmae/textio.hpp"
#include "test_util.hpp"

#include <cmath>
#include <limits>

using namespace hgmae;
using ad::Tensor;
using testutil::random_matrix;

namespace {

TrainConfig small_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.max_epochs = 30;
  c.patience = 10;
  c.hidden_dim = 8;
  c.heads = 2;
  c.semantic_dim = 4;
  c.positional_dim = 4;
  c.seed = seed;
  return c;
}

TrainData small_data(std::uint64_t seed = 3) {
  SyntheticSpec s = testutil::small_synthetic(seed);
  s.relations = 2;
  const HeteroGraph g = generate_synthetic(s);
  return TrainData::from_graph(g, random_matrix(g.target_count(), 4, seed + 100));
}

std::vector<Matrix> snapshot(const ModelParams& p) {
  std::vector<Matrix> out;
  for (const auto& nt : p.named()) out.push_back(nt.tensor.value());
  return out;
}

}  // namespace

TEST_CASE("data from a graph has one view per metapath") {
  const TrainData d = small_data();
  CHECK(d.views.size() == 2);
  CHECK(d.view_names.size() == 2);
  CHECK(d.attributes.rows() == 20);
  CHECK_THROWS_AS(TrainData::from_graph(generate_synthetic(testutil::small_synthetic()), Matrix::Zero(3, 4)), ShapeError);
}

TEST_CASE("init_params is deterministic and within bounds") {
  const TrainConfig c = small_config(5);
  const ModelParams a = init_params(c, 6);
  const ModelParams b = init_params(c, 6);
  CHECK(snapshot(a) == snapshot(b));
  CHECK(snapshot(a) != snapshot(init_params(small_config(6), 6)));
  CHECK(a.attr_mask_token.value().isZero(0.0));
  for (const auto& nt : a.named()) {
    const Matrix& v = nt.tensor.value();
    const double bound = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
    CHECK(v.cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  c.weight_decay = 0.1;
  const TrainData d = small_data();
  TrainState s = make_train_state(c, d.attributes.cols());
  const auto before = snapshot(s.params);
  const EpochLog log = train_step(s, d, c);
  CHECK(snapshot(s.params) == before);
  CHECK(std::isfinite(log.report.total));
  CHECK(log.report.total > 0.0);
  CHECK(s.epoch == 1);
}

TEST_CASE("training is deterministic") {
  const TrainConfig c = small_config(7);
  const TrainData d = small_data();
  const FitResult a = fit(d, c);
  const FitResult b = fit(d, c);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].report.total == b.log[i].report.total);
  CHECK(snapshot(a.params) == snapshot(b.params));
}

TEST_CASE("fifty steps reduce the loss on a 20-node graph") {
  const TrainConfig c = small_config(8);
  const TrainData d = small_data(9);
  TrainState s = make_train_state(c, d.attributes.cols());
  const double start = evaluate_epoch(s.params, d, c, 0).report.total;
  for (int i = 0; i < 50; ++i) train_step(s, d, c);
  // Same masks as the starting value.
  const double end = evaluate_epoch(s.params, d, c, 0).report.total;
  INFO("start " << start << ", end " << end);
  CHECK(end < start);
}

TEST_CASE("early stopping semantics") {
  EarlyStopping e(5);
  CHECK(e.update(1.0));
  for (int i = 0; i < 4; ++i) {
    CHECK_FALSE(e.update(1.0));
    CHECK_FALSE(e.should_stop());
  }
  CHECK_FALSE(e.update(1.0 - 0.5 * kImprovementThreshold));
  CHECK(e.should_stop());
  CHECK(e.best() == 1.0);

  EarlyStopping f(2);
  f.update(1.0);
  f.update(2.0);
  CHECK(f.update(0.9));
  CHECK(f.since_improvement() == 0);
  CHECK(f.best() == 0.9);
}

TEST_CASE("fit honours max epochs and patience") {
  const TrainData d = small_data();
  for (int patience : {1, 3}) {
    TrainConfig c = small_config(10);
    c.patience = patience;
    c.max_epochs = 40;
    c.learning_rate = 0.05;
    const FitResult r = fit(d, c);
    CHECK(r.log.size() <= 40);
    if (r.stopped_early) {
      // The last `patience` epochs did not improve on the best loss before them.
      double best = std::numeric_limits<double>::infinity();
      const std::size_t cut = r.log.size() - static_cast<std::size_t>(patience);
      for (std::size_t i = 0; i < cut; ++i) best = std::min(best, r.log[i].report.total);
      for (std::size_t i = cut; i < r.log.size(); ++i) CHECK(r.log[i].report.total >= best - kImprovementThreshold);
    } else {
      CHECK(r.log.size() == 40);
    }
  }
}

TEST_CASE("fit with zero epochs returns the initial parameters") {
  TrainConfig c = small_config(11);
  c.max_epochs = 0;
  const TrainData d = small_data();
  const FitResult r = fit(d, c);
  CHECK(r.log.empty());
  CHECK(r.best_epoch == -1);
  CHECK(snapshot(r.params) == snapshot(init_params(c, d.attributes.cols())));
}

TEST_CASE("returned parameters replay the best logged loss") {
  const TrainConfig c = small_config(12);
  const TrainData d = small_data(13);
  const auto dir = testutil::scratch_dir("trainer_replay");
  FitOptions o;
  o.checkpoint = dir / "best.json";
  int calls = 0;
  o.on_epoch = [&](const EpochLog&) { ++calls; };
  const FitResult r = fit(d, c, o);
  CHECK(calls == static_cast<int>(r.log.size()));
  REQUIRE(r.best_epoch >= 0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.log) best = std::min(best, e.report.total);
  const double logged = r.log[static_cast<std::size_t>(r.best_epoch)].report.total;
  CHECK(logged <= best + kImprovementThreshold);
  const double replay = evaluate_epoch(r.params, d, c, r.best_epoch).report.total;
  CHECK(std::abs(replay - logged) <= 1e-10);

  const ModelParams saved = load_checkpoint(dir / "best.json");
  CHECK(snapshot(saved) == snapshot(r.params));
}

TEST_CASE("fit rejects a non-positive learning rate") {
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(fit(small_data(), c), ConfigError);
}

TEST_CASE("MER-only weights update only the MER path") {
  TrainConfig c = small_config(14);
  c.loss.mu = 0.0;
  c.loss.eta = 0.0;
  const TrainData d = small_data();
  TrainState s = make_train_state(c, d.attributes.cols());
  const auto before = s.params.named();
  std::vector<Matrix> values;
  for (const auto& nt : before) values.push_back(nt.tensor.value());
  for (int i = 0; i < 3; ++i) train_step(s, d, c);
  const auto after = s.params.named();
  bool encoder_moved = false;
  for (std::size_t k = 0; k < after.size(); ++k) {
    const std::string group = parameter_group(after[k].name);
    const bool changed = after[k].tensor.value() != values[k];
    CAPTURE(after[k].name);
    if (group == "attr_decoder" || group == "mlp_decoder" || group == "tokens") CHECK_FALSE(changed);
    if (group == "encoder" || group == "edge_decoder" || group == "loss_fusion") encoder_moved |= changed;
  }
  CHECK(encoder_moved);
}

TEST_CASE("adam step matches the update rule") {
  Rng rng(15);
  const ModelParams p = ModelParams::initialize({3, 2, 1, 2, 2}, rng);
  const Matrix w = random_matrix(3, 2, 16);
  const Matrix theta0 = p.proj_weight.value();
  const auto others = snapshot(p);
  p.zero_grad();
  ad::backward(ad::sum(ad::mul(p.proj_weight, Tensor::constant(w))));

  AdamState st;
  const double lr = 0.1, wd = 0.01;
  adam_step(p, st, lr, wd);
  const Matrix g = w + wd * theta0;
  const Matrix m = (1 - kAdamBeta1) * g;
  const Matrix v = (1 - kAdamBeta2) * g.cwiseAbs2();
  const Matrix mh = m / (1 - kAdamBeta1);
  const Matrix vh = v / (1 - kAdamBeta2);
  const Matrix expected = theta0 - lr * (mh.array() / (vh.array().sqrt() + kAdamEpsilon)).matrix();
  CHECK((p.proj_weight.value() - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(st.steps == 1);

  // Every other parameter has zero loss gradient and moves only through weight decay.
  const auto after = p.named();
  for (std::size_t k = 0; k < after.size(); ++k) {
    if (after[k].name == "encoder.proj.weight") continue;
    const Matrix& before = others[k];
    const Matrix& now = after[k].tensor.value();
    for (Index i = 0; i < now.size(); ++i) {
      const double b = before.data()[i];
      const double gd = wd * b;
      const double step = gd / (std::abs(gd) + kAdamEpsilon);
      CHECK(std::abs(now.data()[i] - (b - lr * step)) < 1e-15);
    }
  }
}

TEST_CASE("corruption is replayable per epoch and follows the schedule") {
  const TrainConfig c = small_config(17);
  const TrainData d = small_data();
  const auto a = draw_corruption(d, c, 12);
  const auto b = draw_corruption(d, c, 12);
  CHECK(a.attr_rate == schedule_rate(c.schedule, 12));
  CHECK(a.plan.masked == b.plan.masked);
  REQUIRE(a.edges.size() == 2);
  CHECK(a.edges[1].kept == b.edges[1].kept);
  CHECK(static_cast<Index>(a.plan.masked.size()) == round_count(a.attr_rate * 20));
  const auto other = draw_corruption(d, c, 13);
  CHECK((other.plan.masked != a.plan.masked || other.edges[0].kept != a.edges[0].kept));
}

TEST_CASE("non-finite loss raises a divergence error") {
  const TrainConfig c = small_config(18);
  const TrainData d = small_data();
  TrainState s = make_train_state(c, d.attributes.cols());
  s.params.mlp_b2.mutable_value()(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train_step(s, d, c);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("embed is deterministic, shaped, and differs from a masked pass") {
  const TrainConfig c = small_config(19);
  const TrainData d = small_data();
  const ModelParams p = init_params(c, d.attributes.cols());
  const Matrix h = embed(p, d);
  CHECK(h.rows() == 20);
  CHECK(h.cols() == 8);
  CHECK(embed(p, d) == h);

  ModelParams q = p.clone();
  q.attr_mask_token.mutable_value() = random_matrix(1, d.attributes.cols(), 20);
  const auto corruption = draw_corruption(d, c, 0);
  REQUIRE_FALSE(corruption.plan.token_rows.empty());
  const Tensor x = apply_attribute_mask(Tensor::constant(d.attributes), corruption.plan, q.attr_mask_token);
  const Matrix h3 = encode(q, d.views, x).fused.value();
  CHECK((h3 - embed(q, d)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("loss CSV layout") {
  CHECK(loss_csv_header({"PAP", "PSP"}) == "epoch,p_a,L_MER,L_TAR,L_PFP,total,alpha_PAP,alpha_PSP");
  EpochLog log;
  log.epoch = 3;
  log.attr_rate = 0.5;
  log.report = {0.25, 0.5, 1.0, 1.75, {0.1, 0.2}, {0.4, 0.6}};
  const std::string row = loss_csv_row(log);
  CHECK(row.rfind("3,0.5,0.25,0.5,1,1.75,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
}
