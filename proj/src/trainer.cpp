#include "hgmae/trainer.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/textio.hpp"

#include <cmath>

namespace hgmae {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(edge_mask_rate >= 0.0 && edge_mask_rate < 1.0)) throw ConfigError("p_e must lie in [0, 1)");
  if (!(leave_unchanged >= 0.0) || !(replace >= 0.0) || leave_unchanged + replace > 1.0 + 1e-12) {
    throw ConfigError("p_u and p_r must be >= 0 with p_u + p_r <= 1");
  }
  if (hidden_dim < 1 || heads < 1 || semantic_dim < 1 || positional_dim < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  try {
    schedule.validate();
    loss.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

ModelShape TrainConfig::shape(Index attr_dim) const {
  return {attr_dim, hidden_dim, heads, semantic_dim, positional_dim};
}

TrainData TrainData::from_graph(const HeteroGraph& g, Matrix positions) {
  TrainData d;
  for (auto& v : build_all_views(g)) {
    d.view_names.push_back(v.metapath_name);
    d.views.push_back(std::move(v.adjacency));
  }
  d.attributes = g.target_attributes();
  if (positions.rows() != d.attributes.rows()) {
    throw ShapeError("positional features have " + std::to_string(positions.rows()) + " rows, expected " +
                     std::to_string(d.attributes.rows()));
  }
  d.positions = std::move(positions);
  return d;
}

void adam_step(const ModelParams& p, AdamState& state, double lr, double weight_decay) {
  const auto named = p.named();
  if (state.first.empty()) {
    for (const auto& nt : named) {
      state.first.push_back(Matrix::Zero(nt.tensor.rows(), nt.tensor.cols()));
      state.second.push_back(Matrix::Zero(nt.tensor.rows(), nt.tensor.cols()));
    }
  }
  ++state.steps;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.steps));
  for (std::size_t k = 0; k < named.size(); ++k) {
    ad::Tensor t = named[k].tensor;
    Matrix g = t.grad();
    if (weight_decay != 0.0) g += weight_decay * t.value();
    Matrix& m = state.first[k];
    Matrix& v = state.second[k];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseAbs2();
    const Matrix step =
        ((m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEpsilon)).matrix();
    t.mutable_value() -= lr * step;
  }
}

ModelParams init_params(const TrainConfig& cfg, Index attr_dim) {
  Rng rng(derive_seed(cfg.seed, "model/init"));
  return ModelParams::initialize(cfg.shape(attr_dim), rng);
}

EpochCorruption draw_corruption(const TrainData& data, const TrainConfig& cfg, long epoch) {
  EpochCorruption c;
  c.attr_rate = schedule_rate(cfg.schedule, epoch);
  for (std::size_t k = 0; k < data.views.size(); ++k) {
    Rng rng(derive_seed(cfg.seed, "mask/edges", static_cast<std::uint64_t>(epoch), k));
    MetapathView view{data.view_names[k], data.views[k]};
    c.edges.push_back(mask_edges(view, cfg.edge_mask_rate, rng));
  }
  Rng rng(derive_seed(cfg.seed, "mask/attributes", static_cast<std::uint64_t>(epoch)));
  c.plan = plan_attribute_mask(data.attributes.rows(), c.attr_rate, cfg.leave_unchanged, cfg.replace, rng);
  return c;
}

LossBundle evaluate_epoch(const ModelParams& p, const TrainData& data, const TrainConfig& cfg, long epoch) {
  const EpochCorruption c = draw_corruption(data, cfg, epoch);
  std::vector<Matrix> masked;
  masked.reserve(c.edges.size());
  for (const auto& e : c.edges) masked.push_back(e.kept);
  const ad::Tensor x = ad::Tensor::constant(data.attributes);
  const ad::Tensor pos = ad::Tensor::constant(data.positions);
  LossInputs in;
  in.views = data.views;
  in.masked = masked;
  in.attributes = &x;
  in.positions = &pos;
  in.plan = &c.plan;
  in.tar_target = cfg.tar_target;
  return compute_losses(p, in, cfg.loss);
}

TrainState make_train_state(const TrainConfig& cfg, Index attr_dim) {
  TrainState s;
  s.params = init_params(cfg, attr_dim);
  return s;
}

namespace {

std::string describe(const LossReport& r) {
  return "MER=" + textio::format_double(r.mer) + " TAR=" + textio::format_double(r.tar) +
         " PFP=" + textio::format_double(r.pfp) + " total=" + textio::format_double(r.total);
}

// Forward and backward for the current epoch; parameters untouched.
EpochLog forward_backward(TrainState& state, const TrainData& data, const TrainConfig& cfg) {
  state.params.zero_grad();
  LossBundle bundle = evaluate_epoch(state.params, data, cfg, state.epoch);
  EpochLog log{state.epoch, schedule_rate(cfg.schedule, state.epoch), bundle.report};
  if (!std::isfinite(bundle.report.total)) {
    throw DivergenceError("trainer: non-finite loss at epoch " + std::to_string(state.epoch) + " (" +
                          describe(bundle.report) + ")");
  }
  ad::backward(bundle.total);
  return log;
}

void finish_step(TrainState& state, const TrainConfig& cfg, const EpochLog& log) {
  adam_step(state.params, state.moments, cfg.learning_rate, cfg.weight_decay);
  state.history.push_back(log);
  if (log.report.total < state.best_loss - kImprovementThreshold) {
    state.best_loss = log.report.total;
    state.epochs_since_improvement = 0;
  } else {
    ++state.epochs_since_improvement;
  }
  ++state.epoch;
}

}  // namespace

EpochLog train_step(TrainState& state, const TrainData& data, const TrainConfig& cfg) {
  const EpochLog log = forward_backward(state, data, cfg);
  finish_step(state, cfg, log);
  return log;
}

bool EarlyStopping::update(double loss) {
  if (loss < best_ - kImprovementThreshold) {
    best_ = loss;
    since_improvement_ = 0;
    return true;
  }
  ++since_improvement_;
  return false;
}

FitResult fit(const TrainData& data, const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  TrainState state = make_train_state(cfg, data.attributes.cols());
  EarlyStopping stopper(cfg.patience);
  FitResult result;
  result.params = state.params.clone();
  for (int m = 0; m < cfg.max_epochs; ++m) {
    const EpochLog log = forward_backward(state, data, cfg);
    if (stopper.update(log.report.total)) {
      result.params = state.params.clone();
      result.best_epoch = log.epoch;
      if (options.checkpoint) save_checkpoint(result.params, *options.checkpoint);
    }
    finish_step(state, cfg, log);
    result.log.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  if (options.checkpoint && result.best_epoch < 0) save_checkpoint(result.params, *options.checkpoint);
  return result;
}

Matrix embed(const ModelParams& p, const TrainData& data) {
  const ad::Tensor x = ad::Tensor::constant(data.attributes);
  return encode(p, data.views, x).fused.value();
}

std::string loss_csv_header(const std::vector<std::string>& view_names) {
  std::string h = "epoch,p_a,L_MER,L_TAR,L_PFP,total";
  for (const auto& n : view_names) h += ",alpha_" + n;
  return h;
}

std::string loss_csv_row(const EpochLog& log) {
  std::string row = std::to_string(log.epoch) + "," + textio::format_double(log.attr_rate) + "," +
                    textio::format_double(log.report.mer) + "," + textio::format_double(log.report.tar) + "," +
                    textio::format_double(log.report.pfp) + "," + textio::format_double(log.report.total);
  for (double a : log.report.alpha) row += "," + textio::format_double(a);
  return row;
}

}  // namespace hgmae
