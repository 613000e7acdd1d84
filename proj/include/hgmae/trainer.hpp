#pragma once

#include "hgmae/encdec.hpp"
#include "hgmae/hetgraph.hpp"
#include "hgmae/masking.hpp"
#include "hgmae/objectives.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hgmae {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  int max_epochs = 300;
  int patience = 10;
  double edge_mask_rate = 0.4;   // p_e, fraction of edges removed
  MaskSchedule schedule;
  double leave_unchanged = 0.3;  // p_u, fraction of the masked set
  double replace = 0.1;          // p_r, fraction of the masked set
  LossWeights loss;
  TarTarget tar_target = TarTarget::Original;
  Index hidden_dim = 256;
  Index heads = 4;
  Index semantic_dim = 128;
  Index positional_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
  ModelShape shape(Index attr_dim) const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr double kImprovementThreshold = 1e-5;

/// Dense inputs of the self-supervised phase.
struct TrainData {
  std::vector<std::string> view_names;
  std::vector<Matrix> views;  // unmasked A^phi
  Matrix attributes;
  Matrix positions;

  static TrainData from_graph(const HeteroGraph& g, Matrix positions);
};

struct AdamState {
  std::vector<Matrix> first, second;
  long steps = 0;
};

/// One adaptive-moment step over every parameter; weight decay is added to
/// the gradient before the moment updates.
void adam_step(const ModelParams& p, AdamState& state, double lr, double weight_decay);

ModelParams init_params(const TrainConfig& cfg, Index attr_dim);

struct EpochCorruption {
  double attr_rate = 0.0;
  std::vector<EdgeMask> edges;
  AttributeMaskPlan plan;
};

/// Masks for epoch m. Edge masks and the attribute plan draw from separate
/// named streams of cfg.seed, so each can be replayed on its own.
EpochCorruption draw_corruption(const TrainData& data, const TrainConfig& cfg, long epoch);

/// Forward pass of epoch m's objective with the masks for that epoch.
LossBundle evaluate_epoch(const ModelParams& p, const TrainData& data, const TrainConfig& cfg, long epoch);

struct EpochLog {
  long epoch = 0;
  double attr_rate = 0.0;
  LossReport report;
};

struct TrainState {
  ModelParams params;
  AdamState moments;
  long epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  std::vector<EpochLog> history;
};

TrainState make_train_state(const TrainConfig& cfg, Index attr_dim);

/// Fresh masks, total loss, one Adam step, epoch + 1. The returned report
/// belongs to the parameters before the step. Throws DivergenceError on a
/// non-finite loss.
EpochLog train_step(TrainState& state, const TrainData& data, const TrainConfig& cfg);

/// Plateau detector: a loss improves when it is below the best so far by
/// more than kImprovementThreshold.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Records a loss; returns true if it is an improvement.
  bool update(double loss);
  bool should_stop() const { return since_improvement_ >= patience_; }
  double best() const { return best_; }
  int since_improvement() const { return since_improvement_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
};

struct FitOptions {
  /// Written with the best parameters at every improvement, when set.
  std::optional<std::filesystem::path> checkpoint;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  ModelParams params;  // parameters that produced the best logged loss
  std::vector<EpochLog> log;
  long best_epoch = -1;
  bool stopped_early = false;
};

FitResult fit(const TrainData& data, const TrainConfig& cfg, const FitOptions& options = {});

/// Unmasked inference: fused encoder output over all views.
Matrix embed(const ModelParams& p, const TrainData& data);

std::string loss_csv_header(const std::vector<std::string>& view_names);
std::string loss_csv_row(const EpochLog& log);

}  // namespace hgmae
