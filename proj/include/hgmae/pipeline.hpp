#pragma once

// Orchestration: positions -> fit -> embed -> eval, with run-directory
// artifacts, plus the leave-unchanged / replace sweep.

#include "hgmae/config.hpp"
#include "hgmae/eval.hpp"
#include "hgmae/hetgraph.hpp"
#include "hgmae/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace hgmae {

/// Runs `body`; any library error escapes with "<stage>: " prepended and its
/// type preserved.
void run_stage(const std::string& stage, const std::function<void()>& body);

/// Positional features from positions_file if set, else from walks.
Matrix load_or_compute_positions(const HeteroGraph& g, const RunManifest& m);

struct ClassificationRun {
  std::uint64_t seed = 0;
  std::size_t train = 0, val = 0, test = 0;
  ClassificationScores scores;
};

struct ClusteringRun {
  std::uint64_t seed = 0;
  ClusterScores scores;
};

struct EdgeRun {
  std::string metapath;
  std::size_t held_out = 0;
  std::optional<double> auc;
};

struct EvalReport {
  std::vector<ClassificationRun> classification;
  std::vector<ClusteringRun> clustering;
  std::vector<EdgeRun> edges;
};

std::vector<ClassificationRun> evaluate_classification(const Matrix& h, std::span<const int> labels,
                                                       const EvalSettings& s, std::uint64_t seed);
std::vector<ClusteringRun> evaluate_clustering(const Matrix& h, std::span<const int> labels, const EvalSettings& s,
                                               std::uint64_t seed);
/// Hides eval.edge_holdout of each view's edges, encodes the remainder and
/// ranks the hidden edges against as many sampled non-edges.
std::vector<EdgeRun> evaluate_edges(const ModelParams& p, const TrainData& data, const EvalSettings& s,
                                    std::uint64_t seed);

/// Mean/std summaries, per-run breakdown and the manifest echo.
nlohmann::ordered_json report_to_json(const EvalReport& r, const RunManifest& m);

struct PipelineResult {
  Matrix positions;
  FitResult fit;
  Matrix embeddings;
  EvalReport report;
};

struct PipelineOptions {
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

/// Loads m.data_dir and runs every stage. Writes manifest.json, seed.txt,
/// positions.csv, checkpoint.json, losses.csv, embeddings.csv and
/// report.json into out_dir.
PipelineResult run_pipeline(const RunManifest& m, const std::filesystem::path& out_dir,
                            const PipelineOptions& options = {});

struct SweepResult {
  std::vector<double> p_u, p_r;
  std::vector<std::vector<double>> micro_f1, nmi;  // [i][j] for (p_u[i], p_r[j])
};

/// 0.0, 0.1, ..., 0.5.
std::vector<double> sweep_grid();

/// Trains one model per (p_u, p_r) pair with shared positional features and
/// scores each on classification and clustering.
SweepResult run_sweep(const HeteroGraph& g, const RunManifest& m, const std::vector<double>& p_u,
                      const std::vector<double>& p_r, const PipelineOptions& options = {});

nlohmann::ordered_json sweep_to_json(const SweepResult& r);

}  // namespace hgmae
