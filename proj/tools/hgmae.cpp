// hgmae command-line tool.

#include "hgmae/config.hpp"
#include "hgmae/errors.hpp"
#include "hgmae/eval.hpp"
#include "hgmae/hetgraph.hpp"
#include "hgmae/mp2vec.hpp"
#include "hgmae/pipeline.hpp"
#include "hgmae/textio.hpp"
#include "hgmae/trainer.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hgmae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct Globals {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string out;
};

struct ConfigArgs {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a, bool needs_data = true) {
  auto* data = cmd->add_option("--data", a.data, "Dataset directory");
  if (!needs_data) data->description("Dataset directory (defaults to the config's 'data')");
  cmd->add_option("--config", a.config, "JSON config with flat dotted keys");
  cmd->add_option("--set", a.overrides, "Override a config key (key=value)")->take_all();
}

RunManifest manifest_from(const ConfigArgs& a, const Globals& g) {
  RunManifest m = parse_config_file(a.config, a.overrides);
  if (!a.data.empty()) m.data_dir = a.data;
  apply_seed(m, std::getenv("HGMAE_SEED"), g.seed);
  if (m.data_dir.empty()) throw ConfigError("no dataset: pass --data or set 'data' in the config");
  return m;
}

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw ConfigError(std::string("--out is required (") + what + ")");
  return g.out;
}

std::function<void(const std::string&)> logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

HeteroGraph load_graph(const std::string& dir) {
  HeteroGraph g;
  run_stage("hetgraph", [&] { g = load_dataset(dir); });
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous graph masked autoencoder"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--seed", globals.seed, "Run seed (overrides config and HGMAE_SEED)");
  app.add_flag("--quiet", globals.quiet, "Suppress progress output");
  app.add_option("--out", globals.out, "Output file or directory");

  // gen-synthetic
  SyntheticSpec syn;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a planted-community dataset directory");
  gen->add_option("--communities", syn.communities)->capture_default_str();
  gen->add_option("--targets-per-community", syn.targets_per_community)->capture_default_str();
  gen->add_option("--aux-per-community", syn.aux_per_community)->capture_default_str();
  gen->add_option("--relations", syn.relations)->capture_default_str();
  gen->add_option("--attr-dim", syn.attr_dim)->capture_default_str();
  gen->add_option("--signal-dims", syn.signal_dims)->capture_default_str();
  gen->add_option("--mean-scale", syn.mean_scale)->capture_default_str();
  gen->add_option("--p-intra", syn.p_intra)->capture_default_str();
  gen->add_option("--p-inter", syn.p_inter)->capture_default_str();
  gen->add_option("--noise-std", syn.noise_std)->capture_default_str();

  ConfigArgs pos_args, train_args, run_args, sweep_args, eval_args;
  auto* positions = app.add_subcommand("positions", "Compute metapath2vec positional features");
  add_config_args(positions, pos_args);

  auto* train = app.add_subcommand("train", "Self-supervised training into a run directory");
  add_config_args(train, train_args);

  std::string checkpoint, embeddings, task = "classification";
  std::string embed_data;
  auto* embed_cmd = app.add_subcommand("embed", "Export embeddings from a checkpoint");
  embed_cmd->add_option("--checkpoint", checkpoint)->required();
  embed_cmd->add_option("--data", embed_data)->required();

  std::optional<int> labels_per_class, seeds;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate embeddings");
  add_config_args(eval_cmd, eval_args);
  eval_cmd->add_option("--embeddings", embeddings, "Embedding CSV (classification, clustering)");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (edges)");
  eval_cmd->add_option("--task", task)
      ->check(CLI::IsMember({"classification", "clustering", "edges"}))
      ->capture_default_str();
  eval_cmd->add_option("--labels-per-class", labels_per_class);
  eval_cmd->add_option("--seeds", seeds);

  auto* run = app.add_subcommand("run", "Full pipeline: positions, train, embed, eval");
  add_config_args(run, run_args);

  auto* sweep = app.add_subcommand("sweep", "Leave-unchanged / replace grid");
  add_config_args(sweep, sweep_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const auto log = logger(globals);
  try {
    if (*gen) {
      const fs::path out = require_out(globals, "dataset directory");
      if (globals.seed) syn.seed = *globals.seed;
      run_stage("hetgraph", [&] { save_dataset(generate_synthetic(syn), out); });
      if (log) log("wrote " + out.string());
    } else if (*positions) {
      const RunManifest m = manifest_from(pos_args, globals);
      const fs::path out = require_out(globals, "positions CSV");
      const HeteroGraph g = load_graph(m.data_dir);
      run_stage("mp2vec", [&] { textio::write_csv_matrix(out, positional_features(g, m.walk)); });
    } else if (*train) {
      const RunManifest m = manifest_from(train_args, globals);
      const fs::path out = require_out(globals, "run directory");
      textio::write_text(out / "manifest.json", manifest_to_json(m).dump(2) + "\n");
      textio::write_text(out / "seed.txt", std::to_string(m.seed) + "\n");
      const HeteroGraph g = load_graph(m.data_dir);
      Matrix p;
      run_stage("mp2vec", [&] {
        p = load_or_compute_positions(g, m);
        textio::write_csv_matrix(out / "positions.csv", p);
      });
      run_stage("trainer", [&] {
        const TrainData data = TrainData::from_graph(g, p);
        FitOptions fo;
        fo.checkpoint = out / "checkpoint.json";
        if (log) {
          fo.on_epoch = [&](const EpochLog& e) {
            if (e.epoch % 10 == 0) log("epoch " + std::to_string(e.epoch) + " total " + textio::format_double(e.report.total));
          };
        }
        const FitResult r = fit(data, m.train, fo);
        std::string csv = loss_csv_header(data.view_names) + "\n";
        for (const auto& e : r.log) csv += loss_csv_row(e) + "\n";
        textio::write_text(out / "losses.csv", csv);
      });
    } else if (*embed_cmd) {
      const fs::path out = require_out(globals, "embeddings CSV");
      const HeteroGraph g = load_graph(embed_data);
      run_stage("embed", [&] {
        const ModelParams params = load_checkpoint(checkpoint);
        const TrainData data =
            TrainData::from_graph(g, Matrix::Zero(g.target_count(), params.shape.positional_dim));
        textio::write_csv_matrix(out, hgmae::embed(params, data));
      });
    } else if (*eval_cmd) {
      RunManifest m = manifest_from(eval_args, globals);
      if (labels_per_class) m.eval.labels_per_class = *labels_per_class;
      if (seeds) m.eval.seeds = *seeds;
      m.validate();
      const fs::path out = require_out(globals, "report JSON");
      const HeteroGraph g = load_graph(m.data_dir);
      run_stage("eval", [&] {
        EvalReport report;
        if (task == "edges") {
          if (checkpoint.empty()) throw ConfigError("--task edges needs --checkpoint");
          const ModelParams params = load_checkpoint(checkpoint);
          const TrainData data =
              TrainData::from_graph(g, Matrix::Zero(g.target_count(), params.shape.positional_dim));
          report.edges = evaluate_edges(params, data, m.eval, m.seed);
        } else {
          if (embeddings.empty()) throw ConfigError("--task " + task + " needs --embeddings");
          if (!g.labels) throw ProtocolError("dataset has no labels");
          const Matrix h = textio::read_csv_matrix(embeddings);
          if (task == "classification") report.classification = evaluate_classification(h, *g.labels, m.eval, m.seed);
          else report.clustering = evaluate_clustering(h, *g.labels, m.eval, m.seed);
        }
        textio::write_text(out, report_to_json(report, m).dump(2) + "\n");
      });
    } else if (*run) {
      const RunManifest m = manifest_from(run_args, globals);
      run_pipeline(m, require_out(globals, "run directory"), {log});
    } else if (*sweep) {
      const RunManifest m = manifest_from(sweep_args, globals);
      const fs::path out = require_out(globals, "sweep directory");
      textio::write_text(out / "manifest.json", manifest_to_json(m).dump(2) + "\n");
      const HeteroGraph g = load_graph(m.data_dir);
      const SweepResult r = run_sweep(g, m, sweep_grid(), sweep_grid(), {log});
      textio::write_text(out / "sweep.json", sweep_to_json(r).dump(2) + "\n");
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ProtocolError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOk;
}
