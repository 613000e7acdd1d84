#include "hgmae/pipeline.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/masking.hpp"
#include "hgmae/mp2vec.hpp"
#include "hgmae/random.hpp"
#include "hgmae/textio.hpp"

#include <set>

namespace hgmae {

using nlohmann::ordered_json;

void run_stage(const std::string& stage, const std::function<void()>& body) {
  const std::string prefix = stage + ": ";
  try {
    body();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(prefix + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

Matrix load_or_compute_positions(const HeteroGraph& g, const RunManifest& m) {
  if (m.positions_file.empty()) return positional_features(g, m.walk);
  Matrix p = textio::read_csv_matrix(m.positions_file);
  if (p.rows() != g.target_count() || p.cols() != m.train.positional_dim) {
    throw DataError(m.positions_file + ": expected " + std::to_string(g.target_count()) + " x " +
                    std::to_string(m.train.positional_dim) + " positional features, got " +
                    std::to_string(p.rows()) + " x " + std::to_string(p.cols()));
  }
  return p;
}

namespace {

int classes_of(std::span<const int> labels) {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

std::uint64_t run_seed(std::uint64_t seed, int s) {
  return derive_seed(seed, "eval/run", static_cast<std::uint64_t>(s));
}

ordered_json mean_std(const std::vector<double>& values) {
  const MeanStd s = summarize(values);
  return {{"mean", s.mean}, {"std", s.std}};
}

const std::vector<int>& require_labels(const HeteroGraph& g) {
  if (!g.labels) throw ProtocolError("dataset has no labels");
  return *g.labels;
}

}  // namespace

std::vector<ClassificationRun> evaluate_classification(const Matrix& h, std::span<const int> labels,
                                                       const EvalSettings& s, std::uint64_t seed) {
  if (static_cast<std::size_t>(h.rows()) != labels.size()) {
    throw ShapeError("embeddings have " + std::to_string(h.rows()) + " rows but there are " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<ClassificationRun> runs;
  for (int r = 0; r < s.seeds; ++r) {
    ClassificationRun run;
    run.seed = run_seed(seed, r);
    const Split split = make_splits(labels, s.labels_per_class, s.val_size, s.test_size, run.seed);
    run.train = split.train.size();
    run.val = split.val.size();
    run.test = split.test.size();
    run.scores = linear_probe(h, split, labels);
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<ClusteringRun> evaluate_clustering(const Matrix& h, std::span<const int> labels, const EvalSettings& s,
                                               std::uint64_t seed) {
  if (static_cast<std::size_t>(h.rows()) != labels.size()) {
    throw ShapeError("embeddings have " + std::to_string(h.rows()) + " rows but there are " +
                     std::to_string(labels.size()) + " labels");
  }
  const int k = classes_of(labels);
  std::vector<ClusteringRun> runs;
  for (int r = 0; r < s.seeds; ++r) {
    ClusteringRun run;
    run.seed = run_seed(seed, r);
    const auto km = kmeans_cluster(h, k, s.kmeans_restarts, run.seed);
    run.scores = nmi_ari(km.assignment, labels);
    runs.push_back(run);
  }
  return runs;
}

std::vector<EdgeRun> evaluate_edges(const ModelParams& p, const TrainData& data, const EvalSettings& s,
                                    std::uint64_t seed) {
  const ad::Tensor x = ad::Tensor::constant(data.attributes);
  std::vector<EdgeRun> runs;
  for (std::size_t k = 0; k < data.views.size(); ++k) {
    Rng rng(derive_seed(seed, "eval/edges", k));
    const EdgeMask mask = mask_edges({data.view_names[k], data.views[k]}, s.edge_holdout, rng);
    EdgeRun run;
    run.metapath = data.view_names[k];
    run.held_out = mask.held_out.size();
    if (!mask.held_out.empty()) {
      const auto enc = encode(p, std::span<const Matrix>(&mask.kept, 1), x);
      const Matrix scores = decode_edges(p, mask.kept, enc.fused).value();
      const EdgeList negatives =
          sample_non_edges(data.views[k], mask.held_out.size(), derive_seed(seed, "eval/non_edges", k));
      run.auc = edge_auc(mask.held_out, negatives, scores);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

ordered_json report_to_json(const EvalReport& r, const RunManifest& m) {
  ordered_json j = ordered_json::object();
  if (!r.classification.empty()) {
    std::vector<double> mi, ma, auc;
    ordered_json runs = ordered_json::array();
    for (const auto& c : r.classification) {
      mi.push_back(c.scores.micro_f1);
      ma.push_back(c.scores.macro_f1);
      auc.push_back(c.scores.auc);
      runs.push_back({{"seed", c.seed},
                      {"train", c.train},
                      {"val", c.val},
                      {"test", c.test},
                      {"reg", c.scores.reg},
                      {"micro_f1", c.scores.micro_f1},
                      {"macro_f1", c.scores.macro_f1},
                      {"auc", c.scores.auc}});
    }
    j["classification"] = {{"labels_per_class", m.eval.labels_per_class},
                           {"micro_f1", mean_std(mi)},
                           {"macro_f1", mean_std(ma)},
                           {"auc", mean_std(auc)},
                           {"runs", runs}};
  }
  if (!r.clustering.empty()) {
    std::vector<double> nmi, ari;
    ordered_json runs = ordered_json::array();
    for (const auto& c : r.clustering) {
      nmi.push_back(c.scores.nmi);
      ari.push_back(c.scores.ari);
      runs.push_back({{"seed", c.seed}, {"nmi", c.scores.nmi}, {"ari", c.scores.ari}});
    }
    j["clustering"] = {{"nmi", mean_std(nmi)}, {"ari", mean_std(ari)}, {"runs", runs}};
  }
  if (!r.edges.empty()) {
    ordered_json views = ordered_json::array();
    for (const auto& e : r.edges) {
      ordered_json v = {{"metapath", e.metapath}, {"held_out", e.held_out}};
      if (e.auc) v["auc"] = *e.auc;
      else v["auc"] = nullptr, v["notice"] = "no held-out edges; diagnostic skipped";
      views.push_back(v);
    }
    j["edges"] = {{"holdout", m.eval.edge_holdout}, {"views", views}};
  }
  j["config"] = manifest_to_json(m);
  return j;
}

PipelineResult run_pipeline(const RunManifest& m, const std::filesystem::path& out_dir,
                            const PipelineOptions& options) {
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };
  PipelineResult result;
  HeteroGraph g;
  run_stage("cli", [&] {
    m.validate();
    textio::write_text(out_dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
    textio::write_text(out_dir / "seed.txt", std::to_string(m.seed) + "\n");
  });
  run_stage("hetgraph", [&] { g = load_dataset(m.data_dir); });
  log("loaded " + m.data_dir + ": " + std::to_string(g.target_count()) + " target nodes, " +
      std::to_string(g.metapaths.size()) + " metapaths");

  run_stage("mp2vec", [&] {
    result.positions = load_or_compute_positions(g, m);
    textio::write_csv_matrix(out_dir / "positions.csv", result.positions);
  });
  log("positional features ready");

  TrainData data;
  run_stage("trainer", [&] {
    data = TrainData::from_graph(g, result.positions);
    FitOptions fo;
    fo.checkpoint = out_dir / "checkpoint.json";
    fo.on_epoch = [&](const EpochLog& e) {
      if (options.log && e.epoch % 10 == 0) {
        log("epoch " + std::to_string(e.epoch) + " total " + textio::format_double(e.report.total));
      }
    };
    result.fit = fit(data, m.train, fo);
    std::string csv = loss_csv_header(data.view_names) + "\n";
    for (const auto& e : result.fit.log) csv += loss_csv_row(e) + "\n";
    textio::write_text(out_dir / "losses.csv", csv);
  });
  log("trained " + std::to_string(result.fit.log.size()) + " epochs, best epoch " +
      std::to_string(result.fit.best_epoch));

  run_stage("embed", [&] {
    result.embeddings = embed(result.fit.params, data);
    textio::write_csv_matrix(out_dir / "embeddings.csv", result.embeddings);
  });

  run_stage("eval", [&] {
    const auto& labels = require_labels(g);
    result.report.classification = evaluate_classification(result.embeddings, labels, m.eval, m.seed);
    result.report.clustering = evaluate_clustering(result.embeddings, labels, m.eval, m.seed);
    result.report.edges = evaluate_edges(result.fit.params, data, m.eval, m.seed);
    textio::write_text(out_dir / "report.json", report_to_json(result.report, m).dump(2) + "\n");
  });
  log("report written to " + (out_dir / "report.json").string());
  return result;
}

std::vector<double> sweep_grid() {
  std::vector<double> v;
  for (int i = 0; i <= 5; ++i) v.push_back(i / 10.0);
  return v;
}

SweepResult run_sweep(const HeteroGraph& g, const RunManifest& m, const std::vector<double>& p_u,
                      const std::vector<double>& p_r, const PipelineOptions& options) {
  SweepResult r;
  r.p_u = p_u;
  r.p_r = p_r;
  Matrix positions;
  run_stage("mp2vec", [&] { positions = load_or_compute_positions(g, m); });
  const TrainData data = TrainData::from_graph(g, positions);
  std::vector<int> labels;
  run_stage("eval", [&] { labels = require_labels(g); });
  for (double u : p_u) {
    std::vector<double> mi_row, nmi_row;
    for (double rep : p_r) {
      RunManifest cell = m;
      cell.train.leave_unchanged = u;
      cell.train.replace = rep;
      Matrix h;
      run_stage("trainer", [&] { h = embed(fit(data, cell.train).params, data); });
      run_stage("eval", [&] {
        std::vector<double> mi, nmi;
        for (const auto& c : evaluate_classification(h, labels, cell.eval, cell.seed)) mi.push_back(c.scores.micro_f1);
        for (const auto& c : evaluate_clustering(h, labels, cell.eval, cell.seed)) nmi.push_back(c.scores.nmi);
        mi_row.push_back(summarize(mi).mean);
        nmi_row.push_back(summarize(nmi).mean);
      });
      if (options.log) {
        options.log("p_u=" + textio::format_double(u) + " p_r=" + textio::format_double(rep) +
                    " micro_f1=" + textio::format_double(mi_row.back()) +
                    " nmi=" + textio::format_double(nmi_row.back()));
      }
    }
    r.micro_f1.push_back(std::move(mi_row));
    r.nmi.push_back(std::move(nmi_row));
  }
  return r;
}

ordered_json sweep_to_json(const SweepResult& r) {
  return {{"p_u", r.p_u}, {"p_r", r.p_r}, {"micro_f1", r.micro_f1}, {"nmi", r.nmi}};
}

}  // namespace hgmae
