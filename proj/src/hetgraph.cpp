#include "hgmae/hetgraph.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/random.hpp"
#include "hgmae/textio.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>

namespace hgmae {

namespace fs = std::filesystem;
using nlohmann::json;

bool Metapath::palindromic() const {
  const std::size_t l = steps.size();
  for (std::size_t k = 0; k < l; ++k) {
    const auto& a = steps[k];
    const auto& b = steps[l - 1 - k];
    if (a.relation != b.relation || a.reversed == b.reversed) return false;
  }
  return l > 0;
}

Index HeteroGraph::target_count() const {
  auto it = node_counts.find(target_type);
  if (it == node_counts.end()) throw ValidationError("target type '" + target_type + "' is not declared");
  return it->second;
}

const Matrix& HeteroGraph::target_attributes() const {
  auto it = attributes.find(target_type);
  if (it == attributes.end()) throw ValidationError("target type '" + target_type + "' has no attributes");
  return it->second;
}

const Metapath& HeteroGraph::metapath(const std::string& name) const {
  for (const auto& mp : metapaths)
    if (mp.name == name) return mp;
  throw ValidationError("unknown metapath '" + name + "'");
}

std::pair<std::string, std::string> HeteroGraph::step_types(const MetapathStep& step) const {
  auto it = relations.find(step.relation);
  if (it == relations.end()) throw ValidationError("unknown relation '" + step.relation + "'");
  if (step.reversed) return {it->second.dst_type, it->second.src_type};
  return {it->second.src_type, it->second.dst_type};
}

void HeteroGraph::validate() const {
  if (!node_counts.contains(target_type)) {
    throw ValidationError("target type '" + target_type + "' is not declared");
  }
  for (const auto& [type, count] : node_counts) {
    if (count < 0) throw ValidationError("node type '" + type + "' has negative count");
  }
  for (const auto& [name, rel] : relations) {
    auto src = node_counts.find(rel.src_type);
    auto dst = node_counts.find(rel.dst_type);
    if (src == node_counts.end() || dst == node_counts.end()) {
      throw ValidationError("relation '" + name + "' references an undeclared node type");
    }
    for (const auto& [s, d] : rel.edges) {
      if (s < 0 || s >= src->second || d < 0 || d >= dst->second) {
        throw ValidationError("relation '" + name + "': edge (" + std::to_string(s) + "," +
                              std::to_string(d) + ") out of range");
      }
    }
  }
  for (const auto& [type, m] : attributes) {
    auto it = node_counts.find(type);
    if (it == node_counts.end()) throw ValidationError("attributes for undeclared type '" + type + "'");
    if (m.rows() != it->second) {
      throw ValidationError("attributes of '" + type + "' have " + std::to_string(m.rows()) +
                            " rows, expected " + std::to_string(it->second));
    }
  }
  if (metapaths.empty()) throw ValidationError("no metapaths declared");
  std::set<std::string> names;
  for (const auto& mp : metapaths) {
    if (!names.insert(mp.name).second) throw ValidationError("duplicate metapath '" + mp.name + "'");
    if (mp.steps.empty()) {
      throw ValidationError("metapath '" + mp.name + "': metapath must start and end at target type");
    }
    std::vector<std::pair<std::string, std::string>> types;
    for (const auto& step : mp.steps) {
      if (!relations.contains(step.relation)) {
        throw ValidationError("metapath '" + mp.name + "': unknown relation '" + step.relation + "'");
      }
      types.push_back(step_types(step));
    }
    if (types.front().first != target_type || types.back().second != target_type) {
      throw ValidationError("metapath '" + mp.name + "': metapath must start and end at target type");
    }
    for (std::size_t k = 0; k + 1 < types.size(); ++k) {
      if (types[k].second != types[k + 1].first) {
        throw ValidationError("metapath '" + mp.name + "': step " + std::to_string(k) + " ends at '" +
                              types[k].second + "' but step " + std::to_string(k + 1) +
                              " starts at '" + types[k + 1].first + "'");
      }
    }
  }
  if (!attributes.contains(target_type)) {
    throw ValidationError("target type '" + target_type + "' has no attributes");
  }
  const Index n = target_count();
  if (labels) {
    if (static_cast<Index>(labels->size()) != n) {
      throw ValidationError("labels cover " + std::to_string(labels->size()) + " nodes, expected " +
                            std::to_string(n));
    }
    for (int c : *labels)
      if (c < 0) throw ValidationError("negative class id in labels");
  }
  for (const auto& [name, idx] : splits) {
    for (Index i : idx)
      if (i < 0 || i >= n) throw ValidationError("split '" + name + "' index out of range");
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T json_get(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key)) throw DataError(file.string() + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": key '" + key + "': " + e.what());
  }
}

}  // namespace

HeteroGraph load_dataset(const fs::path& dir) {
  const fs::path meta_file = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(textio::read_text(meta_file));
  } catch (const json::parse_error& e) {
    throw DataError(meta_file.string() + ": " + e.what());
  }
  if (!meta.is_object()) throw DataError(meta_file.string() + ": expected a JSON object");

  HeteroGraph g;
  g.node_counts = json_get<std::map<std::string, Index>>(meta, "node_types", meta_file);
  g.target_type = json_get<std::string>(meta, "target_type", meta_file);

  for (const auto& r : json_get<json>(meta, "relations", meta_file)) {
    Relation rel;
    rel.name = json_get<std::string>(r, "name", meta_file);
    rel.src_type = json_get<std::string>(r, "src_type", meta_file);
    rel.dst_type = json_get<std::string>(r, "dst_type", meta_file);
    const fs::path file = dir / json_get<std::string>(r, "file", meta_file);
    const auto src_it = g.node_counts.find(rel.src_type);
    const auto dst_it = g.node_counts.find(rel.dst_type);
    if (src_it == g.node_counts.end() || dst_it == g.node_counts.end()) {
      throw ValidationError("relation '" + rel.name + "' references an undeclared node type");
    }
    std::size_t line = 0;
    for (const auto& [s, d] : textio::read_int_pairs(file)) {
      ++line;
      if (s < 0 || s >= src_it->second || d < 0 || d >= dst_it->second) {
        throw DataError(file.string() + ": edge " + std::to_string(line) + " (" + std::to_string(s) +
                        "," + std::to_string(d) + ") out of range for " + rel.src_type + "[" +
                        std::to_string(src_it->second) + "] -> " + rel.dst_type + "[" +
                        std::to_string(dst_it->second) + "]");
      }
      rel.edges.emplace_back(s, d);
    }
    g.relations.emplace(rel.name, std::move(rel));
  }

  for (const auto& m : json_get<json>(meta, "metapaths", meta_file)) {
    Metapath mp;
    mp.name = json_get<std::string>(m, "name", meta_file);
    for (const auto& s : json_get<json>(m, "steps", meta_file)) {
      MetapathStep step;
      step.relation = json_get<std::string>(s, "relation", meta_file);
      step.reversed = s.value("reversed", false);
      mp.steps.push_back(std::move(step));
    }
    g.metapaths.push_back(std::move(mp));
  }

  for (const auto& [type, rel_path] : json_get<std::map<std::string, std::string>>(meta, "features", meta_file)) {
    g.attributes.emplace(type, textio::read_csv_matrix(dir / rel_path));
  }

  if (meta.contains("labels") && !meta["labels"].is_null()) {
    const fs::path file = dir / json_get<std::string>(meta, "labels", meta_file);
    const Index n = g.node_counts.contains(g.target_type) ? g.node_counts.at(g.target_type) : 0;
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::size_t line = 0;
    for (const auto& [idx, cls] : textio::read_int_pairs(file)) {
      ++line;
      if (idx < 0 || idx >= n) {
        throw DataError(file.string() + ":" + std::to_string(line) + ": target index " +
                        std::to_string(idx) + " out of range");
      }
      if (cls < 0) throw DataError(file.string() + ":" + std::to_string(line) + ": negative class id");
      labels[static_cast<std::size_t>(idx)] = static_cast<int>(cls);
    }
    if (std::find(labels.begin(), labels.end(), -1) != labels.end()) {
      throw DataError(file.string() + ": not every target node has a label");
    }
    g.labels = std::move(labels);
  }

  if (meta.contains("splits") && !meta["splits"].is_null()) {
    const fs::path file = dir / json_get<std::string>(meta, "splits", meta_file);
    try {
      g.splits = json::parse(textio::read_text(file)).get<std::map<std::string, std::vector<Index>>>();
    } catch (const json::exception& e) {
      throw DataError(file.string() + ": " + e.what());
    }
  }

  g.validate();
  return g;
}

void save_dataset(const HeteroGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  json meta;
  meta["node_types"] = g.node_counts;
  meta["target_type"] = g.target_type;
  meta["relations"] = json::array();
  for (const auto& [name, rel] : g.relations) {
    const std::string file = "edges/" + name + ".tsv";
    meta["relations"].push_back(
        {{"name", name}, {"src_type", rel.src_type}, {"dst_type", rel.dst_type}, {"file", file}});
    std::vector<std::pair<long, long>> rows;
    rows.reserve(rel.edges.size());
    for (const auto& [s, d] : rel.edges) rows.emplace_back(static_cast<long>(s), static_cast<long>(d));
    textio::write_int_pairs(dir / file, rows);
  }
  meta["metapaths"] = json::array();
  for (const auto& mp : g.metapaths) {
    json steps = json::array();
    for (const auto& s : mp.steps) steps.push_back({{"relation", s.relation}, {"reversed", s.reversed}});
    meta["metapaths"].push_back({{"name", mp.name}, {"steps", steps}});
  }
  meta["features"] = json::object();
  for (const auto& [type, m] : g.attributes) {
    const std::string file = "features/" + type + ".csv";
    meta["features"][type] = file;
    textio::write_csv_matrix(dir / file, m);
  }
  if (g.labels) {
    meta["labels"] = "labels.tsv";
    std::vector<std::pair<long, long>> rows;
    for (std::size_t i = 0; i < g.labels->size(); ++i) rows.emplace_back(static_cast<long>(i), (*g.labels)[i]);
    textio::write_int_pairs(dir / "labels.tsv", rows);
  }
  if (!g.splits.empty()) {
    meta["splits"] = "splits.json";
    textio::write_text(dir / "splits.json", json(g.splits).dump(2) + "\n");
  }
  textio::write_text(dir / "meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

Matrix step_biadjacency(const HeteroGraph& g, const MetapathStep& step) {
  const Relation& rel = g.relations.at(step.relation);
  const Index ns = g.node_counts.at(rel.src_type);
  const Index nd = g.node_counts.at(rel.dst_type);
  Matrix b = step.reversed ? Matrix::Zero(nd, ns) : Matrix::Zero(ns, nd);
  for (const auto& [s, d] : rel.edges) {
    if (step.reversed) {
      b(d, s) = 1.0;
    } else {
      b(s, d) = 1.0;
    }
  }
  return b;
}

MetapathView build_metapath_adjacency(const HeteroGraph& g, const Metapath& mp) {
  const Index n = g.target_count();
  Matrix reach = Matrix::Identity(n, n);
  for (const auto& step : mp.steps) {
    reach = reach * step_biadjacency(g, step);
    reach = (reach.array() > 0.0).cast<double>().matrix();
  }
  if (reach.rows() != n || reach.cols() != n) {
    throw ValidationError("metapath '" + mp.name + "' does not return to the target type");
  }
  reach.diagonal().setOnes();
  return {mp.name, std::move(reach)};
}

std::vector<MetapathView> build_all_views(const HeteroGraph& g) {
  std::vector<MetapathView> views;
  views.reserve(g.metapaths.size());
  for (const auto& mp : g.metapaths) views.push_back(build_metapath_adjacency(g, mp));
  return views;
}

std::vector<std::vector<Index>> neighbor_lists(const MetapathView& view) {
  const Matrix& a = view.adjacency;
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) lists[static_cast<std::size_t>(i)].push_back(j);
  }
  return lists;
}

// ---------------------------------------------------------------------------

HeteroGraph generate_synthetic(const SyntheticSpec& spec) {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(spec.p_intra) || !prob_ok(spec.p_inter)) {
    throw ParameterError("generate_synthetic: edge probabilities must lie in [0, 1]");
  }
  if (spec.communities < 1 || spec.targets_per_community < 1 || spec.aux_per_community < 1 ||
      spec.relations < 1 || spec.attr_dim < 1) {
    throw ParameterError("generate_synthetic: sizes must be >= 1");
  }
  if (!(spec.noise_std >= 0.0)) throw ParameterError("generate_synthetic: noise_std must be >= 0");
  if (spec.signal_dims < 0 || spec.signal_dims > spec.attr_dim) {
    throw ParameterError("generate_synthetic: signal_dims must lie in [0, attr_dim]");
  }

  const Index k = spec.communities;
  const Index nt = k * spec.targets_per_community;
  const Index na = k * spec.aux_per_community;

  HeteroGraph g;
  g.target_type = "target";
  g.node_counts = {{"target", nt}, {"aux", na}};

  std::vector<int> labels(static_cast<std::size_t>(nt));
  for (Index i = 0; i < nt; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i / spec.targets_per_community);

  for (int r = 0; r < spec.relations; ++r) {
    Rng rng(derive_seed(spec.seed, "synthetic/edges", static_cast<std::uint64_t>(r)));
    Relation rel{"link" + std::to_string(r), "target", "aux", {}};
    for (Index t = 0; t < nt; ++t) {
      const Index ct = t / spec.targets_per_community;
      for (Index a = 0; a < na; ++a) {
        const Index ca = a / spec.aux_per_community;
        if (rng.bernoulli(ct == ca ? spec.p_intra : spec.p_inter)) rel.edges.emplace_back(t, a);
      }
    }
    Metapath mp{"TAT" + std::to_string(r), {{rel.name, false}, {rel.name, true}}};
    g.relations.emplace(rel.name, std::move(rel));
    g.metapaths.push_back(std::move(mp));
  }

  Rng rng(derive_seed(spec.seed, "synthetic/attributes"));
  const Index signal = spec.signal_dims == 0 ? spec.attr_dim : spec.signal_dims;
  Matrix means = Matrix::Zero(k, spec.attr_dim);
  for (Index c = 0; c < k; ++c)
    for (Index j = 0; j < signal; ++j) means(c, j) = spec.mean_scale * rng.normal();
  Matrix x(nt, spec.attr_dim);
  for (Index i = 0; i < nt; ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < spec.attr_dim; ++j) x(i, j) = means(c, j) + spec.noise_std * rng.normal();
  }
  g.attributes.emplace("target", std::move(x));
  g.labels = std::move(labels);
  g.validate();
  return g;
}

}  // namespace hgmae
