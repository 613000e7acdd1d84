#include "doctest.h"

#include "hgmae/errors.hpp"
#include "hgmae/hetgraph.hpp"
#include "hgmae/textio.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <set>

using namespace hgmae;
namespace fs = std::filesystem;

namespace {

HeteroGraph paper_author() {
  HeteroGraph g;
  g.target_type = "paper";
  g.node_counts = {{"paper", 2}, {"author", 1}};
  g.relations.emplace("pa", Relation{"pa", "paper", "author", {{0, 0}, {1, 0}}});
  g.metapaths.push_back({"PAP", {{"pa", false}, {"pa", true}}});
  g.attributes.emplace("paper", Matrix::Ones(2, 3));
  return g;
}

void write_meta(const fs::path& dir, const nlohmann::json& meta) {
  textio::write_text(dir / "meta.json", meta.dump(2));
}

nlohmann::json paper_author_meta() {
  return {{"node_types", {{"paper", 2}, {"author", 1}}},
          {"target_type", "paper"},
          {"relations", {{{"name", "pa"}, {"src_type", "paper"}, {"dst_type", "author"}, {"file", "edges/pa.tsv"}}}},
          {"metapaths", {{{"name", "PAP"}, {"steps", {{{"relation", "pa"}}, {{"relation", "pa"}, {"reversed", true}}}}}}},
          {"features", {{"paper", "features/paper.csv"}}}};
}

}  // namespace

TEST_CASE("paper-author metapath adjacency") {
  const HeteroGraph g = paper_author();
  const MetapathView v = build_metapath_adjacency(g, g.metapaths[0]);
  CHECK(v.adjacency == Matrix::Ones(2, 2));
  CHECK(neighbor_lists(v) == std::vector<std::vector<Index>>{{0, 1}, {0, 1}});
  CHECK(g.metapaths[0].palindromic());
}

TEST_CASE("empty relation yields identity") {
  HeteroGraph g = paper_author();
  g.relations.at("pa").edges.clear();
  CHECK(build_metapath_adjacency(g, g.metapaths[0]).adjacency == Matrix::Identity(2, 2));
}

TEST_CASE("neighbor lists") {
  CHECK(neighbor_lists({"m", Matrix::Identity(3, 3)}) == std::vector<std::vector<Index>>{{0}, {1}, {2}});
  CHECK(neighbor_lists({"m", Matrix::Ones(2, 2)}) == std::vector<std::vector<Index>>{{0, 1}, {0, 1}});
}

TEST_CASE("adjacency equals brute-force path enumeration") {
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t s = 0; s < 200; ++s) {
    const HeteroGraph g = oracle::random_hetgraph(1000 + s);
    const auto& mp = g.metapaths[0];
    const Matrix expected = oracle::brute_force_adjacency(g, mp);
    const Matrix got = build_metapath_adjacency(g, mp).adjacency;
    INFO("seed " << s << " length " << mp.length());
    CHECK(got == expected);
    CHECK(got.diagonal() == Eigen::VectorXd::Ones(got.rows()));
    if (mp.palindromic()) CHECK(got == got.transpose());
  }
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(30));
}

TEST_CASE("palindromic metapaths give symmetric adjacency") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    HeteroGraph g = oracle::random_hetgraph(50 + s);
    g.metapaths = {{"PACAP", {{"PA", false}, {"AC", false}, {"AC", true}, {"PA", true}}}};
    CHECK(g.metapaths[0].palindromic());
    const Matrix a = build_metapath_adjacency(g, g.metapaths[0]).adjacency;
    CHECK(a == a.transpose());
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec s;
  s.p_intra = 0.2;
  s.p_inter = 0.01;
  s.seed = 7;
  const HeteroGraph g = generate_synthetic(s);
  CHECK(g.target_count() == 300);
  REQUIRE(g.labels);
  CHECK(g.labels->size() == 300);
  CHECK(g.metapaths.size() == 2);
  CHECK(g.node_counts.size() == 2);

  const HeteroGraph h = generate_synthetic(s);
  CHECK(h.target_attributes() == g.target_attributes());
  CHECK(h.relations.at("link0").edges == g.relations.at("link0").edges);

  SyntheticSpec bad = s;
  bad.p_intra = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad), ParameterError);
  bad = s;
  bad.targets_per_community = 0;
  CHECK_THROWS_AS(generate_synthetic(bad), ParameterError);
}

TEST_CASE("equal intra and inter probability carries no community signal") {
  // Same-community rate of metapath edges should match the rate among all
  // pairs (1/3 for three equal communities) when intra == inter.
  double same = 0.0, total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec s;
    s.p_intra = s.p_inter = 0.01;
    s.seed = seed;
    const HeteroGraph g = generate_synthetic(s);
    const auto& y = *g.labels;
    const Matrix a = build_metapath_adjacency(g, g.metapaths[0]).adjacency;
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < a.cols(); ++j)
        if (i != j && a(i, j) != 0.0) {
          total += 1.0;
          same += y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)];
        }
  }
  REQUIRE(total > 1000.0);
  // Pairs (i, j) with i != j in the same community: 99 of 299 partners.
  CHECK(std::abs(same / total - 99.0 / 299.0) < 0.05);
}

TEST_CASE("minimal dataset with a bad metapath is rejected") {
  const auto dir = testutil::scratch_dir("bad_metapath");
  write_meta(dir, {{"node_types", {{"paper", 3}}},
                   {"target_type", "paper"},
                   {"relations", nlohmann::json::array()},
                   {"metapaths", {{{"name", "empty"}, {"steps", nlohmann::json::array()}}}},
                   {"features", nlohmann::json::object()}});
  try {
    load_dataset(dir);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("metapath must start and end at target type") != std::string::npos);
    CHECK(msg.find("empty") != std::string::npos);
  }
}

TEST_CASE("load paper-author dataset") {
  const auto dir = testutil::scratch_dir("paper_author");
  write_meta(dir, paper_author_meta());
  textio::write_text(dir / "edges/pa.tsv", "0\t0\n1\t0\n");
  textio::write_text(dir / "features/paper.csv", "1,2\n3,4\n");
  const HeteroGraph g = load_dataset(dir);
  CHECK(g.node_counts == std::map<std::string, Index>{{"paper", 2}, {"author", 1}});
  CHECK(g.relations.at("pa").edges.size() == 2);
  CHECK(!g.labels);
}

TEST_CASE("out-of-range edge names the file") {
  const auto dir = testutil::scratch_dir("edge_range");
  auto meta = paper_author_meta();
  meta["node_types"]["paper"] = 3;
  write_meta(dir, meta);
  textio::write_text(dir / "edges/pa.tsv", "0\t0\n5\t0\n");
  textio::write_text(dir / "features/paper.csv", "1\n2\n3\n");
  try {
    load_dataset(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("pa.tsv") != std::string::npos);
    CHECK(msg.find("out of range") != std::string::npos);
  }
}

TEST_CASE("malformed features name file and line") {
  const auto dir = testutil::scratch_dir("bad_features");
  write_meta(dir, paper_author_meta());
  textio::write_text(dir / "edges/pa.tsv", "0\t0\n");
  textio::write_text(dir / "features/paper.csv", "1,2\n3,oops\n");
  try {
    load_dataset(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("paper.csv") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("attribute row count must match node count") {
  const auto dir = testutil::scratch_dir("short_features");
  write_meta(dir, paper_author_meta());
  textio::write_text(dir / "edges/pa.tsv", "0\t0\n");
  textio::write_text(dir / "features/paper.csv", "1,2\n");
  CHECK_THROWS_AS(load_dataset(dir), ValidationError);
}

TEST_CASE("missing meta file is a data error") {
  const auto dir = testutil::scratch_dir("no_meta");
  CHECK_THROWS_AS(load_dataset(dir), DataError);
}

TEST_CASE("save then load is the identity") {
  HeteroGraph g = generate_synthetic(testutil::small_synthetic());
  g.splits["train"] = {0, 3, 5};
  const auto dir = testutil::scratch_dir("round_trip");
  save_dataset(g, dir);
  const HeteroGraph h = load_dataset(dir);
  CHECK(h.node_counts == g.node_counts);
  CHECK(h.target_type == g.target_type);
  CHECK(h.labels == g.labels);
  CHECK(h.splits == g.splits);
  CHECK(h.target_attributes() == g.target_attributes());
  REQUIRE(h.metapaths.size() == g.metapaths.size());
  for (std::size_t k = 0; k < g.metapaths.size(); ++k) {
    CHECK(h.metapaths[k].name == g.metapaths[k].name);
    CHECK(build_metapath_adjacency(h, h.metapaths[k]).adjacency ==
          build_metapath_adjacency(g, g.metapaths[k]).adjacency);
  }
  for (const auto& [name, rel] : g.relations) CHECK(h.relations.at(name).edges == rel.edges);
}
