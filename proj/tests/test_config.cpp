#include "doctest.h"

#include "hgmae/config.hpp"
#include "hgmae/errors.hpp"
#include "hgmae/textio.hpp"
#include "test_util.hpp"

#include <string>

using namespace hgmae;
using nlohmann::json;

namespace {

std::string error_of(const json& config, const std::vector<std::string>& overrides = {}) {
  try {
    parse_config(config, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config gives the documented defaults") {
  const RunManifest m = parse_config(json::object());
  CHECK(m.train.learning_rate == 5e-4);
  CHECK(m.train.hidden_dim == 256);
  CHECK(m.train.heads == 4);
  CHECK(m.train.loss.gamma_mer == 2.0);
  CHECK(m.train.loss.gamma_tar == 2.0);
  CHECK(m.train.loss.gamma_pfp == 2.0);
  CHECK(m.train.loss.lambda == 1.0);
  CHECK(m.train.loss.mu == 1.0);
  CHECK(m.train.loss.eta == 1.0);
  CHECK(m.train.schedule.min_rate == 0.5);
  CHECK(m.train.schedule.max_rate == 0.8);
  CHECK(m.train.schedule.step == 0.005);
  CHECK(m.train.edge_mask_rate == 0.4);
  CHECK(m.train.tar_target == TarTarget::Original);
  CHECK(m.eval.labels_per_class == 20);
  CHECK(m.eval.seeds == 10);
  CHECK(m.walk.dim == m.train.positional_dim);
}

TEST_CASE("overrides apply last") {
  const RunManifest m = parse_config(json{{"p_e", 0.2}, {"hidden_dim", 32}}, {"p_e=0.3", "tar_target=literal"});
  CHECK(m.train.edge_mask_rate == 0.3);
  CHECK(m.train.hidden_dim == 32);
  CHECK(m.train.tar_target == TarTarget::Literal);
  CHECK(manifest_to_json(m)["p_e"] == 0.3);
}

TEST_CASE("unknown keys are named") {
  const std::string msg = error_of(json{{"leraning_rate", 0.1}});
  CHECK(msg.find("unknown key 'leraning_rate'") != std::string::npos);
  CHECK(error_of(json::object(), {"nope=1"}).find("'nope'") != std::string::npos);
  CHECK(error_of(json::object(), {"missing-equals"}) != "");
}

TEST_CASE("type mismatches name the expected type") {
  CHECK(error_of(json{{"learning_rate", "fast"}}).find("expects a number") != std::string::npos);
  CHECK(error_of(json{{"max_epochs", 1.5}}).find("expects an integer") != std::string::npos);
  CHECK(error_of(json{{"seed", -1}}).find("non-negative integer") != std::string::npos);
  CHECK(error_of(json{{"data", 3}}).find("expects a string") != std::string::npos);
  CHECK(error_of(json{{"tar_target", "sometimes"}}) != "");
  CHECK(error_of(json::array()) != "");
}

TEST_CASE("out-of-range values are configuration errors") {
  CHECK(error_of(json{{"p_e", 1.0}}) != "");
  CHECK(error_of(json{{"p_u", 0.7}, {"p_r", 0.5}}) != "");
  CHECK(error_of(json{{"learning_rate", 0.0}}) != "");
  CHECK(error_of(json{{"loss.lambda", 0.0}, {"loss.mu", 0.0}, {"loss.eta", 0.0}}) != "");
  CHECK(error_of(json{{"eval.edge_holdout", 1.0}}) != "");
}

TEST_CASE("seed precedence is config, then environment, then command line") {
  RunManifest m = parse_config(json{{"seed", 5}});
  apply_seed(m, nullptr, std::nullopt);
  CHECK(m.seed == 5);
  CHECK(m.train.seed == 5);
  CHECK(m.walk.seed == 5);
  apply_seed(m, "9", std::nullopt);
  CHECK(m.seed == 9);
  CHECK(m.train.seed == 9);
  apply_seed(m, "9", 11);
  CHECK(m.seed == 11);
  CHECK(m.walk.seed == 11);
  CHECK_THROWS_AS(apply_seed(m, "nine", std::nullopt), ConfigError);
}

TEST_CASE("manifest round trips through its JSON form") {
  const RunManifest m = parse_config(json{{"data", "somewhere"}, {"walk.window", 3}, {"loss.gamma_pfp", 3.0}});
  const auto j = manifest_to_json(m);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == config_keys());
  const RunManifest r = parse_config(json::parse(j.dump()));
  CHECK(manifest_to_json(r) == j);
}

TEST_CASE("config files") {
  const auto dir = testutil::scratch_dir("config");
  textio::write_text(dir / "c.json", R"({"max_epochs": 7})");
  CHECK(parse_config_file(dir / "c.json").train.max_epochs == 7);
  CHECK(parse_config_file("").train.max_epochs == 300);
  textio::write_text(dir / "bad.json", "{");
  CHECK_THROWS_AS(parse_config_file(dir / "bad.json"), ConfigError);
}
