#include "hgmae/config.hpp"

#include "hgmae/errors.hpp"
#include "hgmae/textio.hpp"

#include <charconv>
#include <functional>
#include <set>

namespace hgmae {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

enum class Kind { Real, Integer, Unsigned, Text };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Real: return "a number";
    case Kind::Integer: return "an integer";
    case Kind::Unsigned: return "a non-negative integer";
    case Kind::Text: return "a string";
  }
  return "";
}

struct Field {
  std::string key;
  Kind kind;
  std::function<void(RunManifest&, const json&)> set;
  std::function<ordered_json(const RunManifest&)> get;
};

template <typename T>
Field real(std::string key, T RunManifest::*outer, double T::*inner) {
  return {std::move(key), Kind::Real, [=](RunManifest& m, const json& v) { (m.*outer).*inner = v.get<double>(); },
          [=](const RunManifest& m) { return ordered_json((m.*outer).*inner); }};
}

template <typename T, typename I>
Field integer(std::string key, T RunManifest::*outer, I T::*inner) {
  return {std::move(key), Kind::Integer, [=](RunManifest& m, const json& v) { (m.*outer).*inner = v.get<I>(); },
          [=](const RunManifest& m) { return ordered_json((m.*outer).*inner); }};
}

const std::vector<Field>& fields() {
  using M = RunManifest;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"data", Kind::Text, [](M& m, const json& v) { m.data_dir = v.get<std::string>(); },
                 [](const M& m) { return ordered_json(m.data_dir); }});
    f.push_back({"positions_file", Kind::Text, [](M& m, const json& v) { m.positions_file = v.get<std::string>(); },
                 [](const M& m) { return ordered_json(m.positions_file); }});
    f.push_back({"seed", Kind::Unsigned, [](M& m, const json& v) { m.seed = v.get<std::uint64_t>(); },
                 [](const M& m) { return ordered_json(m.seed); }});
    f.push_back(real("learning_rate", &M::train, &TrainConfig::learning_rate));
    f.push_back(real("weight_decay", &M::train, &TrainConfig::weight_decay));
    f.push_back(integer("max_epochs", &M::train, &TrainConfig::max_epochs));
    f.push_back(integer("patience", &M::train, &TrainConfig::patience));
    f.push_back(real("p_e", &M::train, &TrainConfig::edge_mask_rate));
    f.push_back({"mask.min_rate", Kind::Real, [](M& m, const json& v) { m.train.schedule.min_rate = v.get<double>(); },
                 [](const M& m) { return ordered_json(m.train.schedule.min_rate); }});
    f.push_back({"mask.max_rate", Kind::Real, [](M& m, const json& v) { m.train.schedule.max_rate = v.get<double>(); },
                 [](const M& m) { return ordered_json(m.train.schedule.max_rate); }});
    f.push_back({"mask.step", Kind::Real, [](M& m, const json& v) { m.train.schedule.step = v.get<double>(); },
                 [](const M& m) { return ordered_json(m.train.schedule.step); }});
    f.push_back(real("p_u", &M::train, &TrainConfig::leave_unchanged));
    f.push_back(real("p_r", &M::train, &TrainConfig::replace));
    auto loss = [&](const char* key, double LossWeights::*field) {
      f.push_back({key, Kind::Real, [=](M& m, const json& v) { m.train.loss.*field = v.get<double>(); },
                   [=](const M& m) { return ordered_json(m.train.loss.*field); }});
    };
    loss("loss.lambda", &LossWeights::lambda);
    loss("loss.mu", &LossWeights::mu);
    loss("loss.eta", &LossWeights::eta);
    loss("loss.gamma_mer", &LossWeights::gamma_mer);
    loss("loss.gamma_tar", &LossWeights::gamma_tar);
    loss("loss.gamma_pfp", &LossWeights::gamma_pfp);
    f.push_back({"tar_target", Kind::Text,
                 [](M& m, const json& v) {
                   const auto s = v.get<std::string>();
                   if (s == "original") m.train.tar_target = TarTarget::Original;
                   else if (s == "literal") m.train.tar_target = TarTarget::Literal;
                   else throw ConfigError("config: key 'tar_target' expects \"original\" or \"literal\", got \"" + s + "\"");
                 },
                 [](const M& m) {
                   return ordered_json(m.train.tar_target == TarTarget::Original ? "original" : "literal");
                 }});
    f.push_back(integer("hidden_dim", &M::train, &TrainConfig::hidden_dim));
    f.push_back(integer("heads", &M::train, &TrainConfig::heads));
    f.push_back(integer("semantic_dim", &M::train, &TrainConfig::semantic_dim));
    f.push_back(integer("positional_dim", &M::train, &TrainConfig::positional_dim));
    f.push_back(integer("walk.walks_per_node", &M::walk, &WalkConfig::walks_per_node));
    f.push_back(integer("walk.walk_length", &M::walk, &WalkConfig::walk_length));
    f.push_back(integer("walk.window", &M::walk, &WalkConfig::window));
    f.push_back(integer("walk.negatives", &M::walk, &WalkConfig::negatives));
    f.push_back(integer("walk.epochs", &M::walk, &WalkConfig::epochs));
    f.push_back(real("walk.learning_rate", &M::walk, &WalkConfig::learning_rate));
    f.push_back(integer("eval.labels_per_class", &M::eval, &EvalSettings::labels_per_class));
    f.push_back(integer("eval.val_size", &M::eval, &EvalSettings::val_size));
    f.push_back(integer("eval.test_size", &M::eval, &EvalSettings::test_size));
    f.push_back(integer("eval.seeds", &M::eval, &EvalSettings::seeds));
    f.push_back(integer("eval.kmeans_restarts", &M::eval, &EvalSettings::kmeans_restarts));
    f.push_back(real("eval.edge_holdout", &M::eval, &EvalSettings::edge_holdout));
    return f;
  }();
  return table;
}

bool matches(Kind k, const json& v) {
  switch (k) {
    case Kind::Real: return v.is_number();
    case Kind::Integer: return v.is_number_integer();
    case Kind::Unsigned: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::Text: return v.is_string();
  }
  return false;
}

void assign(RunManifest& m, const std::string& key, const json& value) {
  for (const auto& f : fields()) {
    if (f.key != key) continue;
    if (!matches(f.kind, value)) {
      throw ConfigError("config: key '" + key + "' expects " + kind_name(f.kind) + ", got " + value.type_name() +
                        " " + value.dump());
    }
    f.set(m, value);
    return;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunManifest::resolve() {
  train.seed = seed;
  walk.seed = seed;
  walk.dim = train.positional_dim;
}

void RunManifest::validate() const {
  train.validate();
  try {
    walk.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (eval.labels_per_class < 1 || eval.val_size < 0 || eval.test_size < 1 || eval.seeds < 1 ||
      eval.kmeans_restarts < 1) {
    throw ConfigError("eval settings: counts must be positive");
  }
  if (!(eval.edge_holdout > 0.0 && eval.edge_holdout < 1.0)) {
    throw ConfigError("eval.edge_holdout must lie in (0, 1)");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

RunManifest parse_config(const json& config, const std::vector<std::string>& overrides) {
  if (!config.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunManifest m;
  for (const auto& [key, value] : config.items()) assign(m, key, value);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("config: override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    assign(m, key, value);
  }
  m.resolve();
  m.validate();
  return m;
}

RunManifest parse_config_file(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  if (file.empty()) return parse_config(json::object(), overrides);
  std::string text;
  try {
    text = textio::read_text(file);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  json config;
  try {
    config = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parse_config(config, overrides);
}

void apply_seed(RunManifest& m, const char* env_seed, std::optional<std::uint64_t> cli_seed) {
  if (env_seed != nullptr && *env_seed != '\0') {
    const std::string s(env_seed);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("HGMAE_SEED: expected a non-negative integer, got '" + s + "'");
    }
    m.seed = v;
  }
  if (cli_seed) m.seed = *cli_seed;
  m.resolve();
}

ordered_json manifest_to_json(const RunManifest& m) {
  ordered_json j = ordered_json::object();
  for (const auto& f : fields()) j[f.key] = f.get(m);
  return j;
}

}  // namespace hgmae
