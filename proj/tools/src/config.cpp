#include "freegauss/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace freegauss::cli {

using experiments::Regularizer;
using nlohmann::json;

namespace {

// Thrown by setters; mapped to a ParseError that names where the value came from.
struct BadValue {
  std::string message;
  YAML::Mark mark;
};

template <class T>
T scalar(const YAML::Node& n, const char* expected) {
  if (!n.IsScalar()) throw BadValue{std::string("expected ") + expected, n.Mark()};
  if constexpr (std::is_unsigned_v<T>) {
    if (!n.Scalar().empty() && n.Scalar().front() == '-') {
      throw BadValue{std::string("expected ") + expected, n.Mark()};
    }
  }
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw BadValue{std::string("expected ") + expected + ", got '" + n.Scalar() + "'", n.Mark()};
  }
}

template <class T>
std::vector<T> list(const YAML::Node& n, const char* expected) {
  if (!n.IsSequence()) throw BadValue{std::string("expected a list of ") + expected, n.Mark()};
  std::vector<T> out;
  for (const auto& item : n) out.push_back(scalar<T>(item, expected));
  return out;
}

Regularizer regularizer(const YAML::Node& n) {
  const auto s = scalar<std::string>(n, "free, tikhonov or none");
  try {
    return experiments::regularizer_from_string(s);
  } catch (const Error& e) {
    throw BadValue{e.detail(), n.Mark()};
  }
}

struct KeyEntry {
  KeyInfo info;
  std::function<void(Config&, const YAML::Node&)> set;
  std::function<json(const Config&)> get;
};

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  std::uint64_t state = master ^ (tag * 0x9e3779b97f4a7c15ULL);
  return splitmix64(state);
}

json regularizer_list(const std::vector<Regularizer>& rs) {
  json out = json::array();
  for (auto r : rs) out.push_back(experiments::to_string(r));
  return out;
}

#define FG_INT(name, field, prov, help)                                             \
  KeyEntry {                                                                        \
    {name, "", prov, help}, [](Config& c, const YAML::Node& n) {                    \
      c.field = scalar<int>(n, "an integer");                                       \
    },                                                                              \
        [](const Config& c) { return json(c.field); }                               \
  }
#define FG_REAL(name, field, prov, help)                                            \
  KeyEntry {                                                                        \
    {name, "", prov, help}, [](Config& c, const YAML::Node& n) {                    \
      c.field = scalar<double>(n, "a number");                                      \
    },                                                                              \
        [](const Config& c) { return json(c.field); }                               \
  }
#define FG_SEED(name, field, resolved, help)                                        \
  KeyEntry {                                                                        \
    {name, "derived from seed", "chosen", help},                                    \
        [](Config& c, const YAML::Node& n) {                                        \
          c.field = scalar<std::uint64_t>(n, "an unsigned integer");                \
        },                                                                          \
        [](const Config& c) { return json(c.resolved()); }                          \
  }

const std::vector<KeyEntry>& entries() {
  static const std::vector<KeyEntry> table = [] {
    std::vector<KeyEntry> t{
        {{"seed", "", "chosen", "master seed; every other seed is derived from it"},
         [](Config& c, const YAML::Node& n) { c.seed = scalar<std::uint64_t>(n, "an unsigned integer"); },
         [](const Config& c) { return json(c.seed); }},

        FG_INT("model.d", d, "published", "code dimension (rows of the batch-code matrix)"),
        FG_INT("model.b", b, "published", "batch size (columns of the batch-code matrix)"),
        {{"model.init", "", "chosen", "uniform_fan_in | uniform_fan_in_bias | zero"},
         [](Config& c, const YAML::Node& n) {
           try {
             c.init = neural::init_scheme_from_string(scalar<std::string>(n, "an init scheme"));
           } catch (const Error& e) {
             throw BadValue{e.detail(), n.Mark()};
           }
         },
         [](const Config& c) { return json(neural::to_string(c.init)); }},

        FG_INT("train.epochs", epochs, "published", "training epochs"),
        FG_REAL("train.lr", lr, "published", "Adam learning rate"),
        FG_REAL("train.tau", tau, "published", "regularization strength"),
        {{"train.regularizer", "", "published", "free | tikhonov | none"},
         [](Config& c, const YAML::Node& n) { c.regularizer = regularizer(n); },
         [](const Config& c) { return json(experiments::to_string(c.regularizer)); }},
        FG_INT("train.trials", trials, "chosen", "independent runs (seeds seed+k)"),
        {{"train.snapshot_epochs", "", "chosen", "epochs with histogram/QQ/spectrum dumps"},
         [](Config& c, const YAML::Node& n) { c.snapshot_epochs = list<int>(n, "integers"); },
         [](const Config& c) { return json(c.snapshot_epochs); }},
        {{"train.standardize_ks", "", "chosen", "KS of the final reports on standardized entries"},
         [](Config& c, const YAML::Node& n) { c.standardize_ks = scalar<bool>(n, "true or false"); },
         [](const Config& c) { return json(c.standardize_ks); }},
        FG_INT("train.log_every", log_every, "chosen", "progress line every N epochs (0 = off)"),
        FG_INT("train.workers", workers, "chosen", "worker threads for trials (0 = all cores)"),

        FG_INT("data.n_per_class", n_per_class, "published", "samples per class in each split"),
        {{"data.mu", "", "published", "class mean vector (its length is the data dimension)"},
         [](Config& c, const YAML::Node& n) { c.mu = list<double>(n, "numbers"); },
         [](const Config& c) { return json(c.mu); }},
        FG_REAL("data.scale", scale, "published", "scale of the chi-squared noise"),
        FG_SEED("data.train_seed", train_seed, resolved_train_seed, "training-set seed"),
        FG_SEED("data.test_seed", test_seed, resolved_test_seed, "test-set seed"),

        FG_INT("reference.n_gauss", n_gauss, "chosen", "Gaussian draws for the free-loss reference"),
        FG_INT("reference.n_ot", n_ot, "chosen", "Gaussian pairs for the OT reference"),
        FG_SEED("reference.seed", reference_seed, resolved_reference_seed, "reference seed"),

        {{"sweep.taus", "", "chosen", "tau values of the tau sweep"},
         [](Config& c, const YAML::Node& n) { c.taus = list<double>(n, "numbers"); },
         [](const Config& c) { return json(c.taus); }},
        {{"sweep.bs", "", "published", "batch sizes of the batch/dimension sweep"},
         [](Config& c, const YAML::Node& n) { c.sweep_bs = list<int>(n, "integers"); },
         [](const Config& c) { return json(c.sweep_bs); }},
        {{"sweep.ds", "", "published", "code dimensions of the batch/dimension sweep"},
         [](Config& c, const YAML::Node& n) { c.sweep_ds = list<int>(n, "integers"); },
         [](const Config& c) { return json(c.sweep_ds); }},
        FG_INT("sweep.trials", sweep_trials, "published", "trials per sweep cell"),

        {{"inverse.projection", "", "published", "measurement matrix P, one list per row"},
         [](Config& c, const YAML::Node& n) {
           if (!n.IsSequence()) throw BadValue{"expected a list of rows", n.Mark()};
           std::vector<std::vector<double>> rows;
           for (const auto& row : n) rows.push_back(list<double>(row, "numbers"));
           c.projection = std::move(rows);
         },
         [](const Config& c) { return json(c.projection); }},
        FG_REAL("inverse.rho", rho, "published", "weight of the quadratic latent prior"),
        FG_INT("inverse.steps", steps, "published", "SGD steps per recovery"),
        FG_REAL("inverse.lr", inverse_lr, "chosen", "SGD step size of the recovery"),
        FG_REAL("inverse.init_noise_variance", init_noise_variance, "chosen",
                "variance of the start perturbation on unobserved coordinates"),
        FG_INT("inverse.train_per_class", inverse_train_per_class, "published",
               "pretraining samples per class"),
        FG_INT("inverse.test_per_class", inverse_test_per_class, "published",
               "test samples per class"),
        FG_INT("inverse.pretrain_epochs", pretrain_epochs, "published", "autoencoder pretraining epochs"),
        {{"inverse.regularizers", "", "chosen", "autoencoders to pretrain and compare"},
         [](Config& c, const YAML::Node& n) {
           if (!n.IsSequence()) throw BadValue{"expected a list of regularizers", n.Mark()};
           std::vector<Regularizer> rs;
           for (const auto& item : n) rs.push_back(regularizer(item));
           c.inverse_regularizers = std::move(rs);
         },
         [](const Config& c) { return regularizer_list(c.inverse_regularizers); }},
        FG_INT("inverse.histogram_bins", histogram_bins, "chosen", "bins of the recovered-coordinate histogram"),
    };
    const Config defaults;
    for (auto& e : t) {
      if (e.info.default_value.empty()) e.info.default_value = e.get(defaults).dump();
    }
    return t;
  }();
  return table;
}

#undef FG_INT
#undef FG_REAL
#undef FG_SEED

const KeyEntry* find_exact(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.info.key == key) return &e;
  }
  return nullptr;
}

// Exact dotted key, or the unique key whose last component matches.
const KeyEntry& resolve_override_key(const std::string& key) {
  if (const auto* e = find_exact(key)) return *e;
  const KeyEntry* found = nullptr;
  int matches = 0;
  for (const auto& e : entries()) {
    const auto dot = e.info.key.rfind('.');
    const auto leaf = dot == std::string::npos ? e.info.key : e.info.key.substr(dot + 1);
    if (leaf == key) {
      found = &e;
      ++matches;
    }
  }
  if (matches == 1) return *found;
  if (matches > 1) throw Error(ErrorKind::UnknownKey, "ambiguous key '" + key + "'; use the dotted name");
  throw Error(ErrorKind::UnknownKey, "unknown key '" + key + "'");
}

std::string where(const YAML::Mark& m) {
  return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1);
}

void apply_file_node(Config& cfg, const YAML::Node& node, const std::string& prefix) {
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    const YAML::Node& value = kv.second;
    const auto* entry = find_exact(key);
    if (!entry && value.IsMap()) {
      apply_file_node(cfg, value, key);
      continue;
    }
    if (!entry) throw Error(ErrorKind::UnknownKey, where(kv.first.Mark()) + ": unknown key '" + key + "'");
    try {
      entry->set(cfg, value);
    } catch (const BadValue& bad) {
      throw Error(ErrorKind::ParseError, where(bad.mark) + ": " + key + ": " + bad.message);
    }
  }
}

void apply_override(Config& cfg, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::ParseError, "override '" + text + "' is not key=value");
  }
  const auto& entry = resolve_override_key(text.substr(0, eq));
  YAML::Node value;
  try {
    value = YAML::Load(text.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::ParseError, "override '" + text + "': " + e.msg);
  }
  try {
    entry.set(cfg, value);
  } catch (const BadValue& bad) {
    throw Error(ErrorKind::ParseError, "override '" + text + "': " + bad.message);
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::ConstraintViolation, message);
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return keys;
}

std::string keys_help() {
  std::ostringstream os;
  os << "Configuration keys (YAML file sections or --set key=value; "
        "provenance: published = original experimental setup, chosen = implementation default):\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.key << " = " << k.default_value << "  [" << k.provenance << "]  " << k.help
       << '\n';
  }
  return os.str();
}

void Config::validate_batch_dim_sweep() const {
  for (int sb : sweep_bs) {
    require(2 * static_cast<long long>(n_per_class) >= sb, "sweep.bs exceeds the split size");
    for (int sd : sweep_ds) {
      require(sd >= 2 && sd < sb, "sweep cell d=" + std::to_string(sd) + " b=" +
                                      std::to_string(sb) + " violates 2 <= d < b");
    }
  }
}

std::uint64_t Config::resolved_train_seed() const { return train_seed.value_or(derive_seed(seed, 1)); }
std::uint64_t Config::resolved_test_seed() const { return test_seed.value_or(derive_seed(seed, 2)); }
std::uint64_t Config::resolved_reference_seed() const {
  return reference_seed.value_or(derive_seed(seed, 3));
}

void Config::validate() const {
  train_config().validate();
  require(trials >= 1, "train.trials must be >= 1");
  for (int e : snapshot_epochs) require(e >= 0, "train.snapshot_epochs must be >= 0");
  require(log_every >= 0, "train.log_every must be >= 0");
  require(workers >= 0, "train.workers must be >= 0");

  require(!mu.empty(), "data.mu must not be empty");
  for (double m : mu) require(std::isfinite(m), "data.mu must be finite");
  require(std::isfinite(scale) && scale >= 0.0, "data.scale must be finite and >= 0");
  require(2 * static_cast<long long>(n_per_class) >= b,
          "data.n_per_class too small: each split needs at least b samples");

  require(n_gauss >= 2, "reference.n_gauss must be >= 2");
  require(n_ot >= 2, "reference.n_ot must be >= 2");

  require(!taus.empty(), "sweep.taus must not be empty");
  for (double t : taus) require(t >= 0.0, "sweep.taus must be >= 0");
  require(!sweep_bs.empty() && !sweep_ds.empty(), "sweep.bs and sweep.ds must not be empty");
  require(sweep_trials >= 1, "sweep.trials must be >= 1");

  require(!projection.empty(), "inverse.projection must have at least one row");
  for (const auto& row : projection) {
    require(static_cast<int>(row.size()) == p(),
            "inverse.projection rows must have data dimension " + std::to_string(p()));
  }
  inverse_config().validate();
  require(2 * static_cast<long long>(inverse_train_per_class) >= b &&
              2 * static_cast<long long>(inverse_test_per_class) >= b,
          "inverse sets need at least b samples each");
  require(pretrain_epochs >= 1, "inverse.pretrain_epochs must be >= 1");
  require(!inverse_regularizers.empty(), "inverse.regularizers must not be empty");
  require(histogram_bins >= 1, "inverse.histogram_bins must be >= 1");
}

experiments::TrainConfig Config::train_config() const {
  experiments::TrainConfig t;
  t.d = d;
  t.b = b;
  t.epochs = epochs;
  t.lr = lr;
  t.tau = tau;
  t.regularizer = regularizer;
  t.seed = seed;
  t.snapshot_epochs = snapshot_epochs;
  t.standardize_ks = standardize_ks;
  t.init = init;
  return t;
}

experiments::MixtureConfig Config::train_mixture() const {
  experiments::MixtureConfig m;
  m.n_per_class = n_per_class;
  m.p = p();
  m.mu = mu;
  m.scale = scale;
  m.seed = resolved_train_seed();
  return m;
}

experiments::MixtureConfig Config::test_mixture() const {
  auto m = train_mixture();
  m.seed = resolved_test_seed();
  return m;
}

experiments::InverseConfig Config::inverse_config() const {
  experiments::InverseConfig ic;
  Matrix P(static_cast<Eigen::Index>(projection.size()), p());
  for (std::size_t i = 0; i < projection.size(); ++i) {
    for (int j = 0; j < p() && j < static_cast<int>(projection[i].size()); ++j) {
      P(static_cast<Eigen::Index>(i), j) = projection[i][static_cast<std::size_t>(j)];
    }
  }
  ic.projection = P;
  ic.rho = rho;
  ic.steps = steps;
  ic.lr = inverse_lr;
  ic.seed = derive_seed(seed, 4);
  ic.init_noise_variance = init_noise_variance;
  return ic;
}

Config parse_config_text(const std::string& yaml, const std::vector<std::string>& overrides) {
  Config cfg;
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorKind::ParseError, where(e.mark) + ": " + e.msg);
  }
  if (root.IsMap()) {
    apply_file_node(cfg, root, "");
  } else if (!root.IsNull()) {
    throw Error(ErrorKind::ParseError, where(root.Mark()) + ": top level must be a mapping");
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

Config parse_config(const std::optional<std::filesystem::path>& path,
                    const std::vector<std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream is(*path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open config " + path->string());
    std::ostringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  try {
    return parse_config_text(text, overrides);
  } catch (const Error& e) {
    if (!path || e.kind() == ErrorKind::ConstraintViolation) throw;
    throw Error(e.kind(), path->string() + ": " + e.detail());
  }
}

json to_json(const Config& cfg) {
  json out = json::object();
  for (const auto& e : entries()) out[e.info.key] = e.get(cfg);
  out["derived.c"] = cfg.c();
  return out;
}

}  // namespace freegauss::cli
