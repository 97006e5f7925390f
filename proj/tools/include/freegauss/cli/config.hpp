#pragma once

// Resolved configuration of the command-line tool: YAML file + key=value
// overrides on top of built-in defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freegauss/experiments.hpp"

namespace freegauss::cli {

struct Config {
  std::uint64_t seed = 0;

  // model
  int d = 32;
  int b = 256;
  neural::InitScheme init = neural::InitScheme::UniformFanIn;

  // train
  int epochs = 2000;
  double lr = 1e-3;
  double tau = 1.0;
  experiments::Regularizer regularizer = experiments::Regularizer::Free;
  int trials = 1;
  std::vector<int> snapshot_epochs{0, 10, 50, 200};
  bool standardize_ks = false;
  int log_every = 100;
  int workers = 0;

  // data
  int n_per_class = 1280;
  std::vector<double> mu{5.0, 5.0};
  double scale = 0.5;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::uint64_t> test_seed;

  // reference
  int n_gauss = 200;
  int n_ot = 20;
  std::optional<std::uint64_t> reference_seed;

  // sweep
  std::vector<double> taus{0.0, 0.01, 0.1, 1.0, 10.0};
  std::vector<int> sweep_bs{64, 128, 256, 512};
  std::vector<int> sweep_ds{2, 4, 8, 16, 32};
  int sweep_trials = 5;

  // inverse
  std::vector<std::vector<double>> projection{{1.0, 0.0}};
  double rho = 0.0005;
  int steps = 5000;
  double inverse_lr = 1e-3;
  double init_noise_variance = 0.01;
  int inverse_train_per_class = 2560;
  int inverse_test_per_class = 128;
  int pretrain_epochs = 2000;
  std::vector<experiments::Regularizer> inverse_regularizers{
      experiments::Regularizer::Free, experiments::Regularizer::Tikhonov,
      experiments::Regularizer::None};
  int histogram_bins = 40;

  double c() const { return static_cast<double>(d) / b; }
  int p() const { return static_cast<int>(mu.size()); }

  /// Seeds not given explicitly are derived from the master seed.
  std::uint64_t resolved_train_seed() const;
  std::uint64_t resolved_test_seed() const;
  std::uint64_t resolved_reference_seed() const;

  /// ConstraintViolation on any inconsistent value (d >= b, empty lists, ...).
  void validate() const;
  /// Grid checks that only matter to the batch/dimension sweep.
  void validate_batch_dim_sweep() const;

  experiments::TrainConfig train_config() const;
  experiments::MixtureConfig train_mixture() const;
  experiments::MixtureConfig test_mixture() const;
  experiments::InverseConfig inverse_config() const;
};

/// One configurable key: dotted name, default, provenance and description.
struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string provenance;  // published | chosen
  std::string help;
};
const std::vector<KeyInfo>& config_keys();

/// Text block listing every key, for --help.
std::string keys_help();

/// Parses an optional YAML file, then applies `overrides` ("key=value", YAML
/// value syntax; a key may be dotted or its unique last component).
/// Errors: ParseError (with line and column), UnknownKey, ConstraintViolation.
Config parse_config(const std::optional<std::filesystem::path>& path,
                    const std::vector<std::string>& overrides);
Config parse_config_text(const std::string& yaml, const std::vector<std::string>& overrides);

/// Every key with its resolved value (derived seeds filled in).
nlohmann::json to_json(const Config& cfg);

}  // namespace freegauss::cli
