#pragma once

// Synthetic data, encoder / autoencoder training, parameter sweeps and the
// inverse-problem recovery experiment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "freegauss/freeloss.hpp"
#include "freegauss/gaussmetrics.hpp"
#include "freegauss/matcore.hpp"
#include "freegauss/neural.hpp"

namespace freegauss::experiments {

// ---------------------------------------------------------------------------
// Data

struct MixtureConfig {
  int n_per_class = 1280;  // 2560 samples in total
  int p = 2;
  std::vector<double> mu{5.0, 5.0};
  double scale = 0.5;
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix x;                 // p x n, one sample per column
  std::vector<int> labels;  // +1 / -1, exactly n_per_class of each
  Eigen::Index size() const { return x.cols(); }
};

/// Columns x_i = scale * u_i + s_i * mu, u_i with i.i.d. chi-squared(1) entries,
/// balanced labels s_i in random order.
Dataset gen_mixture(const MixtureConfig& cfg, Rng& rng);
/// Uses Rng(cfg.seed).
Dataset gen_mixture(const MixtureConfig& cfg);

// ---------------------------------------------------------------------------
// Training

enum class Regularizer { Free, Tikhonov, None };
std::string to_string(Regularizer r);
Regularizer regularizer_from_string(std::string_view s);

struct TrainConfig {
  int d = 32;
  int b = 256;
  int epochs = 2000;
  double lr = 1e-3;
  double tau = 1.0;
  Regularizer regularizer = Regularizer::Free;
  std::uint64_t seed = 0;
  /// Epochs at which histogram / QQ / spectrum dumps are written (0 = initialization).
  std::vector<int> snapshot_epochs;
  /// Snapshot directory; snapshots are skipped when empty.
  std::filesystem::path snapshot_dir;
  /// KS of the final MetricReports on standardized entries.
  bool standardize_ks = false;
  neural::InitScheme init = neural::InitScheme::UniformFanIn;

  /// ConstraintViolation unless 2 <= d < b, tau >= 0, epochs >= 1, lr > 0.
  void validate() const;
};

/// Reference values the metrics are measured against, for one (d, b).
struct References {
  freeloss::GaussianReference gauss;
  gaussmetrics::OtReference ot;
};
References make_references(int d, int b, std::uint64_t seed, int n_gauss = 200, int n_ot = 20);

struct EpochRow {
  int epoch = 0;
  double train_loss_total = 0.0;
  double train_mse = 0.0;
  double train_regularizer = 0.0;
  double train_free_loss = 0.0;  // NaN when undefined for the codes
  double test_free_loss = 0.0;   // on the fixed held-out batch
};

struct SnapshotFile {
  int epoch = 0;
  std::string split;  // train | test
  std::string kind;   // hist | qq | spectrum
  std::string path;   // relative to the snapshot directory
  long long rows = 0;
};

struct RunRecord {
  std::string kind;  // encoder | autoencoder
  TrainConfig config;
  std::vector<EpochRow> epochs;
  gaussmetrics::MetricReport train_metrics;
  gaussmetrics::MetricReport test_metrics;
  double test_ks_raw = 0.0;
  double test_ks_standardized = 0.0;
  /// Delta_OT of the test batch after standardizing its entries.
  double test_delta_ot_standardized = 0.0;
  double test_mse = 0.0;  // reconstruction error over the full test set (autoencoder)
  double reference_free_loss = 0.0;
  std::vector<SnapshotFile> snapshots;
  int retries = 0;
  double wall_seconds = 0.0;  // not persisted in the summary (kept out of reproducible output)
};

struct TrainedEncoder {
  RunRecord record;
  neural::Mlp encoder;
};

struct TrainedAutoencoder {
  RunRecord record;
  neural::Mlp encoder;
  neural::Mlp decoder;
};

/// Called after every epoch; used for progress output.
using EpochCallback = std::function<void(const EpochRow&)>;

/// Minimizes the Free Loss of encoder codes alone (regularizer must be Free).
TrainedEncoder train_encoder(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                             const References& refs, const EpochCallback& on_epoch = {});

/// Minimizes (1/b) ||D(E(X)) - X||_F^2 + tau * R(E(X)), R = Free Loss, ||.||_F^2 or 0.
TrainedAutoencoder train_autoencoder(const TrainConfig& cfg, const Dataset& train,
                                     const Dataset& test, const References& refs,
                                     const EpochCallback& on_epoch = {});

/// Mean squared reconstruction error per sample over a whole dataset.
double reconstruction_mse(const neural::Mlp& encoder, const neural::Mlp& decoder,
                          const Dataset& data);

// ---------------------------------------------------------------------------
// Sweeps

/// Seed of trial k derived from a base seed (consecutive).
std::uint64_t trial_seed(std::uint64_t base, int trial);

/// Runs fn(0..n-1) on up to `workers` threads; fn must only touch its own slot.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);
int default_workers();

struct TauRow {
  Regularizer regularizer;
  double tau;
  int trial;
  std::uint64_t seed;
  double test_mse;
  double test_free_loss;
  double reference_free_loss;
};

std::vector<TauRow> sweep_tau(const std::vector<double>& taus, Regularizer regularizer,
                              const TrainConfig& base, int trials, const Dataset& train,
                              const Dataset& test, const References& refs, int workers = 0);
void write_tau_csv(std::ostream& os, const std::vector<TauRow>& rows);

struct BatchDimRow {
  int d;
  int b;
  int trials;
  double ks_mean, ks_sem;
  double delta_ot_mean, delta_ot_sem;
  double rel_free_mean, rel_free_sem;
};

/// Free-Loss encoders for every (d, b) with d < b; mean and standard error over trials.
std::vector<BatchDimRow> sweep_batch_dim(const std::vector<int>& bs, const std::vector<int>& ds,
                                         int trials, const TrainConfig& base,
                                         const Dataset& train, const Dataset& test,
                                         std::uint64_t reference_seed, int workers = 0);
void write_batch_dim_csv(std::ostream& os, const std::vector<BatchDimRow>& rows);

// ---------------------------------------------------------------------------
// Inverse problem

struct InverseConfig {
  Matrix projection = (Matrix(1, 2) << 1.0, 0.0).finished();
  double rho = 0.0005;
  int steps = 5000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Variance of the initial perturbation on unobserved coordinates.
  double init_noise_variance = 0.01;

  void validate() const;
};

/// Recovers x from z = P x by SGD on ||z - P D(E(x))||^2 + rho ||E(x)||^2 with the
/// networks frozen. z is k x n (one measurement per column); returns p x n.
/// Initialization: x0 = P^T z plus N(0, init_noise_variance) on coordinates P never reads.
Matrix invert(const Matrix& z, const neural::Mlp& encoder, const neural::Mlp& decoder,
              const InverseConfig& icfg, Rng& rng);

struct InverseHistogramRow {
  int sign;  // sign of z (+1 / -1)
  double lo;
  double hi;
  long long recovered;
  long long truth;
};

struct InverseReport {
  double mse_given = 0.0;
  double mse_missing = 0.0;
  long long n = 0;
  Matrix recovered;
  std::vector<InverseHistogramRow> histogram;
};

/// Recovery of every test point from its projection; the histogram of the first
/// unobserved coordinate is split by the sign of the first measurement.
InverseReport inverse_eval(const Dataset& test, const neural::Mlp& encoder,
                           const neural::Mlp& decoder, const InverseConfig& icfg,
                           int histogram_bins = 40);
void write_inverse_histogram_csv(std::ostream& os, const std::vector<InverseHistogramRow>& rows);

// ---------------------------------------------------------------------------
// Persistence and aggregation (run_record.cpp)

/// Writes <dir>/epochs.jsonl (one object per epoch) and <dir>/summary.json.
/// Every referenced snapshot must exist.
void save_run_record(const std::filesystem::path& dir, const RunRecord& record);
RunRecord load_run_record(const std::filesystem::path& dir);

struct AggregateRow {
  std::string regularizer;
  int trials;
  double ks_mean, ks_std;
  double delta_ot_mean, delta_ot_std;
  double mse_mean, mse_std;
  double rel_free_mean, rel_free_std;
  double rel_m8_mean, rel_m8_std;
};

/// Groups records by regularizer; sample standard deviation (0 for a single trial).
/// KS is the standardized test KS.
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows);

}  // namespace freegauss::experiments
