#include "freegauss/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "freegauss/rmt.hpp"

namespace freegauss::experiments {

namespace fs = std::filesystem;
using neural::Mlp;

// ---------------------------------------------------------------------------
// Data

Dataset gen_mixture(const MixtureConfig& cfg, Rng& rng) {
  if (cfg.n_per_class < 1 || cfg.p < 1 || static_cast<int>(cfg.mu.size()) != cfg.p) {
    throw Error(ErrorKind::ConstraintViolation,
                "mixture needs n_per_class >= 1 and mu of length p");
  }
  const int n = 2 * cfg.n_per_class;
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::fill_n(labels.begin(), cfg.n_per_class, 1);
  std::fill(labels.begin() + cfg.n_per_class, labels.end(), -1);
  rng.shuffle(labels.begin(), labels.end());

  const Matrix u = sample_chisq1(rng, cfg.p, n);
  const Eigen::Map<const Vector> mu(cfg.mu.data(), cfg.p);
  Matrix x(cfg.p, n);
  for (int i = 0; i < n; ++i) {
    x.col(i) = cfg.scale * u.col(i) + static_cast<double>(labels[static_cast<std::size_t>(i)]) * mu;
  }
  return Dataset{std::move(x), std::move(labels)};
}

Dataset gen_mixture(const MixtureConfig& cfg) {
  Rng rng(cfg.seed);
  return gen_mixture(cfg, rng);
}

// ---------------------------------------------------------------------------

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::Free: return "free";
    case Regularizer::Tikhonov: return "tikhonov";
    case Regularizer::None: return "none";
  }
  return "none";
}

Regularizer regularizer_from_string(std::string_view s) {
  if (s == "free") return Regularizer::Free;
  if (s == "tikhonov") return Regularizer::Tikhonov;
  if (s == "none") return Regularizer::None;
  throw Error(ErrorKind::ConstraintViolation,
              "regularizer must be free, tikhonov or none (got '" + std::string(s) + "')");
}

void TrainConfig::validate() const {
  if (d < 2 || d >= b) {
    throw Error(ErrorKind::ConstraintViolation, "need 2 <= d < b, got d=" + std::to_string(d) +
                                                    " b=" + std::to_string(b));
  }
  if (!(tau >= 0.0)) throw Error(ErrorKind::ConstraintViolation, "tau must be >= 0");
  if (epochs < 1) throw Error(ErrorKind::ConstraintViolation, "epochs must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorKind::ConstraintViolation, "lr must be > 0");
}

References make_references(int d, int b, std::uint64_t seed, int n_gauss, int n_ot) {
  return References{freeloss::gaussian_reference(d, b, n_gauss, seed),
                    gaussmetrics::ot_reference(d, b, n_ot, seed ^ 0x07)};
}

namespace {

constexpr std::uint64_t kStreamTrain = 0;
constexpr std::uint64_t kStreamFixedBatches = 1;
constexpr std::uint64_t kStreamMetrics = 2;
constexpr std::uint64_t kStreamRetry = 3;

bool is_degenerate_spectrum(const Error& e) {
  return e.kind() == ErrorKind::CoalescedSingularValues ||
         e.kind() == ErrorKind::ZeroSingularValue;
}

Matrix gather_columns(const Matrix& x, const std::vector<Eigen::Index>& idx, std::size_t first,
                      std::size_t count) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(idx[first + k]);
  return out;
}

std::vector<Eigen::Index> iota_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

Matrix random_batch(const Matrix& x, int b, Rng& rng) {
  auto idx = iota_indices(x.cols());
  rng.shuffle(idx.begin(), idx.end());
  return gather_columns(x, idx, 0, static_cast<std::size_t>(b));
}

double free_loss_or_nan(const Matrix& codes) {
  try {
    return freeloss::free_loss(codes);
  } catch (const Error& e) {
    if (is_degenerate_spectrum(e) || e.kind() == ErrorKind::NonFinite) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    throw;
  }
}

Matrix standardized(const Matrix& z) {
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  if (!(var > 0.0)) return z;
  return ((z.array() - mean) / std::sqrt(var)).matrix();
}

// Histogram, QQ and spectrum dumps of one code matrix.
std::vector<SnapshotFile> write_snapshot(const fs::path& dir, int epoch, const std::string& split,
                                         const Matrix& codes) {
  std::vector<SnapshotFile> files;
  if (dir.empty()) return files;
  fs::create_directories(dir);
  const auto entries = gaussmetrics::flatten(codes);
  const std::string stem = "epoch_" + std::to_string(epoch) + "_" + split + "_";

  auto open = [&](const std::string& kind) {
    const std::string name = stem + kind + ".csv";
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw Error(ErrorKind::Io, "cannot write snapshot " + (dir / name).string());
    return std::pair{std::move(os), name};
  };

  {
    auto [os, name] = open("hist");
    const auto rows = gaussmetrics::histogram(entries, 60, -5.0, 5.0);
    gaussmetrics::write_histogram_csv(os, rows);
    files.push_back({epoch, split, "hist", name, static_cast<long long>(rows.size())});
  }
  {
    auto [os, name] = open("qq");
    const int nq = static_cast<int>(std::min<std::size_t>(200, entries.size()));
    const auto rows = gaussmetrics::qq_dump(entries, nq);
    gaussmetrics::write_qq_csv(os, rows);
    files.push_back({epoch, split, "qq", name, static_cast<long long>(rows.size())});
  }
  {
    auto [os, name] = open("spectrum");
    const auto esd = rmt::esd_from_matrix(codes, true);
    const auto mp = rmt::MpParams::from_shape(static_cast<double>(codes.rows()) / codes.cols());
    auto atoms = esd.atoms();
    std::sort(atoms.begin(), atoms.end());
    os << "eigenvalue,mp_density,mp_cdf\n";
    for (double a : atoms) {
      os << format_double(a) << ',' << format_double(rmt::mp_density(mp, a)) << ','
         << format_double(rmt::mp_cdf(mp, a)) << '\n';
    }
    files.push_back({epoch, split, "spectrum", name, static_cast<long long>(atoms.size())});
  }
  return files;
}

struct FixedBatches {
  Matrix train;
  Matrix test;
};

FixedBatches fixed_batches(const TrainConfig& cfg, const Dataset& train, const Dataset& test) {
  Rng rng = Rng::derive(cfg.seed, kStreamFixedBatches);
  FixedBatches out;
  out.train = random_batch(train.x, cfg.b, rng);
  out.test = random_batch(test.x, cfg.b, rng);
  return out;
}

void check_data(const TrainConfig& cfg, const Dataset& train, const Dataset& test) {
  cfg.validate();
  if (train.size() < cfg.b || test.size() < cfg.b) {
    throw Error(ErrorKind::ConstraintViolation,
                "train and test sets need at least b = " + std::to_string(cfg.b) + " samples");
  }
  if (train.x.rows() != test.x.rows()) {
    throw Error(ErrorKind::ShapeError, "train and test dimensions differ");
  }
}

void check_refs(const TrainConfig& cfg, const References& refs) {
  if (refs.gauss.d != cfg.d || refs.gauss.b != cfg.b || refs.ot.d != cfg.d ||
      refs.ot.b != cfg.b) {
    throw Error(ErrorKind::ShapeError, "references do not match (d, b) of the run");
  }
}

void final_metrics(RunRecord& rec, const Matrix& train_codes, const Matrix& test_codes,
                   const References& refs) {
  const auto& cfg = rec.config;
  Rng rng = Rng::derive(cfg.seed, kStreamMetrics);
  rec.train_metrics = gaussmetrics::full_report(train_codes, refs.gauss, refs.ot, rng,
                                                cfg.standardize_ks);
  rec.test_metrics = gaussmetrics::full_report(test_codes, refs.gauss, refs.ot, rng,
                                               cfg.standardize_ks);
  const auto entries = gaussmetrics::flatten(test_codes);
  rec.test_ks_raw = gaussmetrics::ks_statistic(entries, false);
  rec.test_ks_standardized = gaussmetrics::ks_statistic(entries, true);
  rec.test_delta_ot_standardized = gaussmetrics::delta_ot(standardized(test_codes), refs.ot, rng);
  rec.reference_free_loss = refs.gauss.mean_loss;
}

bool wants_snapshot(const TrainConfig& cfg, int epoch) {
  return !cfg.snapshot_dir.empty() &&
         std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(), epoch) !=
             cfg.snapshot_epochs.end();
}

// Runs one optimization step on `batch`; on a degenerate spectrum retries once
// with a fresh random batch. Returns false only if the caller must abort.
template <class Step>
void step_with_retry(Step&& step, const Matrix& batch, const Matrix& train_x, int b, Rng& retry_rng,
                     int epoch, int& retries) {
  try {
    step(batch);
    return;
  } catch (const Error& e) {
    if (!is_degenerate_spectrum(e)) throw;
  }
  ++retries;
  const Matrix fresh = random_batch(train_x, b, retry_rng);
  try {
    step(fresh);
  } catch (const Error& e) {
    if (!is_degenerate_spectrum(e)) throw;
    throw Error(e.kind(), "epoch " + std::to_string(epoch) +
                              ": degenerate code spectrum on two consecutive batches (" +
                              e.what() + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

TrainedEncoder train_encoder(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                             const References& refs, const EpochCallback& on_epoch) {
  check_data(cfg, train, test);
  check_refs(cfg, refs);
  if (cfg.regularizer != Regularizer::Free) {
    throw Error(ErrorKind::ConstraintViolation, "encoder training minimizes the Free Loss only");
  }
  const auto start = std::chrono::steady_clock::now();
  Rng rng = Rng::derive(cfg.seed, kStreamTrain);
  Rng retry_rng = Rng::derive(cfg.seed, kStreamRetry);
  const auto fixed = fixed_batches(cfg, train, test);

  TrainedEncoder out;
  out.encoder = neural::init_params(neural::encoder_shape(cfg.d, static_cast<int>(train.x.rows())),
                                    rng, cfg.init);
  auto adam = neural::make_adam(out.encoder, cfg.lr);
  RunRecord& rec = out.record;
  rec.kind = "encoder";
  rec.config = cfg;

  auto snapshot = [&](int epoch) {
    if (!wants_snapshot(cfg, epoch)) return;
    for (const auto& [split, x] : {std::pair{"train", &fixed.train}, std::pair{"test", &fixed.test}}) {
      auto files = write_snapshot(cfg.snapshot_dir, epoch, split, neural::predict(out.encoder, *x));
      rec.snapshots.insert(rec.snapshots.end(), files.begin(), files.end());
    }
  };
  snapshot(0);

  auto idx = iota_indices(train.size());
  const auto steps = static_cast<std::size_t>(train.size() / cfg.b);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(idx.begin(), idx.end());
    double loss_sum = 0.0;
    auto step = [&](const Matrix& batch) {
      auto fwd = neural::forward(out.encoder, batch);
      auto lg = freeloss::free_loss_with_grad(fwd.y);
      auto back = neural::backward(out.encoder, std::move(fwd.tape), lg.grad);
      neural::adam_step(adam, out.encoder, back.grads);
      loss_sum += lg.report.loss;
    };
    for (std::size_t s = 0; s < steps; ++s) {
      const Matrix batch = gather_columns(train.x, idx, s * cfg.b, static_cast<std::size_t>(cfg.b));
      step_with_retry(step, batch, train.x, cfg.b, retry_rng, epoch, rec.retries);
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_free_loss = loss_sum / static_cast<double>(steps);
    row.train_regularizer = row.train_free_loss;
    row.train_loss_total = row.train_free_loss;
    row.train_mse = 0.0;
    row.test_free_loss = free_loss_or_nan(neural::predict(out.encoder, fixed.test));
    rec.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
    snapshot(epoch);
  }

  final_metrics(rec, neural::predict(out.encoder, fixed.train),
                neural::predict(out.encoder, fixed.test), refs);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double reconstruction_mse(const Mlp& encoder, const Mlp& decoder, const Dataset& data) {
  const Matrix recon = neural::predict(decoder, neural::predict(encoder, data.x));
  return (recon - data.x).squaredNorm() / static_cast<double>(data.size());
}

TrainedAutoencoder train_autoencoder(const TrainConfig& cfg, const Dataset& train,
                                     const Dataset& test, const References& refs,
                                     const EpochCallback& on_epoch) {
  check_data(cfg, train, test);
  check_refs(cfg, refs);
  const auto start = std::chrono::steady_clock::now();
  Rng rng = Rng::derive(cfg.seed, kStreamTrain);
  Rng retry_rng = Rng::derive(cfg.seed, kStreamRetry);
  const auto fixed = fixed_batches(cfg, train, test);
  const int p = static_cast<int>(train.x.rows());

  TrainedAutoencoder out;
  out.encoder = neural::init_params(neural::encoder_shape(cfg.d, p), rng, cfg.init);
  out.decoder = neural::init_params(neural::decoder_shape(cfg.d, p), rng, cfg.init);
  auto adam_enc = neural::make_adam(out.encoder, cfg.lr);
  auto adam_dec = neural::make_adam(out.decoder, cfg.lr);
  RunRecord& rec = out.record;
  rec.kind = "autoencoder";
  rec.config = cfg;
  const bool regularize = cfg.tau > 0.0 && cfg.regularizer != Regularizer::None;
  const double inv_b = 1.0 / cfg.b;

  auto snapshot = [&](int epoch) {
    if (!wants_snapshot(cfg, epoch)) return;
    for (const auto& [split, x] : {std::pair{"train", &fixed.train}, std::pair{"test", &fixed.test}}) {
      auto files = write_snapshot(cfg.snapshot_dir, epoch, split, neural::predict(out.encoder, *x));
      rec.snapshots.insert(rec.snapshots.end(), files.begin(), files.end());
    }
  };
  snapshot(0);

  auto idx = iota_indices(train.size());
  const auto steps = static_cast<std::size_t>(train.size() / cfg.b);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(idx.begin(), idx.end());
    double total_sum = 0.0, mse_sum = 0.0, reg_sum = 0.0, free_sum = 0.0;
    auto step = [&](const Matrix& batch) {
      auto enc = neural::forward(out.encoder, batch);
      auto dec = neural::forward(out.decoder, enc.y);
      const Matrix diff = dec.y - batch;
      const double mse = diff.squaredNorm() * inv_b;

      double reg = 0.0;
      double free_value = std::numeric_limits<double>::quiet_NaN();
      Matrix reg_grad;
      switch (cfg.regularizer) {
        case Regularizer::Free:
          if (regularize) {
            auto lg = freeloss::free_loss_with_grad(enc.y);
            reg = lg.report.loss;
            free_value = reg;
            reg_grad = std::move(lg.grad);
          } else {
            free_value = free_loss_or_nan(enc.y);
            reg = free_value;
          }
          break;
        case Regularizer::Tikhonov:
          reg = enc.y.squaredNorm();
          if (regularize) reg_grad = 2.0 * enc.y;
          free_value = free_loss_or_nan(enc.y);
          break;
        case Regularizer::None:
          free_value = free_loss_or_nan(enc.y);
          break;
      }

      auto back_dec = neural::backward(out.decoder, std::move(dec.tape), (2.0 * inv_b) * diff);
      Matrix d_code = std::move(back_dec.dx);
      if (regularize) d_code += cfg.tau * reg_grad;
      auto back_enc = neural::backward(out.encoder, std::move(enc.tape), d_code);
      neural::adam_step(adam_dec, out.decoder, back_dec.grads);
      neural::adam_step(adam_enc, out.encoder, back_enc.grads);

      mse_sum += mse;
      // tau * NaN must not poison the total when the regularizer is switched off.
      const double weighted = cfg.tau > 0.0 ? cfg.tau * reg : 0.0;
      reg_sum += reg;
      total_sum += mse + weighted;
      free_sum += free_value;
    };
    for (std::size_t s = 0; s < steps; ++s) {
      const Matrix batch = gather_columns(train.x, idx, s * cfg.b, static_cast<std::size_t>(cfg.b));
      step_with_retry(step, batch, train.x, cfg.b, retry_rng, epoch, rec.retries);
    }
    const double n_steps = static_cast<double>(steps);
    EpochRow row;
    row.epoch = epoch;
    row.train_mse = mse_sum / n_steps;
    row.train_regularizer = reg_sum / n_steps;
    row.train_loss_total = total_sum / n_steps;
    row.train_free_loss = free_sum / n_steps;
    row.test_free_loss = free_loss_or_nan(neural::predict(out.encoder, fixed.test));
    rec.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
    snapshot(epoch);
  }

  final_metrics(rec, neural::predict(out.encoder, fixed.train),
                neural::predict(out.encoder, fixed.test), refs);
  rec.test_mse = reconstruction_mse(out.encoder, out.decoder, test);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  return base + static_cast<std::uint64_t>(trial);
}

int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (workers <= 0) workers = default_workers();
  workers = std::min(workers, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<TauRow> sweep_tau(const std::vector<double>& taus, Regularizer regularizer,
                              const TrainConfig& base, int trials, const Dataset& train,
                              const Dataset& test, const References& refs, int workers) {
  if (taus.empty()) throw Error(ErrorKind::ConstraintViolation, "tau list is empty");
  if (trials < 1) throw Error(ErrorKind::ConstraintViolation, "trials must be >= 1");
  const int n = static_cast<int>(taus.size()) * trials;
  std::vector<TauRow> rows(static_cast<std::size_t>(n));
  parallel_for(n, workers, [&](int job) {
    const int t = job / trials;
    const int trial = job % trials;
    TrainConfig cfg = base;
    cfg.tau = taus[static_cast<std::size_t>(t)];
    cfg.regularizer = regularizer;
    cfg.seed = trial_seed(base.seed, trial);
    cfg.snapshot_dir.clear();
    const auto run = train_autoencoder(cfg, train, test, refs);
    rows[static_cast<std::size_t>(job)] = TauRow{regularizer,
                                                 cfg.tau,
                                                 trial,
                                                 cfg.seed,
                                                 run.record.test_mse,
                                                 run.record.test_metrics.free_loss,
                                                 refs.gauss.mean_loss};
  });
  return rows;
}

void write_tau_csv(std::ostream& os, const std::vector<TauRow>& rows) {
  os << "regularizer,tau,trial,seed,test_mse,test_free_loss,reference_free_loss\n";
  for (const auto& r : rows) {
    os << to_string(r.regularizer) << ',' << format_double(r.tau) << ',' << r.trial << ','
       << r.seed << ',' << format_double(r.test_mse) << ',' << format_double(r.test_free_loss)
       << ',' << format_double(r.reference_free_loss) << '\n';
  }
}

namespace {

std::pair<double, double> mean_sem(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

std::vector<BatchDimRow> sweep_batch_dim(const std::vector<int>& bs, const std::vector<int>& ds,
                                         int trials, const TrainConfig& base,
                                         const Dataset& train, const Dataset& test,
                                         std::uint64_t reference_seed, int workers) {
  if (trials < 1) throw Error(ErrorKind::ConstraintViolation, "trials must be >= 1");
  std::vector<std::pair<int, int>> cells;
  for (int b : bs) {
    for (int d : ds) {
      if (!(d < b)) {
        throw Error(ErrorKind::ConstraintViolation, "cell d=" + std::to_string(d) +
                                                        " b=" + std::to_string(b) +
                                                        " violates d < b");
      }
      cells.emplace_back(d, b);
    }
  }
  std::vector<References> refs(cells.size());
  parallel_for(static_cast<int>(cells.size()), workers, [&](int c) {
    const auto [d, b] = cells[static_cast<std::size_t>(c)];
    refs[static_cast<std::size_t>(c)] = make_references(d, b, reference_seed);
  });

  const int n = static_cast<int>(cells.size()) * trials;
  std::vector<gaussmetrics::MetricReport> reports(static_cast<std::size_t>(n));
  parallel_for(n, workers, [&](int job) {
    const auto c = static_cast<std::size_t>(job / trials);
    const int trial = job % trials;
    TrainConfig cfg = base;
    cfg.d = cells[c].first;
    cfg.b = cells[c].second;
    cfg.regularizer = Regularizer::Free;
    cfg.seed = trial_seed(base.seed, trial);
    cfg.snapshot_dir.clear();
    reports[static_cast<std::size_t>(job)] =
        train_encoder(cfg, train, test, refs[c]).record.test_metrics;
  });

  std::vector<BatchDimRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> ks, ot, rel;
    for (int t = 0; t < trials; ++t) {
      const auto& r = reports[c * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)];
      ks.push_back(r.ks);
      ot.push_back(r.delta_ot);
      rel.push_back(r.rel_err_free_loss);
    }
    const auto [ks_m, ks_s] = mean_sem(ks);
    const auto [ot_m, ot_s] = mean_sem(ot);
    const auto [rel_m, rel_s] = mean_sem(rel);
    rows.push_back({cells[c].first, cells[c].second, trials, ks_m, ks_s, ot_m, ot_s, rel_m, rel_s});
  }
  return rows;
}

void write_batch_dim_csv(std::ostream& os, const std::vector<BatchDimRow>& rows) {
  os << "d,b,trials,ks_mean,ks_sem,delta_ot_mean,delta_ot_sem,rel_free_mean,rel_free_sem\n";
  for (const auto& r : rows) {
    os << r.d << ',' << r.b << ',' << r.trials << ',' << format_double(r.ks_mean) << ','
       << format_double(r.ks_sem) << ',' << format_double(r.delta_ot_mean) << ','
       << format_double(r.delta_ot_sem) << ',' << format_double(r.rel_free_mean) << ','
       << format_double(r.rel_free_sem) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Inverse problem

void InverseConfig::validate() const {
  if (projection.rows() < 1 || projection.cols() < 1) {
    throw Error(ErrorKind::ConstraintViolation, "projection must be non-empty");
  }
  require_finite(projection, "projection");
  if (!(rho >= 0.0)) throw Error(ErrorKind::ConstraintViolation, "rho must be >= 0");
  if (steps < 1) throw Error(ErrorKind::ConstraintViolation, "steps must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorKind::ConstraintViolation, "lr must be > 0");
  if (!(init_noise_variance >= 0.0)) {
    throw Error(ErrorKind::ConstraintViolation, "init_noise_variance must be >= 0");
  }
}

Matrix invert(const Matrix& z, const Mlp& encoder, const Mlp& decoder, const InverseConfig& icfg,
              Rng& rng) {
  icfg.validate();
  const Matrix& P = icfg.projection;
  if (z.rows() != P.rows() || P.cols() != encoder.in_dim() ||
      decoder.out_dim() != encoder.in_dim() || decoder.in_dim() != encoder.out_dim()) {
    throw Error(ErrorKind::ShapeError, "measurements, projection and networks do not chain");
  }
  require_finite(z, "measurements");
  Matrix x = P.transpose() * z;
  const double noise_sd = std::sqrt(icfg.init_noise_variance);
  for (Eigen::Index i = 0; i < P.cols(); ++i) {
    if (P.col(i).cwiseAbs().maxCoeff() != 0.0) continue;
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) += noise_sd * rng.normal();
  }
  for (int step = 0; step < icfg.steps; ++step) {
    auto enc = neural::forward(encoder, x);
    auto dec = neural::forward(decoder, enc.y);
    const Matrix residual = P * dec.y - z;
    auto back_dec = neural::backward(decoder, std::move(dec.tape), 2.0 * P.transpose() * residual);
    Matrix d_code = std::move(back_dec.dx);
    d_code += (2.0 * icfg.rho) * enc.y;
    auto back_enc = neural::backward(encoder, std::move(enc.tape), d_code);
    x -= icfg.lr * back_enc.dx;
  }
  require_finite(x, "recovered points");
  return x;
}

InverseReport inverse_eval(const Dataset& test, const Mlp& encoder, const Mlp& decoder,
                           const InverseConfig& icfg, int histogram_bins) {
  icfg.validate();
  if (histogram_bins < 1) throw Error(ErrorKind::ConstraintViolation, "histogram_bins >= 1");
  const Matrix& P = icfg.projection;
  const Matrix z = P * test.x;
  Rng rng(icfg.seed);
  InverseReport rep;
  rep.recovered = invert(z, encoder, decoder, icfg, rng);
  rep.n = test.size();

  std::vector<Eigen::Index> given, missing;
  for (Eigen::Index i = 0; i < P.cols(); ++i) {
    (P.col(i).cwiseAbs().maxCoeff() != 0.0 ? given : missing).push_back(i);
  }
  auto coord_mse = [&](const std::vector<Eigen::Index>& coords) {
    if (coords.empty()) return 0.0;
    double acc = 0.0;
    for (auto i : coords) acc += (rep.recovered.row(i) - test.x.row(i)).squaredNorm();
    return acc / static_cast<double>(coords.size() * static_cast<std::size_t>(rep.n));
  };
  rep.mse_given = coord_mse(given);
  rep.mse_missing = coord_mse(missing);

  const Eigen::Index coord = missing.empty() ? 0 : missing.front();
  double lo = std::min(rep.recovered.row(coord).minCoeff(), test.x.row(coord).minCoeff());
  double hi = std::max(rep.recovered.row(coord).maxCoeff(), test.x.row(coord).maxCoeff());
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / histogram_bins;
  for (int sign : {1, -1}) {
    std::vector<long long> rec_counts(static_cast<std::size_t>(histogram_bins), 0);
    std::vector<long long> truth_counts(static_cast<std::size_t>(histogram_bins), 0);
    auto bin = [&](double v) {
      return static_cast<std::size_t>(
          std::clamp<long long>(static_cast<long long>(std::floor((v - lo) / width)), 0,
                                histogram_bins - 1));
    };
    for (Eigen::Index j = 0; j < rep.n; ++j) {
      const int s = z(0, j) >= 0.0 ? 1 : -1;
      if (s != sign) continue;
      ++rec_counts[bin(rep.recovered(coord, j))];
      ++truth_counts[bin(test.x(coord, j))];
    }
    for (int k = 0; k < histogram_bins; ++k) {
      rep.histogram.push_back({sign, lo + k * width, lo + (k + 1) * width,
                               rec_counts[static_cast<std::size_t>(k)],
                               truth_counts[static_cast<std::size_t>(k)]});
    }
  }
  return rep;
}

void write_inverse_histogram_csv(std::ostream& os, const std::vector<InverseHistogramRow>& rows) {
  os << "sign,bin_lo,bin_hi,recovered,truth\n";
  for (const auto& r : rows) {
    os << r.sign << ',' << format_double(r.lo) << ',' << format_double(r.hi) << ','
       << r.recovered << ',' << r.truth << '\n';
  }
}

}  // namespace freegauss::experiments
