#include "freegauss/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "freegauss/cli/manifest.hpp"
#include "freegauss/freeloss.hpp"
#include "freegauss/gaussmetrics.hpp"

namespace freegauss::cli {

namespace fs = std::filesystem;
using experiments::Regularizer;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Reference records

void save_references(const fs::path& dir, const experiments::References& refs) {
  fs::create_directories(dir);
  {
    std::ostringstream os;
    freeloss::write_record(os, refs.gauss);
    write_file_atomic(dir / "reference_free_loss.txt", os.str());
  }
  std::ostringstream os;
  os << "record=ot_reference\n"
     << "d=" << refs.ot.d << '\n'
     << "b=" << refs.ot.b << '\n'
     << "mean_cost=" << format_double(refs.ot.mean_cost) << '\n'
     << "n_samples=" << refs.ot.n_samples << '\n'
     << "seed=" << refs.ot.seed << '\n';
  write_file_atomic(dir / "reference_ot.txt", os.str());
}

experiments::References load_references(const fs::path& dir) {
  experiments::References refs;
  {
    std::ifstream is(dir / "reference_free_loss.txt", std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "no reference_free_loss.txt in " + dir.string());
    refs.gauss = freeloss::read_gaussian_reference(is);
  }
  std::ifstream is(dir / "reference_ot.txt", std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "no reference_ot.txt in " + dir.string());
  const auto kv = read_key_values(is);
  const auto rec = kv.find("record");
  if (rec == kv.end() || rec->second != "ot_reference") {
    throw Error(ErrorKind::ParseError, "expected record=ot_reference");
  }
  refs.ot.d = static_cast<int>(kv_int(kv, "d"));
  refs.ot.b = static_cast<int>(kv_int(kv, "b"));
  refs.ot.mean_cost = kv_double(kv, "mean_cost");
  refs.ot.n_samples = static_cast<int>(kv_int(kv, "n_samples"));
  refs.ot.seed = kv_u64(kv, "seed");
  return refs;
}

namespace {

struct Common {
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "YAML configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.overrides, "override one key, key=value (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub->add_option("--seed", c.seed, "master seed (same as --set seed=N)");
  sub->add_option("-o,--out", c.out_dir,
                  std::string("output directory (default $") + kOutDirEnv + " or " +
                      kDefaultOutDir + ")");
  sub->add_flag("-q,--quiet", c.quiet, "no progress lines on stderr");
  sub->footer(keys_help());
}

struct Context {
  Config cfg;
  fs::path out;
  Manifest manifest;
  std::ostream& os;
  std::ostream& log;
  bool quiet;
};

Context make_context(const std::string& command, const Common& c, std::ostream& os,
                     std::ostream& log, const std::vector<std::string>& extra_overrides = {}) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  overrides.insert(overrides.end(), extra_overrides.begin(), extra_overrides.end());
  Config cfg = parse_config(c.config_path ? std::optional<fs::path>(*c.config_path) : std::nullopt,
                            overrides);
  fs::path out = c.out_dir;
  if (out.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    out = (env && *env) ? fs::path(env) : fs::path(kDefaultOutDir);
  }
  fs::create_directories(out);
  Manifest manifest(command, out, to_json(cfg));
  if (c.config_path) manifest.add_input(*c.config_path);
  return Context{std::move(cfg), std::move(out), std::move(manifest), os, log, c.quiet};
}

experiments::References references_for(const Config& cfg, int d, int b) {
  return experiments::make_references(d, b, cfg.resolved_reference_seed(), cfg.n_gauss, cfg.n_ot);
}

std::string fmt(double x, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

void write_text(Context& ctx, const fs::path& name, const std::string& text) {
  const fs::path path = ctx.out / name;
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
  ctx.manifest.add_output(path);
}

// ---------------------------------------------------------------------------

int cmd_reference(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto refs = references_for(cfg, cfg.d, cfg.b);
  save_references(ctx.out, refs);
  ctx.manifest.add_output(ctx.out / "reference_free_loss.txt");
  ctx.manifest.add_output(ctx.out / "reference_ot.txt");
  ctx.os << "free-loss reference d=" << cfg.d << " b=" << cfg.b << " (c=" << fmt(cfg.c())
         << "), " << refs.gauss.n_samples << " Gaussian draws, seed " << refs.gauss.seed << ":\n"
         << "  mean " << fmt(refs.gauss.mean_loss, 8) << "  std " << fmt(refs.gauss.std_loss)
         << "  retries " << refs.gauss.retries << '\n'
         << "OT reference, " << refs.ot.n_samples << " Gaussian pairs, seed " << refs.ot.seed
         << ":\n"
         << "  mean cost " << fmt(refs.ot.mean_cost, 8) << '\n';
  ctx.manifest.write();
  return 0;
}

int cmd_eval(Context& ctx, const fs::path& csv, const std::optional<fs::path>& refs_dir) {
  Matrix z;
  try {
    z = read_matrix_csv(csv);
  } catch (const Error& e) {
    // A malformed input file is a data error, not a usage error.
    if (e.kind() != ErrorKind::ParseError) throw;
    ctx.log << "error: " << csv.string() << ": " << e.what() << '\n';
    return exit_code(ErrorKind::ShapeError);
  }
  ctx.manifest.add_input(csv);
  const int d = static_cast<int>(z.rows());
  const int b = static_cast<int>(z.cols());
  if (d < 2 || d >= b) {
    throw Error(ErrorKind::ShapeError, csv.string() + " is " + std::to_string(d) + "x" +
                                           std::to_string(b) + "; need 2 <= rows < columns");
  }
  experiments::References refs;
  if (refs_dir) {
    refs = load_references(*refs_dir);
    ctx.manifest.add_input(*refs_dir / "reference_free_loss.txt");
    ctx.manifest.add_input(*refs_dir / "reference_ot.txt");
    if (refs.gauss.d != d || refs.gauss.b != b || refs.ot.d != d || refs.ot.b != b) {
      throw Error(ErrorKind::ShapeError, "references are for a different (d, b)");
    }
  } else {
    refs = references_for(ctx.cfg, d, b);
  }
  Rng rng = Rng::derive(ctx.cfg.seed, 5);
  const auto report = gaussmetrics::full_report(z, refs.gauss, refs.ot, rng, ctx.cfg.standardize_ks);
  const std::string table =
      std::string(gaussmetrics::kMetricCsvHeader) + '\n' + gaussmetrics::metric_csv_row(report) + '\n';
  write_text(ctx, "metrics.csv", table);
  ctx.os << table;
  ctx.manifest.write();
  return 0;
}

struct Datasets {
  experiments::Dataset train;
  experiments::Dataset test;
};

Datasets mixture_data(const Config& cfg) {
  return {experiments::gen_mixture(cfg.train_mixture()), experiments::gen_mixture(cfg.test_mixture())};
}

std::string trial_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%03d", k);
  return buf;
}

void list_run_outputs(Context& ctx, const fs::path& run_dir, const experiments::RunRecord& rec,
                      bool decoder) {
  ctx.manifest.add_output(run_dir / "epochs.jsonl");
  ctx.manifest.add_output(run_dir / "summary.json");
  ctx.manifest.add_output(run_dir / "encoder.ckpt");
  if (decoder) ctx.manifest.add_output(run_dir / "decoder.ckpt");
  for (const auto& s : rec.snapshots) ctx.manifest.add_output(rec.config.snapshot_dir / s.path);
}

int cmd_train(Context& ctx, bool autoencoder) {
  const auto& cfg = ctx.cfg;
  if (!autoencoder && cfg.regularizer != Regularizer::Free) {
    throw Error(ErrorKind::ConstraintViolation,
                "train-encoder minimizes the Free Loss; train.regularizer must be free");
  }
  const auto data = mixture_data(cfg);
  const auto refs = references_for(cfg, cfg.d, cfg.b);
  const fs::path group =
      autoencoder ? ctx.out / (experiments::to_string(cfg.regularizer) + "_tau" + format_double(cfg.tau))
                  : ctx.out / "encoder";

  std::mutex log_mutex;
  std::vector<experiments::RunRecord> records(static_cast<std::size_t>(cfg.trials));
  experiments::parallel_for(cfg.trials, cfg.workers, [&](int k) {
    experiments::TrainConfig tc = cfg.train_config();
    tc.seed = experiments::trial_seed(cfg.seed, k);
    const fs::path run_dir = group / trial_name(k);
    if (!tc.snapshot_epochs.empty()) tc.snapshot_dir = run_dir / "snapshots";
    auto progress = [&](const experiments::EpochRow& row) {
      if (ctx.quiet || cfg.log_every <= 0 || row.epoch % cfg.log_every != 0) return;
      std::lock_guard lock(log_mutex);
      ctx.log << "[trial " << k << "] epoch " << row.epoch << "  loss " << fmt(row.train_loss_total)
              << "  train free " << fmt(row.train_free_loss) << "  test free "
              << fmt(row.test_free_loss);
      if (autoencoder) ctx.log << "  mse " << fmt(row.train_mse);
      ctx.log << '\n';
    };
    if (autoencoder) {
      auto run = experiments::train_autoencoder(tc, data.train, data.test, refs, progress);
      experiments::save_run_record(run_dir, run.record);
      neural::save_checkpoint(run_dir / "encoder.ckpt", run.encoder);
      neural::save_checkpoint(run_dir / "decoder.ckpt", run.decoder);
      records[static_cast<std::size_t>(k)] = std::move(run.record);
    } else {
      auto run = experiments::train_encoder(tc, data.train, data.test, refs, progress);
      experiments::save_run_record(run_dir, run.record);
      neural::save_checkpoint(run_dir / "encoder.ckpt", run.encoder);
      records[static_cast<std::size_t>(k)] = std::move(run.record);
    }
  });

  json runs = json::array();
  for (int k = 0; k < cfg.trials; ++k) {
    const auto& rec = records[static_cast<std::size_t>(k)];
    const fs::path run_dir = group / trial_name(k);
    list_run_outputs(ctx, run_dir, rec, autoencoder);
    runs.push_back(json{{"dir", fs::relative(run_dir, ctx.out).generic_string()},
                        {"seed", rec.config.seed},
                        {"retries", rec.retries},
                        {"wall_seconds", rec.wall_seconds}});
    const auto& m = rec.test_metrics;
    ctx.os << trial_name(k) << " seed " << rec.config.seed << ": test free loss "
           << fmt(m.free_loss) << " (reference " << fmt(rec.reference_free_loss) << ", rel err "
           << fmt(m.rel_err_free_loss, 3) << ")  KS " << fmt(rec.test_ks_raw, 3) << " (std "
           << fmt(rec.test_ks_standardized, 3) << ")  dOT " << fmt(m.delta_ot, 3);
    if (autoencoder) ctx.os << "  test MSE " << fmt(rec.test_mse, 4);
    ctx.os << '\n';
  }
  ctx.manifest.set("runs", runs);
  ctx.manifest.write();
  return 0;
}

int cmd_sweep_tau(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = mixture_data(cfg);
  const auto refs = references_for(cfg, cfg.d, cfg.b);
  const auto rows = experiments::sweep_tau(cfg.taus, cfg.regularizer, cfg.train_config(), cfg.trials,
                                           data.train, data.test, refs, cfg.workers);
  std::ostringstream os;
  experiments::write_tau_csv(os, rows);
  write_text(ctx, "tau_" + experiments::to_string(cfg.regularizer) + ".csv", os.str());
  ctx.os << os.str();
  ctx.manifest.write();
  return 0;
}

int cmd_sweep_batch_dim(Context& ctx) {
  const auto& cfg = ctx.cfg;
  cfg.validate_batch_dim_sweep();
  const auto data = mixture_data(cfg);
  const auto rows =
      experiments::sweep_batch_dim(cfg.sweep_bs, cfg.sweep_ds, cfg.sweep_trials, cfg.train_config(),
                                   data.train, data.test, cfg.resolved_reference_seed(), cfg.workers);
  std::ostringstream os;
  experiments::write_batch_dim_csv(os, rows);
  write_text(ctx, "batch_dim.csv", os.str());
  ctx.os << os.str();
  ctx.manifest.write();
  return 0;
}

int cmd_invert(Context& ctx) {
  const auto& cfg = ctx.cfg;
  auto train_mix = cfg.train_mixture();
  train_mix.n_per_class = cfg.inverse_train_per_class;
  auto test_mix = cfg.test_mixture();
  test_mix.n_per_class = cfg.inverse_test_per_class;
  const auto train = experiments::gen_mixture(train_mix);
  const auto test = experiments::gen_mixture(test_mix);
  const auto refs = references_for(cfg, cfg.d, cfg.b);
  const auto icfg = cfg.inverse_config();

  struct Result {
    experiments::InverseReport report;
    double reconstruction_mse = 0.0;
  };
  const auto& regs = cfg.inverse_regularizers;
  std::vector<Result> results(regs.size());
  experiments::parallel_for(static_cast<int>(regs.size()), cfg.workers, [&](int i) {
    const Regularizer reg = regs[static_cast<std::size_t>(i)];
    experiments::TrainConfig tc = cfg.train_config();
    tc.epochs = cfg.pretrain_epochs;
    tc.regularizer = reg;
    if (reg == Regularizer::None) tc.tau = 0.0;
    tc.snapshot_epochs.clear();
    const auto ae = experiments::train_autoencoder(tc, train, test, refs);
    const fs::path dir = ctx.out / "inverse" / experiments::to_string(reg);
    fs::create_directories(dir);
    neural::save_checkpoint(dir / "encoder.ckpt", ae.encoder);
    neural::save_checkpoint(dir / "decoder.ckpt", ae.decoder);
    results[static_cast<std::size_t>(i)] = {
        experiments::inverse_eval(test, ae.encoder, ae.decoder, icfg, cfg.histogram_bins),
        ae.record.test_mse};
  });

  std::ostringstream summary;
  summary << "regularizer,tau,mse_given,mse_missing,n,reconstruction_mse\n";
  for (std::size_t i = 0; i < regs.size(); ++i) {
    const auto name = experiments::to_string(regs[i]);
    const auto& r = results[i];
    ctx.manifest.add_output(ctx.out / "inverse" / name / "encoder.ckpt");
    ctx.manifest.add_output(ctx.out / "inverse" / name / "decoder.ckpt");
    std::ostringstream hist;
    experiments::write_inverse_histogram_csv(hist, r.report.histogram);
    write_text(ctx, "inverse_hist_" + name + ".csv", hist.str());
    std::ostringstream rec;
    write_matrix_csv(rec, r.report.recovered);
    write_text(ctx, "inverse_recovered_" + name + ".csv", rec.str());
    summary << name << ',' << format_double(regs[i] == Regularizer::None ? 0.0 : cfg.tau) << ','
            << format_double(r.report.mse_given) << ',' << format_double(r.report.mse_missing)
            << ',' << r.report.n << ',' << format_double(r.reconstruction_mse) << '\n';
  }
  write_text(ctx, "inverse_summary.csv", summary.str());
  ctx.os << summary.str();
  ctx.manifest.write();
  return 0;
}

int cmd_report(Context& ctx, const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw Error(ErrorKind::Io, "not a directory: " + run_dir.string());
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_directory()) continue;
    const auto& p = entry.path();
    if (fs::exists(p / "summary.json") || fs::exists(p / "epochs.jsonl") ||
        p.filename().string().rfind("trial_", 0) == 0) {
      candidates.push_back(p);
    }
  }
  if (fs::exists(run_dir / "summary.json")) candidates.push_back(run_dir);
  std::sort(candidates.begin(), candidates.end());

  std::vector<experiments::RunRecord> records;
  std::vector<std::string> problems;
  for (const auto& dir : candidates) {
    try {
      records.push_back(experiments::load_run_record(dir));
      ctx.manifest.add_input(dir / "summary.json");
    } catch (const Error& e) {
      problems.push_back(dir.string() + ": " + e.what());
    }
  }
  for (const auto& p : problems) ctx.log << "bad record " << p << '\n';
  if (records.empty()) throw Error(ErrorKind::Io, "no readable run records under " + run_dir.string());

  const auto rows = experiments::aggregate(records);
  std::ostringstream os;
  experiments::write_aggregate_csv(os, rows);
  write_text(ctx, "report.csv", os.str());
  ctx.os << os.str();
  ctx.manifest.set("bad_records", problems);
  ctx.manifest.write();
  return problems.empty() ? 0 : exit_code(ErrorKind::Io);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"freegauss: Gaussianizing codes with the matricial free-energy loss"};
  app.name(args.empty() ? "freegauss" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  int ref_d = 0, ref_b = 0, ref_n = 0;
  std::string eval_csv;
  std::optional<std::string> eval_refs;
  std::string report_dir;

  auto* reference = app.add_subcommand("reference", "Monte Carlo free-loss and OT reference values");
  add_common(reference, common);
  reference->add_option("--d", ref_d, "code dimension (same as --set model.d=)");
  reference->add_option("--b", ref_b, "batch size (same as --set model.b=)");
  reference->add_option("--n", ref_n, "Gaussian draws (same as --set reference.n_gauss=)");

  auto* eval = app.add_subcommand("eval", "Gaussianity metrics of a d x b matrix stored as CSV");
  add_common(eval, common);
  eval->add_option("matrix", eval_csv, "CSV file, one matrix row per line")->required();
  eval->add_option("--refs", eval_refs, "directory with reference records from `reference`");

  auto* train_enc = app.add_subcommand("train-encoder", "train the encoder on the Free Loss alone");
  add_common(train_enc, common);
  auto* train_ae = app.add_subcommand("train-autoencoder", "train a regularized autoencoder");
  add_common(train_ae, common);
  auto* sweep_tau = app.add_subcommand("sweep-tau", "final MSE and free loss across tau values");
  add_common(sweep_tau, common);
  auto* sweep_bd = app.add_subcommand("sweep-batch-dim", "encoder metrics across (d, b) cells");
  add_common(sweep_bd, common);
  auto* invert = app.add_subcommand("invert", "recover points from linear projections");
  add_common(invert, common);
  auto* report = app.add_subcommand("report", "aggregate run records into mean/std tables");
  add_common(report, common);
  report->add_option("run_dir", report_dir, "directory containing run records")->required();

  std::vector<std::string> argv_store(args.begin(), args.end());
  if (argv_store.empty()) argv_store.emplace_back("freegauss");
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    std::vector<std::string> extra;
    if (ref_d) extra.push_back("model.d=" + std::to_string(ref_d));
    if (ref_b) extra.push_back("model.b=" + std::to_string(ref_b));
    if (ref_n) extra.push_back("reference.n_gauss=" + std::to_string(ref_n));
    Context ctx = make_context(name, common, out, err, extra);
    if (sub == reference) return cmd_reference(ctx);
    if (sub == eval) return cmd_eval(ctx, eval_csv, eval_refs ? std::optional<fs::path>(*eval_refs) : std::nullopt);
    if (sub == train_enc) return cmd_train(ctx, false);
    if (sub == train_ae) return cmd_train(ctx, true);
    if (sub == sweep_tau) return cmd_sweep_tau(ctx);
    if (sub == sweep_bd) return cmd_sweep_batch_dim(ctx);
    if (sub == invert) return cmd_invert(ctx);
    if (sub == report) return cmd_report(ctx, report_dir);
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::Io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::Io);
  }
}

}  // namespace freegauss::cli
