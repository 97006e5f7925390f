#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "freegauss/experiments.hpp"
#include "support.hpp"

using namespace freegauss;
using namespace freegauss::experiments;
namespace fs = std::filesystem;

namespace {

struct Small {
  Dataset train;
  Dataset test;
  References refs;
};

const Small& small() {
  static const Small s = [] {
    MixtureConfig mc;
    mc.n_per_class = 64;
    mc.seed = 1;
    Dataset train = gen_mixture(mc);
    mc.seed = 2;
    Dataset test = gen_mixture(mc);
    return Small{std::move(train), std::move(test), make_references(4, 16, 3, 20, 5)};
  }();
  return s;
}

TrainConfig small_config(Regularizer reg, double tau, int epochs = 3) {
  TrainConfig c;
  c.d = 4;
  c.b = 16;
  c.epochs = epochs;
  c.tau = tau;
  c.regularizer = reg;
  c.seed = 7;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freegauss_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void check_same_epochs(const RunRecord& a, const RunRecord& b) {
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].epoch == b.epochs[i].epoch);
    CHECK(a.epochs[i].train_mse == b.epochs[i].train_mse);
    CHECK(a.epochs[i].train_loss_total == b.epochs[i].train_loss_total);
    CHECK(std::isnan(a.epochs[i].test_free_loss) == std::isnan(b.epochs[i].test_free_loss));
    if (!std::isnan(a.epochs[i].test_free_loss)) CHECK(a.epochs[i].test_free_loss == b.epochs[i].test_free_loss);
  }
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("mixture defaults, balance and mean") {
    const MixtureConfig defaults;
    CHECK(defaults.p == 2);
    CHECK(defaults.n_per_class == 1280);
    CHECK(defaults.mu == std::vector<double>{5.0, 5.0});
    CHECK(defaults.scale == 0.5);
    const Dataset d = gen_mixture(defaults);
    CHECK(d.size() == 2560);
    CHECK(d.x.rows() == 2);
    int sum = 0;
    for (int l : d.labels) sum += l;
    CHECK(sum == 0);
    const Vector mean = d.x.rowwise().mean();
    CHECK(std::abs(mean(0) - 0.5) < 0.05);
    CHECK(std::abs(mean(1) - 0.5) < 0.05);
    // Removing s_i mu leaves the non-negative chi-squared part.
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      REQUIRE(d.x(0, j) - d.labels[j] * 5.0 >= 0.0);
    }
    CHECK(gen_mixture(defaults).x == d.x);
  }

  TEST_CASE("training config validation") {
    TrainConfig c = small_config(Regularizer::Free, 1.0);
    CHECK_NOTHROW(c.validate());
    c.d = 16;
    CHECK_ERROR_KIND(c.validate(), ConstraintViolation);
    c = small_config(Regularizer::Free, -1.0);
    CHECK_ERROR_KIND(c.validate(), ConstraintViolation);
    c = small_config(Regularizer::Free, 1.0, 0);
    CHECK_ERROR_KIND(c.validate(), ConstraintViolation);
    c = small_config(Regularizer::Free, 1.0);
    c.lr = 0;
    CHECK_ERROR_KIND(c.validate(), ConstraintViolation);
    CHECK(regularizer_from_string("tikhonov") == Regularizer::Tikhonov);
    CHECK(to_string(Regularizer::None) == "none");
    CHECK(error_kind([] { regularizer_from_string("l1"); }).has_value());
  }

  TEST_CASE("encoder training is deterministic and logs every epoch") {
    const auto& s = small();
    const auto a = train_encoder(small_config(Regularizer::Free, 1.0), s.train, s.test, s.refs);
    const auto b = train_encoder(small_config(Regularizer::Free, 1.0), s.train, s.test, s.refs);
    check_same_epochs(a.record, b.record);
    CHECK(a.encoder == b.encoder);
    CHECK(a.record.test_ks_raw == b.record.test_ks_raw);
    CHECK(a.record.test_metrics.delta_ot == b.record.test_metrics.delta_ot);
    CHECK(a.record.kind == "encoder");
    for (size_t i = 1; i < a.record.epochs.size(); ++i) {
      CHECK(a.record.epochs[i].epoch > a.record.epochs[i - 1].epoch);
    }
    CHECK(a.record.epochs.back().epoch == 3);
    CHECK_ERROR_KIND(train_encoder(small_config(Regularizer::Tikhonov, 1.0), s.train, s.test, s.refs),
                     ConstraintViolation);
    const auto wrong_refs = make_references(5, 16, 3, 5, 2);
    CHECK_ERROR_KIND(train_encoder(small_config(Regularizer::Free, 1.0), s.train, s.test, wrong_refs),
                     ShapeError);
  }

  TEST_CASE("logged total loss decomposes into MSE and weighted regularizer") {
    const auto& s = small();
    for (auto reg : {Regularizer::Free, Regularizer::Tikhonov}) {
      const auto run = train_autoencoder(small_config(reg, 0.7), s.train, s.test, s.refs);
      for (const auto& row : run.record.epochs) {
        if (row.epoch == 0) continue;
        CHECK(std::abs(row.train_loss_total - (row.train_mse + 0.7 * row.train_regularizer)) <= 1e-10);
      }
    }
  }

  TEST_CASE("tau = 0 gives identical trajectories for every regularizer") {
    const auto& s = small();
    const auto f = train_autoencoder(small_config(Regularizer::Free, 0.0), s.train, s.test, s.refs);
    const auto t = train_autoencoder(small_config(Regularizer::Tikhonov, 0.0), s.train, s.test, s.refs);
    const auto n = train_autoencoder(small_config(Regularizer::None, 0.0), s.train, s.test, s.refs);
    check_same_epochs(f.record, t.record);
    check_same_epochs(f.record, n.record);
    CHECK(f.encoder == t.encoder);
    CHECK(f.decoder == n.decoder);
    CHECK(f.record.test_mse == n.record.test_mse);
    CHECK(f.record.test_mse == doctest::Approx(reconstruction_mse(f.encoder, f.decoder, s.test)));
  }

  TEST_CASE("run records round trip and snapshots parse back") {
    const auto& s = small();
    const fs::path dir = scratch("record");
    TrainConfig c = small_config(Regularizer::Free, 1.0, 4);
    c.snapshot_epochs = {0, 2};
    c.snapshot_dir = dir / "snapshots";
    const auto run = train_autoencoder(c, s.train, s.test, s.refs);
    REQUIRE(!run.record.snapshots.empty());
    for (const auto& snap : run.record.snapshots) {
      std::ifstream is(c.snapshot_dir / snap.path);
      REQUIRE(is);
      std::string line;
      long long lines = 0;
      while (std::getline(is, line)) ++lines;
      CHECK(lines == snap.rows + 1);  // header plus declared rows
    }
    save_run_record(dir, run.record);
    const auto back = load_run_record(dir);
    check_same_epochs(run.record, back);
    CHECK(back.config.seed == c.seed);
    CHECK(back.config.regularizer == c.regularizer);
    CHECK(back.config.init == c.init);
    CHECK(back.test_ks_standardized == run.record.test_ks_standardized);
    CHECK(back.test_metrics.rel_err_free_loss == run.record.test_metrics.rel_err_free_loss);
    CHECK(back.snapshots.size() == run.record.snapshots.size());

    // Byte-identical rewrite in place; the snapshot directory is stored relative
    // to the record, so the comparison must use the same location.
    const auto slurp = [](const fs::path& p) {
      std::ifstream is(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(is), {});
    };
    const std::string summary = slurp(dir / "summary.json");
    const std::string epochs = slurp(dir / "epochs.jsonl");
    save_run_record(dir, back);
    CHECK(slurp(dir / "summary.json") == summary);
    CHECK(slurp(dir / "epochs.jsonl") == epochs);
    const fs::path again = scratch("record_again");
    save_run_record(again, back);

    // Damaged records are rejected.
    std::ofstream(again / "summary.json") << "{\"kind\":";
    CHECK_ERROR_KIND(load_run_record(again), ParseError);
    CHECK_ERROR_KIND(load_run_record(dir / "nowhere"), Io);
    fs::remove_all(dir);
    fs::remove_all(again);
  }

  TEST_CASE("saving rejects non-increasing epochs and missing snapshots") {
    const auto& s = small();
    auto run = train_encoder(small_config(Regularizer::Free, 1.0, 2), s.train, s.test, s.refs).record;
    const fs::path dir = scratch("bad_record");
    auto shuffled = run;
    std::swap(shuffled.epochs.front(), shuffled.epochs.back());
    CHECK_ERROR_KIND(save_run_record(dir, shuffled), ConstraintViolation);
    auto dangling = run;
    dangling.config.snapshot_dir = dir / "snapshots";
    dangling.snapshots.push_back({0, "test", "hist", "missing.csv", 3});
    CHECK_ERROR_KIND(save_run_record(dir, dangling), Io);
    fs::remove_all(dir);
  }

  TEST_CASE("aggregation groups by regularizer") {
    RunRecord a;
    a.config.regularizer = Regularizer::Free;
    a.test_ks_standardized = 0.1;
    a.test_metrics.delta_ot = 0.2;
    a.test_metrics.rel_err_moments = {{8, 0.5}};
    RunRecord b = a;
    b.test_ks_standardized = 0.3;
    RunRecord c = a;
    c.config.regularizer = Regularizer::None;
    const auto rows = aggregate({a, b, c});
    REQUIRE(rows.size() == 2);
    const auto& free = rows[0].regularizer == "free" ? rows[0] : rows[1];
    const auto& none = rows[0].regularizer == "free" ? rows[1] : rows[0];
    CHECK(free.trials == 2);
    CHECK(free.ks_mean == doctest::Approx(0.2));
    CHECK(free.ks_std == doctest::Approx(std::sqrt(0.02)));
    CHECK(none.trials == 1);
    CHECK(none.ks_std == 0.0);
    CHECK(none.rel_m8_mean == 0.5);
    std::ostringstream os;
    write_aggregate_csv(os, rows);
    CHECK(os.str().rfind("regularizer,trials,ks_mean,ks_std", 0) == 0);
  }

  TEST_CASE("tau sweep rows and the tau = 0 equivalence") {
    const auto& s = small();
    const TrainConfig base = small_config(Regularizer::Free, 1.0, 2);
    const auto free = sweep_tau({0.0, 1.0}, Regularizer::Free, base, 2, s.train, s.test, s.refs, 1);
    const auto tik = sweep_tau({0.0}, Regularizer::Tikhonov, base, 2, s.train, s.test, s.refs, 1);
    REQUIRE(free.size() == 4);
    REQUIRE(tik.size() == 2);
    for (const auto& r : tik) {
      const auto same = std::find_if(free.begin(), free.end(), [&](const TauRow& f) {
        return f.tau == 0.0 && f.trial == r.trial;
      });
      REQUIRE(same != free.end());
      CHECK(same->test_mse == r.test_mse);
      CHECK(same->seed == r.seed);
    }
    CHECK(free[0].reference_free_loss == s.refs.gauss.mean_loss);
    CHECK_ERROR_KIND(sweep_tau({}, Regularizer::Free, base, 1, s.train, s.test, s.refs), ConstraintViolation);
    std::ostringstream os;
    write_tau_csv(os, free);
    const std::string csv = os.str();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  }

  TEST_CASE("batch and dimension sweep") {
    const auto& s = small();
    TrainConfig base = small_config(Regularizer::Free, 1.0, 2);
    const auto rows = sweep_batch_dim({16, 32}, {2, 4}, 2, base, s.train, s.test, 5, 1);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
      CHECK(r.trials == 2);
      CHECK(r.d < r.b);
      CHECK(r.ks_sem >= 0);
    }
    CHECK_ERROR_KIND(sweep_batch_dim({16}, {16}, 1, base, s.train, s.test, 5, 1), ConstraintViolation);
    CHECK_ERROR_KIND(sweep_batch_dim({16}, {4}, 0, base, s.train, s.test, 5, 1), ConstraintViolation);
  }

  TEST_CASE("inversion with an exact linear autoencoder stays at the true point") {
    // Encoder embeds R^2 into R^3, decoder is its left inverse: reconstruction error 0.
    const Matrix e = (Matrix(3, 2) << 1, 0, 0, 1, 1, 1).finished();
    const Matrix pinv = (e.transpose() * e).inverse() * e.transpose();
    const neural::Mlp enc({neural::Layer{e, Vector::Zero(3), neural::Activation::Identity}});
    const neural::Mlp dec({neural::Layer{pinv, Vector::Zero(2), neural::Activation::Identity}});
    InverseConfig icfg;
    icfg.projection = Matrix::Identity(2, 2);
    icfg.rho = 0.0;
    icfg.steps = 100;
    Rng rng(1);
    const Matrix x = sample_gaussian(rng, 2, 10);
    const Matrix rec = invert(x, enc, dec, icfg, rng);
    CHECK((rec - x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_ERROR_KIND(invert(Matrix::Zero(3, 10), enc, dec, icfg, rng), ShapeError);
  }

  TEST_CASE("inverse evaluation partitions the histogram by sign") {
    Rng rng(2);
    const auto enc = neural::init_params(neural::encoder_shape(4), rng);
    const auto dec = neural::init_params(neural::decoder_shape(4), rng);
    InverseConfig icfg;
    icfg.steps = 5;
    const auto& s = small();
    const auto rep = inverse_eval(s.test, enc, dec, icfg, 8);
    CHECK(rep.n == s.test.size());
    CHECK(std::isfinite(rep.mse_given));
    CHECK(rep.mse_given >= 0);
    CHECK(rep.mse_missing >= 0);
    long long rec_total = 0;
    long long truth_total = 0;
    bool pos = false;
    bool neg = false;
    for (const auto& row : rep.histogram) {
      rec_total += row.recovered;
      truth_total += row.truth;
      (row.sign > 0 ? pos : neg) = true;
    }
    CHECK(rec_total == rep.n);
    CHECK(truth_total == rep.n);
    CHECK(pos);
    CHECK(neg);
    const auto again = inverse_eval(s.test, enc, dec, icfg, 8);
    CHECK(again.recovered == rep.recovered);
  }

  TEST_CASE("inverse config validation") {
    InverseConfig icfg;
    CHECK_NOTHROW(icfg.validate());
    icfg.rho = -1;
    CHECK_ERROR_KIND(icfg.validate(), ConstraintViolation);
    icfg = InverseConfig{};
    icfg.steps = 0;
    CHECK_ERROR_KIND(icfg.validate(), ConstraintViolation);
    icfg = InverseConfig{};
    icfg.init_noise_variance = -0.1;
    CHECK_ERROR_KIND(icfg.validate(), ConstraintViolation);
  }

  TEST_CASE("parallel_for visits every index once for any worker count") {
    for (int workers : {1, 2, 5}) {
      std::vector<std::atomic<int>> hits(17);
      parallel_for(17, workers, [&](int i) { hits[static_cast<size_t>(i)]++; });
      for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK(trial_seed(10, 3) == 13);
    CHECK(default_workers() >= 1);
  }
}
