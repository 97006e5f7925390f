#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "freegauss/cli/commands.hpp"
#include "freegauss/cli/config.hpp"
#include "freegauss/cli/manifest.hpp"
#include "support.hpp"

using namespace freegauss;
using namespace freegauss::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_tool(std::vector<std::string> args) {
  args.insert(args.begin(), "freegauss");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freegauss_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// Small problem so every command finishes in well under a second.
const std::vector<std::string> kTiny{"--set", "d=4",          "--set", "b=16",        "--set",
                                     "epochs=2", "--set",     "n_per_class=64", "--set", "n_gauss=5",
                                     "--set", "n_ot=2",       "--set", "snapshot_epochs=[0,1]", "-q"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("empty configuration resolves to the published defaults") {
    const Config c = parse_config_text("", {});
    CHECK(c.d == 32);
    CHECK(c.b == 256);
    CHECK(c.lr == 1e-3);
    CHECK(c.epochs == 2000);
    CHECK(c.tau == 1.0);
    CHECK(c.rho == 0.0005);
    CHECK(c.steps == 5000);
    CHECK(c.c() == 0.125);
    const auto icfg = c.inverse_config();
    CHECK(icfg.rho == 0.0005);
    CHECK(icfg.steps == 5000);
  }

  TEST_CASE("overrides recompute derived values and may use the last key component") {
    const Config c = parse_config_text("", {"d=8", "model.b=64"});
    CHECK(c.c() == 0.125);
    CHECK(to_json(c).dump().find("0.125") != std::string::npos);
    const Config nested = parse_config_text("model:\n  d: 4\n  b: 16\ntrain:\n  tau: 0.5\n", {"tau=2"});
    CHECK(nested.d == 4);
    CHECK(nested.tau == 2.0);
    CHECK(nested.train_config().tau == 2.0);
    CHECK(parse_config_text("", {"seed=5"}).resolved_train_seed() ==
          parse_config_text("", {"seed=5"}).resolved_train_seed());
    CHECK(parse_config_text("", {"seed=5"}).resolved_train_seed() !=
          parse_config_text("", {"seed=6"}).resolved_train_seed());
    CHECK(parse_config_text("", {"data.train_seed=42"}).resolved_train_seed() == 42);
  }

  TEST_CASE("configuration errors") {
    CHECK_ERROR_KIND(parse_config_text("", {"d=256", "b=256"}), ConstraintViolation);
    CHECK_ERROR_KIND(parse_config_text("", {"tau=-1"}), ConstraintViolation);
    CHECK_ERROR_KIND(parse_config_text("", {"nonsense=1"}), UnknownKey);
    CHECK_ERROR_KIND(parse_config_text("", {"trials=2"}), UnknownKey);  // train.trials or sweep.trials
    CHECK_ERROR_KIND(parse_config_text("model:\n  depth: 3\n", {}), UnknownKey);
    CHECK_ERROR_KIND(parse_config_text("", {"d"}), ParseError);
    CHECK_ERROR_KIND(parse_config_text("model:\n  d: abc\n", {}), ParseError);
    try {
      parse_config_text("model:\n  d: [1, 2\n", {});
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ParseError);
      CHECK(std::string(e.what()).find("line") != std::string::npos);
      CHECK(std::string(e.what()).find("column") != std::string::npos);
    }
    CHECK(error_kind([] { parse_config(fs::path("/nonexistent/config.yaml"), {}); }).has_value());
  }

  TEST_CASE("configuration file on disk") {
    const fs::path dir = scratch("config");
    std::ofstream(dir / "c.yaml") << "model:\n  d: 8\n  b: 64\n";
    const Config c = parse_config(dir / "c.yaml", {"epochs=3"});
    CHECK(c.d == 8);
    CHECK(c.epochs == 3);
    std::ofstream(dir / "bad.yaml") << "model:\n  d: 8\n  d: [\n";
    try {
      parse_config(dir / "bad.yaml", {});
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("bad.yaml") != std::string::npos);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("every key is documented with a default and provenance") {
    const std::string help = keys_help();
    for (const auto& k : config_keys()) {
      CHECK(help.find(k.key) != std::string::npos);
      CHECK((k.provenance == "published" || k.provenance == "chosen"));
    }
    const auto find = [](const std::string& key) {
      for (const auto& k : config_keys())
        if (k.key == key) return k;
      return KeyInfo{};
    };
    CHECK(find("model.d").provenance == "published");
    CHECK(find("inverse.rho").provenance == "published");
    CHECK(find("model.init").provenance == "chosen");
  }

  TEST_CASE("usage errors exit 1 and help exits 0") {
    CHECK(run_tool({}).code == 1);
    CHECK(run_tool({"frobnicate"}).code == 1);
    const auto help = run_tool({"train-encoder", "--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("train.epochs") != std::string::npos);
    CHECK(help.out.find("published") != std::string::npos);
    CHECK(run_tool({"reference", "--set", "nonsense=1"}).code == 1);
    CHECK(run_tool({"reference", "--d", "256", "--b", "256", "-o", scratch("usage").string()}).code == 1);
  }

  TEST_CASE("reference command writes records that reload to the printed values") {
    const fs::path out = scratch("reference");
    const auto r = run_tool({"reference", "--d", "4", "--b", "16", "--n", "20", "--seed", "3", "-o", out.string(), "-q"});
    REQUIRE(r.code == 0);
    const auto refs = load_references(out);
    CHECK(refs.gauss.d == 4);
    CHECK(refs.gauss.n_samples == 20);
    CHECK(refs.ot.mean_cost > 0);
    CHECK(r.out.find(format_double(refs.gauss.mean_loss).substr(0, 6)) != std::string::npos);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("command") == "reference");
    for (const auto& o : manifest.at("outputs")) CHECK(fs::exists(out / o.get<std::string>()));
    fs::remove_all(out);
  }

  TEST_CASE("eval: metrics row, data errors and untouched input") {
    const fs::path out = scratch("eval");
    REQUIRE(run_tool({"reference", "--d", "4", "--b", "64", "--n", "20", "-o", (out / "refs").string(), "-q"}).code == 0);
    Rng rng(1);
    write_matrix_csv(out / "z.csv", sample_gaussian(rng, 4, 64));
    const std::string before = sha256_file(out / "z.csv");
    const auto r = run_tool({"eval", (out / "z.csv").string(), "--refs", (out / "refs").string(), "-o", (out / "e").string(), "-q"});
    REQUIRE(r.code == 0);
    CHECK(sha256_file(out / "z.csv") == before);
    const std::string csv = slurp(out / "e" / "metrics.csv");
    CHECK(csv.rfind("ks,delta_ot,m2,m4,m6,m8,rel_free,n_entries\n", 0) == 0);
    const auto manifest = nlohmann::json::parse(slurp(out / "e" / "manifest.json"));
    bool hashed = false;
    for (const auto& in : manifest.at("inputs")) hashed = hashed || in.at("sha256") == before;
    CHECK(hashed);

    std::ofstream(out / "bad.csv") << "1,2,3\n4,oops,6\n";
    const auto bad = run_tool({"eval", (out / "bad.csv").string(), "-o", (out / "e2").string(), "-q"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("line 2") != std::string::npos);
    CHECK(bad.err.find("bad.csv") != std::string::npos);

    write_matrix_csv(out / "tall.csv", Matrix::Ones(5, 3));
    CHECK(run_tool({"eval", (out / "tall.csv").string(), "-o", (out / "e3").string(), "-q"}).code == 2);
    CHECK(run_tool({"eval", (out / "missing.csv").string(), "-o", (out / "e4").string(), "-q"}).code != 0);
    fs::remove_all(out);
  }

  TEST_CASE("training commands are idempotent") {
    const fs::path a = scratch("idem_a");
    const fs::path b = scratch("idem_b");
    REQUIRE(run_tool(with_tiny({"train-autoencoder", "--set", "train.trials=2", "-o", a.string()})).code == 0);
    REQUIRE(run_tool(with_tiny({"train-autoencoder", "--set", "train.trials=2", "-o", b.string()})).code == 0);
    int compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
      const fs::path other = b / fs::relative(e.path(), a);
      REQUIRE(fs::exists(other));
      CHECK(slurp(e.path()) == slurp(other));
      ++compared;
    }
    CHECK(compared > 6);
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.at("runs").size() == 2);
    CHECK(manifest.at("config").at("seed") == 0);
    for (const auto& o : manifest.at("outputs")) CHECK(fs::exists(a / o.get<std::string>()));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("report aggregates per regularizer and lists bad records") {
    const fs::path out = scratch("report");
    REQUIRE(run_tool(with_tiny({"train-autoencoder", "-o", out.string()})).code == 0);
    REQUIRE(run_tool(with_tiny({"train-autoencoder", "--set", "regularizer=tikhonov", "-o", out.string()})).code == 0);
    const auto r = run_tool({"report", out.string(), "-o", (out / "rep").string(), "-q"});
    REQUIRE(r.code == 0);
    const std::string csv = slurp(out / "rep" / "report.csv");
    CHECK(csv.find("\nfree,1,") != std::string::npos);
    CHECK(csv.find("\ntikhonov,1,") != std::string::npos);
    CHECK(csv.find(",0,") != std::string::npos);  // single trial: std 0

    fs::create_directories(out / "broken" / "trial_000");
    std::ofstream(out / "broken" / "trial_000" / "summary.json") << "{";
    const auto bad = run_tool({"report", out.string(), "-o", (out / "rep2").string(), "-q"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("broken") != std::string::npos);
    CHECK(run_tool({"report", (out / "nothing").string(), "-o", (out / "rep3").string(), "-q"}).code == 2);
    fs::remove_all(out);
  }

  TEST_CASE("sweeps and inversion write their tables") {
    const fs::path out = scratch("sweeps");
    REQUIRE(run_tool(with_tiny({"sweep-tau", "--set", "taus=[0,1]", "-o", out.string()})).code == 0);
    CHECK(fs::exists(out / "tau_free.csv"));
    REQUIRE(run_tool(with_tiny({"sweep-batch-dim", "--set", "bs=[16]", "--set", "ds=[2,4]", "--set",
                                "sweep.trials=2", "-o", out.string()})).code == 0);
    CHECK(slurp(out / "batch_dim.csv").rfind("d,b,trials,", 0) == 0);
    CHECK(run_tool(with_tiny({"sweep-batch-dim", "--set", "bs=[16]", "--set", "ds=[16]", "-o", out.string()})).code == 1);
    REQUIRE(run_tool(with_tiny({"invert", "--set", "pretrain_epochs=1", "--set", "inverse.steps=3", "--set",
                                "inverse.train_per_class=64", "--set", "inverse.test_per_class=16",
                                "-o", out.string()})).code == 0);
    const std::string summary = slurp(out / "inverse_summary.csv");
    CHECK(summary.rfind("regularizer,tau,mse_given,mse_missing,n,reconstruction_mse\n", 0) == 0);
    for (const char* reg : {"free", "tikhonov", "none"}) {
      CHECK(fs::exists(out / (std::string("inverse_hist_") + reg + ".csv")));
      CHECK(fs::exists(out / "inverse" / reg / "decoder.ckpt"));
    }
    fs::remove_all(out);
  }

  TEST_CASE("output directory falls back to the environment variable") {
    const fs::path out = scratch("env");
    ::setenv(kOutDirEnv, out.string().c_str(), 1);
    const auto r = run_tool({"reference", "--d", "4", "--b", "16", "--n", "5", "-q"});
    ::unsetenv(kOutDirEnv);
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "reference_free_loss.txt"));
    fs::remove_all(out);
  }

  TEST_CASE("manifest helpers") {
    const fs::path dir = scratch("manifest");
    write_file_atomic(dir / "abc.txt", "abc");
    CHECK(slurp(dir / "abc.txt") == "abc");
    CHECK(!fs::exists(dir / "abc.txt.tmp"));
    CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_ERROR_KIND(sha256_file(dir / "missing"), Io);
    Manifest m("test", dir, nlohmann::json::object());
    m.add_output("abc.txt");
    m.add_output(dir / "abc.txt");
    CHECK_NOTHROW(m.write());
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(j.at("outputs").size() == 1);
    CHECK(j.at("version") == kToolVersion);
    m.add_output("never_written.txt");
    CHECK_ERROR_KIND(m.write(), Io);
    fs::remove_all(dir);
  }
}
