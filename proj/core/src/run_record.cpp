#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "freegauss/experiments.hpp"

namespace freegauss::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON has no NaN; undefined values are stored as null.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double get_num(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::ParseError, std::string("missing field '") + key + "'");
  if (it->is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!it->is_number()) throw Error(ErrorKind::ParseError, std::string("field '") + key + "' is not a number");
  return it->get<double>();
}

json to_json(const TrainConfig& c) {
  return json{{"d", c.d},
              {"b", c.b},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"tau", c.tau},
              {"regularizer", to_string(c.regularizer)},
              {"seed", c.seed},
              {"snapshot_epochs", c.snapshot_epochs},
              {"standardize_ks", c.standardize_ks},
              {"init", neural::to_string(c.init)}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.d = j.at("d").get<int>();
  c.b = j.at("b").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.tau = j.at("tau").get<double>();
  c.regularizer = regularizer_from_string(j.at("regularizer").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.snapshot_epochs = j.at("snapshot_epochs").get<std::vector<int>>();
  c.standardize_ks = j.at("standardize_ks").get<bool>();
  c.init = neural::init_scheme_from_string(j.at("init").get<std::string>());
  return c;
}

json to_json(const gaussmetrics::MetricReport& r) {
  json moments = json::object();
  json rel = json::object();
  for (const auto& [k, v] : r.moments) moments[std::to_string(k)] = num(v);
  for (const auto& [k, v] : r.rel_err_moments) rel[std::to_string(k)] = num(v);
  return json{{"ks", num(r.ks)},
              {"delta_ot", num(r.delta_ot)},
              {"moments", moments},
              {"rel_err_moments", rel},
              {"free_loss", num(r.free_loss)},
              {"rel_err_free_loss", num(r.rel_err_free_loss)},
              {"n_entries", r.n_entries}};
}

gaussmetrics::MetricReport metrics_from_json(const json& j) {
  gaussmetrics::MetricReport r;
  r.ks = get_num(j, "ks");
  r.delta_ot = get_num(j, "delta_ot");
  for (const auto& [k, v] : j.at("moments").items()) {
    r.moments[std::stoi(k)] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  }
  for (const auto& [k, v] : j.at("rel_err_moments").items()) {
    r.rel_err_moments[std::stoi(k)] =
        v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  }
  r.free_loss = get_num(j, "free_loss");
  r.rel_err_free_loss = get_num(j, "rel_err_free_loss");
  r.n_entries = j.at("n_entries").get<long long>();
  return r;
}

json to_json(const EpochRow& e) {
  return json{{"epoch", e.epoch},
              {"train_loss_total", num(e.train_loss_total)},
              {"train_mse", num(e.train_mse)},
              {"train_regularizer", num(e.train_regularizer)},
              {"train_free_loss", num(e.train_free_loss)},
              {"test_free_loss", num(e.test_free_loss)}};
}

EpochRow epoch_from_json(const json& j) {
  EpochRow e;
  e.epoch = j.at("epoch").get<int>();
  e.train_loss_total = get_num(j, "train_loss_total");
  e.train_mse = get_num(j, "train_mse");
  e.train_regularizer = get_num(j, "train_regularizer");
  e.train_free_loss = get_num(j, "train_free_loss");
  e.test_free_loss = get_num(j, "test_free_loss");
  return e;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << text;
}

}  // namespace

void save_run_record(const fs::path& dir, const RunRecord& record) {
  for (std::size_t i = 1; i < record.epochs.size(); ++i) {
    if (record.epochs[i].epoch <= record.epochs[i - 1].epoch) {
      throw Error(ErrorKind::ConstraintViolation, "epoch rows must be strictly increasing");
    }
  }
  const fs::path snap_dir = record.config.snapshot_dir;
  json snapshots = json::array();
  for (const auto& s : record.snapshots) {
    if (!fs::exists(snap_dir / s.path)) {
      throw Error(ErrorKind::Io, "snapshot file missing: " + (snap_dir / s.path).string());
    }
    snapshots.push_back(json{{"epoch", s.epoch},
                             {"split", s.split},
                             {"kind", s.kind},
                             {"path", s.path},
                             {"rows", s.rows}});
  }
  fs::create_directories(dir);

  std::string lines;
  for (const auto& e : record.epochs) lines += to_json(e).dump() + '\n';
  write_text(dir / "epochs.jsonl", lines);

  std::error_code ec;
  auto rel_snap = snap_dir.empty() ? fs::path() : fs::relative(snap_dir, dir, ec);
  if (ec) rel_snap = snap_dir;
  json summary{{"format", "freegauss-run"},
               {"version", 1},
               {"kind", record.kind},
               {"config", to_json(record.config)},
               {"train_metrics", to_json(record.train_metrics)},
               {"test_metrics", to_json(record.test_metrics)},
               {"test_ks_raw", num(record.test_ks_raw)},
               {"test_ks_standardized", num(record.test_ks_standardized)},
               {"test_delta_ot_standardized", num(record.test_delta_ot_standardized)},
               {"test_mse", num(record.test_mse)},
               {"reference_free_loss", num(record.reference_free_loss)},
               {"retries", record.retries},
               {"snapshot_dir", rel_snap.generic_string()},
               {"snapshots", snapshots},
               {"n_epochs", record.epochs.size()}};
  write_text(dir / "summary.json", summary.dump(2) + '\n');
}

RunRecord load_run_record(const fs::path& dir) {
  std::ifstream is(dir / "summary.json");
  if (!is) throw Error(ErrorKind::Io, "no summary.json in " + dir.string());
  json s;
  try {
    s = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, (dir / "summary.json").string() + ": " + e.what());
  }
  RunRecord r;
  try {
    if (s.at("format") != "freegauss-run") {
      throw Error(ErrorKind::ParseError, "not a run summary: " + dir.string());
    }
    r.kind = s.at("kind").get<std::string>();
    r.config = config_from_json(s.at("config"));
    r.train_metrics = metrics_from_json(s.at("train_metrics"));
    r.test_metrics = metrics_from_json(s.at("test_metrics"));
    r.test_ks_raw = get_num(s, "test_ks_raw");
    r.test_ks_standardized = get_num(s, "test_ks_standardized");
    r.test_delta_ot_standardized = get_num(s, "test_delta_ot_standardized");
    r.test_mse = get_num(s, "test_mse");
    r.reference_free_loss = get_num(s, "reference_free_loss");
    r.retries = s.at("retries").get<int>();
    const auto snap = s.at("snapshot_dir").get<std::string>();
    r.config.snapshot_dir = snap.empty() ? fs::path() : dir / snap;
    for (const auto& j : s.at("snapshots")) {
      r.snapshots.push_back({j.at("epoch").get<int>(), j.at("split").get<std::string>(),
                             j.at("kind").get<std::string>(), j.at("path").get<std::string>(),
                             j.at("rows").get<long long>()});
    }

    std::ifstream es(dir / "epochs.jsonl");
    if (!es) throw Error(ErrorKind::Io, "no epochs.jsonl in " + dir.string());
    std::string line;
    while (std::getline(es, line)) {
      if (!line.empty()) r.epochs.push_back(epoch_from_json(json::parse(line)));
    }
    if (r.epochs.size() != s.at("n_epochs").get<std::size_t>()) {
      throw Error(ErrorKind::ParseError, "epochs.jsonl row count does not match summary");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, dir.string() + ": " + e.what());
  }
  return r;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[to_string(r.config.regularizer)].push_back(&r);
  std::vector<AggregateRow> rows;
  for (const auto& [name, runs] : groups) {
    std::vector<double> ks, ot, mse, rel, m8;
    for (const auto* r : runs) {
      ks.push_back(r->test_ks_standardized);
      ot.push_back(r->test_metrics.delta_ot);
      mse.push_back(r->test_mse);
      rel.push_back(r->test_metrics.rel_err_free_loss);
      const auto it = r->test_metrics.rel_err_moments.find(8);
      m8.push_back(it == r->test_metrics.rel_err_moments.end()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : it->second);
    }
    AggregateRow row;
    row.regularizer = name;
    row.trials = static_cast<int>(runs.size());
    std::tie(row.ks_mean, row.ks_std) = mean_std(ks);
    std::tie(row.delta_ot_mean, row.delta_ot_std) = mean_std(ot);
    std::tie(row.mse_mean, row.mse_std) = mean_std(mse);
    std::tie(row.rel_free_mean, row.rel_free_std) = mean_std(rel);
    std::tie(row.rel_m8_mean, row.rel_m8_std) = mean_std(m8);
    rows.push_back(row);
  }
  return rows;
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "regularizer,trials,ks_mean,ks_std,delta_ot_mean,delta_ot_std,mse_mean,mse_std,"
        "rel_free_mean,rel_free_std,rel_m8_mean,rel_m8_std\n";
  for (const auto& r : rows) {
    os << r.regularizer << ',' << r.trials << ',' << format_double(r.ks_mean) << ','
       << format_double(r.ks_std) << ',' << format_double(r.delta_ot_mean) << ','
       << format_double(r.delta_ot_std) << ',' << format_double(r.mse_mean) << ','
       << format_double(r.mse_std) << ',' << format_double(r.rel_free_mean) << ','
       << format_double(r.rel_free_std) << ',' << format_double(r.rel_m8_mean) << ','
       << format_double(r.rel_m8_std) << '\n';
  }
}

}  // namespace freegauss::experiments
