#include "rbmsem/simstudy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rbmsem/metrics.hpp"
#include "rbmsem/seeding.hpp"

#if defined(RBMSEM_HAVE_OPENMP)
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace rbmsem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kVersion = "1.0.0";

void validate(const SimSetting& s) {
  if (!presets::is_preset(s.model)) throw std::invalid_argument("unknown model '" + s.model + "'");
  if (s.n < 2) throw std::invalid_argument("sample size must be at least 2");
  if (s.replications < 1) throw std::invalid_argument("replications must be positive");
  if (s.estimators.empty()) throw std::invalid_argument("no estimators requested");
  if (s.bootstrap_T < 1) throw std::invalid_argument("bootstrap_T must be positive");
  if (!s.dist.feasible()) throw std::invalid_argument("infeasible skewness/kurtosis pair");
  for (Estimator e : s.estimators)
    if (e == Estimator::REML && s.model != "gcm") throw std::invalid_argument("REML is only available for the gcm model");
}

FitResult failed_fit(Estimator est, Eigen::Index m, std::string why) {
  FitResult f;
  f.estimator = est;
  f.theta_hat.values = Vector::Constant(m, kNaN);
  f.se = Vector::Constant(m, kNaN);
  f.rejection_reason = RejectionReason::NoConvergence;
  f.message = std::move(why);
  return f;
}

std::vector<FitResult> fit_replication(const SimSetting& s, const ModelSpec& spec, const Vector& truth, int r) {
  const auto m = static_cast<Eigen::Index>(spec.free_count());
  const std::uint64_t seed = replication_seed(s, r);
  std::vector<FitResult> out;
  out.reserve(s.estimators.size());
  try {
    const Dataset data = simulate(spec, truth, s.n, s.dist, seed);
    const BoundsPolicy bounds = default_bounds(spec, summarize(data));
    FitOptions fo;
    fo.seed = seed;

    std::optional<FitResult> ml;
    auto need_ml = [&] {
      if (!ml) ml = fit_ml(spec, data, bounds, fo);
      return *ml;
    };
    ResampleOptions ro;
    ro.replicates = s.bootstrap_T;
    ro.seed = substream(seed, {1});
    ro.trim = s.trim;
    ro.strict = s.strict_resampling;
    ro.parallelism = Parallelism::Serial;  // replications already run in parallel
    ro.fit = fo;

    for (Estimator est : s.estimators) {
      try {
        switch (est) {
          case Estimator::ML: out.push_back(need_ml()); break;
          case Estimator::ERBM: out.push_back(fit_erbm(spec, data, need_ml())); break;
          case Estimator::IRBM: {
            const FitResult base = need_ml();
            out.push_back(fit_irbm(spec, data, bounds, fo, &base));
            break;
          }
          case Estimator::Boot: out.push_back(bootstrap_correct(spec, data, bounds, ro)); break;
          case Estimator::Jack: out.push_back(jackknife_correct(spec, data, bounds, ro)); break;
          case Estimator::REML: out.push_back(fit_reml_gcm(data, fo)); break;
        }
      } catch (const std::exception& e) {
        out.push_back(failed_fit(est, m, e.what()));
      }
    }
  } catch (const std::exception& e) {
    out.clear();
    for (Estimator est : s.estimators) out.push_back(failed_fit(est, m, e.what()));
  }
  return out;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell_tag(const SimSetting& s) {
  std::ostringstream os;
  os << s.model << "|" << s.n << "|" << presets::reliability_name(s.reliability) << "|" << distribution_name(s.dist)
     << "|" << s.replications << "|" << s.seed << "|" << s.cell << "|" << s.bootstrap_T;
  for (Estimator e : s.estimators) os << "|" << estimator_name(e);
  if (s.trim) os << "|trim" << s.trim->lower << "," << s.trim->upper;
  if (s.strict_resampling) os << "|strict";
  return os.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

std::uint64_t replication_seed(const SimSetting& setting, int r) {
  return substream(setting.seed, {setting.cell, static_cast<std::uint64_t>(r)});
}

int EstimatorRun::accepted_count() const {
  int c = 0;
  for (bool a : accepted) c += a ? 1 : 0;
  return c;
}

const EstimatorRun& CellRun::run(Estimator est) const {
  for (const auto& r : runs)
    if (r.estimator == est) return r;
  throw std::out_of_range("estimator not part of this cell");
}

const ParameterMetrics& SimMetrics::at(Estimator est, const std::string& parameter) const {
  for (const auto& r : rows)
    if (r.estimator == est && r.parameter == parameter) return r;
  throw std::out_of_range("no metrics for " + std::string(estimator_name(est)) + "/" + parameter);
}

CellRun run_cell_raw(const SimSetting& setting) {
  validate(setting);
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec spec = presets::by_name(setting.model);
  const Vector truth = presets::truth(setting.model, setting.reliability);
  const auto m = static_cast<Eigen::Index>(spec.free_count());
  const int reps = setting.replications;

  std::vector<std::vector<FitResult>> all(static_cast<std::size_t>(reps));
  if (setting.parallelism == Parallelism::OpenMP) {
#if defined(RBMSEM_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (int r = 0; r < reps; ++r) all[static_cast<std::size_t>(r)] = fit_replication(setting, spec, truth, r);
  } else {
    for (int r = 0; r < reps; ++r) all[static_cast<std::size_t>(r)] = fit_replication(setting, spec, truth, r);
  }

  CellRun out;
  out.setting = setting;
  out.names = spec.parameter_names();
  out.truth = truth;
  for (std::size_t e = 0; e < setting.estimators.size(); ++e) {
    EstimatorRun run;
    run.estimator = setting.estimators[e];
    run.estimates = Matrix::Constant(reps, m, kNaN);
    run.ses = Matrix::Constant(reps, m, kNaN);
    for (int r = 0; r < reps; ++r) {
      const FitResult& f = all[static_cast<std::size_t>(r)][e];
      run.accepted.push_back(f.acceptable);
      run.reasons.push_back(f.rejection_reason);
      run.wall_times.push_back(f.wall_time);
      if (f.theta_hat.values.size() == m) run.estimates.row(r) = f.theta_hat.values.transpose();
      if (f.se.size() == m) run.ses.row(r) = f.se.transpose();
    }
    out.runs.push_back(std::move(run));
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SimMetrics summarize_cell(const CellRun& run) {
  SimMetrics out;
  out.setting = run.setting;
  out.wall_time = run.wall_time;
  const int reps = run.setting.replications;
  for (const EstimatorRun& er : run.runs) {
    for (std::size_t a = 0; a < run.names.size(); ++a) {
      const auto col = static_cast<Eigen::Index>(a);
      std::vector<double> est, se;
      for (int r = 0; r < reps; ++r) {
        if (!er.accepted[static_cast<std::size_t>(r)]) continue;
        est.push_back(er.estimates(r, col));
        se.push_back(er.ses(r, col));
      }
      ParameterMetrics pm;
      pm.estimator = er.estimator;
      pm.parameter = run.names[a];
      pm.truth = run.truth[col];
      pm.R = static_cast<int>(est.size());
      pm.acceptance_rate = static_cast<double>(pm.R) / reps;
      if (est.empty()) {
        pm.mean_bias = pm.rel_mean_bias = pm.pu = pm.rmse = pm.coverage = pm.mc_se_bias = kNaN;
      } else {
        pm.mean_bias = metrics::mean_bias(est, pm.truth);
        pm.rel_mean_bias = metrics::rel_mean_bias(est, pm.truth);
        pm.pu = metrics::prob_underestimate(est, pm.truth);
        pm.rmse = metrics::rmse(est, pm.truth);
        pm.coverage = metrics::coverage(est, se, pm.truth).rate;
        pm.mc_se_bias = metrics::mc_se(est);
      }
      out.rows.push_back(pm);
    }
  }
  return out;
}

SimMetrics run_cell(const SimSetting& setting) { return summarize_cell(run_cell_raw(setting)); }

std::string results_csv_header() {
  return "model,n,reliability,dist,estimator,parameter,R,acceptance_rate,mean_bias,rel_mean_bias,pu,rmse,coverage,"
         "mc_se_bias,master_seed,cell";
}

std::vector<std::string> results_csv_rows(const SimMetrics& metrics) {
  std::vector<std::string> rows;
  const SimSetting& s = metrics.setting;
  for (const auto& pm : metrics.rows) {
    std::ostringstream os;
    os << s.model << ',' << s.n << ',' << presets::reliability_name(s.reliability) << ',' << distribution_name(s.dist)
       << ',' << estimator_name(pm.estimator) << ',' << pm.parameter << ',' << pm.R << ',' << fmt(pm.acceptance_rate)
       << ',' << fmt(pm.mean_bias) << ',' << fmt(pm.rel_mean_bias) << ',' << fmt(pm.pu) << ',' << fmt(pm.rmse) << ','
       << fmt(pm.coverage) << ',' << fmt(pm.mc_se_bias) << ',' << s.seed << ',' << s.cell;
    rows.push_back(os.str());
  }
  return rows;
}

GridConfig grid_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("grid config must be a JSON object");
  static const std::set<std::string> known{"models",      "ns",          "reliabilities", "dists",
                                           "replications", "estimators",  "bootstrap_T",   "master_seed",
                                           "output_dir",  "trim",        "strict_resampling", "jobs"};
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) throw std::invalid_argument("unknown grid config key '" + key + "'");
  GridConfig c;
  try {
    if (doc.contains("models")) c.models = doc.at("models").get<std::vector<std::string>>();
    if (doc.contains("ns")) c.ns = doc.at("ns").get<std::vector<int>>();
    if (doc.contains("reliabilities")) {
      c.reliabilities.clear();
      for (const auto& r : doc.at("reliabilities"))
        c.reliabilities.push_back(presets::parse_reliability(r.is_string() ? r.get<std::string>() : r.dump()));
    }
    if (doc.contains("dists")) {
      c.dists.clear();
      for (const auto& d : doc.at("dists")) {
        if (d.is_string()) {
          c.dists.push_back(parse_distribution(d.get<std::string>()));
        } else {
          c.dists.push_back({d.at("skewness").get<double>(), d.at("excess_kurtosis").get<double>()});
        }
      }
    }
    if (doc.contains("replications")) c.replications = doc.at("replications").get<int>();
    if (doc.contains("estimators")) {
      c.estimators.clear();
      for (const auto& e : doc.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    if (doc.contains("bootstrap_T")) c.bootstrap_T = doc.at("bootstrap_T").get<int>();
    if (doc.contains("master_seed")) c.master_seed = doc.at("master_seed").get<std::uint64_t>();
    if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    if (doc.contains("trim") && !doc.at("trim").is_null()) {
      const auto& t = doc.at("trim");
      c.trim = TrimQuantiles{t.at(0).get<double>(), t.at(1).get<double>()};
    }
    if (doc.contains("strict_resampling")) c.strict_resampling = doc.at("strict_resampling").get<bool>();
    if (doc.contains("jobs")) c.jobs = doc.at("jobs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed grid config: ") + e.what());
  }
  if (c.models.empty() || c.ns.empty() || c.reliabilities.empty() || c.dists.empty())
    throw std::invalid_argument("grid config needs at least one model, n, reliability and dist");
  if (c.estimators.empty()) throw std::invalid_argument("grid config has an empty estimator list");
  for (const auto& m : c.models)
    if (!presets::is_preset(m)) throw std::invalid_argument("unknown model '" + m + "'");
  for (int n : c.ns)
    if (n < 2) throw std::invalid_argument("sample sizes must be at least 2");
  if (c.replications < 1) throw std::invalid_argument("replications must be positive");
  if (c.bootstrap_T < 1) throw std::invalid_argument("bootstrap_T must be positive");
  if (c.jobs < 0) throw std::invalid_argument("jobs must be nonnegative");
  for (const auto& d : c.dists)
    if (!d.feasible()) throw std::invalid_argument("infeasible skewness/kurtosis pair in dists");
  return c;
}

nlohmann::json grid_config_to_json(const GridConfig& c) {
  nlohmann::json j;
  j["models"] = c.models;
  j["ns"] = c.ns;
  j["reliabilities"] = nlohmann::json::array();
  for (auto r : c.reliabilities) j["reliabilities"].push_back(presets::reliability_name(r));
  j["dists"] = nlohmann::json::array();
  for (const auto& d : c.dists) j["dists"].push_back({{"skewness", d.skewness}, {"excess_kurtosis", d.excess_kurtosis}});
  j["replications"] = c.replications;
  j["estimators"] = nlohmann::json::array();
  for (auto e : c.estimators) j["estimators"].push_back(estimator_name(e));
  j["bootstrap_T"] = c.bootstrap_T;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["trim"] = c.trim ? nlohmann::json::array({c.trim->lower, c.trim->upper}) : nlohmann::json();
  j["strict_resampling"] = c.strict_resampling;
  j["jobs"] = c.jobs;
  return j;
}

std::vector<SimSetting> grid_cells(const GridConfig& config) {
  std::vector<SimSetting> cells;
  std::uint64_t index = 0;
  for (const auto& model : config.models)
    for (int n : config.ns)
      for (auto rel : config.reliabilities)
        for (const auto& dist : config.dists) {
          SimSetting s;
          s.model = model;
          s.n = n;
          s.reliability = rel;
          s.dist = dist;
          s.replications = config.replications;
          s.seed = config.master_seed;
          s.cell = index++;
          s.bootstrap_T = config.bootstrap_T;
          s.trim = config.trim;
          s.strict_resampling = config.strict_resampling;
          s.estimators.clear();
          // REML is not defined for the two-factor model; drop it there.
          for (Estimator e : config.estimators)
            if (!(e == Estimator::REML && model != "gcm")) s.estimators.push_back(e);
          cells.push_back(std::move(s));
        }
  return cells;
}

GridOutcome run_grid(const GridConfig& config, std::ostream* log) {
#if defined(RBMSEM_HAVE_OPENMP)
  if (config.jobs > 0) omp_set_num_threads(config.jobs);
#endif
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out_dir(config.output_dir);
  const fs::path cell_dir = out_dir / "cells";
  fs::create_directories(cell_dir);

  GridOutcome outcome;
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["master_seed"] = config.master_seed;
  manifest["config"] = grid_config_to_json(config);
  manifest["cells"] = nlohmann::json::array();

  std::string csv = results_csv_header() + "\n";
  const auto cells = grid_cells(config);
  for (const auto& cell : cells) {
    ++outcome.cells;
    char stem[32];
    std::snprintf(stem, sizeof stem, "cell_%04llu", static_cast<unsigned long long>(cell.cell));
    const fs::path rows_path = cell_dir / (std::string(stem) + ".csv");
    const fs::path meta_path = cell_dir / (std::string(stem) + ".json");
    const std::string tag = cell_tag(cell);

    nlohmann::json entry{{"cell", cell.cell},
                         {"model", cell.model},
                         {"n", cell.n},
                         {"reliability", presets::reliability_name(cell.reliability)},
                         {"dist", distribution_name(cell.dist)},
                         {"replications", cell.replications},
                         {"seed", config.master_seed}};
    std::string rows;
    bool resumed = false;
    if (fs::exists(rows_path) && fs::exists(meta_path)) {
      try {
        const auto meta = nlohmann::json::parse(read_file(meta_path));
        if (meta.at("tag").get<std::string>() == tag) {
          rows = read_file(rows_path);
          entry["wall_time"] = meta.at("wall_time");
          resumed = true;
        }
      } catch (const std::exception&) {
        resumed = false;
      }
    }
    if (resumed) {
      ++outcome.resumed;
      if (log) *log << "[" << outcome.cells << "/" << cells.size() << "] " << tag << " (checkpoint)\n";
    } else {
      if (log) *log << "[" << outcome.cells << "/" << cells.size() << "] " << tag << " ..." << std::flush;
      try {
        if (cell.estimators.empty()) throw std::invalid_argument("no estimators applicable to this model");
        const SimMetrics met = run_cell(cell);
        for (const auto& line : results_csv_rows(met)) rows += line + "\n";
        write_atomic(rows_path, rows);
        write_atomic(meta_path, nlohmann::json{{"tag", tag}, {"wall_time", met.wall_time}}.dump(2) + "\n");
        entry["wall_time"] = met.wall_time;
        if (log) *log << " " << met.wall_time << " s\n";
      } catch (const std::exception& e) {
        ++outcome.failed;
        entry["error"] = e.what();
        if (log) *log << " failed: " << e.what() << "\n";
      }
    }
    entry["resumed"] = resumed;
    manifest["cells"].push_back(entry);
    csv += rows;
  }
  outcome.rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
  write_atomic(out_dir / "results.csv", csv);
  manifest["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest["failed_cells"] = outcome.failed;
  write_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

}  // namespace rbmsem
