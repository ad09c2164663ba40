#include "rbmsem/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "rbmsem/dataset_io.hpp"
#include "rbmsem/datagen.hpp"
#include "rbmsem/estimators.hpp"
#include "rbmsem/model_io.hpp"
#include "rbmsem/simstudy.hpp"

namespace rbmsem {

namespace {

struct Shared {
  std::uint64_t seed = 1;
  std::string output;
  std::string format = "json";
};

// Writes to the --output file when given, else to `out`.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
}

std::string fit_as_csv(const FitResult& fit) {
  std::ostringstream os;
  os << "parameter,estimate,se\n";
  char buf[64];
  for (std::size_t a = 0; a < fit.theta_hat.names.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    os << fit.theta_hat.names[a];
    for (double v : {fit.theta_hat.values[i], fit.se.size() > i ? fit.se[i] : std::nan("")}) {
      if (std::isfinite(v)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ',' << buf;
      } else {
        os << ",NA";
      }
    }
    os << '\n';
  }
  return os.str();
}

int cmd_fit(const std::string& model_arg, const std::string& data_path, const std::string& est_name,
            int bootstrap_T, bool trim, bool strict, const Shared& sh, std::ostream& out) {
  const ModelSpec spec = load_model(model_arg);
  const Estimator est = parse_estimator(est_name);
  if (est == Estimator::REML && spec.label() != "gcm")
    throw std::invalid_argument("REML is only supported for the gcm model, not '" + spec.label() + "'");
  const Dataset data = read_csv(data_path);
  if (data.cols() != spec.p())
    throw std::invalid_argument("data has " + std::to_string(data.cols()) + " columns, model expects " +
                                std::to_string(spec.p()));
  const BoundsPolicy bounds = default_bounds(spec, summarize(data));
  FitOptions fo;
  fo.seed = sh.seed;
  ResampleOptions ro;
  ro.replicates = bootstrap_T;
  ro.seed = sh.seed;
  if (trim) ro.trim = TrimQuantiles{};
  ro.strict = strict;
  ro.fit = fo;

  FitResult fit;
  switch (est) {
    case Estimator::ML: fit = fit_ml(spec, data, bounds, fo); break;
    case Estimator::ERBM: fit = fit_erbm(spec, data, fit_ml(spec, data, bounds, fo)); break;
    case Estimator::IRBM: {
      const FitResult ml = fit_ml(spec, data, bounds, fo);
      fit = fit_irbm(spec, data, bounds, fo, &ml);
      break;
    }
    case Estimator::Boot: fit = bootstrap_correct(spec, data, bounds, ro); break;
    case Estimator::Jack: fit = jackknife_correct(spec, data, bounds, ro); break;
    case Estimator::REML: fit = fit_reml_gcm(data, fo); break;
  }
  if (sh.format == "csv") {
    emit(fit_as_csv(fit), sh.output, out);
  } else {
    nlohmann::json j = to_json(fit);
    j["model"] = spec.label();
    j["n"] = data.rows();
    emit(j.dump(2) + "\n", sh.output, out);
  }
  return fit.acceptable ? 0 : 2;
}

int cmd_simulate(const std::string& model, int n, const std::string& rel_name, const std::string& dist_name,
                 const Shared& sh, std::ostream& out) {
  if (!presets::is_preset(model)) throw std::invalid_argument("simulate needs a preset model, got '" + model + "'");
  const ModelSpec spec = presets::by_name(model);
  const auto rel = presets::parse_reliability(rel_name);
  const DistributionSpec dist = parse_distribution(dist_name);
  if (!dist.feasible()) throw std::invalid_argument("infeasible skewness/kurtosis pair");
  const Dataset data = simulate(spec, presets::truth(model, rel), n, dist, sh.seed);

  std::vector<std::string> header;
  for (int j = 0; j < spec.p(); ++j) header.push_back("y" + std::to_string(j + 1));
  std::ostringstream body;
  if (sh.format == "json") {
    nlohmann::json j;
    j["columns"] = header;
    j["data"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      nlohmann::json r = nlohmann::json::array();
      for (Eigen::Index c = 0; c < data.cols(); ++c) r.push_back(data(i, c));
      j["data"].push_back(r);
    }
    body << j.dump() << "\n";
  } else {
    write_csv(body, data, header);
  }
  emit(body.str(), sh.output, out);

  if (!sh.output.empty()) {
    std::filesystem::path sidecar(sh.output);
    const Vector truth = presets::truth(model, rel);
    sidecar.replace_extension(".manifest.json");
    const nlohmann::json manifest{{"model", model},
                                  {"n", n},
                                  {"reliability", presets::reliability_name(rel)},
                                  {"dist", {{"skewness", dist.skewness}, {"excess_kurtosis", dist.excess_kurtosis}}},
                                  {"seed", sh.seed},
                                  {"truth", std::vector<double>(truth.data(), truth.data() + truth.size())},
                                  {"parameters", spec.parameter_names()}};
    std::ofstream f(sidecar);
    if (!f) throw std::runtime_error("cannot write '" + sidecar.string() + "'");
    f << manifest.dump(2) << "\n";
  }
  return 0;
}

int cmd_grid(const std::string& config_path, int jobs, const std::string& output_dir, std::ostream& out,
             std::ostream& err) {
  std::ifstream f(config_path);
  if (!f) throw std::runtime_error("cannot open grid config '" + config_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("grid config is not valid JSON: ") + e.what());
  }
  GridConfig config = grid_config_from_json(doc);
  if (jobs >= 0) config.jobs = jobs;
  if (!output_dir.empty()) config.output_dir = output_dir;
  const GridOutcome res = run_grid(config, &err);
  out << nlohmann::json{{"cells", res.cells},
                        {"resumed", res.resumed},
                        {"failed", res.failed},
                        {"rows", res.rows},
                        {"results", (std::filesystem::path(config.output_dir) / "results.csv").string()}}
             .dump()
      << "\n";
  return 0;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

int cmd_report(const std::string& path, const std::string& model, const std::string& estimator,
               const std::string& parameter, const Shared& sh, std::ostream& out) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open results '" + path + "'");
  std::string header_line;
  if (!std::getline(f, header_line)) throw std::runtime_error("results file is empty");
  const auto header = split(header_line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("results file lacks column '" + name + "'");
  };
  const std::size_t cm = col("model"), ce = col("estimator"), cp = col("parameter");
  std::ostringstream os;
  nlohmann::json arr = nlohmann::json::array();
  if (sh.format == "csv") os << header_line << "\n";
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) throw std::runtime_error("ragged row in results file");
    if (!model.empty() && fields[cm] != model) continue;
    if (!estimator.empty() && fields[ce] != estimator) continue;
    if (!parameter.empty() && fields[cp] != parameter) continue;
    if (sh.format == "csv") {
      os << line << "\n";
    } else {
      nlohmann::json row;
      for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string& v = fields[i];
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (v == "NA") {
          row[header[i]] = nullptr;
        } else if (!v.empty() && end == v.c_str() + v.size()) {
          row[header[i]] = d;
        } else {
          row[header[i]] = v;
        }
      }
      arr.push_back(row);
    }
  }
  emit(sh.format == "csv" ? os.str() : arr.dump(2) + "\n", sh.output, out);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reduced-bias estimation for structural equation models", "rbmsem"};
  app.require_subcommand(1, 1);
  Shared sh;
  auto shared = [&](CLI::App* sub) {
    sub->add_option("--seed", sh.seed, "Random seed")->capture_default_str();
    sub->add_option("--output,-o", sh.output, "Output path (default: standard output)");
    sub->add_option("--format", sh.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };

  std::string model, data_path, estimator = "ml";
  int bootstrap_T = 200;
  bool trim = false, strict = false;
  auto* fit = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  fit->add_option("--model,-m", model, "Preset name or model JSON file")->required();
  fit->add_option("--data,-d", data_path, "CSV dataset, one row per observation")->required();
  fit->add_option("--estimator,-e", estimator, "ml, erbm, irbm, boot, jack or reml")->capture_default_str();
  fit->add_option("--bootstrap-T", bootstrap_T, "Bootstrap replicates")->capture_default_str();
  fit->add_flag("--trim", trim, "Trim resampling replicates outside the 0.005/0.995 quantiles");
  fit->add_flag("--strict", strict, "Reject when any bootstrap resample is unacceptable");

  std::string sim_model, rel = "high", dist = "normal";
  int n = 100;
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a preset");
  sim->add_option("--model,-m", sim_model, "two_factor, two_factor_with_means or gcm")->required();
  sim->add_option("--n", n, "Sample size")->required()->check(CLI::PositiveNumber);
  sim->add_option("--reliability,-r", rel, "high or low")->capture_default_str();
  sim->add_option("--dist", dist, "normal, nonnormal or skew,kurtosis")->capture_default_str();

  std::string config_path, grid_out;
  int jobs = -1;
  auto* grid = app.add_subcommand("grid", "Run a simulation grid from a JSON config");
  grid->add_option("--config,-c", config_path, "Grid config JSON")->required();
  grid->add_option("--jobs,-j", jobs, "Worker threads (0 = all cores)");

  std::string results, rep_model, rep_est, rep_param;
  auto* report = app.add_subcommand("report", "Filter a results.csv table");
  report->add_option("--results", results, "results.csv from grid")->required();
  report->add_option("--model", rep_model, "Keep one model");
  report->add_option("--estimator", rep_est, "Keep one estimator");
  report->add_option("--parameter", rep_param, "Keep one parameter");

  // Shared flags are registered per subcommand; only the chosen one is parsed.
  for (auto* sub : {fit, sim, grid, report}) shared(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  // Datasets and tables default to CSV, fit results to JSON.
  for (auto* sub : {sim, report})
    if (*sub && sub->count("--format") == 0) sh.format = "csv";

  try {
    if (*fit) return cmd_fit(model, data_path, estimator, bootstrap_T, trim, strict, sh, out);
    if (*sim) return cmd_simulate(sim_model, n, rel, dist, sh, out);
    if (*grid) return cmd_grid(config_path, jobs, sh.output, out, err);
    if (*report) return cmd_report(results, rep_model, rep_est, rep_param, sh, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace rbmsem
