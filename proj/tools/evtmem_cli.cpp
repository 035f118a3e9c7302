// evtmem: mixed-effects extreme value index regression from the command line.
//
// Exit codes: 0 success, 2 input parse error, 3 precondition violation,
// 4 optimizer non-convergence (the report is still written).

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "evtmem/compare.hpp"
#include "evtmem/core.hpp"
#include "evtmem/estimate.hpp"
#include "evtmem/inference.hpp"
#include "evtmem/io.hpp"
#include "evtmem/mc.hpp"
#include "evtmem/parallel.hpp"
#include "evtmem/predict.hpp"
#include "evtmem/threshold.hpp"

namespace {

using namespace evtmem;

constexpr int kExitParse = 2;
constexpr int kExitPrecondition = 3;
constexpr int kExitNoConvergence = 4;

void resolve_threads(int threads_flag) {
  if (threads_flag > 0) {
    set_max_threads(threads_flag);
    return;
  }
  if (const char* env = std::getenv("EVTMEM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_max_threads(n);
  }
}

IngestResult ingest_file(const std::string& path, bool standardize,
                         const std::map<std::string, ColumnScaling>* reuse) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open input file: " + path);
  IngestResult res = ingest_csv(in, standardize, reuse);
  if (!res.rejected_lines.empty()) {
    std::cerr << "warning: rejected " << res.rejected_lines.size()
              << " row(s) at line(s):";
    for (std::size_t ln : res.rejected_lines) std::cerr << ' ' << ln;
    std::cerr << '\n';
  }
  return res;
}

FitReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open fit report: " + path);
  return read_fit_report(in);
}

void check_schema(const FitReport& report, const IngestResult& ingest) {
  if (report.schema_hash != ingest.schema_hash)
    throw std::invalid_argument(
        "schema mismatch between fit report and input data");
}

QuadratureSpec quad_from_flags(const std::string& mode, int nodes) {
  QuadratureSpec quad;
  if (mode == "agh")
    quad.mode = QuadratureMode::AdaptiveGaussHermite;
  else if (mode == "laplace")
    quad.mode = QuadratureMode::Laplace;
  else if (mode == "oracle")
    quad.mode = QuadratureMode::DenseGridOracle;
  else
    throw parse_error("unknown quadrature mode '" + mode + "'");
  quad.nodes_per_dim = nodes;
  return quad;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open output file: " + path);
  os << std::setprecision(12);
  return os;
}

// Threshold plan for scoring data under a fitted report: report thresholds,
// exceedance counts recomputed on the data at hand.
ThresholdPlan plan_for_data(const FitReport& report,
                            const ClusteredDataset& data) {
  std::unordered_map<std::string, double> omega;
  for (std::size_t k = 0; k < report.cluster_ids.size(); ++k)
    omega[report.cluster_ids[k]] = report.omega[k];
  for (std::size_t j = 0; j < data.n_clusters(); ++j)
    if (omega.find(data.cluster_id(j)) == omega.end())
      throw std::invalid_argument("cluster '" + data.cluster_id(j) +
                                  "' not present in the fit report");
  return effective_counts(data, omega);
}

FitResult fit_from_report(const FitReport& report, const ThresholdPlan& plan) {
  return FitResult{report.params(), report.loglik,
                   report.converged, 0,
                   plan,             QuadratureSpec{},
                   report.boundary_sigma};
}

int cmd_fit(const std::string& input, const std::string& out, int k_min,
            int k_max, const std::string& quad_mode, int nodes,
            bool standardize) {
  const IngestResult ingest = ingest_file(input, standardize, nullptr);
  const QuadratureSpec quad = quad_from_flags(quad_mode, nodes);
  const ThresholdPlan plan =
      select_thresholds(ingest.data, CandidateLadder{k_min, k_max, 1});
  const FitResult fit = fit_mem(ingest.data, plan, quad, OptimizerSpec{});
  const FitReport report = make_report(fit, ingest);
  auto os = open_out(out);
  write_fit_report(os, report);
  std::cout << out << '\n';
  if (!fit.converged) {
    std::cerr << "warning: optimizer did not converge; report written anyway\n";
    return kExitNoConvergence;
  }
  return 0;
}

int cmd_predict(const std::string& fit_path, const std::string& input,
                const std::string& out) {
  const FitReport report = load_report(fit_path);
  const IngestResult ingest = ingest_file(
      input, false, report.scaling_applied ? &report.scaling : nullptr);
  check_schema(report, ingest);
  const ThresholdPlan plan = plan_for_data(report, ingest.data);
  const ExceedanceCache cache(ingest.data, plan);
  const FitResult fit = fit_from_report(report, plan);
  const RandomEffectPredictions preds = predict_u(fit, cache);
  auto os = open_out(out);
  os << "cluster";
  for (int q = 0; q < report.beta_A.size(); ++q) os << ",u_tilde" << (q + 1);
  os << ",inner_converged\n";
  for (std::size_t j = 0; j < preds.size(); ++j) {
    os << preds.ids[j];
    for (int q = 0; q < preds.u_tilde[j].size(); ++q)
      os << ',' << preds.u_tilde[j][q];
    os << ',' << (preds.inner_converged[j] ? 1 : 0) << '\n';
  }
  std::cout << out << '\n';
  return 0;
}

int cmd_test(const std::string& fit_path, const std::string& input,
             const std::string& out) {
  const FitReport report = load_report(fit_path);
  const IngestResult ingest = ingest_file(
      input, false, report.scaling_applied ? &report.scaling : nullptr);
  check_schema(report, ingest);
  const ThresholdPlan plan = plan_for_data(report, ingest.data);
  const FitResult fit = fit_from_report(report, plan);
  const LambdaBEstimate lb = lambda_b_hat(ingest.data, plan);
  auto os = open_out(out);
  os << "k,name,beta,t_stat,p_value\n";
  for (int k = 0; k < report.beta_B.size(); ++k) {
    const WaldResult w = wald_test(fit, lb, plan, k);
    const std::string name = static_cast<std::size_t>(k) < ingest.b_names.size()
                                 ? ingest.b_names[k]
                                 : "b" + std::to_string(k + 1);
    os << (k + 1) << ',' << name << ',' << report.beta_B[k] << ',' << w.t_stat
       << ',' << w.p_value << '\n';
  }
  std::cout << out << '\n';
  return 0;
}

int cmd_gof(const std::string& fit_path, const std::string& input,
            const std::string& out) {
  const FitReport report = load_report(fit_path);
  const IngestResult ingest = ingest_file(
      input, false, report.scaling_applied ? &report.scaling : nullptr);
  check_schema(report, ingest);
  const ThresholdPlan plan = plan_for_data(report, ingest.data);
  const ExceedanceCache cache(ingest.data, plan);
  const FitResult fit = fit_from_report(report, plan);
  const RandomEffectPredictions preds = predict_u(fit, cache);
  const GofResult gof = gof_transform(fit, preds, ingest.data, plan);
  auto os = open_out(out);
  os << "{\n  \"ks_distance\": " << gof.ks_distance
     << ",\n  \"ks_pvalue\": " << gof.ks_pvalue
     << ",\n  \"n\": " << gof.s_sorted.size() << ",\n  \"s_sorted\": [";
  for (std::size_t i = 0; i < gof.s_sorted.size(); ++i)
    os << (i ? "," : "") << gof.s_sorted[i];
  os << "]\n}\n";
  std::cout << out << '\n';
  return 0;
}

int cmd_evi(const std::string& fit_path, const std::string& input,
            const std::string& out) {
  const FitReport report = load_report(fit_path);
  const IngestResult ingest = ingest_file(
      input, false, report.scaling_applied ? &report.scaling : nullptr);
  check_schema(report, ingest);
  const ThresholdPlan plan = plan_for_data(report, ingest.data);
  const ExceedanceCache cache(ingest.data, plan);
  const FitResult fit = fit_from_report(report, plan);
  const RandomEffectPredictions preds = predict_u(fit, cache);
  const ClusterEvi ce = cluster_evi(fit, preds, ingest.data, plan);
  if (ce.omitted > 0)
    std::cerr << "warning: " << ce.omitted
              << " cluster(s) without exceedances omitted\n";
  std::vector<std::size_t> idx(ce.ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (ce.gamma_star[a] != ce.gamma_star[b])
      return ce.gamma_star[a] > ce.gamma_star[b];
    return ce.ids[a] < ce.ids[b];
  });
  auto os = open_out(out);
  os << "cluster,gamma_star\n";
  for (std::size_t i : idx) os << ce.ids[i] << ',' << ce.gamma_star[i] << '\n';
  std::cout << out << '\n';
  return 0;
}

int cmd_compare(const std::string& input, const std::string& out, int k_min,
                int k_max, bool standardize) {
  const IngestResult ingest = ingest_file(input, standardize, nullptr);
  const ModelComparison cmp =
      compare_models(ingest.data, CandidateLadder{k_min, k_max, 1},
                     QuadratureSpec{}, OptimizerSpec{});
  auto os = open_out(out);
  os << "cluster,m1,m2,m3,m4\n";
  auto cell = [](double v) -> std::string {
    if (!std::isfinite(v)) return "";
    std::ostringstream tmp;
    tmp << std::setprecision(12) << v;
    return tmp.str();
  };
  for (std::size_t k = 0; k < cmp.ids.size(); ++k)
    os << cmp.ids[k] << ',' << cell(cmp.evi[0][k]) << ',' << cell(cmp.evi[1][k])
       << ',' << cell(cmp.evi[2][k]) << ',' << cell(cmp.evi[3][k]) << '\n';
  os << "stability," << cell(cmp.stability[0]) << ',' << cell(cmp.stability[1])
     << ',' << cell(cmp.stability[2]) << ',' << cell(cmp.stability[3]) << '\n';
  std::cout << out << '\n';
  if (!cmp.available[0] || !cmp.available[1]) {
    std::cerr << "warning: M1/M2 unavailable: "
              << (cmp.m1_error.empty() ? cmp.m2_error : cmp.m1_error) << '\n';
    return kExitPrecondition;
  }
  return 0;
}

int cmd_simulate(const std::string& config_path, std::string out_prefix) {
  std::ifstream in(config_path);
  if (!in) throw parse_error("cannot open config file: " + config_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto kv = parse_kv_config(buf.str());
  const ExperimentSpec spec = experiment_from_kv(kv);
  if (out_prefix.empty()) {
    const auto it = kv.find("out_prefix");
    if (it != kv.end()) out_prefix = it->second;
  }
  if (out_prefix.empty()) throw parse_error("missing out_prefix");
  if (const auto it = kv.find("threads"); it != kv.end())
    set_max_threads(std::atoi(it->second.c_str()));

  const McSummary summary = run_experiment(spec);
  if (spec.replications == 1)
    std::cerr << "warning: a single replication leaves the variance undefined "
                 "(reported as NaN)\n";
  for (const McCell& cell : summary.cells)
    if (cell.n_excluded > 0)
      std::cerr << "warning: cell (" << cell.J << "," << cell.n_or_t
                << "): " << cell.n_excluded << " non-converged fit(s) excluded\n";

  const std::string summary_path = out_prefix + "_summary.csv";
  {
    auto os = open_out(summary_path);
    write_summary_csv(os, summary, spec);
  }
  for (const McCell& cell : summary.cells) {
    const std::string tag =
        std::to_string(cell.J) + "_" + std::to_string(cell.n_or_t);
    const struct {
      const char* name;
      const std::vector<double>* sample;
    } kinds[] = {{"beta_A", &cell.std_beta_A},
                 {"beta_B", &cell.std_beta_B},
                 {"sigma2", &cell.std_sigma2}};
    for (const auto& kind : kinds) {
      if (kind.sample->size() < 2) continue;
      auto os = open_out(out_prefix + "_qq_" + tag + "_" + kind.name + ".csv");
      write_qq_csv(os, qq_export(*kind.sample));
    }
  }
  std::cout << summary_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-effects extreme value index regression"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker cap (default: EVTMEM_THREADS or hardware)");

  std::string input, out, fit_path, quad_mode = "agh", config;
  int k_min = 10, k_max = 40, nodes = 15;
  bool standardize = false;
  std::uint64_t seed = 1;

  auto* fit = app.add_subcommand("fit", "fit the mixed-effects EVI model");
  fit->add_option("--input", input)->required();
  fit->add_option("--out", out)->required();
  fit->add_option("--k-min", k_min, "threshold ladder lower bound");
  fit->add_option("--k-max", k_max, "threshold ladder upper bound");
  fit->add_option("--quad-mode", quad_mode, "agh | laplace | oracle");
  fit->add_option("--nodes", nodes, "quadrature nodes per dimension");
  fit->add_option("--seed", seed, "reserved; the pipeline is deterministic");
  fit->add_flag("--standardize", standardize,
                "center/scale covariates; factors recorded in the report");

  auto* predict = app.add_subcommand("predict", "random-effect predictions");
  predict->add_option("--fit", fit_path)->required();
  predict->add_option("--input", input)->required();
  predict->add_option("--out", out)->required();

  auto* test = app.add_subcommand("test", "Wald tests of the common slopes");
  test->add_option("--fit", fit_path)->required();
  test->add_option("--input", input)->required();
  test->add_option("--out", out)->required();

  auto* gof = app.add_subcommand("gof", "uniform goodness-of-fit transform");
  gof->add_option("--fit", fit_path)->required();
  gof->add_option("--input", input)->required();
  gof->add_option("--out", out)->required();

  auto* evi = app.add_subcommand("evi", "cluster-wise EVI ranking");
  evi->add_option("--fit", fit_path)->required();
  evi->add_option("--input", input)->required();
  evi->add_option("--out", out)->required();

  auto* compare = app.add_subcommand("compare", "per-cluster EVI under M1-M4");
  compare->add_option("--input", input)->required();
  compare->add_option("--out", out)->required();
  compare->add_option("--k-min", k_min);
  int compare_k_max = 20;
  compare->add_option("--k-max", compare_k_max);
  compare->add_flag("--standardize", standardize);

  std::string out_prefix;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  simulate->add_option("--config", config)->required();
  simulate->add_option("--out-prefix", out_prefix,
                       "overrides out_prefix from the config");

  CLI11_PARSE(app, argc, argv);
  resolve_threads(threads);

  try {
    if (*fit)
      return cmd_fit(input, out, k_min, k_max, quad_mode, nodes, standardize);
    if (*predict) return cmd_predict(fit_path, input, out);
    if (*test) return cmd_test(fit_path, input, out);
    if (*gof) return cmd_gof(fit_path, input, out);
    if (*evi) return cmd_evi(fit_path, input, out);
    if (*compare)
      return cmd_compare(input, out, k_min, compare_k_max, standardize);
    if (*simulate) return cmd_simulate(config, out_prefix);
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitParse;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPrecondition;
  }
  return 0;
}
