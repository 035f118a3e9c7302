#include "evtmem/mc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "evtmem/inference.hpp"
#include "evtmem/parallel.hpp"
#include "evtmem/special.hpp"

namespace evtmem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RepOutcome {
  bool converged = false;
  bool boundary = false;
  double beta_A = 0.0, beta_B = 0.0, sigma2 = 0.0;
  double n_0 = 0.0;
  int J = 0;
};

ParamStats stats_for(const std::vector<double>& est, double truth) {
  ParamStats s;
  const std::size_t n = est.size();
  if (n == 0) {
    s.bias = s.variance = s.mse = kNaN;
    s.variance_defined = false;
    return s;
  }
  double mean = 0.0;
  for (double v : est) mean += v;
  mean /= static_cast<double>(n);
  s.bias = mean - truth;
  double var = 0.0, mse = 0.0;
  for (double v : est) {
    var += (v - mean) * (v - mean);
    mse += (v - truth) * (v - truth);
  }
  s.mse = mse / static_cast<double>(n);
  if (n >= 2) {
    s.variance = var / static_cast<double>(n);
  } else {
    s.variance = kNaN;
    s.variance_defined = false;
  }
  return s;
}

std::string family_name(const TailFamily& f) {
  switch (f.kind) {
    case TailKind::Pareto:
      return "pareto";
    case TailKind::StudentT:
      return "student_t";
    case TailKind::Burr:
      return "burr";
  }
  return "?";
}

}  // namespace

MemParams ExperimentSpec::truth() const {
  return MemParams(VectorXd::Constant(1, beta_A0), beta_B0,
                   MatrixXd::Constant(1, 1, sigma0_sq));
}

ClusteredDataset generate_dataset(const ExperimentSpec& spec, int J,
                                  int n_per_cluster, int replication) {
  ClusteredDataset data(1, static_cast<int>(spec.beta_B0.size()));
  const MemParams truth = spec.truth();
  const double sigma0 = std::sqrt(spec.sigma0_sq);
  for (int c = 0; c < J; ++c) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(replication),
            static_cast<std::uint64_t>(c));
    VectorXd u(1);
    u[0] = sigma0 == 0.0 ? 0.0 : sigma0 * norm_quantile(rng.uniform_open());
    const auto obs = sample_cluster(spec.family, truth, u, spec.covariate_gen,
                                    n_per_cluster, rng);
    std::ostringstream id;
    id << "c" << (c + 1);
    for (const Observation& o : obs) data.append(id.str(), o);
  }
  return data;
}

McSummary run_experiment(const ExperimentSpec& spec) {
  if (spec.replications < 1)
    throw std::invalid_argument("run_experiment: replications must be >= 1");
  if (spec.cells.empty())
    throw std::invalid_argument("run_experiment: empty cell grid");
  if (spec.thresholding == ThresholdingMode::FixedUnit &&
      spec.family.kind != TailKind::Pareto)
    throw std::invalid_argument(
        "run_experiment: fixed unit thresholds require the Pareto design");
  if (!(spec.sigma0_sq > 0.0))
    throw std::invalid_argument("run_experiment: sigma0_sq must be positive");
  for (const auto& [J, x] : spec.cells) {
    if (J < 2 || x < 1)
      throw std::invalid_argument("run_experiment: bad cell in grid");
    if (spec.thresholding == ThresholdingMode::Ladder &&
        (x < spec.k_min || x > spec.n_j - 1))
      throw std::invalid_argument("run_experiment: T outside [k_min, n_j-1]");
  }

  int max_j = 0;
  for (const auto& [J, x] : spec.cells) max_j = std::max(max_j, J);

  const std::size_t R = static_cast<std::size_t>(spec.replications);
  const std::size_t C = spec.cells.size();
  std::vector<RepOutcome> outcomes(R * C);

  parallel_for(R, [&](std::size_t r) {
    ClusteredDataset master(1, 1);
    bool have_master = false;
    if (spec.thresholding == ThresholdingMode::Ladder) {
      master = generate_dataset(spec, max_j, spec.n_j, static_cast<int>(r));
      have_master = true;
    }
    for (std::size_t cidx = 0; cidx < C; ++cidx) {
      const auto [J, x] = spec.cells[cidx];
      RepOutcome& out = outcomes[r * C + cidx];
      out.J = J;
      try {
        ClusteredDataset data =
            have_master ? master.subset_clusters(J)
                        : generate_dataset(spec, J, x, static_cast<int>(r));
        ThresholdPlan plan =
            spec.thresholding == ThresholdingMode::Ladder
                ? select_thresholds(data, CandidateLadder{spec.k_min, x, 1})
                : effective_counts(data, 1.0);
        const FitResult fit = fit_mem(data, plan, spec.quad, spec.opt);
        out.converged = fit.converged;
        out.boundary = fit.boundary_sigma;
        out.beta_A = fit.params.beta_A()[0];
        out.beta_B = fit.params.p_B() > 0 ? fit.params.beta_B()[0] : 0.0;
        out.sigma2 = fit.params.sigma()(0, 0);
        out.n_0 = plan.n_0();
      } catch (const std::exception&) {
        out.converged = false;
      }
    }
  });

  McSummary summary;
  summary.replications = spec.replications;
  const double sigma0 = std::sqrt(spec.sigma0_sq);
  const bool has_b = spec.beta_B0.size() > 0;
  for (std::size_t cidx = 0; cidx < C; ++cidx) {
    McCell cell;
    cell.J = spec.cells[cidx].first;
    cell.n_or_t = spec.cells[cidx].second;
    double n0_sum = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      const RepOutcome& out = outcomes[r * C + cidx];
      if (!out.converged) {
        ++cell.n_excluded;
        continue;
      }
      ++cell.n_converged;
      if (out.boundary) ++cell.boundary_count;
      n0_sum += out.n_0;
      cell.est_beta_A.push_back(out.beta_A);
      if (has_b) cell.est_beta_B.push_back(out.beta_B);
      cell.est_sigma2.push_back(out.sigma2);
      const double sqrt_j = std::sqrt(static_cast<double>(out.J));
      cell.std_beta_A.push_back(sqrt_j * (out.beta_A - spec.beta_A0) / sigma0);
      if (has_b)
        cell.std_beta_B.push_back(std::sqrt(out.J * out.n_0) *
                                  (out.beta_B - spec.beta_B0[0]));
      cell.std_sigma2.push_back(sqrt_j * (out.sigma2 - spec.sigma0_sq) /
                                (M_SQRT2 * spec.sigma0_sq));
    }
    cell.mean_n0 = cell.n_converged > 0 ? n0_sum / cell.n_converged : kNaN;
    cell.beta_A = stats_for(cell.est_beta_A, spec.beta_A0);
    cell.beta_B = has_b ? stats_for(cell.est_beta_B, spec.beta_B0[0])
                        : ParamStats{kNaN, kNaN, kNaN, false};
    cell.sigma2 = stats_for(cell.est_sigma2, spec.sigma0_sq);
    cell.ks_beta_A =
        cell.std_beta_A.empty() ? kNaN : ks_distance_normal(cell.std_beta_A);
    cell.ks_beta_B =
        cell.std_beta_B.empty() ? kNaN : ks_distance_normal(cell.std_beta_B);
    cell.ks_sigma2 =
        cell.std_sigma2.empty() ? kNaN : ks_distance_normal(cell.std_sigma2);
    summary.cells.push_back(std::move(cell));
  }
  return summary;
}

std::vector<std::pair<double, double>> qq_export(std::vector<double> sample) {
  const std::size_t n = sample.size();
  if (n < 2) throw std::invalid_argument("qq_export: need at least 2 values");
  std::sort(sample.begin(), sample.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r)
    out.emplace_back(norm_quantile((static_cast<double>(r) + 0.5) / n),
                     sample[r]);
  return out;
}

std::map<std::string, std::string> parse_kv_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw parse_error("config line " + std::to_string(lineno) +
                        ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw parse_error("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw parse_error("config: bad numeric value for '" + key + "': " + v);
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw parse_error("config: bad integer value for '" + key + "': " + v);
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace

ExperimentSpec experiment_from_kv(
    const std::map<std::string, std::string>& kv) {
  ExperimentSpec spec;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };

  if (const auto* v = get("family")) {
    if (*v == "pareto")
      spec.family = TailFamily::pareto();
    else if (*v == "student_t")
      spec.family = TailFamily::student_t();
    else if (*v == "burr")
      spec.family = TailFamily::burr();
    else
      throw parse_error("config: unknown family '" + *v + "'");
  }
  if (const auto* v = get("eta")) spec.family.eta = to_double("eta", *v);
  if (const auto* v = get("lambda"))
    spec.family.lambda = to_double("lambda", *v);
  if (spec.family.kind == TailKind::Burr &&
      (!(spec.family.eta > 0.0) || !(spec.family.lambda > 0.0)))
    throw parse_error("config: eta and lambda must be positive");

  if (const auto* v = get("covariates")) {
    if (*v == "normal")
      spec.covariate_gen = CovariateGen::Normal01;
    else if (*v == "uniform")
      spec.covariate_gen = CovariateGen::UniformSqrt3;
    else
      throw parse_error("config: unknown covariate generator '" + *v + "'");
  }
  if (const auto* v = get("beta_a")) spec.beta_A0 = to_double("beta_a", *v);
  if (const auto* v = get("beta_b")) {
    if (v->empty()) {
      spec.beta_B0 = VectorXd(0);
    } else {
      const auto toks = split_list(*v);
      spec.beta_B0 = VectorXd(static_cast<int>(toks.size()));
      for (std::size_t i = 0; i < toks.size(); ++i)
        spec.beta_B0[static_cast<int>(i)] = to_double("beta_b", toks[i]);
    }
  }
  if (const auto* v = get("sigma2")) spec.sigma0_sq = to_double("sigma2", *v);
  if (const auto* v = get("thresholding")) {
    if (*v == "fixed")
      spec.thresholding = ThresholdingMode::FixedUnit;
    else if (*v == "ladder")
      spec.thresholding = ThresholdingMode::Ladder;
    else
      throw parse_error("config: unknown thresholding '" + *v + "'");
  }
  if (const auto* v = get("cells")) {
    spec.cells.clear();
    for (const std::string& tok : split_list(*v)) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw parse_error("config: cells entries must look like J:N ('" + tok +
                          "')");
      spec.cells.emplace_back(
          static_cast<int>(to_long("cells", tok.substr(0, colon))),
          static_cast<int>(to_long("cells", tok.substr(colon + 1))));
    }
  }
  if (spec.cells.empty()) throw parse_error("config: missing cells=J:N,...");
  if (const auto* v = get("n_j"))
    spec.n_j = static_cast<int>(to_long("n_j", *v));
  if (const auto* v = get("k_min"))
    spec.k_min = static_cast<int>(to_long("k_min", *v));
  if (const auto* v = get("replications"))
    spec.replications = static_cast<int>(to_long("replications", *v));
  if (const auto* v = get("seed"))
    spec.seed = static_cast<std::uint64_t>(to_long("seed", *v));
  if (const auto* v = get("nodes"))
    spec.quad.nodes_per_dim = static_cast<int>(to_long("nodes", *v));
  return spec;
}

void write_summary_csv(std::ostream& os, const McSummary& summary,
                       const ExperimentSpec& spec) {
  os << std::setprecision(12);
  os << "design,J,T,parameter,statistic,value\n";
  const std::string design = family_name(spec.family);
  auto row = [&](const McCell& c, const char* param, const char* stat,
                 double value) {
    os << design << ',' << c.J << ',' << c.n_or_t << ',' << param << ','
       << stat << ',' << value << '\n';
  };
  for (const McCell& c : summary.cells) {
    struct {
      const char* name;
      const ParamStats* s;
      double ks;
    } params[] = {{"beta_A", &c.beta_A, c.ks_beta_A},
                  {"beta_B", &c.beta_B, c.ks_beta_B},
                  {"sigma2", &c.sigma2, c.ks_sigma2}};
    for (const auto& p : params) {
      row(c, p.name, "bias", p.s->bias);
      row(c, p.name, "bias_sq", p.s->bias * p.s->bias);
      row(c, p.name, "variance", p.s->variance);
      row(c, p.name, "mse", p.s->mse);
      row(c, p.name, "ks_standardized", p.ks);
    }
    row(c, "sigma2", "boundary_count", c.boundary_count);
    row(c, "all", "converged", c.n_converged);
    row(c, "all", "excluded", c.n_excluded);
    row(c, "all", "mean_n0", c.mean_n0);
  }
}

void write_qq_csv(std::ostream& os,
                  const std::vector<std::pair<double, double>>& pairs) {
  os << std::setprecision(12);
  os << "theoretical,empirical\n";
  for (const auto& [t, e] : pairs) os << t << ',' << e << '\n';
}

}  // namespace evtmem
