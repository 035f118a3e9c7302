#include "evtmem/io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace evtmem {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  const std::string t = strip(s);
  if (t.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(t, &pos);
    return pos == t.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

IngestResult ingest_csv(std::istream& in, bool standardize,
                        const std::map<std::string, ColumnScaling>* reuse_scaling) {
  std::string header;
  if (!std::getline(in, header))
    throw parse_error("input: empty file (no header)");
  header = strip(header);
  const auto cols = split_csv_line(header);
  if (cols.size() < 2 || strip(cols[0]) != "cluster" || strip(cols[1]) != "y")
    throw parse_error("input: header must start with 'cluster,y'");

  std::vector<int> role;  // 0 = A, 1 = B, by column position after y
  std::vector<std::string> a_names, b_names;
  std::string schema = "cluster,y";
  for (std::size_t c = 2; c < cols.size(); ++c) {
    const std::string col = strip(cols[c]);
    if (col.rfind("roleA:", 0) == 0) {
      role.push_back(0);
      a_names.push_back(col.substr(6));
    } else if (col.rfind("roleB:", 0) == 0) {
      role.push_back(1);
      b_names.push_back(col.substr(6));
    } else {
      throw parse_error("input: column '" + col +
                        "' must be tagged roleA: or roleB:");
    }
    schema += "," + col;
  }
  const bool implicit_intercept = a_names.empty();
  const int p_A = implicit_intercept ? 1 : static_cast<int>(a_names.size());
  const int p_B = static_cast<int>(b_names.size());

  struct Row {
    std::string cluster;
    double y;
    std::vector<double> cov;  // declared columns in header order
  };
  std::vector<Row> rows;
  std::vector<std::size_t> rejected;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != cols.size()) {
      rejected.push_back(lineno);
      continue;
    }
    Row row;
    row.cluster = strip(fields[0]);
    bool ok = !row.cluster.empty() && parse_number(fields[1], row.y) &&
              row.y > 0.0;
    row.cov.resize(role.size());
    for (std::size_t c = 2; ok && c < fields.size(); ++c)
      ok = parse_number(fields[c], row.cov[c - 2]);
    if (!ok) {
      rejected.push_back(lineno);
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw parse_error("input: no usable data rows");

  // Column scaling: fitted factors on this data, or reuse of stored ones.
  std::map<std::string, ColumnScaling> scaling;
  const auto col_name = [&](std::size_t c) {
    return role[c] == 0 ? a_names[std::count(role.begin(), role.begin() + c, 0)]
                        : b_names[std::count(role.begin(), role.begin() + c, 1)];
  };
  bool applied = false;
  if (reuse_scaling != nullptr && !reuse_scaling->empty()) {
    applied = true;
    for (std::size_t c = 0; c < role.size(); ++c) {
      const auto it = reuse_scaling->find(col_name(c));
      const ColumnScaling cs =
          it == reuse_scaling->end() ? ColumnScaling{} : it->second;
      scaling[col_name(c)] = cs;
      for (auto& row : rows) row.cov[c] = (row.cov[c] - cs.mean) / cs.sd;
    }
  } else if (standardize) {
    applied = true;
    const double n = static_cast<double>(rows.size());
    for (std::size_t c = 0; c < role.size(); ++c) {
      double mean = 0.0;
      for (const auto& row : rows) mean += row.cov[c];
      mean /= n;
      double ss = 0.0;
      for (const auto& row : rows)
        ss += (row.cov[c] - mean) * (row.cov[c] - mean);
      const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      ColumnScaling cs;
      if (sd > 0.0) {
        cs.mean = mean;
        cs.sd = sd;
        for (auto& row : rows) row.cov[c] = (row.cov[c] - cs.mean) / cs.sd;
      }
      scaling[col_name(c)] = cs;
    }
  }

  ClusteredDataset data(p_A, p_B);
  VectorXd x_A(p_A), x_B(p_B);
  for (const auto& row : rows) {
    int ia = 0, ib = 0;
    if (implicit_intercept) x_A[0] = 1.0;
    for (std::size_t c = 0; c < role.size(); ++c) {
      if (role[c] == 0)
        x_A[ia++] = row.cov[c];
      else
        x_B[ib++] = row.cov[c];
    }
    data.append(row.cluster, Observation(row.y, x_A, x_B));
  }

  IngestResult out{std::move(data),
                   std::move(a_names),
                   std::move(b_names),
                   implicit_intercept,
                   std::move(rejected),
                   schema,
                   fnv1a64(schema),
                   applied,
                   std::move(scaling)};
  return out;
}

namespace {

nlohmann::json to_json_vector(const VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json to_json_matrix(const MatrixXd& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    arr.push_back(row);
  }
  return arr;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace

FitReport make_report(const FitResult& fit, const IngestResult& ingest) {
  FitReport r;
  r.beta_A = fit.params.beta_A();
  r.beta_B = fit.params.beta_B();
  r.sigma = fit.params.sigma();
  r.loglik = fit.loglik;
  const ThresholdPlan& plan = fit.threshold_plan;
  for (std::size_t j = 0; j < plan.n_clusters(); ++j) {
    r.cluster_ids.push_back(plan.cluster_id(j));
    r.omega.push_back(plan.omega(j));
    r.n_j0.push_back(plan.n_j0(j));
  }
  r.n_0 = plan.n_0();
  r.converged = fit.converged;
  r.boundary_sigma = fit.boundary_sigma;
  r.schema_hash = ingest.schema_hash;
  r.scaling_applied = ingest.scaling_applied;
  r.scaling = ingest.scaling;
  return r;
}

void write_fit_report(std::ostream& os, const FitReport& r) {
  nlohmann::json j;
  j["params"] = {{"beta_A", to_json_vector(r.beta_A)},
                 {"beta_B", to_json_vector(r.beta_B)}};
  j["sigma"] = to_json_matrix(r.sigma);
  j["loglik"] = r.loglik;
  nlohmann::json thr = nlohmann::json::object();
  nlohmann::json nj0 = nlohmann::json::object();
  for (std::size_t k = 0; k < r.cluster_ids.size(); ++k) {
    thr[r.cluster_ids[k]] = r.omega[k];
    nj0[r.cluster_ids[k]] = r.n_j0[k];
  }
  j["thresholds"] = std::move(thr);
  j["n_j0"] = std::move(nj0);
  j["n_0"] = r.n_0;
  j["converged"] = r.converged;
  j["boundary_sigma"] = r.boundary_sigma;
  j["schema_hash"] = hash_hex(r.schema_hash);
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& [name, cs] : r.scaling)
    cols[name] = {{"mean", cs.mean}, {"sd", cs.sd}};
  j["scaling"] = {{"applied", r.scaling_applied}, {"columns", std::move(cols)}};
  os << j.dump(2) << '\n';
}

FitReport read_fit_report(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("fit report: ") + e.what());
  }
  try {
    FitReport r;
    const auto& ba = j.at("params").at("beta_A");
    const auto& bb = j.at("params").at("beta_B");
    r.beta_A = VectorXd(ba.size());
    for (std::size_t i = 0; i < ba.size(); ++i)
      r.beta_A[static_cast<int>(i)] = ba[i].get<double>();
    r.beta_B = VectorXd(bb.size());
    for (std::size_t i = 0; i < bb.size(); ++i)
      r.beta_B[static_cast<int>(i)] = bb[i].get<double>();
    const auto& sg = j.at("sigma");
    const int p = static_cast<int>(sg.size());
    r.sigma = MatrixXd(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) r.sigma(a, b) = sg[a][b].get<double>();
    r.loglik = j.at("loglik").get<double>();
    // Cluster order in the report object is alphabetical (json sorts keys);
    // plans are order-insensitive maps downstream, so that is acceptable.
    for (const auto& [id, w] : j.at("thresholds").items()) {
      r.cluster_ids.push_back(id);
      r.omega.push_back(w.get<double>());
      r.n_j0.push_back(j.at("n_j0").at(id).get<int>());
    }
    r.n_0 = j.at("n_0").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.boundary_sigma = j.at("boundary_sigma").get<bool>();
    r.schema_hash =
        std::stoull(j.at("schema_hash").get<std::string>(), nullptr, 16);
    r.scaling_applied = j.at("scaling").at("applied").get<bool>();
    for (const auto& [name, cs] : j.at("scaling").at("columns").items())
      r.scaling[name] = {cs.at("mean").get<double>(), cs.at("sd").get<double>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("fit report: ") + e.what());
  }
}

}  // namespace evtmem
