#include "evtmem/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

#include "evtmem/parallel.hpp"

namespace evtmem {

namespace {
std::atomic<int> g_max_threads{0};

bool all_finite(const VectorXd& v) { return v.allFinite(); }
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  const int n = g_max_threads.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Observation::Observation(double y_, VectorXd xA, VectorXd xB)
    : y(y_), x_A(std::move(xA)), x_B(std::move(xB)) {
  if (!(y > 0.0) || !std::isfinite(y))
    throw std::invalid_argument("Observation: response must be positive");
  if (!all_finite(x_A) || !all_finite(x_B))
    throw std::invalid_argument("Observation: non-finite covariate");
}

ClusteredDataset::ClusteredDataset(int p_A, int p_B) : p_A_(p_A), p_B_(p_B) {
  if (p_A < 1) throw std::invalid_argument("ClusteredDataset: p_A must be >= 1");
  if (p_B < 0) throw std::invalid_argument("ClusteredDataset: p_B must be >= 0");
}

void ClusteredDataset::append(const std::string& cluster_id,
                              const Observation& obs) {
  if (obs.x_A.size() != p_A_ || obs.x_B.size() != p_B_)
    throw std::invalid_argument("ClusteredDataset: covariate dimension mismatch");
  auto it = index_.find(cluster_id);
  std::size_t j;
  if (it == index_.end()) {
    j = ids_.size();
    index_.emplace(cluster_id, j);
    ids_.push_back(cluster_id);
    y_.emplace_back();
    xA_.emplace_back();
    xB_.emplace_back();
  } else {
    j = it->second;
  }
  y_[j].push_back(obs.y);
  xA_[j].insert(xA_[j].end(), obs.x_A.data(), obs.x_A.data() + p_A_);
  xB_[j].insert(xB_[j].end(), obs.x_B.data(), obs.x_B.data() + p_B_);
}

std::size_t ClusteredDataset::total_observations() const {
  std::size_t n = 0;
  for (const auto& v : y_) n += v.size();
  return n;
}

Eigen::Map<const VectorXd> ClusteredDataset::x_A(std::size_t j,
                                                 std::size_t i) const {
  return {xA_[j].data() + i * p_A_, p_A_};
}

Eigen::Map<const VectorXd> ClusteredDataset::x_B(std::size_t j,
                                                 std::size_t i) const {
  return {xB_[j].data() + i * p_B_, p_B_};
}

std::size_t ClusteredDataset::cluster_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw std::invalid_argument("ClusteredDataset: unknown cluster '" + id + "'");
  return it->second;
}

ClusteredDataset ClusteredDataset::subset_clusters(std::size_t J) const {
  if (J == 0 || J > ids_.size())
    throw std::invalid_argument("subset_clusters: J out of range");
  ClusteredDataset out(p_A_, p_B_);
  for (std::size_t j = 0; j < J; ++j) {
    out.index_.emplace(ids_[j], j);
    out.ids_.push_back(ids_[j]);
    out.y_.push_back(y_[j]);
    out.xA_.push_back(xA_[j]);
    out.xB_.push_back(xB_[j]);
  }
  return out;
}

std::pair<ClusteredDataset, ClusteredDataset> ClusteredDataset::split_half()
    const {
  ClusteredDataset first(p_A_, p_B_), second(p_A_, p_B_);
  for (std::size_t j = 0; j < ids_.size(); ++j) {
    const std::size_t n = y_[j].size();
    const std::size_t cut = (n + 1) / 2;
    auto copy_rows = [&](ClusteredDataset& dst, std::size_t lo, std::size_t hi) {
      if (lo >= hi) return;
      const std::size_t k = dst.ids_.size();
      dst.index_.emplace(ids_[j], k);
      dst.ids_.push_back(ids_[j]);
      dst.y_.emplace_back(y_[j].begin() + lo, y_[j].begin() + hi);
      dst.xA_.emplace_back(xA_[j].begin() + lo * p_A_, xA_[j].begin() + hi * p_A_);
      dst.xB_.emplace_back(xB_[j].begin() + lo * p_B_, xB_[j].begin() + hi * p_B_);
    };
    copy_rows(first, 0, cut);
    copy_rows(second, cut, n);
  }
  return {std::move(first), std::move(second)};
}

namespace {
// Lower-triangular factor of a symmetric PSD matrix. Exact zero maps to the
// zero factor; the semidefinite case falls back to a jittered Cholesky whose
// reconstruction error stays below the 1e-12 relative contract.
MatrixXd psd_lower_factor(const MatrixXd& a) {
  const int d = static_cast<int>(a.rows());
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("MemParams: sigma must be symmetric");
  if (a.cwiseAbs().maxCoeff() == 0.0) return MatrixXd::Zero(d, d);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("MemParams: sigma must be positive semi-definite");

  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) {
    MatrixXd L = llt.matrixL();
    if ((L * L.transpose() - a).cwiseAbs().maxCoeff() <= 1e-12 * scale) return L;
  }
  const double jitter = 1e-13 * a.trace() / d + 1e-300;
  Eigen::LLT<MatrixXd> llt2(a + jitter * MatrixXd::Identity(d, d));
  if (llt2.info() != Eigen::Success)
    throw std::invalid_argument("MemParams: sigma factorization failed");
  return llt2.matrixL();
}
}  // namespace

MemParams::MemParams(VectorXd beta_A, VectorXd beta_B, const MatrixXd& sigma)
    : beta_A_(std::move(beta_A)), beta_B_(std::move(beta_B)) {
  if (beta_A_.size() < 1)
    throw std::invalid_argument("MemParams: p_A must be >= 1");
  if (sigma.rows() != beta_A_.size() || sigma.cols() != beta_A_.size())
    throw std::invalid_argument("MemParams: sigma must be p_A x p_A");
  factor_ = psd_lower_factor(sigma);
}

MemParams MemParams::from_factor(VectorXd beta_A, VectorXd beta_B,
                                 MatrixXd lower_factor) {
  if (lower_factor.rows() != beta_A.size() ||
      lower_factor.cols() != beta_A.size())
    throw std::invalid_argument("MemParams: factor must be p_A x p_A");
  for (int i = 0; i < lower_factor.rows(); ++i)
    for (int j = i + 1; j < lower_factor.cols(); ++j)
      if (lower_factor(i, j) != 0.0)
        throw std::invalid_argument("MemParams: factor must be lower triangular");
  MemParams p;
  p.beta_A_ = std::move(beta_A);
  p.beta_B_ = std::move(beta_B);
  p.factor_ = std::move(lower_factor);
  return p;
}

bool MemParams::sigma_is_zero() const {
  return factor_.cwiseAbs().maxCoeff() == 0.0;
}

ThresholdPlan::ThresholdPlan(std::vector<std::string> ids,
                             std::vector<double> omega, std::vector<int> n_j0)
    : ids_(std::move(ids)), omega_(std::move(omega)), n_j0_(std::move(n_j0)) {
  if (ids_.empty() || omega_.size() != ids_.size() || n_j0_.size() != ids_.size())
    throw std::invalid_argument("ThresholdPlan: inconsistent sizes");
  double total = 0.0;
  for (std::size_t j = 0; j < ids_.size(); ++j) {
    if (!(omega_[j] > 0.0))
      throw std::invalid_argument("ThresholdPlan: thresholds must be positive");
    if (n_j0_[j] < 0)
      throw std::invalid_argument("ThresholdPlan: negative exceedance count");
    index_.emplace(ids_[j], j);
    total += n_j0_[j];
  }
  n_0_ = total / static_cast<double>(ids_.size());
}

double ThresholdPlan::omega_for(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw std::invalid_argument("ThresholdPlan: unknown cluster '" + id + "'");
  return omega_[it->second];
}

double log_evi(const MemParams& params, const VectorXd& u, const VectorXd& x_A,
               const VectorXd& x_B) {
  if (u.size() != params.p_A() || x_A.size() != params.p_A() ||
      x_B.size() != params.p_B())
    throw std::invalid_argument("evi: dimension mismatch");
  return (params.beta_A() + u).dot(x_A) + params.beta_B().dot(x_B);
}

double evi(const MemParams& params, const VectorXd& u, const VectorXd& x_A,
           const VectorXd& x_B) {
  return std::exp(log_evi(params, u, x_A, x_B));
}

VectorXd vech(const MatrixXd& a) {
  const int d = static_cast<int>(a.rows());
  if (a.cols() != d) throw std::invalid_argument("vech: matrix must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("vech: matrix must be symmetric");
  VectorXd v(d * (d + 1) / 2);
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) v[k++] = a(i, j);
  return v;
}

MatrixXd unvech(const VectorXd& v, int d) {
  if (v.size() != d * (d + 1) / 2)
    throw std::invalid_argument("unvech: incompatible length");
  MatrixXd a(d, d);
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      a(i, j) = v[k];
      a(j, i) = v[k];
      ++k;
    }
  return a;
}

DuplicationMaps duplication_maps(int p_A) {
  if (p_A < 1) throw std::invalid_argument("duplication_maps: p_A must be >= 1");
  const int p2 = p_A * p_A;
  const int p_C = p_A * (p_A + 1) / 2;
  MatrixXd m = MatrixXd::Zero(p2, p_C);
  int k = 0;
  for (int j = 0; j < p_A; ++j)
    for (int i = j; i < p_A; ++i) {
      // vec is column-major: entry (i,j) sits at row j*p_A + i.
      m(j * p_A + i, k) = 1.0;
      if (i != j) m(i * p_A + j, k) = 1.0;
      ++k;
    }
  // m^T m is diagonal with entries 1 (diagonal positions) or 2, so the
  // Moore-Penrose inverse is exact in floating point.
  VectorXd diag = (m.transpose() * m).diagonal();
  MatrixXd m_star = diag.cwiseInverse().asDiagonal() * m.transpose();
  return {std::move(m), std::move(m_star)};
}

namespace {
ThresholdPlan build_plan(const ClusteredDataset& data,
                         const std::function<double(const std::string&)>& omega_of) {
  std::vector<std::string> ids;
  std::vector<double> omega;
  std::vector<int> counts;
  ids.reserve(data.n_clusters());
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const std::string& id = data.cluster_id(j);
    const double w = omega_of(id);
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("effective_counts: threshold for cluster '" +
                                  id + "' must be positive");
    int c = 0;
    for (std::size_t i = 0; i < data.cluster_size(j); ++i)
      if (data.y(j, i) > w) ++c;
    ids.push_back(id);
    omega.push_back(w);
    counts.push_back(c);
  }
  return ThresholdPlan(std::move(ids), std::move(omega), std::move(counts));
}
}  // namespace

ThresholdPlan effective_counts(
    const ClusteredDataset& data,
    const std::unordered_map<std::string, double>& omega) {
  return build_plan(data, [&](const std::string& id) {
    auto it = omega.find(id);
    if (it == omega.end())
      throw std::invalid_argument("effective_counts: missing threshold for '" +
                                  id + "'");
    return it->second;
  });
}

ThresholdPlan effective_counts(const ClusteredDataset& data, double omega) {
  return build_plan(data, [&](const std::string&) { return omega; });
}

}  // namespace evtmem
