#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "evtmem/threshold.hpp"
#include "helpers.hpp"

using namespace evtmem;
using namespace evtmem_test;

namespace {

ClusteredDataset cluster_of(const std::vector<double>& y) {
  ClusteredDataset data(1, 0);
  for (double v : y) data.append("a", Observation(v, vec1(1.0), VectorXd(0)));
  return data;
}

std::vector<double> family_cluster(const TailFamily& fam, double gamma, int n,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform_open();
    if (fam.kind == TailKind::StudentT) u = 0.5 + 0.5 * u;
    y[i] = tail_quantile(fam, gamma, u);
  }
  return y;
}

int selected_k(const std::vector<double>& y, const CandidateLadder& lad) {
  const ClusteredDataset data = cluster_of(y);
  return select_thresholds(data, lad).n_j0(0);
}

}  // namespace

TEST_CASE("select_thresholds basics") {
  Rng rng(211);
  std::vector<double> y(100);
  for (auto& v : y) v = tail_quantile(TailFamily::pareto(), 0.8, rng.uniform_open());

  SUBCASE("single candidate is returned") {
    CandidateLadder lad{12, 12, 1};
    CHECK(selected_k(y, lad) == 12);
  }
  SUBCASE("plan counts equal the selected k") {
    const ClusteredDataset data = cluster_of(y);
    const ThresholdPlan plan = select_thresholds(data, CandidateLadder{5, 40, 1});
    const ThresholdPlan recount = effective_counts(
        data, std::unordered_map<std::string, double>{{"a", plan.omega(0)}});
    CHECK(recount.n_j0(0) == plan.n_j0(0));
  }
  SUBCASE("deterministic") {
    const ClusteredDataset data = cluster_of(y);
    const ThresholdPlan p1 = select_thresholds(data, CandidateLadder{5, 40, 1});
    const ThresholdPlan p2 = select_thresholds(data, CandidateLadder{5, 40, 1});
    CHECK(p1.omega(0) == p2.omega(0));
    CHECK(p1.n_j0(0) == p2.n_j0(0));
  }
  SUBCASE("scale invariance") {
    CandidateLadder lad{5, 40, 1};
    std::vector<double> scaled(y);
    for (auto& v : scaled) v *= 1024.0;  // exact in floating point
    CHECK(selected_k(y, lad) == selected_k(scaled, lad));
  }
  SUBCASE("ladder truncates in short clusters") {
    std::vector<double> small(y.begin(), y.begin() + 15);
    CandidateLadder lad{10, 200, 1};
    CHECK(selected_k(small, lad) <= 14);
  }
  SUBCASE("tied responses are degenerate") {
    ClusteredDataset data = cluster_of(std::vector<double>(30, 5.0));
    CHECK_THROWS_AS(select_thresholds(data, CandidateLadder{5, 10, 1}),
                    std::runtime_error);
  }
  SUBCASE("ladder validation") {
    const ClusteredDataset data = cluster_of(y);
    CHECK_THROWS_AS(select_thresholds(data, CandidateLadder{1, 10, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(select_thresholds(data, CandidateLadder{10, 5, 1}),
                    std::invalid_argument);
  }
}

TEST_CASE("discrepancy statistic") {
  // Perfectly spaced uniform sample attains the 1/(12k^2) floor.
  std::vector<double> s(20);
  for (int r = 0; r < 20; ++r) s[r] = (r + 0.5) / 20.0;
  CHECK(cvm_discrepancy(s) == doctest::Approx(1.0 / (12.0 * 400.0)).epsilon(1e-12));
  std::vector<double> bad(20, 0.99);
  CHECK(cvm_discrepancy(bad) > cvm_discrepancy(s));
}

TEST_CASE("selection behaviour across tail families") {
  // Exact Pareto has no approximation bias, so the variance term pushes the
  // selection toward large k; a heavy second-order Burr term pulls it down.
  const CandidateLadder lad{10, 200, 1};
  const double gamma = std::exp(0.25);  // Burr alpha = 1/gamma ~ 0.78
  std::vector<int> k_pareto, k_burr;
  for (int c = 0; c < 200; ++c) {
    k_pareto.push_back(
        selected_k(family_cluster(TailFamily::pareto(), gamma, 1000, 300 + c), lad));
    k_burr.push_back(
        selected_k(family_cluster(TailFamily::burr(), gamma, 1000, 900 + c), lad));
  }
  auto median = [](std::vector<int> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  const int mp = median(k_pareto), mb = median(k_burr);
  MESSAGE("median selected k: pareto=", mp, " burr=", mb);
  CHECK(mp >= 100);  // at least half of k_max = 200
  CHECK(mb < mp);
}
