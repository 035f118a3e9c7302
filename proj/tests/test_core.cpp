#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evtmem/core.hpp"
#include "evtmem/rng.hpp"

using namespace evtmem;

namespace {
VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}
}  // namespace

TEST_CASE("evi link function") {
  SUBCASE("zero coefficients give 1") {
    MemParams p(vec({0.0}), vec({0.0, 0.0}), MatrixXd::Identity(1, 1));
    CHECK(evi(p, vec({0.0}), vec({2.5}), vec({1.0, -3.0})) == 1.0);
  }
  SUBCASE("simulation-design coefficients") {
    MemParams p(vec({-0.5}), vec({0.2}), MatrixXd::Identity(1, 1));
    CHECK(evi(p, vec({0.0}), vec({1.0}), vec({0.0})) ==
          doctest::Approx(0.6065).epsilon(1e-4));
    CHECK(evi(p, vec({0.0}), vec({1.0}), vec({0.0})) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  }
  SUBCASE("rainfall-fit composition") {
    MemParams p(vec({-1.5337}), vec({0.1569, 0.0664}),
                MatrixXd::Identity(1, 1));
    const double g = evi(p, vec({0.1}), vec({1.0}), vec({1.0, 1.0}));
    CHECK(g == doctest::Approx(0.2981).epsilon(2e-4));
    CHECK(g == doctest::Approx(std::exp(-1.2104)).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch") {
    MemParams p(vec({0.0}), vec({0.0}), MatrixXd::Identity(1, 1));
    CHECK_THROWS_AS(evi(p, vec({0.0, 0.0}), vec({1.0}), vec({0.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(evi(p, vec({0.0}), vec({1.0, 2.0}), vec({0.0})),
                    std::invalid_argument);
  }
  SUBCASE("only beta_A + u enters") {
    // Dyadic shift keeps the sums bit-exact.
    MemParams p1(vec({0.5}), vec({0.2}), MatrixXd::Identity(1, 1));
    MemParams p2(vec({0.5 - 0.25}), vec({0.2}), MatrixXd::Identity(1, 1));
    const double g1 = evi(p1, vec({0.125}), vec({1.0}), vec({0.7}));
    const double g2 = evi(p2, vec({0.125 + 0.25}), vec({1.0}), vec({0.7}));
    CHECK(g1 == g2);
  }
  SUBCASE("log-linearity") {
    Rng rng(7);
    MemParams p(vec({0.3, -0.2}), vec({0.4}), MatrixXd::Identity(2, 2));
    for (int t = 0; t < 20; ++t) {
      const VectorXd u = vec({rng.uniform_open(-1, 1), rng.uniform_open(-1, 1)});
      const VectorXd xa = vec({rng.uniform_open(-2, 2), rng.uniform_open(-2, 2)});
      const VectorXd xb = vec({rng.uniform_open(-2, 2)});
      const double expected = (p.beta_A() + u).dot(xa) + p.beta_B().dot(xb);
      CHECK(log_evi(p, u, xa, xb) == doctest::Approx(expected).epsilon(1e-14));
      CHECK(evi(p, u, xa, xb) > 0.0);
    }
  }
}

TEST_CASE("vech / unvech / duplication maps") {
  SUBCASE("scalar case") {
    const DuplicationMaps maps = duplication_maps(1);
    CHECK(maps.m(0, 0) == 1.0);
    CHECK(maps.m_star(0, 0) == 1.0);
  }
  SUBCASE("2x2 layout") {
    MatrixXd a(2, 2);
    a << 1.0, 2.0, 2.0, 3.0;
    const VectorXd v = vech(a);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 2.0);
    CHECK(v[2] == 3.0);
    const DuplicationMaps maps = duplication_maps(2);
    const VectorXd vec_a = maps.m * v;
    CHECK(vec_a[0] == 1.0);
    CHECK(vec_a[1] == 2.0);
    CHECK(vec_a[2] == 2.0);
    CHECK(vec_a[3] == 3.0);
    CHECK(unvech(v, 2) == a);
  }
  SUBCASE("errors") {
    MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.1, 3.0;
    CHECK_THROWS_AS(vech(bad), std::invalid_argument);
    CHECK_THROWS_AS(unvech(vec({1.0, 2.0}), 2), std::invalid_argument);
  }
  SUBCASE("duplication invariants for p_A up to 3") {
    Rng rng(11);
    for (int d = 1; d <= 3; ++d) {
      const DuplicationMaps maps = duplication_maps(d);
      const int p_c = d * (d + 1) / 2;
      CHECK((maps.m_star * maps.m - MatrixXd::Identity(p_c, p_c)).norm() == 0.0);
      MatrixXd a(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) {
          a(i, j) = rng.uniform_open(-1, 1);
          a(j, i) = a(i, j);
        }
      Eigen::Map<const VectorXd> vec_a(a.data(), d * d);
      CHECK((maps.m * vech(a) - vec_a).norm() == 0.0);
      CHECK((maps.m_star * vec_a - vech(a)).norm() == 0.0);
    }
  }
}

TEST_CASE("effective_counts") {
  ClusteredDataset data(1, 0);
  const VectorXd one = vec({1.0});
  const VectorXd none(0);
  for (double y : {1.0, 2.0, 3.0}) data.append("a", Observation(y, one, none));

  SUBCASE("strict inequality") {
    const ThresholdPlan plan = effective_counts(data, 2.0);
    CHECK(plan.n_j0(0) == 1);
    CHECK(plan.n_0() == 1.0);
  }
  SUBCASE("mean over clusters") {
    ClusteredDataset two(1, 0);
    for (int i = 0; i < 30; ++i)
      two.append(i < 10 ? "a" : "b", Observation(2.0, one, none));
    const ThresholdPlan plan = effective_counts(two, 1.0);
    CHECK(plan.n_j0(0) == 10);
    CHECK(plan.n_j0(1) == 20);
    CHECK(plan.n_0() == 15.0);
  }
  SUBCASE("threshold above the maximum is allowed") {
    const ThresholdPlan plan = effective_counts(data, 10.0);
    CHECK(plan.n_j0(0) == 0);
  }
  SUBCASE("missing or nonpositive thresholds") {
    CHECK_THROWS_AS(effective_counts(data, 0.0), std::invalid_argument);
    std::unordered_map<std::string, double> omega;
    CHECK_THROWS_AS(effective_counts(data, omega), std::invalid_argument);
  }
}

TEST_CASE("MemParams covariance factor") {
  SUBCASE("round trip within 1e-12 relative") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
      MatrixXd b(2, 2);
      for (int i = 0; i < 4; ++i) b(i / 2, i % 2) = rng.uniform_open(-1, 1);
      const MatrixXd sigma = b * b.transpose();
      MemParams p(vec({0.0, 0.0}), VectorXd(0), sigma);
      const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
      CHECK((p.sigma() - sigma).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
  }
  SUBCASE("zero boundary representable") {
    MemParams p(vec({0.1}), VectorXd(0), MatrixXd::Zero(1, 1));
    CHECK(p.sigma_is_zero());
    CHECK(p.sigma()(0, 0) == 0.0);
  }
  SUBCASE("rejects indefinite and asymmetric input") {
    MatrixXd neg = -MatrixXd::Identity(1, 1);
    CHECK_THROWS_AS(MemParams(vec({0.0}), VectorXd(0), neg),
                    std::invalid_argument);
    MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(MemParams(vec({0.0, 0.0}), VectorXd(0), asym),
                    std::invalid_argument);
  }
}

TEST_CASE("dataset bookkeeping") {
  SUBCASE("observation support") {
    CHECK_THROWS_AS(Observation(0.0, vec({1.0}), VectorXd(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(Observation(-1.0, vec({1.0}), VectorXd(0)),
                    std::invalid_argument);
  }
  SUBCASE("ingestion order preserved and subsets copy prefixes") {
    ClusteredDataset data(1, 1);
    data.append("st2", Observation(1.0, vec({1.0}), vec({0.1})));
    data.append("st1", Observation(2.0, vec({1.0}), vec({0.2})));
    data.append("st2", Observation(3.0, vec({1.0}), vec({0.3})));
    REQUIRE(data.n_clusters() == 2);
    CHECK(data.cluster_id(0) == "st2");
    CHECK(data.cluster_id(1) == "st1");
    CHECK(data.cluster_size(0) == 2);
    CHECK(data.y(0, 1) == 3.0);
    CHECK(data.x_B(0, 1)[0] == 0.3);
    const ClusteredDataset sub = data.subset_clusters(1);
    CHECK(sub.n_clusters() == 1);
    CHECK(sub.cluster_id(0) == "st2");
  }
  SUBCASE("split_half partitions rows in order") {
    ClusteredDataset data(1, 0);
    for (int i = 1; i <= 5; ++i)
      data.append("a", Observation(i, vec({1.0}), VectorXd(0)));
    const auto [h1, h2] = data.split_half();
    REQUIRE(h1.cluster_size(0) == 3);
    REQUIRE(h2.cluster_size(0) == 2);
    CHECK(h1.y(0, 2) == 3.0);
    CHECK(h2.y(0, 0) == 4.0);
  }
}
