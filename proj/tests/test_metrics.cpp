#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "csmn/metrics.hpp"
#include "csmn/rng.hpp"
#include "support/testutil.hpp"

using namespace csmn;
using Catch::Matchers::WithinAbs;

TEST_CASE("auc worked examples") {
  SECTION("paper-style 4-sample case: 3 wins of 4 pairs") {
    REQUIRE_THAT(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), WithinAbs(0.75, 1e-15));
  }
  SECTION("perfect separation") {
    REQUIRE_THAT(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), WithinAbs(1.0, 1e-15));
  }
  SECTION("all ties give 0.5") {
    REQUIRE_THAT(auc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}), WithinAbs(0.5, 1e-15));
  }
  SECTION("single class is an error, not 0.5") {
    REQUIRE_THROWS_AS(auc({0.1, 0.2}, {1, 1}), MetricError);
    REQUIRE_THROWS_AS(auc({0.1, 0.2}, {0, 0}), MetricError);
  }
}

TEST_CASE("rank-sum equals brute force on random instances") {
  Rng rng(2024);
  for (int rep = 0; rep < 500; ++rep) {
    std::size_t n = 2 + rng.index(198);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid forces plenty of ties
      scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos) labels[0] = 1;
    if (!has_neg) labels[n - 1] = 0;
    double fast = auc(scores, labels);
    double slow = testutil::brute_force_auc(scores, labels);
    REQUIRE(fast == slow);  // exactly, not approximately
  }
}

TEST_CASE("auc invariant under strictly increasing transforms") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t n = 10 + rng.index(50);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform(-3, 3);
      labels[i] = i % 3 == 0 ? 1 : 0;
    }
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(0.5 * scores[i]) + 2.0;
    REQUIRE_THAT(auc(scores, labels), WithinAbs(auc(warped, labels), 1e-12));
  }
}

TEST_CASE("per-scenario grouping") {
  SECTION("identical groups get identical AUC; overall pools") {
    std::vector<double> scores = {0.1, 0.9, 0.1, 0.9};
    std::vector<int> labels = {0, 1, 0, 1};
    std::vector<std::string> sc = {"a", "a", "b", "b"};
    auto m = auc_per_scenario(scores, labels, sc);
    REQUIRE(m["a"].defined);
    REQUIRE(m["a"].value == m["b"].value);
    REQUIRE(m["Overall"].n == 4);
    REQUIRE_THAT(m["Overall"].value, WithinAbs(1.0, 1e-15));
  }
  SECTION("pooled AUC computed on the pool, not averaged") {
    // separable within groups, mixed across: pooling must differ from the mean
    std::vector<double> scores = {0.2, 0.4, 0.6, 0.8};
    std::vector<int> labels = {0, 1, 0, 1};
    std::vector<std::string> sc = {"a", "a", "b", "b"};
    auto m = auc_per_scenario(scores, labels, sc);
    REQUIRE(m["a"].value == 1.0);
    REQUIRE(m["b"].value == 1.0);
    REQUIRE_THAT(m["Overall"].value, WithinAbs(0.75, 1e-12));
  }
  SECTION("single-class scenario marked undefined, overall still defined") {
    std::vector<double> scores = {0.2, 0.4, 0.6};
    std::vector<int> labels = {1, 1, 0};
    std::vector<std::string> sc = {"a", "a", "b"};
    auto m = auc_per_scenario(scores, labels, sc);
    REQUIRE_FALSE(m["a"].defined);
    REQUIRE_FALSE(m["b"].defined);
    REQUIRE(m["Overall"].defined);
  }
  SECTION("one scenario: per-scenario equals overall") {
    std::vector<double> scores = {0.2, 0.7, 0.5};
    std::vector<int> labels = {0, 1, 1};
    std::vector<std::string> sc = {"s", "s", "s"};
    auto m = auc_per_scenario(scores, labels, sc);
    REQUIRE(m["s"].value == m["Overall"].value);
  }
}

TEST_CASE("relative improvement") {
  SECTION("reproduces the published overall row") {
    REQUIRE_THAT(ri(0.7001, 0.6954), WithinAbs(2.41, 0.005));
  }
  SECTION("reproduces the published scenario-1 row") {
    REQUIRE_THAT(ri(0.6546, 0.6527), WithinAbs(1.24, 0.005));
  }
  SECTION("target equal to base is zero") { REQUIRE(ri(0.66, 0.66) == 0.0); }
  SECTION("baseline at or below 0.5 rejected") {
    REQUIRE_THROWS_AS(ri(0.7, 0.5), MetricError);
    REQUIRE_THROWS_AS(ri(0.7, 0.45), MetricError);
  }
}

TEST_CASE("report rendering") {
  RunMetrics a{"full_seed1", {{"s0", {100, true, 0.71}},
                              {"s1", {80, true, 0.68}},
                              {"Overall", {180, true, 0.70}}}};
  RunMetrics b{"base_seed1", {{"s0", {100, true, 0.69}},
                              {"s1", {80, true, 0.66}},
                              {"Overall", {180, true, 0.68}}}};
  SECTION("csv column order and no RI column content without baseline") {
    auto csv = metrics_csv({a});
    REQUIRE(csv.rfind("run,scenario,n,auc,ri\n", 0) == 0);
    REQUIRE(csv.find("full_seed1,s0,100,0.7100,\n") != std::string::npos);
  }
  SECTION("run against itself has RI 0 everywhere") {
    auto csv = metrics_csv({a}, &a);
    REQUIRE(csv.find("full_seed1,Overall,180,0.7000,0.00") != std::string::npos);
    REQUIRE(csv.find("full_seed1,s0,100,0.7100,0.00") != std::string::npos);
  }
  SECTION("table carries RI row against the baseline") {
    auto tbl = metrics_table({a, b}, &b);
    REQUIRE(tbl.find("Overall") != std::string::npos);
    REQUIRE(tbl.find("RI") != std::string::npos);
    REQUIRE(tbl.find("(vs base_seed1)") != std::string::npos);
  }
  SECTION("mismatched scenario sets produce an explicit diff") {
    RunMetrics c{"odd", {{"s0", {10, true, 0.6}}, {"Overall", {10, true, 0.6}}}};
    auto tbl = metrics_table({a, c});
    REQUIRE(tbl.find("WARNING: scenario sets differ") != std::string::npos);
    REQUIRE(tbl.find("odd") != std::string::npos);
  }
}
