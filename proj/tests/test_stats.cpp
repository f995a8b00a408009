#include "p300/stats.hpp"

#include "p300/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace p300;

namespace {

ElectrodeLayout chain_layout(int n) {  // A-B-C-... line graph
  ElectrodeLayout layout;
  for (int i = 0; i < n; ++i) {
    layout.labels.push_back(std::string(1, static_cast<char>('A' + i)));
    layout.positions.emplace_back(i, 0.0);
    layout.neighbors.push_back({});
  }
  for (int i = 0; i + 1 < n; ++i) {
    layout.neighbors[static_cast<std::size_t>(i)].push_back(i + 1);
    layout.neighbors[static_cast<std::size_t>(i + 1)].push_back(i);
  }
  for (auto& v : layout.neighbors) std::sort(v.begin(), v.end());
  return layout;
}

ElectrodeLayout disconnected_layout(int n) {
  ElectrodeLayout layout = chain_layout(n);
  for (auto& v : layout.neighbors) v.clear();
  return layout;
}

ElectrodeLayout full_layout(int n) {
  ElectrodeLayout layout = chain_layout(n);
  for (int i = 0; i < n; ++i) {
    layout.neighbors[static_cast<std::size_t>(i)].clear();
    for (int j = 0; j < n; ++j) {
      if (j != i) layout.neighbors[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return layout;
}

std::vector<DifferenceWave> random_waves(std::mt19937_64& rng, int n, Eigen::Index rows,
                                         Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<DifferenceWave> waves(static_cast<std::size_t>(n));
  for (auto& w : waves) {
    w.data.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w.data(r, c) = g(rng);
    }
  }
  return waves;
}

}  // namespace

TEST_CASE("student t distribution against closed forms") {
  // df = 1 is Cauchy: F(x) = 1/2 + atan(x)/pi
  for (double x : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
    CHECK(student_t_cdf(x, 1) ==
          doctest::Approx(0.5 + std::atan(x) / std::numbers::pi).epsilon(1e-12));
  }
  // df = 2: F(x) = 1/2 + x / (2 sqrt(2 + x^2))
  for (double x : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
    CHECK(student_t_cdf(x, 2) ==
          doctest::Approx(0.5 + x / (2.0 * std::sqrt(2.0 + x * x))).epsilon(1e-12));
  }
  CHECK(student_t_cdf(0.0, 20) == doctest::Approx(0.5));

  SUBCASE("quantile inverts the cdf") {
    for (int df : {1, 5, 20}) {
      for (double p : {0.025, 0.5, 0.975}) {
        CHECK(student_t_cdf(student_t_quantile(p, df), df) == doctest::Approx(p).epsilon(1e-9));
      }
    }
    // well-known critical value
    CHECK(student_t_quantile(0.975, 20) == doctest::Approx(2.085963).epsilon(1e-5));
  }
}

TEST_CASE("paired_tmap") {
  std::mt19937_64 rng = make_rng(61);

  SUBCASE("identical conditions give the zero map") {
    const auto waves = random_waves(rng, 8, 3, 10);
    const Eigen::MatrixXd t = paired_tmap(waves, waves);
    CHECK(t.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constant offset with zero variance is an error") {
    const auto base = random_waves(rng, 8, 3, 10);
    auto shifted = base;
    for (auto& w : shifted) w.data.array() += 1.0;
    CHECK_THROWS_WITH_AS(paired_tmap(shifted, base), doctest::Contains("zero variance"),
                         std::runtime_error);
  }
  SUBCASE("flipping the pairing negates the map") {
    const auto a = random_waves(rng, 9, 3, 10);
    const auto b = random_waves(rng, 9, 3, 10);
    const Eigen::MatrixXd t1 = paired_tmap(a, b);
    const Eigen::MatrixXd t2 = paired_tmap(b, a);
    CHECK((t1 + t2).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("null data distributes as student t (KS check)") {
    const int n = 21;
    const auto a = random_waves(rng, n, 16, 64);
    const auto b = random_waves(rng, n, 16, 64);
    const Eigen::MatrixXd t = paired_tmap(a, b);
    std::vector<double> values(t.data(), t.data() + t.size());
    std::sort(values.begin(), values.end());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double emp_lo = static_cast<double>(i) / values.size();
      const double emp_hi = static_cast<double>(i + 1) / values.size();
      const double f = student_t_cdf(values[i], n - 1);
      d = std::max({d, std::abs(f - emp_lo), std::abs(f - emp_hi)});
    }
    // 0.1% critical value 1.95/sqrt(m) for m = 1024 cells
    CHECK(d < 1.95 / std::sqrt(static_cast<double>(values.size())));
  }
  SUBCASE("shape and count preconditions") {
    const auto a = random_waves(rng, 5, 3, 10);
    auto b = random_waves(rng, 5, 3, 9);
    CHECK_THROWS_AS(paired_tmap(a, b), std::invalid_argument);
    const auto one = random_waves(rng, 1, 3, 10);
    CHECK_THROWS_AS(paired_tmap(one, one), std::invalid_argument);
  }
}

TEST_CASE("form_clusters") {
  SUBCASE("suprathreshold run on one channel sums its mass") {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(1, 7);
    t(0, 2) = 3.0;
    t(0, 3) = 4.0;
    t(0, 4) = 3.0;
    const auto clusters = form_clusters(t, chain_layout(1), 2.5);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].mass == doctest::Approx(10.0));
    CHECK(clusters[0].sign == 1);
    CHECK(clusters[0].members.size() == 3);
  }
  SUBCASE("non-adjacent channels form separate clusters") {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(3, 4);
    t(0, 1) = 3.0;
    t(2, 1) = 3.0;  // channels A and C are not neighbors in the chain
    CHECK(form_clusters(t, chain_layout(3), 2.5).size() == 2);
    CHECK(form_clusters(t, disconnected_layout(3), 2.5).size() == 2);
  }
  SUBCASE("a fully connected graph merges them") {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(3, 4);
    t(0, 1) = 3.0;
    t(2, 1) = 3.0;
    CHECK(form_clusters(t, full_layout(3), 2.5).size() == 1);
  }
  SUBCASE("positive and negative clusters are kept apart") {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(1, 6);
    t(0, 1) = 3.0;
    t(0, 2) = -3.0;  // adjacent but opposite sign
    const auto clusters = form_clusters(t, chain_layout(1), 2.5);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].sign != clusters[1].sign);
  }
  SUBCASE("empty layout") {
    CHECK_THROWS_AS(form_clusters(Eigen::MatrixXd::Zero(0, 4), ElectrodeLayout{}, 2.0),
                    std::invalid_argument);
  }
}

TEST_CASE("permutation_test") {
  std::mt19937_64 rng = make_rng(62);
  const ElectrodeLayout layout = default_layout();

  SUBCASE("rejects zero permutations") {
    const auto a = random_waves(rng, 5, 16, 32);
    const auto b = random_waves(rng, 5, 16, 32);
    PermutationConfig cfg;
    cfg.n_permutations = 0;
    CHECK_THROWS_AS(permutation_test(a, b, layout, cfg), std::invalid_argument);
  }
  SUBCASE("deterministic under a fixed seed and any worker count") {
    const auto a = random_waves(rng, 10, 16, 32);
    const auto b = random_waves(rng, 10, 16, 32);
    PermutationConfig cfg;
    cfg.n_permutations = 200;
    cfg.seed = 5;
    const std::string r1 = cluster_result_to_json(permutation_test(a, b, layout, cfg, 1));
    const std::string r2 = cluster_result_to_json(permutation_test(a, b, layout, cfg, 1));
    const std::string r3 = cluster_result_to_json(permutation_test(a, b, layout, cfg, 2));
    CHECK(r1 == r2);
    CHECK(r1 == r3);
  }
  SUBCASE("p-values are monotone in observed mass") {
    const auto a = random_waves(rng, 12, 16, 48);
    const auto b = random_waves(rng, 12, 16, 48);
    PermutationConfig cfg;
    cfg.n_permutations = 300;
    const ClusterResult res = permutation_test(a, b, layout, cfg);
    for (std::size_t i = 1; i < res.clusters.size(); ++i) {
      CHECK(std::abs(res.clusters[i - 1].mass) >= std::abs(res.clusters[i].mass));
      CHECK(res.clusters[i - 1].p_value <= res.clusters[i].p_value);
    }
    for (const Cluster& c : res.clusters) {
      CHECK(c.p_value > 0.0);
      CHECK(c.p_value <= 1.0);
    }
  }
  SUBCASE("injected 150-310 ms central effect is detected") {
    // 1 s epochs at 128 Hz; bump on FZ/CZ/PZ between 150 and 310 ms
    const int n = 21;
    const double fs = 128.0;
    auto a = random_waves(rng, n, 16, 128);
    const auto b = random_waves(rng, n, 16, 128);
    const int s0 = static_cast<int>(0.150 * fs);
    const int s1 = static_cast<int>(0.310 * fs);
    const std::vector<int> channels{layout.index_of("FZ"), layout.index_of("CZ"),
                                    layout.index_of("PZ")};
    for (auto& w : a) {
      for (int ch : channels) {
        for (int s = s0; s <= s1; ++s) w.data(ch, s) += 2.5;
      }
    }
    PermutationConfig cfg;
    cfg.n_permutations = 500;
    cfg.seed = 11;
    const ClusterResult res = permutation_test(a, b, layout, cfg);
    REQUIRE(!res.clusters.empty());
    const Cluster& top = res.clusters.front();
    CHECK(top.p_value < 0.01);
    CHECK(top.significant);

    // overlap with the injected window
    int covered = 0;
    const int injected = static_cast<int>(channels.size()) * (s1 - s0 + 1);
    for (const auto& [ch, s] : top.members) {
      if (std::find(channels.begin(), channels.end(), ch) != channels.end() && s >= s0 && s <= s1) {
        ++covered;
      }
    }
    CHECK(static_cast<double>(covered) / injected >= 0.8);
  }
}

TEST_CASE("cluster exports") {
  std::mt19937_64 rng = make_rng(63);
  const ElectrodeLayout layout = default_layout();
  auto a = random_waves(rng, 8, 16, 32);
  const auto b = random_waves(rng, 8, 16, 32);
  for (auto& w : a) w.data.row(6).array() += 3.0;  // CZ offset
  PermutationConfig cfg;
  cfg.n_permutations = 100;
  const ClusterResult res = permutation_test(a, b, layout, cfg);
  REQUIRE(!res.clusters.empty());

  const std::string json = cluster_result_to_json(res);
  CHECK(json.find("\"p_value\"") != std::string::npos);
  const std::string csv = cluster_mask_csv(res, layout);
  CHECK(csv.rfind("channel,label,sample,cluster_id,significant\n", 0) == 0);
  CHECK(csv.find("CZ") != std::string::npos);
}
