#include "p300/eval.hpp"
#include "p300/iir.hpp"
#include "p300/riemann.hpp"
#include "p300/rng.hpp"
#include "p300/spatial.hpp"
#include "p300/stats.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace p300;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = g(rng);
  }
  return m;
}

std::vector<Epoch> random_epochs(std::mt19937_64& rng, int n, EpochLabel label) {
  std::vector<Epoch> epochs;
  epochs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Epoch e;
    e.data = random_matrix(rng, 16, 77);
    e.label = label;
    epochs.push_back(std::move(e));
  }
  return epochs;
}

void BM_DesignBandpass(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(design_bandpass(1.0, 20.0, 4, 512.0));
  }
}
BENCHMARK(BM_DesignBandpass);

void BM_Filtfilt(benchmark::State& state) {
  const IirFilter f = design_bandpass(1.0, 20.0, 4, 512.0);
  const std::vector<double> x = random_signal(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(filtfilt(f, x));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Filtfilt)->Arg(1 << 12)->Arg(1 << 16);

void BM_FitSpatialFilter(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(2);
  const std::vector<Epoch> ta = random_epochs(rng, 60, EpochLabel::TA);
  const std::vector<Epoch> nt = random_epochs(rng, 300, EpochLabel::NT);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_spatial_filter(ta, nt, 4));
  }
}
BENCHMARK(BM_FitSpatialFilter);

void BM_EpochFeature(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(3);
  const Eigen::MatrixXd z = random_matrix(rng, 4, 77);
  const Eigen::MatrixXd proto = random_matrix(rng, 4, 77);
  for (auto _ : state) {
    benchmark::DoNotOptimize(epoch_feature(z, proto, FeatureMode::augmented));
  }
}
BENCHMARK(BM_EpochFeature);

void BM_LogdetMean(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(4);
  std::vector<SpdMatrix> features;
  for (int i = 0; i < state.range(0); ++i) {
    const Eigen::MatrixXd m = random_matrix(rng, 8, 16);
    features.emplace_back(m * m.transpose() + 0.01 * Eigen::MatrixXd::Identity(8, 8));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(logdet_mean(features));
  }
}
BENCHMARK(BM_LogdetMean)->Arg(60)->Arg(300);

void BM_MdmScore(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(5);
  auto spd = [&] {
    const Eigen::MatrixXd m = random_matrix(rng, 8, 16);
    return SpdMatrix(m * m.transpose() + 0.01 * Eigen::MatrixXd::Identity(8, 8));
  };
  std::vector<SpdMatrix> ta, nt;
  for (int i = 0; i < 30; ++i) {
    ta.push_back(spd());
    nt.push_back(spd());
  }
  const MdmModel model = mdm_fit(ta, nt, FeatureMode::augmented);
  const SpdMatrix feature = spd();
  for (auto _ : state) {
    benchmark::DoNotOptimize(mdm_score(model, feature));
  }
}
BENCHMARK(BM_MdmScore);

void BM_PairedTmap(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(6);
  std::vector<DifferenceWave> a(21), b(21);
  for (int i = 0; i < 21; ++i) {
    a[static_cast<std::size_t>(i)].data = random_matrix(rng, 16, 128);
    b[static_cast<std::size_t>(i)].data = random_matrix(rng, 16, 128);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(paired_tmap(a, b));
  }
}
BENCHMARK(BM_PairedTmap);

void BM_PermutationTest(benchmark::State& state) {
  std::mt19937_64 rng = make_rng(7);
  std::vector<DifferenceWave> a(21), b(21);
  for (int i = 0; i < 21; ++i) {
    a[static_cast<std::size_t>(i)].data = random_matrix(rng, 16, 128);
    b[static_cast<std::size_t>(i)].data = random_matrix(rng, 16, 128);
  }
  const ElectrodeLayout layout = default_layout();
  PermutationConfig cfg;
  cfg.n_permutations = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(permutation_test(a, b, layout, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PermutationTest)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
