#include "p300/riemann.hpp"
#include "p300/rng.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace p300;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = g(rng);
  }
  return m;
}

SpdMatrix random_spd(std::mt19937_64& rng, Eigen::Index n, double jitter = 0.1) {
  const Eigen::MatrixXd m = random_matrix(rng, n, n + 3);
  return SpdMatrix(m * m.transpose() + jitter * Eigen::MatrixXd::Identity(n, n));
}

SpdMatrix scalar(double v) { return SpdMatrix(Eigen::MatrixXd::Constant(1, 1, v)); }

// independent 1-dimensional fixed-point oracle for the log-det mean
double scalar_logdet_mean(const std::vector<double>& values) {
  double g = 0.0;
  for (double v : values) g += v;
  g /= static_cast<double>(values.size());
  for (int i = 0; i < 200; ++i) {
    double acc = 0.0;
    for (double v : values) acc += 1.0 / ((g + v) / 2.0);
    g = 1.0 / (acc / static_cast<double>(values.size()));
  }
  return g;
}

}  // namespace

TEST_CASE("SpdMatrix construction enforces symmetry") {
  Eigen::MatrixXd ok(2, 2);
  ok << 2.0, 0.5, 0.5, 3.0;
  CHECK_NOTHROW(SpdMatrix{ok});

  Eigen::MatrixXd bad(2, 2);
  bad << 2.0, 0.5, 0.9, 3.0;
  CHECK_THROWS_AS(SpdMatrix{bad}, std::invalid_argument);
}

TEST_CASE("epoch_feature") {
  std::mt19937_64 rng = make_rng(31);

  SUBCASE("plain mode is the scaled outer product") {
    const Eigen::MatrixXd z = random_matrix(rng, 4, 20);
    const SpdMatrix f = epoch_feature(z, {}, FeatureMode::plain);
    CHECK(f.dim() == 4);
    const Eigen::MatrixXd expect = shrink(z * z.transpose() / 20.0, 1e-6);
    CHECK(f.mat().isApprox(expect, 1e-12));
  }
  SUBCASE("augmented mode doubles the dimension") {
    const Eigen::MatrixXd z = random_matrix(rng, 4, 20);
    const Eigen::MatrixXd p = random_matrix(rng, 4, 20);
    CHECK(epoch_feature(z, p, FeatureMode::augmented).dim() == 8);
  }
  SUBCASE("symmetric positive definite over 1000 random epochs") {
    for (int i = 0; i < 1000; ++i) {
      const Eigen::MatrixXd z = random_matrix(rng, 4, 10);
      const Eigen::MatrixXd p = random_matrix(rng, 4, 10);
      const SpdMatrix f = epoch_feature(z, p, FeatureMode::augmented);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.mat());
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }
  SUBCASE("zero epoch is degenerate") {
    CHECK_THROWS_WITH_AS(epoch_feature(Eigen::MatrixXd::Zero(4, 20), {}, FeatureMode::plain),
                         doctest::Contains("degenerate"), std::runtime_error);
  }
  SUBCASE("prototype shape mismatch") {
    CHECK_THROWS_AS(epoch_feature(random_matrix(rng, 4, 20), random_matrix(rng, 4, 19),
                                  FeatureMode::augmented),
                    std::invalid_argument);
  }
}

TEST_CASE("logdet divergence") {
  std::mt19937_64 rng = make_rng(32);

  SUBCASE("identity of indiscernibles") {
    const SpdMatrix a = random_spd(rng, 4);
    CHECK(logdet_divergence(a, a) == 0.0);
    const SpdMatrix b = random_spd(rng, 4);
    CHECK(logdet_divergence(a, b) > 0.0);
  }
  SUBCASE("scalar closed form: a=4, b=1") {
    const double expect_sq = std::log(2.5) - 0.5 * std::log(4.0);
    CHECK(logdet_divergence_sq(scalar(4.0), scalar(1.0)) == doctest::Approx(expect_sq).epsilon(1e-12));
    CHECK(logdet_divergence_sq(scalar(4.0), scalar(1.0)) == doctest::Approx(0.223144).epsilon(1e-5));
    CHECK(logdet_divergence(scalar(4.0), scalar(1.0)) == doctest::Approx(0.47238).epsilon(1e-4));
  }
  SUBCASE("symmetry on random pairs") {
    for (int i = 0; i < 50; ++i) {
      const SpdMatrix a = random_spd(rng, 3);
      const SpdMatrix b = random_spd(rng, 3);
      CHECK(std::abs(logdet_divergence(a, b) - logdet_divergence(b, a)) < 1e-12);
    }
  }
  SUBCASE("congruence invariance") {
    for (int i = 0; i < 20; ++i) {
      const SpdMatrix a = random_spd(rng, 4);
      const SpdMatrix b = random_spd(rng, 4);
      Eigen::MatrixXd m = random_matrix(rng, 4, 4);
      while (std::abs(m.determinant()) < 0.1) m = random_matrix(rng, 4, 4);
      const SpdMatrix am(m * a.mat() * m.transpose());
      const SpdMatrix bm(m * b.mat() * m.transpose());
      CHECK(logdet_divergence(am, bm) ==
            doctest::Approx(logdet_divergence(a, b)).epsilon(1e-9));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(logdet_divergence(scalar(1.0), random_spd(rng, 2)), std::invalid_argument);
  }
  SUBCASE("non-SPD input") {
    const SpdMatrix neg(Eigen::MatrixXd::Constant(1, 1, -1.0));
    CHECK_THROWS_AS(logdet_divergence(neg, scalar(1.0)), std::runtime_error);
  }
}

TEST_CASE("logdet_mean") {
  std::mt19937_64 rng = make_rng(33);

  SUBCASE("mean of copies is the matrix itself") {
    const SpdMatrix a = random_spd(rng, 4);
    const std::vector<SpdMatrix> in(7, a);
    CHECK(logdet_mean(in).mat().isApprox(a.mat(), 1e-9));
  }
  SUBCASE("scalar set {1,4} has mean 2") {
    const std::vector<SpdMatrix> in{scalar(1.0), scalar(4.0)};
    const SpdMatrix g = logdet_mean(in);
    CHECK(g.mat()(0, 0) == doctest::Approx(2.0).epsilon(1e-6));

    // fixed-point residual below 1e-9
    const double gval = g.mat()(0, 0);
    const double mapped = 1.0 / (0.5 * (1.0 / ((gval + 1.0) / 2.0) + 1.0 / ((gval + 4.0) / 2.0)));
    CHECK(std::abs(mapped - gval) / gval < 1e-9);
  }
  SUBCASE("commuting diagonal matrices decouple per entry") {
    Eigen::MatrixXd d1 = Eigen::Vector3d(1.0, 2.0, 8.0).asDiagonal();
    Eigen::MatrixXd d2 = Eigen::Vector3d(4.0, 2.0, 0.5).asDiagonal();
    Eigen::MatrixXd d3 = Eigen::Vector3d(9.0, 2.0, 2.0).asDiagonal();
    const std::vector<SpdMatrix> in{SpdMatrix(d1), SpdMatrix(d2), SpdMatrix(d3)};
    const SpdMatrix g = logdet_mean(in);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double expect = scalar_logdet_mean({d1(i, i), d2(i, i), d3(i, i)});
      CHECK(g.mat()(i, i) == doctest::Approx(expect).epsilon(1e-8));
      for (Eigen::Index j = 0; j < 3; ++j) {
        if (i != j) CHECK(std::abs(g.mat()(i, j)) < 1e-9);
      }
    }
  }
  SUBCASE("permutation invariance") {
    std::vector<SpdMatrix> in;
    for (int i = 0; i < 5; ++i) in.push_back(random_spd(rng, 3));
    std::vector<SpdMatrix> perm{in[4], in[2], in[0], in[3], in[1]};
    CHECK(logdet_mean(in).mat().isApprox(logdet_mean(perm).mat(), 1e-8));
  }
  SUBCASE("scaling features scales the mean (scalar family)") {
    const std::vector<SpdMatrix> in{scalar(1.0), scalar(4.0)};
    const std::vector<SpdMatrix> scaled{scalar(3.0), scalar(12.0)};
    CHECK(logdet_mean(scaled).mat()(0, 0) ==
          doctest::Approx(3.0 * logdet_mean(in).mat()(0, 0)).epsilon(1e-8));
  }
  SUBCASE("scaling preserves the classification argmin (scalar family)") {
    for (double alpha : {0.5, 2.0, 7.0}) {
      std::vector<SpdMatrix> ta{scalar(alpha * 1.0), scalar(alpha * 2.0)};
      std::vector<SpdMatrix> nt{scalar(alpha * 8.0), scalar(alpha * 16.0)};
      const MdmModel m = mdm_fit(ta, nt, FeatureMode::plain);
      CHECK(mdm_classify(m, scalar(alpha * 1.5)) == EpochLabel::TA);
      CHECK(mdm_classify(m, scalar(alpha * 12.0)) == EpochLabel::NT);
    }
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(logdet_mean({}), std::invalid_argument);
  }
}

TEST_CASE("mdm fit, score, classify") {
  std::mt19937_64 rng = make_rng(34);

  // two well separated SPD clusters around distinct generators
  const SpdMatrix gen_ta(4.0 * Eigen::MatrixXd::Identity(3, 3));
  const SpdMatrix gen_nt(0.25 * Eigen::MatrixXd::Identity(3, 3));
  auto jitter = [&](const SpdMatrix& base) {
    const Eigen::MatrixXd m = random_matrix(rng, 3, 3);
    return SpdMatrix(base.mat() + 0.02 * (m * m.transpose()));
  };
  std::vector<SpdMatrix> ta, nt;
  for (int i = 0; i < 40; ++i) {
    ta.push_back(jitter(gen_ta));
    nt.push_back(jitter(gen_nt));
  }

  const MdmModel model = mdm_fit(ta, nt, FeatureMode::plain);

  SUBCASE("means land near their generators") {
    CHECK(logdet_divergence(model.mean_ta, gen_ta) < logdet_divergence(model.mean_ta, gen_nt));
    CHECK(logdet_divergence(model.mean_nt, gen_nt) < logdet_divergence(model.mean_nt, gen_ta));
  }
  SUBCASE("separable clusters classify at 99%+") {
    int correct = 0;
    for (int i = 0; i < 200; ++i) {
      const bool is_ta = i % 2 == 0;
      const SpdMatrix f = jitter(is_ta ? gen_ta : gen_nt);
      const EpochLabel got = mdm_classify(model, f);
      correct += (got == (is_ta ? EpochLabel::TA : EpochLabel::NT)) ? 1 : 0;
    }
    CHECK(correct >= 198);
  }
  SUBCASE("score signs at the class means") {
    const double gap = logdet_divergence(model.mean_ta, model.mean_nt);
    CHECK(mdm_score(model, model.mean_ta) == doctest::Approx(gap));
    CHECK(mdm_score(model, model.mean_nt) == doctest::Approx(-gap));
    CHECK(mdm_classify(model, model.mean_ta) == EpochLabel::TA);
    CHECK(mdm_classify(model, model.mean_nt) == EpochLabel::NT);
  }
  SUBCASE("equidistant feature scores zero (scalar geometric mean)") {
    std::vector<SpdMatrix> a{scalar(1.0)}, b{scalar(9.0)};
    const MdmModel m = mdm_fit(a, b, FeatureMode::plain);
    CHECK(mdm_score(m, scalar(3.0)) == doctest::Approx(0.0).epsilon(1e-12));
    // tie goes to NT
    CHECK(mdm_classify(m, scalar(3.0)) == EpochLabel::NT);
  }
  SUBCASE("single feature per class is the mean") {
    std::vector<SpdMatrix> a{random_spd(rng, 3)}, b{random_spd(rng, 3)};
    const MdmModel m = mdm_fit(a, b, FeatureMode::plain);
    CHECK(m.mean_ta.mat().isApprox(a[0].mat(), 1e-9));
    CHECK(m.mean_nt.mat().isApprox(b[0].mat(), 1e-9));
  }
  SUBCASE("label swap swaps the means") {
    const MdmModel swapped = mdm_fit(nt, ta, FeatureMode::plain);
    CHECK(swapped.mean_ta.mat().isApprox(model.mean_nt.mat(), 1e-12));
    CHECK(swapped.mean_nt.mat().isApprox(model.mean_ta.mat(), 1e-12));
  }
  SUBCASE("a class may not be absent") {
    CHECK_THROWS_AS(mdm_fit({}, nt, FeatureMode::plain), std::invalid_argument);
  }
}

TEST_CASE("classification is invariant under common congruence of all features") {
  std::mt19937_64 rng = make_rng(35);
  std::vector<SpdMatrix> ta, nt;
  for (int i = 0; i < 10; ++i) {
    ta.push_back(random_spd(rng, 3, 2.0));
    nt.push_back(random_spd(rng, 3, 0.05));
  }
  Eigen::MatrixXd m = random_matrix(rng, 3, 3);
  while (std::abs(m.determinant()) < 0.3) m = random_matrix(rng, 3, 3);
  auto transform = [&](const SpdMatrix& s) { return SpdMatrix(m * s.mat() * m.transpose()); };

  std::vector<SpdMatrix> ta2, nt2;
  for (const auto& s : ta) ta2.push_back(transform(s));
  for (const auto& s : nt) nt2.push_back(transform(s));

  const MdmModel model = mdm_fit(ta, nt, FeatureMode::plain);
  const MdmModel model2 = mdm_fit(ta2, nt2, FeatureMode::plain);
  for (int i = 0; i < 20; ++i) {
    const SpdMatrix f = random_spd(rng, 3, i % 2 == 0 ? 2.0 : 0.05);
    CHECK(mdm_classify(model, f) == mdm_classify(model2, transform(f)));
    CHECK(mdm_score(model, f) == doctest::Approx(mdm_score(model2, transform(f))).epsilon(1e-6));
  }
}

TEST_CASE("mdm model JSON round trip") {
  std::mt19937_64 rng = make_rng(36);
  MdmModel model;
  model.filter.n_components = 2;
  model.filter.w = random_matrix(rng, 2, 4);
  model.filter.eigenvalues = Eigen::Vector2d(2.0, 1.0);
  model.prototype = random_matrix(rng, 2, 10);
  model.mean_ta = random_spd(rng, 4);
  model.mean_nt = random_spd(rng, 4);
  model.mode = FeatureMode::augmented;

  const MdmModel back = mdm_model_from_json(mdm_model_to_json(model));
  CHECK(back.filter.w.isApprox(model.filter.w, 1e-15));
  CHECK(back.prototype.isApprox(model.prototype, 1e-15));
  CHECK(back.mean_ta.mat().isApprox(model.mean_ta.mat(), 1e-15));
  CHECK(back.mean_nt.mat().isApprox(model.mean_nt.mat(), 1e-15));
  CHECK(back.mode == FeatureMode::augmented);
}
