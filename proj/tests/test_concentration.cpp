#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "latmech/concentration.hpp"
#include "latmech/joint_fixtures.hpp"

using namespace latmech;

namespace {

Mat random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Largest and smallest singular values by power iteration on M^T M and on
// (lambda_max I - M^T M).
std::pair<double, double> power_iteration_oracle(const Mat& m) {
  const Mat g = m.transpose() * m;
  auto top = [](const Mat& a) {
    Vec x = Vec::Ones(a.rows()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      const Vec y = a * x;
      lambda = x.dot(y);
      x = y.normalized();
    }
    return lambda;
  };
  const double lmax = top(g);
  const double shifted = top(Mat(lmax * Mat::Identity(g.rows(), g.cols()) - g));
  return {std::sqrt(lmax), std::sqrt(std::max(0.0, lmax - shifted))};
}

std::vector<int> decode(const FiniteJoint& j, std::size_t flat) {
  std::vector<int> x(static_cast<std::size_t>(j.dims()));
  for (int d = j.dims(); d-- > 0;) {
    x[static_cast<std::size_t>(d)] = static_cast<int>(flat % static_cast<std::size_t>(j.support(d)));
    flat /= static_cast<std::size_t>(j.support(d));
  }
  return x;
}

// Conditional laws of X_i grouped by the full conditioning assignment, then
// compared pairwise across values of X_j with everything else held fixed.
Mat influence_oracle(const FiniteJoint& joint) {
  const int d = joint.dims();
  Mat inf = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      std::map<std::vector<int>, std::map<int, std::vector<double>>> groups;
      for (std::size_t f = 0; f < joint.table_size(); ++f) {
        std::vector<int> x = decode(joint, f);
        const int xi = x[static_cast<std::size_t>(i)];
        const int xj = x[static_cast<std::size_t>(j)];
        x[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(j)] = -1;
        auto& law = groups[x][xj];
        law.resize(static_cast<std::size_t>(joint.support(i)), 0.0);
        law[static_cast<std::size_t>(xi)] += joint.probs()[f];
      }
      double best = 0.0;
      for (const auto& [rest, by_xj] : groups)
        for (const auto& [a, pa] : by_xj)
          for (const auto& [b, pb] : by_xj) {
            if (a == b) continue;
            double sa = 0.0, sb = 0.0;
            for (double p : pa) sa += p;
            for (double p : pb) sb += p;
            if (sa <= 0.0 || sb <= 0.0) continue;
            double tv = 0.0;
            for (std::size_t v = 0; v < pa.size(); ++v) tv += std::fabs(pa[v] / sa - pb[v] / sb);
            best = std::max(best, 0.5 * tv);
          }
      inf(i, j) = best;
    }
  return inf;
}

FiniteJoint bits(std::vector<double> probs) { return FiniteJoint({{0.0, 1.0}, {0.0, 1.0}}, std::move(probs)); }

}  // namespace

TEST(SingularExtremes, Examples) {
  auto s = singular_extremes(2.0 * Mat::Identity(2, 2));
  EXPECT_NEAR(s.sigma_max, 2.0, 1e-12);
  EXPECT_NEAR(s.sigma_min, 2.0, 1e-12);
  Mat d = Mat::Zero(2, 2);
  d.diagonal() << 3.0, 1.0;
  s = singular_extremes(d);
  EXPECT_NEAR(s.sigma_max, 3.0, 1e-12);
  EXPECT_NEAR(s.sigma_min, 1.0, 1e-12);
}

TEST(SingularExtremes, MatchesPowerIteration) {
  Rng rng(71);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat m = random_matrix(rng, 50, 4);
    const auto s = singular_extremes(m);
    const auto [hi, lo] = power_iteration_oracle(m);
    EXPECT_NEAR(s.sigma_max, hi, 1e-6 * hi);
    EXPECT_NEAR(s.sigma_min, lo, 1e-6 * hi);
    const Vec sv = Eigen::JacobiSVD<Mat>(m).singularValues();
    EXPECT_NEAR(s.sigma_max, sv(0), 1e-8 * sv(0));
    EXPECT_NEAR(s.sigma_min, sv(sv.size() - 1), 1e-8 * sv(0));
  }
}

TEST(EpsilonNet, SmallCases) {
  const auto k1 = epsilon_net(1, 0.5);
  ASSERT_EQ(k1.size(), 2u);
  EXPECT_EQ(k1[0](0) * k1[1](0), -1.0);
  const auto k2 = epsilon_net(2, 1.0 / 7.0);
  EXPECT_LE(k2.size(), 441u);
  for (const auto& x : k2) EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  try {
    epsilon_net(5, 0.5);
    FAIL() << "expected DimensionTooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionTooLarge);
  }
  EXPECT_THROW(epsilon_net(2, 1.0), Error);
}

TEST(EpsilonNet, CoversRandomProbesAndRespectsSizeBound) {
  Rng rng(72);
  for (int n = 1; n <= 4; ++n)
    for (double eps : {0.5, 1.0 / 7.0, 0.3}) {
      if (n == 4 && eps < 0.2) continue;
      const auto net = epsilon_net(n, eps);
      EXPECT_LE(static_cast<double>(net.size()), std::pow(3.0 / eps, n)) << n << " " << eps;
      for (int p = 0; p < 10000; ++p) {
        Vec x(n);
        for (int i = 0; i < n; ++i) x(i) = rng.normal();
        x.normalize();
        double best = 1e9;
        for (const auto& c : net) best = std::min(best, (x - c).norm());
        ASSERT_LE(best, eps) << "n=" << n << " eps=" << eps;
      }
    }
}

TEST(NetSandwich, Examples) {
  const double eps = 1.0 / 7.0;
  const auto net = epsilon_net(2, eps);
  const NetSandwich two = net_sandwich(2.0 * Mat::Identity(2, 2), net, eps);
  EXPECT_GE(two.upper_sigma_max, 2.0);
  EXPECT_LE(two.lower_sigma_min, 2.0);
  EXPECT_NEAR(two.upper_sigma_max, 2.0 * 7.0 / 6.0, 1e-12);
  const NetSandwich zero = net_sandwich(Mat::Zero(3, 2), net, eps);
  EXPECT_EQ(zero.upper_sigma_max, 0.0);
  EXPECT_EQ(zero.lower_sigma_min, 0.0);
}

TEST(NetSandwich, BracketsAndConverges) {
  Rng rng(73);
  const auto net3 = epsilon_net(3, 1.0 / 7.0);
  for (int rep = 0; rep < 100; ++rep) {
    const Mat m = random_matrix(rng, 10, 3);
    const auto s = singular_extremes(m);
    const NetSandwich b = net_sandwich(m, net3, 1.0 / 7.0);
    EXPECT_GE(b.upper_sigma_max + 1e-8, s.sigma_max);
    EXPECT_LE(b.lower_sigma_min - 1e-8, s.sigma_min);
  }
  const Mat m = random_matrix(rng, 6, 2);
  const auto s = singular_extremes(m);
  double prev = 1e9;
  for (double eps : {0.1, 0.01, 1e-3, 1e-4}) {
    const NetSandwich b = net_sandwich(m, epsilon_net(2, eps), eps);
    const double gap = std::max(b.upper_sigma_max - s.sigma_max, s.sigma_min - b.lower_sigma_min);
    EXPECT_LE(gap, prev + 1e-12);
    prev = gap;
  }
  EXPECT_LE(prev, 1e-3);
}

TEST(GaussianDesign, ZeroCovarianceAndRankOne) {
  Rng rng(74);
  const GaussianDesignSpec zero(Mat::Zero(3, 3));
  EXPECT_EQ(gaussian_design_sample(zero, 4, rng).cwiseAbs().maxCoeff(), 0.0);

  const Vec v{{1.0, 2.0, -1.0}};
  const GaussianDesignSpec rank1(Mat(v * v.transpose()));
  const Mat u = gaussian_design_sample(rank1, 50, rng);
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const Vec col = u.col(c);
    EXPECT_LE((col - col.dot(v) / v.squaredNorm() * v).norm(), 1e-6 * (1.0 + col.norm()));
  }
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1.0;
  try {
    GaussianDesignSpec{bad};
    FAIL() << "expected NotPSD";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPSD);
  }
}

TEST(GaussianDesign, EmpiricalCovariance) {
  Rng rng(75);
  Mat cov(3, 3);
  cov << 1.0, 0.3, 0.0, 0.3, 0.5, 0.1, 0.0, 0.1, 0.8;
  for (const Mat& sigma : {Mat(Mat::Identity(4, 4)), cov}) {
    const GaussianDesignSpec spec(sigma);
    const Mat u = gaussian_design_sample(spec, 10000, rng);
    const Mat emp = u * u.transpose() / 10000.0;
    EXPECT_LE((emp - sigma).cwiseAbs().maxCoeff(), 0.05);
    EXPECT_NEAR(spec.eigenvalues().sum(), spec.trace(), 1e-12);
  }
}

TEST(GaussianDesign, BoundsAndAdmissibility) {
  Rng rng(76);
  const ConcentrationReport r = check_gaussian_concentration(GaussianDesignSpec::identity(512), 8, 5, rng);
  EXPECT_NEAR(r.upper_bound, 45.25, 0.005);
  EXPECT_NEAR(r.lower_bound, 5.66, 0.005);
  EXPECT_EQ(r.trials(), 5u);
  EXPECT_FALSE(r.admissible);
  EXPECT_NEAR(r.failure_bound_alt, 2.0 * std::exp(-32.0), 1e-20);
  for (int m : {63, 64, 65, 127, 128, 129, 640})
    for (int k : {1, 2})
      EXPECT_EQ(GaussianDesignSpec::identity(m).admissible(k), m > 64 * k) << m << " " << k;
}

TEST(Influence, Examples) {
  const InfluenceResult copied = influence_matrix(bits({0.5, 0.0, 0.0, 0.5}));
  EXPECT_DOUBLE_EQ(copied.matrix(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(copied.matrix(0, 1), 1.0);
  const InfluenceResult corr = influence_matrix(bits({0.4, 0.1, 0.1, 0.4}));
  EXPECT_NEAR(corr.matrix(0, 1), 0.6, 1e-15);
  EXPECT_NEAR(corr.matrix(1, 0), 0.6, 1e-15);
  EXPECT_EQ(corr.matrix(0, 0), 0.0);
  EXPECT_NEAR(corr.norm, 0.6, 1e-15);
  const InfluenceResult fair = influence_matrix(FiniteJoint::product({{0, 1}, {0, 1}, {0, 1}}, {{0.5, 0.5}, {0.25, 0.75}, {0.5, 0.5}}));
  EXPECT_EQ(fair.matrix.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Influence, MatchesOracleOnFixtures) {
  for (const auto& fx : joint_fixtures()) {
    const InfluenceResult r = influence_matrix(fx.joint);
    const Mat expect = influence_oracle(fx.joint);
    EXPECT_LE((r.matrix - expect).cwiseAbs().maxCoeff(), 1e-12) << fx.name;
    EXPECT_NEAR(r.norm, Eigen::JacobiSVD<Mat>(expect).singularValues()(0), 1e-12) << fx.name;
    if (fx.product) {
      EXPECT_LE(r.matrix.cwiseAbs().maxCoeff(), 1e-10) << fx.name;
    }
    EXPECT_TRUE((r.matrix.array() >= 0.0).all() && (r.matrix.array() <= 1.0 + 1e-12).all()) << fx.name;
  }
}

TEST(Tensorization, CopiesAreBlockDiagonal) {
  const FiniteJoint corr = bits({0.4, 0.1, 0.1, 0.4});
  for (int n : {1, 2, 3}) {
    const TensorizationReport r = tensorization_check(corr, n);
    EXPECT_TRUE(r.passed) << n;
    EXPECT_NEAR(r.norm_single, 0.6, 1e-12);
    EXPECT_NEAR(r.norm_copies, 0.6, 1e-12);
  }
  const InfluenceResult two = influence_matrix(independent_copies(corr, 2));
  EXPECT_NEAR(two.matrix(2, 3), 0.6, 1e-12);
  EXPECT_EQ(two.matrix(0, 2), 0.0);
  EXPECT_EQ(two.matrix(1, 3), 0.0);

  const TensorizationReport indep = tensorization_check(bits({0.25, 0.25, 0.25, 0.25}), 2);
  EXPECT_TRUE(indep.passed);
  EXPECT_EQ(indep.norm_copies, 0.0);

  for (const auto& fx : joint_fixtures()) EXPECT_TRUE(tensorization_check(fx.joint, 2).passed) << fx.name;

  try {
    tensorization_check(corr, 5);
    FAIL() << "expected TooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooLarge);
  }
}

TEST(FiniteJoint, Validation) {
  EXPECT_THROW(bits({0.5, 0.5, 0.5}), Error);
  EXPECT_THROW(bits({0.5, 0.6, -0.1, 0.0}), Error);
  EXPECT_THROW(bits({0.5, 0.5, 0.5, 0.5}), Error);
  const FiniteJoint j = bits({0.1, 0.2, 0.3, 0.4});
  EXPECT_NEAR(j.means()(0), 0.7, 1e-15);
  EXPECT_NEAR(j.variances()(1), 0.6 * 0.4, 1e-15);
}

TEST(WeakDependence, BoundsAndDegenerateCases) {
  Rng rng(77);
  const WeakDependenceSpec four{rademacher_sampler(4), Vec::Ones(4), 1.0, 0.0};
  const ConcentrationReport r = check_weakdep_concentration(four, 1, 3, rng);
  EXPECT_DOUBLE_EQ(four.v(), 2.0);
  EXPECT_DOUBLE_EQ(r.upper_bound, 4.0);
  EXPECT_DOUBLE_EQ(r.lower_bound, 0.5);

  const WeakDependenceSpec zero{[](Rng&) { return Vec(Vec::Zero(3)); }, Vec::Zero(3), 1.0, 0.0};
  const ConcentrationReport z = check_weakdep_concentration(zero, 2, 4, rng);
  EXPECT_EQ(z.upper_violations, 0);
  EXPECT_EQ(z.upper_bound, 0.0);
  for (double s : z.sigma_max) EXPECT_EQ(s, 0.0);

  const int k = 2, m = 256 * k * k * 2;
  const WeakDependenceSpec rad{rademacher_sampler(m, 0.5), Vec::Constant(m, 0.25), 0.5, 0.0};
  EXPECT_TRUE(rad.admissible(k));
  const ConcentrationReport rr = check_weakdep_concentration(rad, k, 100, rng);
  EXPECT_NEAR(rr.upper_bound, 2.0 * 0.5 * std::sqrt(m), 1e-12);
  EXPECT_NEAR(rr.lower_bound, 0.5 * std::sqrt(m) / 4.0, 1e-12);
  EXPECT_EQ(rr.trials_violating, 0);
}
