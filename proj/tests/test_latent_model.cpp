#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "latmech/latent_model.hpp"
#include "latmech/stats.hpp"

using namespace latmech;

namespace {

Mat naive_multiply_oracle(const Mat& a, const Vec& z) {
  Mat out = Mat::Zero(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) s += a(i, j) * z(j);
    out(i, 0) = s;
  }
  return out;
}

double row_sum_oracle(const Mat& a) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) s += std::fabs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

// Composite Simpson integration of x * phi((x-mu)/sd) over [0,1], normalized.
double truncated_normal_mean_oracle(double mu, double sd) {
  const int n = 20000;
  const double h = 1.0 / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double f = std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd));
    num += w * x * f;
    den += w * f;
  }
  return num / den;
}

}  // namespace

TEST(DesignMatrix, RejectsBadShapes) {
  EXPECT_THROW(DesignMatrix(Mat(2, 3)), Error);
  Mat bad = Mat::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(DesignMatrix{bad}, Error);
}

TEST(DesignMatrix, InfNormExamples) {
  EXPECT_DOUBLE_EQ(DesignMatrix(Mat::Identity(4, 4)).inf_norm(), 1.0);
  Mat m(2, 2);
  m << 1, -2, 0.5, 0.5;
  EXPECT_DOUBLE_EQ(DesignMatrix(m).inf_norm(), row_sum_oracle(m));
  EXPECT_DOUBLE_EQ(DesignMatrix(m).inf_norm(), 3.0);
  EXPECT_DOUBLE_EQ(DesignMatrix(Mat::Zero(3, 2)).inf_norm(), 0.0);
}

TEST(DesignMatrix, InfNormMatchesRecomputation) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Mat m(7, 3);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-3.0, 3.0);
    EXPECT_DOUBLE_EQ(DesignMatrix(m).inf_norm(), row_sum_oracle(m));
  }
}

TEST(ApplyDesign, Examples) {
  EXPECT_TRUE(apply_design(DesignMatrix(Mat::Identity(2, 2)), Vec{{0.3, 0.7}}).isApprox(Vec{{0.3, 0.7}}));
  Mat a(3, 2);
  a << 1, 1, 2, 0, 0, 3;
  const Vec z{{0.5, 0.5}};
  const Vec t = apply_design(DesignMatrix(a), z);
  EXPECT_TRUE(t.isApprox(Vec{{1.0, 1.0, 1.5}}));
  EXPECT_TRUE(t.isApprox(Vec(naive_multiply_oracle(a, z).col(0))));
  EXPECT_TRUE(apply_design(DesignMatrix(a), Vec::Zero(2)).isZero(0.0));
  EXPECT_THROW(apply_design(DesignMatrix(a), Vec::Zero(3)), Error);
}

TEST(ApplyDesign, LinearAndLipschitz) {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    Mat m(64, 16);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    const DesignMatrix a(m);
    Vec z(16), w(16);
    for (int j = 0; j < 16; ++j) {
      z(j) = rng.uniform();
      w(j) = rng.uniform();
    }
    const double s = rng.uniform(-2.0, 2.0), u = rng.uniform(-2.0, 2.0);
    const Vec lhs = apply_design(a, s * z + u * w);
    const Vec rhs = s * apply_design(a, z) + u * apply_design(a, w);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(inf_norm(Vec(apply_design(a, z) - apply_design(a, w))), a.inf_norm() * inf_norm(Vec(z - w)) + 1e-12);
  }
  Mat pos(10, 3);
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = rng.uniform();
  const DesignMatrix a(pos);
  for (int rep = 0; rep < 100; ++rep) {
    const Vec z{{rng.uniform(), rng.uniform(), rng.uniform()}};
    EXPECT_LE(inf_norm(apply_design(a, z)), a.inf_norm() + 1e-15);
  }
}

TEST(DesignCsv, RoundTrip) {
  Mat m(3, 2);
  m << 0.1, 1.0 / 3.0, -2.5, 1e-17, 4.0, 0.0;
  std::stringstream ss;
  write_design_csv(ss, DesignMatrix(m));
  EXPECT_EQ(ss.str().rfind("# 3,2\n", 0), 0u);
  const DesignMatrix back = read_design_csv(ss);
  EXPECT_EQ(back.entries(), m);
}

TEST(DesignCsv, RejectsMalformed) {
  std::stringstream missing("1,2\n3,4\n");
  EXPECT_THROW(read_design_csv(missing), Error);
  std::stringstream ragged("# 2,2\n1,2\n3\n");
  EXPECT_THROW(read_design_csv(ragged), Error);
}

TEST(SampleLatent, UniformSupport) {
  Rng rng(1);
  const LatentPrior p = LatentPrior::uniform(5);
  for (int i = 0; i < 1000; ++i) {
    const Vec z = sample_latent(p, rng);
    ASSERT_EQ(z.size(), 5);
    EXPECT_TRUE((z.array() >= 0.0).all() && (z.array() <= 1.0).all());
  }
}

TEST(SampleLatent, PointMass) {
  Rng rng(2);
  const LatentPrior p = LatentPrior::product(3, point_mass(0.5));
  EXPECT_EQ(sample_latent(p, rng), Vec::Constant(3, 0.5));
}

TEST(SampleLatent, TruncatedGaussianMean) {
  for (const auto& [mu, sd] : std::vector<std::pair<double, double>>{{0.5, 0.2}, {0.2, 0.3}, {0.9, 0.1}, {-0.3, 0.4}}) {
    const TruncatedGaussianMarginal m{mu, sd};
    const double oracle = truncated_normal_mean_oracle(mu, sd);
    EXPECT_NEAR(m.mean(), oracle, 1e-9);
    Rng rng(static_cast<std::uint64_t>(mu * 1000 + sd * 10));
    const LatentPrior p = LatentPrior::product(1, m);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = p.sample(rng)(0);
    const EstimateWithCI e = estimate_from_samples(xs);
    EXPECT_LE(std::fabs(e.mean - oracle), 3.0 * e.std_error) << "mu=" << mu << " sd=" << sd;
  }
}

TEST(SampleLatent, QuantileInvertsCdf) {
  const std::vector<Marginal> ms{UniformMarginal{}, TruncatedGaussianMarginal{0.4, 0.15},
                                 TruncatedGaussianMarginal{1.5, 0.2}};
  for (const auto& m : ms)
    for (int i = 1; i < 100; ++i) {
      const double x = i / 100.0;
      EXPECT_NEAR(marginal_quantile(m, marginal_cdf(m, x)), x, 1e-9);
    }
}

TEST(ConditionalCube, UniformCellMembership) {
  Rng rng(3);
  const LatentPrior p = LatentPrior::uniform(2);
  const Vec corner{{0.2, 0.2}};
  for (int i = 0; i < 5000; ++i) {
    const Vec z = conditional_cube_sample(p, corner, 0.1, rng);
    for (int j = 0; j < 2; ++j) {
      EXPECT_GE(z(j), 0.2);
      EXPECT_LT(z(j), 0.3);
    }
  }
}

TEST(ConditionalCube, FullCubeMatchesUnconditional) {
  const LatentPrior p = LatentPrior::product(2, TruncatedGaussianMarginal{0.3, 0.25});
  Rng a(77), b(78);
  std::vector<double> cond, uncond;
  for (int i = 0; i < 10000; ++i) {
    cond.push_back(conditional_cube_sample(p, Vec::Zero(2), 1.0, a)(0));
    uncond.push_back(sample_latent(p, b)(0));
  }
  EXPECT_LT(ks_two_sample(cond, uncond), ks_critical_value(0.01, cond.size(), uncond.size()));
}

TEST(ConditionalCube, EmptyMass) {
  Rng rng(4);
  const LatentPrior p = LatentPrior::product(2, point_mass(0.5));
  try {
    conditional_cube_sample(p, Vec::Constant(2, 0.6), 0.1, rng);
    FAIL() << "expected EmptyMass";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyMass);
  }
}

TEST(ConditionalCube, GridPartitionReproducesPrior) {
  // Marginalizing cube-conditional draws over a delta partition gives the prior.
  const LatentPrior p = LatentPrior::product(2, TruncatedGaussianMarginal{0.6, 0.2});
  Rng rng(9);
  const double delta = 0.2;
  std::vector<double> mixed, direct;
  for (int i = 0; i < 10000; ++i) {
    const Vec z = p.sample(rng);
    Vec corner(2);
    for (int j = 0; j < 2; ++j) corner(j) = std::min(std::floor(z(j) / delta), 4.0) * delta;
    mixed.push_back(p.conditional_cube_sample(corner, delta, rng)(1));
    direct.push_back(p.sample(rng)(1));
  }
  EXPECT_LT(ks_two_sample(mixed, direct), ks_critical_value(0.01, mixed.size(), direct.size()));
}

TEST(ConditionalCube, RejectionFallback) {
  const LatentPrior p = LatentPrior::from_sampler(2, [](Rng& r) {
    const double u = r.uniform();
    return Vec{{u, u}};
  });
  Rng rng(10);
  const Vec z = p.conditional_cube_sample(Vec{{0.25, 0.25}}, 0.25, rng);
  EXPECT_GE(z(0), 0.25);
  EXPECT_LT(z(0), 0.5);
  EXPECT_EQ(z(0), z(1));
  try {
    p.conditional_cube_sample(Vec{{0.0, 0.5}}, 0.25, rng);
    FAIL() << "expected EmptyMass";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyMass);
  }
}

TEST(ProkhorovPerturb, ZeroRadiusIsExact) {
  Rng rng(12);
  Mat m(4, 2);
  m << 1, 0, 0, 1, 0.5, 0.5, 2, -1;
  const DesignMatrix a(m);
  const Vec z{{0.3, 0.8}};
  EXPECT_EQ(prokhorov_perturb(a, z, ProkhorovKernel{}, rng), apply_design(a, z));
}

TEST(ProkhorovPerturb, SmallNoiseStaysInBall) {
  Rng rng(13);
  const DesignMatrix a(Mat::Identity(6, 6));
  const ProkhorovKernel k{0.01, 0.0, 1.0};
  for (int i = 0; i < 10000; ++i) {
    const Vec z = LatentPrior::uniform(6).sample(rng);
    EXPECT_LE(inf_norm(Vec(prokhorov_perturb(a, z, k, rng) - apply_design(a, z))), 0.01);
  }
}

TEST(ProkhorovPerturb, KernelValidation) {
  EXPECT_THROW((ProkhorovKernel{0.01, 0.02, 1.0}.validate()), Error);
  EXPECT_THROW((ProkhorovKernel{-0.1, 0.0, 1.0}.validate()), Error);
  EXPECT_EQ(ProkhorovKernel::for_design(DesignMatrix(Mat::Identity(3, 3) * 2.0), 0.1, 0.05).jump_cap, 2.0);
}

TEST(VerifyCoupling, Examples) {
  const DesignMatrix a(Mat::Identity(2, 2));
  const Vec z{{0.2, 0.4}};
  EXPECT_EQ(verify_coupling(a, {{z, z}, {z, z}}, 0.1), 0.0);
  EXPECT_EQ(verify_coupling(a, {{z, z + Vec{{0.2, 0.0}}}}, 0.1), 1.0);
  EXPECT_THROW(verify_coupling(a, {}, 0.1), Error);
}

TEST(VerifyCoupling, EmpiricalRateWithinBinomialBand) {
  Mat m(8, 3);
  Rng gen(14);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gen.uniform();
  const DesignMatrix a(m);
  for (double eps : {0.01, 0.05}) {
    Rng rng(static_cast<std::uint64_t>(eps * 1e4));
    const auto kernel = ProkhorovKernel::for_design(a, eps, eps);
    std::vector<CoupledPair> pairs;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) pairs.push_back(sample_coupled(a, LatentPrior::uniform(3), kernel, rng));
    // direct counting oracle
    std::size_t bad = 0;
    for (const auto& p : pairs) {
      const Mat az = naive_multiply_oracle(m, p.z);
      double worst = 0.0;
      for (int j = 0; j < 8; ++j) worst = std::max(worst, std::fabs(p.t(j) - az(j, 0)));
      bad += worst > eps;
    }
    const double rate = verify_coupling(a, pairs, eps);
    EXPECT_DOUBLE_EQ(rate, static_cast<double>(bad) / n);
    EXPECT_LE(rate, eps + 3.0 * binomial_sigma(eps, n));
  }
}
