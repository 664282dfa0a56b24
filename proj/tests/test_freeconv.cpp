#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ckde/freeconv.hpp"
#include "ckde/measures.hpp"

using namespace ckde;

namespace {

Measure random_base(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> u(0.0, 4.0), w(0.1, 1.0);
  std::vector<double> a(k), p(k);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    a[i] = u(rng);
    p[i] = w(rng);
    s += p[i];
  }
  double rest = 1.0;
  for (int i = 0; i + 1 < k; ++i) {
    p[i] /= s;
    rest -= p[i];
  }
  p[k - 1] = rest;
  return Measure::discrete(DiscreteMeasure::make(a, p));
}

double residual(const Measure& mu, double gamma, cplx z, cplx l) {
  return std::abs(l - z - gamma * l - gamma * l * l * stieltjes(mu, l));
}

}  // namespace

TEST(ContractionConstant, Values) {
  EXPECT_DOUBLE_EQ(contraction_constant(cplx(0.0, 1.0)), 0.5);
  EXPECT_LT(contraction_constant(cplx(0.0, 1e6)), 1e-5);
  for (cplx z : {cplx(5.0, 1e-4), cplx(-3.0, 0.2), cplx(0.0, 1e-8)}) {
    EXPECT_LT(contraction_constant(z), 1.0);
    EXPECT_GT(contraction_constant(z), 0.0);
  }
  EXPECT_THROW(contraction_constant(cplx(1.0, 0.0)), DomainError);
}

TEST(MpClosedForm, QuadraticRootInUpperHalfPlane) {
  const cplx z(0.0, 1.0);
  const cplx g = mp_stieltjes_closed(1.0, z);
  EXPECT_GT(g.imag(), 0.0);
  EXPECT_LT(std::abs(1.0 * z * g * g + (z + 1.0 - 1.0) * g + 1.0), 1e-14);
  // mpmath root of the same quadratic.
  EXPECT_NEAR(g.real(), 0.300242590220120419158909820750, 1e-14);
  EXPECT_NEAR(g.imag(), 0.624810533843826586879604447443, 1e-14);
  // The other root is in the lower half-plane.
  const cplx other = -(z + 1.0 - 1.0) / (1.0 * z) - g;
  EXPECT_LT(other.imag(), 0.0);
}

TEST(MpClosedForm, TailBehaviour) {
  for (double gamma : {0.2, 1.0, 3.0}) {
    const cplx z(0.0, 1e3);
    EXPECT_LT(std::abs(mp_stieltjes_closed(gamma, z) + 1.0 / z), 10.0 / std::norm(z));
  }
}

TEST(SolveL, DiracAtZeroGivesIdentity) {
  for (double gamma : {0.3, 1.0, 2.5})
    for (cplx z : {cplx(1.0, 1.0), cplx(-2.0, 0.01)}) {
      const auto s = solve_l(Measure::dirac(0.0), gamma, z);
      EXPECT_LT(std::abs(s.l - z), 1e-12 * std::abs(z));
      EXPECT_LT(std::abs(mp_boxtimes_stieltjes(Measure::dirac(0.0), gamma, z) + 1.0 / z), 1e-12);
    }
}

TEST(SolveL, MarchenkoPasturAtI) {
  const cplx z(0.0, 1.0);
  const auto s = solve_l(Measure::dirac(1.0), 1.0, z);
  EXPECT_LT(std::abs(-1.0 / s.l - mp_stieltjes_closed(1.0, z)), 1e-10);
  EXPECT_LT(s.residual, 1e-12 * std::max(1.0, std::abs(s.l)));
}

TEST(SolveL, ScaledMarchenkoPastur) {
  const cplx z(1.0, 1.0);
  const cplx g = mp_boxtimes_stieltjes(Measure::dirac(2.0), 0.5, z);
  EXPECT_LT(std::abs(g - mp_stieltjes_closed(0.5, z / 2.0) / 2.0), 1e-10);
  // Frozen mpmath value of g_{MP(1/2)}(z/2)/2.
  EXPECT_NEAR(g.real(), 0.137550338458829168528540154145, 1e-10);
  EXPECT_NEAR(g.imag(), 0.556346863849269920942356419911, 1e-10);
  EXPECT_GT(g.imag(), 0.0);
}

TEST(SolveL, AgreesWithClosedFormOnGrid) {
  for (double gamma : {0.25, 1.0, 4.0})
    for (int k = 0; k < 20; ++k) {
      const cplx z(-2.0 + 8.0 * k / 19.0, 0.05 + 0.1 * (k % 4));
      EXPECT_LT(std::abs(mp_boxtimes_stieltjes(Measure::dirac(1.0), gamma, z) - mp_stieltjes_closed(gamma, z)), 1e-10)
          << "gamma=" << gamma << " z=" << z;
    }
}

TEST(SolveL, CertificateAndDomainInvariants) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> re(-3.0, 8.0), lim(-3.0, 1.0), lg(-1.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const Measure mu = random_base(rng, 1 + trial % 5);
    const double gamma = std::pow(10.0, lg(rng));
    const cplx z(re(rng), std::pow(10.0, lim(rng)));
    const auto s = solve_l(mu, gamma, z);
    EXPECT_GE(s.l.imag(), z.imag() * (1.0 - 1e-12));
    EXPECT_GE((s.l / z).imag(), -1e-10);
    EXPECT_LE(s.residual, 1e-12 * std::max(1.0, std::abs(s.l)));
    // The stored residual is the residual of the stored value.
    EXPECT_NEAR(residual(mu, gamma, z, s.l), s.residual, 1e-13 * std::max(1.0, std::abs(s.l)));
  }
}

TEST(SolveL, UniqueFixedPointFromTwoStarts) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> re(-2.0, 6.0), lim(-2.0, 1.0), lg(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const Measure mu = random_base(rng, 3);
    const double gamma = std::pow(10.0, lg(rng));
    const cplx z(re(rng), std::pow(10.0, lim(rng)));
    const cplx rot = cplx(1.0, 1.0) / std::abs(cplx(1.0, 1.0));
    const cplx alt = detail::project_domain(z * (1.0 + gamma) * rot, z);
    ASSERT_TRUE(detail::in_domain(alt, z));
    const auto a = solve_l(mu, gamma, z);
    const auto b = solve_l(mu, gamma, z, {}, alt);
    EXPECT_LT(std::abs(a.l - b.l), 10.0 * 1e-12 * std::max(1.0, std::abs(a.l)));
  }
}

TEST(SolveL, PicardOnlyModeConverges) {
  FixedPointConfig cfg;
  cfg.newton = false;
  cfg.max_iter = 200000;
  const Measure mu = Measure::discrete(DiscreteMeasure::make({0.5, 2.0}, {0.5, 0.5}));
  for (cplx z : {cplx(1.0, 1.0), cplx(0.3, 0.2), cplx(-1.0, 0.5)}) {
    const auto p = solve_l(mu, 0.7, z, cfg);
    const auto n = solve_l(mu, 0.7, z);
    EXPECT_LT(std::abs(p.l - n.l), 1e-10);
    EXPECT_GT(p.iterations, n.iterations);
  }
}

TEST(SolveL, ProjectionKeepsIteratesInDomain) {
  const cplx z(0.5, 0.3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const cplx w(u(rng), u(rng));
    EXPECT_TRUE(detail::in_domain(detail::project_domain(w, z), z)) << w;
  }
}

TEST(SolveL, NearRealAxis) {
  const Measure mu = Measure::dirac(1.0);
  for (double x : {0.0, 0.5, 1.0, 2.0, 3.99, 4.0, 4.5})
    for (double eta : {1e-4, 1e-6}) {
      const cplx z(x, eta);
      EXPECT_LT(std::abs(mp_boxtimes_stieltjes(mu, 1.0, z) - mp_stieltjes_closed(1.0, z)), 1e-9) << z;
    }
}

TEST(SolveL, Errors) {
  EXPECT_THROW(solve_l(Measure::dirac(-1.0), 1.0, cplx(0.0, 1.0)), DomainError);
  EXPECT_THROW(solve_l(Measure::dirac(1.0), 1.0, cplx(0.0, 0.0)), DomainError);
  EXPECT_THROW(solve_l(Measure::dirac(1.0), 0.0, cplx(0.0, 1.0)), DomainError);
  FixedPointConfig cfg;
  cfg.max_iter = 1;
  cfg.newton = false;
  try {
    solve_l(Measure::discrete(DiscreteMeasure::make({0.5, 3.0}, {0.5, 0.5})), 1.0, cplx(1.0, 0.01), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
    EXPECT_GE(e.iterations(), 1);
  }
  FixedPointConfig bad;
  bad.damping = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = {};
  bad.tol = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Regularity, StableUnderPerturbation) {
  // mu2 moves the atoms of mu1 by eps; the convolved transforms move by C(z) eps.
  const std::vector<double> atoms{0.5, 1.2, 3.0};
  const std::vector<double> w{0.3, 0.3, 0.4};
  const Measure mu1 = Measure::discrete(DiscreteMeasure::make(atoms, w));
  const std::vector<cplx> zs{cplx(0.5, 0.5), cplx(2.0, 0.2), cplx(-1.0, 1.0), cplx(4.0, 0.1)};
  for (const cplx& z : zs) {
    std::vector<double> ratios;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
      std::vector<double> moved = atoms;
      for (double& a : moved) a += eps;
      const Measure mu2 = Measure::discrete(DiscreteMeasure::make(moved, w));
      double dmu = 0.0;
      for (const cplx& y : zs) dmu = std::max(dmu, std::abs(stieltjes(mu1, y) - stieltjes(mu2, y)));
      const double dnu = std::abs(mp_boxtimes_stieltjes(mu1, 0.8, z) - mp_boxtimes_stieltjes(mu2, 0.8, z));
      ratios.push_back(dnu / dmu);
    }
    const double mx = *std::max_element(ratios.begin(), ratios.end());
    const double mn = *std::min_element(ratios.begin(), ratios.end());
    EXPECT_TRUE(std::isfinite(mx));
    EXPECT_LT(mx / mn, 3.0) << z;
  }
}
