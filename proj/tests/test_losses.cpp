#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "isolab/losses.hpp"
#include "isolab/optimize.hpp"
#include "test_util.hpp"

using namespace isolab;
using test::families;

namespace {

/// Independent evaluation of the projective loss on P^2(F_2): every invertible
/// 3x3 binary matrix, with restriction through the line [x : 0].
double projective_oracle_raw(const std::vector<double>& f, int d) {
  const std::vector<std::array<int, 3>> pts = {{0, 0, 1}, {0, 1, 0}, {0, 1, 1}, {1, 0, 0}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1}};
  auto index = [&](std::array<int, 3> v) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i] == v) return static_cast<int>(i);
    }
    return -1;
  };
  const std::vector<std::array<int, 3>> line = {{0, 1, 0}, {1, 0, 0}, {1, 1, 0}};
  std::vector<std::array<double, 3>> U;
  for (int bits = 0; bits < 512; ++bits) {
    int m[3][3];
    for (int k = 0; k < 9; ++k) m[k / 3][k % 3] = (bits >> k) & 1;
    const int det = (m[0][0] * (m[1][1] * m[2][2] + m[1][2] * m[2][1]) + m[0][1] * (m[1][0] * m[2][2] + m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] + m[1][1] * m[2][0])) %
                    2;
    if (!det) continue;
    std::array<double, 3> u{};
    for (int k = 0; k < 3; ++k) {
      std::array<int, 3> y{};
      for (int r = 0; r < 3; ++r) y[r] = (m[r][0] * line[k][0] + m[r][1] * line[k][1] + m[r][2] * line[k][2]) % 2;
      u[k] = f[index(y)];
    }
    U.push_back(u);
  }
  EXPECT_EQ(U.size(), 168u);
  double total = 0.0;
  for (const auto& a : U) {
    for (const auto& b : U) {
      total += std::pow(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], d) - 2 * std::pow(a[0] + a[1] + a[2], d) +
               std::pow(3.0, d);
    }
  }
  return total;
}

}  // namespace

TEST(ProjectiveLoss, ZeroFunctionAnchor) {
  const auto L = LossInstance::projective_target(2, 2, 8);
  const double expected = 42.0 * 42.0 * std::pow(3.0, 8);
  EXPECT_DOUBLE_EQ(expected, 11573604.0);
  EXPECT_NEAR(L.loss(Eigen::VectorXd::Zero(7)), expected, 1e-9 * expected);
}

TEST(ProjectiveLoss, ConstantOnesAreGlobalMinima) {
  const auto L = LossInstance::projective_target(2, 2, 8);
  EXPECT_NEAR(L.loss(Eigen::VectorXd::Ones(7)), 0.0, 1e-9 * 11573604.0);
  EXPECT_NEAR(L.loss(-Eigen::VectorXd::Ones(7)), 0.0, 1e-9 * 11573604.0);
  Eigen::VectorXd g;
  L.loss_grad(Eigen::VectorXd::Ones(7), g);
  EXPECT_LT(g.norm(), 1e-6);
}

TEST(ProjectiveLoss, RawSumIsStabilizerSquaredTimesDedup) {
  const auto dedup = LossInstance::projective_target(2, 2, 8, true);
  const auto raw = LossInstance::projective_target(2, 2, 8, false);
  for (std::uint64_t s = 1; s <= 100; ++s) {
    const Eigen::VectorXd f = random_start(7, s, 1.0);
    const double a = dedup.loss(f);
    const double b = raw.loss(f);
    EXPECT_NEAR(b, 16.0 * a, 1e-9 * std::abs(16.0 * a));
  }
  const auto dedup3 = LossInstance::projective_target(2, 3, 4, true);
  const auto raw3 = LossInstance::projective_target(2, 3, 4, false);
  const Eigen::VectorXd f = random_start(13, 5, 1.0);
  EXPECT_NEAR(raw3.loss(f), 18.0 * 18.0 * dedup3.loss(f), 1e-9 * std::abs(raw3.loss(f)));
}

TEST(ProjectiveLoss, MatchesBruteForceOracle) {
  const auto raw = LossInstance::projective_target(2, 2, 8, false);
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const Eigen::VectorXd f = random_start(7, 100 + s, 1.0);
    const double oracle = projective_oracle_raw(std::vector<double>(f.data(), f.data() + 7), 8);
    EXPECT_NEAR(raw.loss(f), oracle, 1e-10 * std::abs(oracle));
  }
}

TEST(ProjectiveLoss, FreeLossIsNonnegativeAtPositiveC) {
  // (f,f) alone has no constant target; at f = 0 it vanishes
  const auto L = LossInstance::projective_free(2, 2, InnerPowerPair{6, 4, 7.0});
  EXPECT_EQ(L.loss(Eigen::VectorXd::Zero(7)), 0.0);
  EXPECT_THROW(LossInstance::projective_free(2, 2, InnerPowerPair{6, 4, -1.0}), InvalidArgument);
}

TEST(OctahedralLoss, UniformCriticalValue) {
  const auto L = presets::octahedral();
  const double t = std::sqrt(14.0 / 3.0);  // <e,e'> at the uniform point
  const double v = std::sqrt(t / 2.0);
  const double expected = 576.0 * (14.0 / 3.0) * (14.0 / 3.0) * (-7.0 / 3.0);
  EXPECT_NEAR(expected, -29269.33, 5e-3);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(6, v);
  EXPECT_NEAR(L.loss(x), expected, 1e-9 * std::abs(expected));
  Eigen::VectorXd g;
  L.loss_grad(x, g);
  EXPECT_LT(g.norm(), 1e-8 * std::abs(expected));
}

TEST(ParticleLoss, GaugeFixedUniformValue) {
  const auto L = LossInstance::particle_pairs(4, InnerPowerPair{8, 3, 1.0}, true, true);
  const double r = std::pow(3.0 / 8.0, 0.1);
  Eigen::VectorXd x(7);
  x << r, r, 0, r, 0, r, 0;  // particle 0 carries only x; the rest are (x, y)
  const double expected = 16.0 * (std::pow(3.0 / 8.0, 1.6) - std::pow(3.0 / 8.0, 0.6));
  EXPECT_NEAR(expected, -5.5518, 1e-3);
  EXPECT_NEAR(L.loss(x), expected, 1e-12);
  Eigen::VectorXd g;
  L.loss_grad(x, g);
  EXPECT_LT(g.norm(), 1e-12);
}

TEST(ParticleLoss, RepulsiveClosedForm) {
  // min over a of 16 a^2 + 10 / a^2 is 2 sqrt(160) at a^4 = 10/16
  const double a = std::pow(10.0 / 16.0, 0.25);
  const double closed = 2.0 * std::sqrt(160.0);
  EXPECT_NEAR(16 * a * a + 10 / (a * a), closed, 1e-12);
  EXPECT_NEAR(closed, 25.298, 1e-3);
  for (double s : {0.9, 0.99, 1.01, 1.1}) EXPECT_GT(16 * a * a * s * s + 10 / (a * a * s * s), closed);
}

TEST(ParticleLoss, RepulsiveKernelRules) {
  const auto L = LossInstance::particle_pairs(2, Repulsive{});
  Eigen::VectorXd x(4);
  x << 0, 0, 1, 0;
  EXPECT_NEAR(L.loss(x), 2 * (1.0 + 1.0), 1e-15);  // diagonal pairs contribute 0
  x << 0, 0, 1e-13, 0;
  EXPECT_THROW(L.loss(x), NearSingularity);
}

TEST(ParticleLoss, DiagonalToggle) {
  const Kernel k = DistancePower{2, 1, 1.0};
  const auto with = LossInstance::particle_pairs(3, k, true);
  const auto without = LossInstance::particle_pairs(3, k, false);
  const Eigen::VectorXd x = random_start(6, 9, 1.0);
  // distance kernels vanish on the diagonal
  EXPECT_NEAR(with.loss(x), without.loss(x), 1e-12);
  const Kernel ip = InnerPower{2};
  const auto ipw = LossInstance::particle_pairs(3, ip, true);
  const auto ipo = LossInstance::particle_pairs(3, ip, false);
  double diag = 0.0;
  for (int i = 0; i < 3; ++i) diag += std::pow(x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1], 2);
  EXPECT_NEAR(ipw.loss(x) - ipo.loss(x), diag, 1e-12);
}

TEST(GraphLoss, RandomPolyExperimentOneHandSummed) {
  std::ifstream in(test::source_dir() / "data" / "random_poly" / "exp1.json");
  ASSERT_TRUE(in);
  const auto j = nlohmann::json::parse(in);
  std::vector<Monomial> terms;
  for (const auto& t : j["terms"]) terms.push_back({t[0].get<double>(), t[1].get<std::array<int, 4>>()});
  ASSERT_EQ(terms.size(), 30u);
  const auto L = LossInstance::graph_edge_pairs(6, presets::perfect_matching_edges(), SparsePoly(terms));
  const std::vector<double> v = {0.68269, 0.28440, 0.68269, 0.68269, 0.53480, 0.68269};
  const std::vector<std::pair<int, int>> dir = {{0, 3}, {3, 0}, {1, 4}, {4, 1}, {2, 5}, {5, 2}};
  double hand = 0.0;
  for (auto [i, j2] : dir) {
    for (auto [k, l] : dir) {
      const double z[4] = {v[i], v[j2], v[k], v[l]};
      for (const auto& m : terms) {
        double p = m.coeff;
        for (int s = 0; s < 4; ++s) p *= std::pow(z[s], m.exps[s]);
        hand += p;
      }
    }
  }
  EXPECT_NEAR(L.loss(Eigen::Map<const Eigen::VectorXd>(v.data(), 6)), hand, 1e-10 * (1 + std::abs(hand)));
}

TEST(GraphLoss, RejectsSelfLoops) {
  EXPECT_THROW(LossInstance::graph_edge_pairs(3, {{0, 0}}, InnerPower{2}), InvalidArgument);
}

TEST(Kernels, SparsePolyMergesRepeats) {
  SparsePoly p(std::vector<Monomial>{{1.0, {1, 0, 0, 0}}, {2.0, {0, 1, 0, 0}}, {0.5, {1, 0, 0, 0}}});
  ASSERT_EQ(p.terms.size(), 2u);
  EXPECT_DOUBLE_EQ(p.terms[0].coeff, 1.5);
  EXPECT_THROW(SparsePoly(std::vector<Monomial>{{1.0, {-1, 0, 0, 0}}}), InvalidArgument);
}

TEST(Kernels, RandomSparsePolyIsBoundedBelow) {
  EXPECT_EQ(sparse_poly_pool().size(), 44u);
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const Kernel k = random_sparse_poly(s, 12);
    const auto& p = std::get<SparsePoly>(k);
    EXPECT_EQ(p.terms.size(), 12u);
    int quartics = 0;
    for (const auto& m : p.terms) {
      const int deg = m.exps[0] + m.exps[1] + m.exps[2] + m.exps[3];
      if (deg == 4) {
        EXPECT_GT(m.coeff, 0.0);
      }
      quartics += std::count(m.exps.begin(), m.exps.end(), 4);
    }
    EXPECT_EQ(quartics, 4);
    // far from the origin the positive quartic dominates
    SplitMix64 rng(s);
    for (int t = 0; t < 50; ++t) {
      std::array<double, 4> z;
      for (double& c : z) c = rng.normal();
      const double n = std::sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + z[3] * z[3]);
      std::array<double, 2> a{1e7 * z[0] / n, 1e7 * z[1] / n}, b{1e7 * z[2] / n, 1e7 * z[3] / n};
      EXPECT_GT(eval(k, a, b), 0.0);
    }
  }
  EXPECT_THROW(random_sparse_poly(1, 3), InvalidArgument);
  EXPECT_THROW(random_sparse_poly(1, 45), InvalidArgument);
}

TEST(Kernels, ClosedForms) {
  const std::array<double, 2> a{1.0, 2.0}, b{3.0, -1.0};
  EXPECT_DOUBLE_EQ(eval(InnerPower{3}, a, b), 1.0);
  EXPECT_DOUBLE_EQ(eval(InnerPowerPair{2, 1, 3.0}, a, b), 1.0 - 3.0);
  EXPECT_DOUBLE_EQ(eval(DistancePower{2, 1, 1.0}, a, b), 13.0 * 13.0 - 13.0);
  EXPECT_DOUBLE_EQ(eval(Repulsive{}, a, b), 13.0 + 1.0 / 13.0);
  EXPECT_DOUBLE_EQ(eval(Repulsive{}, a, a), 0.0);
}

// property: invariance under 100 random ambient elements
TEST(LossProperties, InvariantUnderAmbientGroup) {
  for (const auto& fam : families()) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const Eigen::VectorXd x = random_start(fam.inst.dimension(), s, fam.scale);
      EXPECT_LT(invariance_check(fam.inst, x, 100, s), 1e-9) << fam.name;
    }
  }
}

// property: analytic derivatives against central differences on 10^3 points
TEST(LossProperties, DerivativesMatchFiniteDifferences) {
  for (const auto& fam : families()) {
    double worst_g = 0.0, worst_h = 0.0;
    for (std::uint64_t s = 1; s <= 1000; ++s) {
      const Eigen::VectorXd x = random_start(fam.inst.dimension(), 7919 * s, fam.scale);
      const auto e = test::finite_difference_error(fam.inst, x);
      worst_g = std::max(worst_g, e.grad);
      worst_h = std::max(worst_h, e.hess);
    }
    EXPECT_LT(worst_g, 1e-6) << fam.name;
    EXPECT_LT(worst_h, 1e-6) << fam.name;
  }
}

TEST(LossProperties, HessianIsSymmetricAndConsistent) {
  for (const auto& fam : families()) {
    const Eigen::VectorXd x = random_start(fam.inst.dimension(), 3, fam.scale);
    Eigen::VectorXd g1, g2;
    Eigen::MatrixXd H;
    const double f0 = fam.inst.loss(x);
    const double f1 = fam.inst.loss_grad(x, g1);
    const double f2 = fam.inst.loss_grad_hess(x, g2, H);
    EXPECT_DOUBLE_EQ(f0, f1) << fam.name;
    EXPECT_NEAR(f1, f2, 1e-12 * (1 + std::abs(f0))) << fam.name;
    EXPECT_LT((g1 - g2).cwiseAbs().maxCoeff(), 1e-9 * (1 + g1.cwiseAbs().maxCoeff())) << fam.name;
    EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-9 * (1 + H.cwiseAbs().maxCoeff())) << fam.name;
  }
}

TEST(LossInstance, DimensionMismatchThrows) {
  const auto L = presets::octahedral();
  EXPECT_THROW(L.loss(Eigen::VectorXd::Zero(5)), InvalidArgument);
  const auto P = LossInstance::particle_pairs(3, Repulsive{}, true, true);
  EXPECT_EQ(P.dimension(), 5u);
  EXPECT_THROW(P.act(Permutation({1, 0, 2}), Eigen::VectorXd::Ones(5)), InvalidArgument);
}
