#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "esad/losses.hpp"
#include "esad/model.hpp"

using namespace esad;

TEST(Phi, PermutationSwapsTwoCoordinates) {
  PhiConfig cfg;
  cfg.permutation = {1, 0};
  EXPECT_EQ(phi_apply(cfg, Vector{3.0, 7.0}), (Vector{7.0, 3.0}));
}

TEST(Phi, RandomPermutationIsDerangement) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (std::size_t d : {2u, 3u, 6u, 21u}) {
      const auto cfg = PhiConfig::random_permutation(d, seed);
      ASSERT_EQ(cfg.permutation.size(), d);
      std::set<std::size_t> seen(cfg.permutation.begin(), cfg.permutation.end());
      EXPECT_EQ(seen.size(), d);
      for (std::size_t i = 0; i < d; ++i) EXPECT_NE(cfg.permutation[i], i);
    }
  }
}

TEST(Phi, NeverFixesDistinctCoordinateVectors) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> dim(2, 12);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = dim(rng);
    const auto cfg = PhiConfig::random_permutation(d, static_cast<std::uint64_t>(t));
    Vector x(d);
    std::set<double> distinct;
    do {
      distinct.clear();
      for (auto& v : x) distinct.insert(v = g(rng));
    } while (distinct.size() != d);
    EXPECT_NE(phi_apply(cfg, x), x);
  }
}

TEST(Phi, PermutationNeedsTwoDims) {
  EXPECT_THROW(PhiConfig::random_permutation(1, 0), ConfigError);
  PhiConfig cfg = PhiConfig::random_permutation(3, 0);
  EXPECT_THROW(cfg.validate(4), ConfigError);
}

TEST(Phi, GaussianNoiseIsReproducible) {
  const auto cfg = PhiConfig::gaussian_noise(0.5, 9);
  const Vector x{1.0, 2.0, 3.0};
  const auto a = phi_apply(cfg, x, 17);
  const auto b = phi_apply(cfg, x, 17);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, x);
  EXPECT_NE(phi_apply(cfg, x, 18), a);
  EXPECT_THROW(PhiConfig::gaussian_noise(0.0, 1).validate(3), ConfigError);
}

TEST(Phi, NoiseHasRequestedScale) {
  const auto cfg = PhiConfig::gaussian_noise(0.5, 3);
  const Vector x(10, 0.0);
  double s = 0.0, s2 = 0.0;
  const int n = 4000;
  for (int k = 0; k < n; ++k) {
    for (double v : phi_apply(cfg, x, static_cast<std::uint64_t>(k))) {
      s += v;
      s2 += v * v;
    }
  }
  const double count = 10.0 * n;
  EXPECT_NEAR(s / count, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(s2 / count), 0.5, 0.02);
}

TEST(Target, IdentityUnlessLabeledAnomaly) {
  PhiConfig cfg;
  cfg.permutation = {1, 0};
  const Vector x{3.0, 7.0};
  EXPECT_EQ(reconstruction_target(cfg, SemiLabel::Unlabeled, x), x);
  EXPECT_EQ(reconstruction_target(cfg, SemiLabel::LabeledNormal, x), x);
  EXPECT_EQ(reconstruction_target(cfg, SemiLabel::LabeledAnomalous, x), (Vector{7.0, 3.0}));
}

TEST(RecSemi, Examples) {
  PhiConfig cfg;
  cfg.permutation = {1, 0};
  const Vector x{1.0, 0.0}, zero{0.0, 0.0};
  std::vector<RecSample> perfect{{x, x, SemiLabel::Unlabeled}, {zero, zero, SemiLabel::Unlabeled}};
  EXPECT_EQ(loss_rec_semi(perfect, cfg), 0.0);

  std::vector<RecSample> one{{x, zero, SemiLabel::Unlabeled}};
  EXPECT_EQ(loss_rec_semi(one, cfg), 1.0);

  const Vector a{3.0, 7.0}, a_phi{7.0, 3.0};
  std::vector<RecSample> anomaly{{a, a_phi, SemiLabel::LabeledAnomalous}};
  EXPECT_EQ(loss_rec_semi(anomaly, cfg), 0.0);
}

TEST(RecSemi, GroupsAveragedSeparately) {
  PhiConfig cfg;
  cfg.permutation = {1, 0};
  const Vector zero{0.0, 0.0}, one{1.0, 0.0}, two{2.0, 0.0};
  // unlabeled errors 1 and 4 -> 2.5; labeled normal error 1 -> 1
  std::vector<RecSample> batch{{one, zero, SemiLabel::Unlabeled},
                               {two, zero, SemiLabel::Unlabeled},
                               {one, zero, SemiLabel::LabeledNormal}};
  EXPECT_DOUBLE_EQ(loss_rec_semi(batch, cfg), 3.5);
}

TEST(NormSemi, Examples) {
  const Vector z{3.0, 4.0}, zero{0.0, 0.0};
  std::vector<LatentSample> u{{z, SemiLabel::Unlabeled}};
  EXPECT_DOUBLE_EQ(loss_norm_semi(u), 5.0);
  std::vector<LatentSample> a{{z, SemiLabel::LabeledAnomalous}};
  EXPECT_DOUBLE_EQ(loss_norm_semi(a, 0.0), 0.2);
  std::vector<LatentSample> n0{{zero, SemiLabel::LabeledNormal}};
  EXPECT_EQ(loss_norm_semi(n0), 0.0);
  std::vector<LatentSample> a0{{zero, SemiLabel::LabeledAnomalous}};
  EXPECT_NEAR(loss_norm_semi(a0, 1e-6), 1e6, 1e-6);
}

TEST(NormSemi, MonotoneInNorm) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Vector z(4);
    for (auto& v : z) v = g(rng);
    Vector zt = z;
    const double scale = 1.0 + std::abs(g(rng)) + 1e-3;
    for (auto& v : zt) v *= scale;
    std::vector<LatentSample> a{{z, SemiLabel::LabeledAnomalous}}, at{{zt, SemiLabel::LabeledAnomalous}};
    std::vector<LatentSample> u{{z, SemiLabel::Unlabeled}}, ut{{zt, SemiLabel::Unlabeled}};
    EXPECT_LT(loss_norm_semi(at), loss_norm_semi(a));
    EXPECT_GT(loss_norm_semi(ut), loss_norm_semi(u));
  }
}

TEST(Ass, Examples) {
  const Vector a{1.0, 0.0}, b{0.0, 1.0};
  std::vector<LatentPair> same{{a, a}, {b, b}};
  EXPECT_EQ(loss_ass(same), 0.0);
  std::vector<LatentPair> one{{a, b}};
  EXPECT_EQ(loss_ass(one), 2.0);
  std::vector<LatentPair> two{{a, b}, {a, a}};
  EXPECT_EQ(loss_ass(two), 1.0);
}

TEST(Ass, SymmetricAndShapeChecked) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vector> zs(6, Vector(3)), hs(6, Vector(3));
  for (auto& v : zs) for (auto& x : v) x = g(rng);
  for (auto& v : hs) for (auto& x : v) x = g(rng);
  std::vector<LatentPair> p, q;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    p.push_back({zs[i], hs[i]});
    q.push_back({hs[i], zs[i]});
  }
  EXPECT_EQ(loss_ass(p), loss_ass(q));
  const Vector short_v{1.0};
  std::vector<LatentPair> bad{{zs[0], short_v}};
  EXPECT_THROW(loss_ass(bad), ShapeError);
}

TEST(Total, Examples) {
  EXPECT_EQ(loss_total(1.0, 2.0, 3.0), 6.0);
  EXPECT_EQ(loss_total(1.5, 2.0, 3.0, 0.0, 0.0), 1.5);
  EXPECT_EQ(loss_total(1.0, 2.0, 3.0, 0.5, 2.0), 8.0);
  ObjectiveConfig cfg;
  EXPECT_EQ(cfg.lambda1, 1.0);
  EXPECT_EQ(cfg.lambda2, 1.0);
  EXPECT_EQ(cfg.epsilon, 1e-6);
}

TEST(SadRec, Examples) {
  const Vector x{1.0, 2.0}, err{3.0, 2.0};
  std::vector<ReconPair> same{{x, x}};
  EXPECT_EQ(loss_sad_rec(same), 0.0);
  std::vector<ReconPair> one{{x, err}};
  EXPECT_EQ(loss_sad_rec(one), 4.0);
}

TEST(SadRec, CoincidesWithRecSemiOnUnlabeled) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vector> xs(7, Vector(4)), hs(7, Vector(4));
  for (auto& v : xs) for (auto& x : v) x = g(rng);
  for (auto& v : hs) for (auto& x : v) x = g(rng);
  std::vector<ReconPair> pairs;
  std::vector<RecSample> recs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    pairs.push_back({xs[i], hs[i]});
    recs.push_back({xs[i], hs[i], SemiLabel::Unlabeled});
  }
  EXPECT_NEAR(loss_sad_rec(pairs), loss_rec_semi(recs, PhiConfig{}), 1e-14);
}

TEST(Svdd, Examples) {
  SvddState state;
  state.center = {1.0, 1.0};
  const Vector c{1.0, 1.0}, far{1.0, 3.0};
  std::vector<LatentSample> at_center{{c, SemiLabel::Unlabeled}, {c, SemiLabel::Unlabeled}};
  EXPECT_EQ(loss_svdd(at_center, state), 0.0);
  std::vector<LatentSample> anomaly{{far, SemiLabel::LabeledAnomalous}};
  EXPECT_DOUBLE_EQ(loss_svdd(anomaly, state, 0.0), 0.5);
  EXPECT_EQ(state.eta, 1.0);
}

TEST(Svdd, UnsetCenterThrows) {
  const Vector z{1.0};
  std::vector<LatentSample> b{{z, SemiLabel::Unlabeled}};
  EXPECT_THROW(loss_svdd(b, SvddState{}), std::logic_error);
}

TEST(Svdd, CenterIsMean) {
  std::vector<Vector> enc{{1.0, 2.0}, {3.0, -2.0}, {5.0, 3.0}};
  const auto c = svdd_center(enc);
  EXPECT_DOUBLE_EQ(c[0], 3.0);
  EXPECT_DOUBLE_EQ(c[1], 1.0);
}

TEST(Objective, MatchesValueOnlyLosses) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 9;
  std::vector<Vector> x(n, Vector(4)), z(n, Vector(2)), xh(n, Vector(4)), zh(n, Vector(2));
  for (auto* set : {&x, &z, &xh, &zh}) for (auto& v : *set) for (auto& e : v) e = g(rng);
  const SemiLabel tags[] = {SemiLabel::Unlabeled, SemiLabel::LabeledNormal, SemiLabel::LabeledAnomalous};
  ObjectiveConfig cfg;
  cfg.lambda1 = 0.7;
  cfg.lambda2 = 1.3;
  cfg.phi = PhiConfig::random_permutation(4, 1);
  std::vector<PipelineSample> batch;
  std::vector<RecSample> rec;
  std::vector<LatentSample> lat;
  std::vector<LatentPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back({x[i], z[i], xh[i], zh[i], tags[i % 3], i});
    rec.push_back({x[i], xh[i], tags[i % 3], i});
    lat.push_back({zh[i], tags[i % 3]});
    pairs.push_back({z[i], zh[i]});
  }
  const auto l = esad_objective(batch, cfg, nullptr);
  EXPECT_NEAR(l.rec, loss_rec_semi(rec, cfg.phi), 1e-12);
  EXPECT_NEAR(l.norm, loss_norm_semi(lat, cfg.epsilon), 1e-12);
  EXPECT_NEAR(l.ass, loss_ass(pairs), 1e-12);
  EXPECT_EQ(l.total, loss_total(l.rec, l.norm, l.ass, 0.7, 1.3));
  EXPECT_EQ(l.lambda1, 0.7);
  EXPECT_EQ(l.lambda2, 1.3);
}

TEST(Objective, RecGradientVanishesAtTarget) {
  ObjectiveConfig cfg;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  cfg.phi.permutation = {1, 0};
  const Vector x{3.0, 7.0}, target{7.0, 3.0}, z{0.1, 0.2};
  std::vector<PipelineSample> batch{{x, z, target, z, SemiLabel::LabeledAnomalous, 0},
                                    {x, z, x, z, SemiLabel::Unlabeled, 1}};
  std::vector<PipelineSampleGrads> g;
  const auto l = esad_objective(batch, cfg, &g);
  EXPECT_EQ(l.rec, 0.0);
  for (const auto& s : g) {
    for (double v : s.x_hat) EXPECT_EQ(v, 0.0);
  }
}

TEST(Objective, FiniteAndNonNegativeOnRandomBatches) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 5.0);
  std::uniform_int_distribution<int> tag(0, 2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 7);
    std::vector<Vector> x(n, Vector(3)), z(n, Vector(2)), xh(n, Vector(3)), zh(n, Vector(2));
    for (auto* set : {&x, &z, &xh, &zh}) for (auto& v : *set) for (auto& e : v) e = g(rng);
    if (t % 5 == 0) zh[0] = Vector(2, 0.0);
    ObjectiveConfig cfg;
    cfg.phi = PhiConfig::random_permutation(3, static_cast<std::uint64_t>(t));
    std::vector<PipelineSample> batch;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back({x[i], z[i], xh[i], zh[i], static_cast<SemiLabel>(tag(rng)), i});
    }
    std::vector<PipelineSampleGrads> grads;
    const auto l = esad_objective(batch, cfg, &grads);
    EXPECT_TRUE(l.all_finite());
    EXPECT_GE(l.rec, 0.0);
    EXPECT_GE(l.norm, 0.0);
    EXPECT_GE(l.ass, 0.0);
    for (const auto& s : grads) {
      for (const auto* v : {&s.z, &s.x_hat, &s.z_hat}) {
        for (double e : *v) EXPECT_TRUE(std::isfinite(e));
      }
    }
  }
}

TEST(Objective, SampleGradientsMatchFiniteDifference) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 6;
  std::vector<Vector> x(n, Vector(3)), z(n, Vector(2)), xh(n, Vector(3)), zh(n, Vector(2));
  for (auto* set : {&x, &z, &xh, &zh}) for (auto& v : *set) for (auto& e : v) e = g(rng);
  ObjectiveConfig cfg;
  cfg.lambda1 = 0.8;
  cfg.lambda2 = 1.7;
  cfg.phi = PhiConfig::gaussian_noise(0.5, 3);
  auto eval = [&] {
    std::vector<PipelineSample> batch;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back({x[i], z[i], xh[i], zh[i], static_cast<SemiLabel>(i % 3), i});
    }
    return batch;
  };
  std::vector<PipelineSampleGrads> grads;
  esad_objective(eval(), cfg, &grads);
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> analytic;
  for (std::size_t i = 0; i < n; ++i) {
    params.push_back(z[i]);
    analytic.push_back(grads[i].z);
    params.push_back(xh[i]);
    analytic.push_back(grads[i].x_hat);
    params.push_back(zh[i]);
    analytic.push_back(grads[i].z_hat);
  }
  const auto rep = grad_check(params, analytic, [&] { return esad_objective(eval(), cfg, nullptr).total; });
  EXPECT_TRUE(rep.passed()) << rep.max_rel_error;
}
