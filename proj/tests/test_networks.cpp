#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "iqn/grad_check.hpp"
#include "iqn/losses.hpp"
#include "iqn/networks.hpp"

using namespace iqn;

namespace {

ArchitectureSpec small_spec(std::size_t state_dim = 3, std::size_t actions = 2) {
  ArchitectureSpec s;
  s.state_dim = state_dim;
  s.psi_hidden = {8};
  s.feature_dim = 6;
  s.embedding_dim = 6;
  s.action_count = actions;
  return s;
}

Tensor random_states(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor s({rows, dim});
  for (double& v : s.data()) v = rng.uniform(-1, 1);
  return s;
}

void zero_all(TensorMap& params) {
  for (auto& [name, t] : params) std::fill(t.data().begin(), t.data().end(), 0.0);
}

// Z[b, t, a] of an iqn_forward result.
double z_at(const Tensor& z, std::size_t b, std::size_t t, std::size_t a) {
  return z.data()[(b * z.shape()[1] + t) * z.shape()[2] + a];
}

}  // namespace

TEST(Architecture, HeadInputDimension) {
  auto s = small_spec();
  EXPECT_EQ(s.head_input_dim(), 6u);
  s.merge = MergeKind::kConcat;
  EXPECT_EQ(s.head_input_dim(), 12u);
  s.merge = MergeKind::kResidual;
  EXPECT_EQ(s.head_input_dim(), 6u);
}

TEST(Architecture, RejectsZeroSizes) {
  Rng rng(1);
  auto s = small_spec();
  s.embedding_dim = 0;
  EXPECT_THROW(IqnNetwork(s, rng), ConfigError);
  s = small_spec();
  s.psi_hidden = {4, 0};
  EXPECT_THROW(IqnNetwork(s, rng), ConfigError);
  EXPECT_THROW(QrNetwork(small_spec(), 0, rng), ConfigError);
}

TEST(Architecture, ParseNames) {
  EXPECT_EQ(parse_merge("concatenate"), MergeKind::kConcat);
  EXPECT_EQ(parse_embedding("mlp"), EmbeddingKind::kLearnedMlp);
  EXPECT_EQ(parse_nonlinearity("sigmoid"), Nonlinearity::kSigmoid);
  EXPECT_THROW(parse_merge("sum"), ConfigError);
  EXPECT_THROW(parse_embedding("fourier"), ConfigError);
}

TEST(IqnNetworkTest, ParameterShapes) {
  Rng rng(2);
  auto s = small_spec();
  IqnNetwork net(s, rng);
  const auto& p = net.parameters();
  EXPECT_EQ(p.at("phi.w").shape(), (Shape{6, 6}));
  EXPECT_EQ(p.at("psi.0.w").shape(), (Shape{3, 8}));
  EXPECT_EQ(p.at("psi.1.w").shape(), (Shape{8, 6}));
  EXPECT_EQ(p.at("head.0.w").shape(), (Shape{6, 2}));
  TensorMap bad = p;
  bad.at("phi.w") = Tensor({5, 6});
  EXPECT_THROW(IqnNetwork(s, bad), ShapeError);
  bad = p;
  bad.erase("head.0.b");
  EXPECT_THROW(IqnNetwork(s, bad), ShapeError);
}

TEST(EmbedTau, CosineBasisEndpoints) {
  Rng rng(3);
  auto s = small_spec();
  IqnNetwork net(s, rng);
  // Identity map from the basis so phi exposes relu(cos(pi i tau)).
  auto& p = net.parameters();
  zero_all(p);
  for (std::size_t i = 0; i < 6; ++i) p.at("phi.w").at(i, i) = 1.0;
  const std::vector<double> taus{0.0, 1.0, 1.0 / 3.0};
  const Tensor phi = embed_tau(net, taus);
  ASSERT_EQ(phi.shape(), (Shape{3, 6}));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(phi.at(0, i), 1.0);
    EXPECT_NEAR(phi.at(1, i), i % 2 == 0 ? 1.0 : 0.0, 1e-12);
    EXPECT_NEAR(phi.at(2, i), std::max(0.0, std::cos(std::numbers::pi * i / 3.0)), 1e-12);
  }
}

TEST(EmbedTau, SigmoidShowsNegativeCosines) {
  Rng rng(4);
  auto s = small_spec();
  s.nonlinearity = Nonlinearity::kSigmoid;
  IqnNetwork net(s, rng);
  auto& p = net.parameters();
  zero_all(p);
  for (std::size_t i = 0; i < 6; ++i) p.at("phi.w").at(i, i) = 1.0;
  const std::vector<double> one{1.0};
  const Tensor phi = embed_tau(net, one);
  const double hi = 1.0 / (1.0 + std::exp(-1.0)), lo = 1.0 / (1.0 + std::exp(1.0));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(phi.at(0, i), i % 2 == 0 ? hi : lo, 1e-12);
}

TEST(EmbedTau, ZeroWeightsGiveNonlinearityOfBias) {
  for (auto emb : {EmbeddingKind::kCosine, EmbeddingKind::kLearnedMlp}) {
    for (auto nl : {Nonlinearity::kRelu, Nonlinearity::kSigmoid}) {
      Rng rng(5);
      auto s = small_spec();
      s.embedding = emb;
      s.nonlinearity = nl;
      IqnNetwork net(s, rng);
      auto& p = net.parameters();
      zero_all(p);
      const std::string last = emb == EmbeddingKind::kCosine ? "phi.b" : "phi.1.b";
      for (std::size_t j = 0; j < 6; ++j) p.at(last)[j] = 0.3 * j - 0.6;
      const std::vector<double> taus{0.0, 0.2, 0.77, 1.0};
      const Tensor phi = embed_tau(net, taus);
      for (std::size_t r = 0; r < taus.size(); ++r) {
        for (std::size_t j = 0; j < 6; ++j) {
          const double b = 0.3 * j - 0.6;
          const double want = nl == Nonlinearity::kRelu ? std::max(0.0, b) : 1.0 / (1.0 + std::exp(-b));
          EXPECT_NEAR(phi.at(r, j), want, 1e-15);
        }
      }
    }
  }
}

TEST(EmbedTau, RejectsTauOutsideUnitInterval) {
  Rng rng(6);
  IqnNetwork net(small_spec(), rng);
  const std::vector<double> bad{0.5, 1.0000001};
  EXPECT_THROW(embed_tau(net, bad), DomainError);
  const std::vector<double> neg{-1e-9};
  EXPECT_THROW(embed_tau(net, neg), DomainError);
}

TEST(IqnForward, HadamardWithUnitPhiIsHeadOfPsi) {
  Rng rng(7);
  auto s = small_spec();
  IqnNetwork net(s, rng);
  auto& p = net.parameters();
  zero_all(p);
  // psi and head from a fresh draw; phi = relu(0 * basis + 1) = 1.
  IqnNetwork donor(s, rng);
  for (const auto& [name, t] : donor.parameters()) {
    if (name.rfind("phi", 0) != 0) p.at(name) = t;
  }
  std::fill(p.at("phi.b").data().begin(), p.at("phi.b").data().end(), 1.0);
  const Tensor states = random_states(4, 3, rng);
  const std::vector<double> taus{0.1, 0.5, 0.9};
  const Tensor z = iqn_forward(net, states, taus);
  // f(psi(x)): psi from the graph, linear head by hand.
  NetworkPass pass = net.forward(states, Tensor({4, 1}, 0.3));
  const Tensor psi = pass.exec.output("psi");
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t a = 0; a < 2; ++a) {
      double want = p.at("head.0.b")[a];
      for (std::size_t j = 0; j < 6; ++j) want += psi.at(b, j) * p.at("head.0.w").at(j, a);
      for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(z_at(z, b, t, a), want, 1e-12);
    }
  }
}

TEST(IqnForward, ResidualWithZeroPhiIsHeadOfPsi) {
  Rng rng(8);
  auto s = small_spec();
  s.merge = MergeKind::kResidual;
  IqnNetwork net(s, rng);
  auto& p = net.parameters();
  std::fill(p.at("phi.w").data().begin(), p.at("phi.w").data().end(), 0.0);
  std::fill(p.at("phi.b").data().begin(), p.at("phi.b").data().end(), 0.0);
  const Tensor states = random_states(3, 3, rng);
  const std::vector<double> taus{0.0, 0.4, 1.0};
  const Tensor z = iqn_forward(net, states, taus);
  NetworkPass pass = net.forward(states, Tensor({3, 1}, 0.5));
  const Tensor psi = pass.exec.output("psi");
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t a = 0; a < 2; ++a) {
      double want = p.at("head.0.b")[a];
      for (std::size_t j = 0; j < 6; ++j) want += psi.at(b, j) * p.at("head.0.w").at(j, a);
      for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(z_at(z, b, t, a), want, 1e-12);
    }
  }
}

TEST(IqnForward, ConstantNetworkOutputsHeadBias) {
  for (auto merge : {MergeKind::kHadamard, MergeKind::kConcat, MergeKind::kResidual}) {
    Rng rng(9);
    auto s = small_spec();
    s.merge = merge;
    s.head_hidden = {5};
    IqnNetwork net(s, rng);
    auto& p = net.parameters();
    std::fill(p.at("head.1.w").data().begin(), p.at("head.1.w").data().end(), 0.0);
    p.at("head.1.b")[0] = -2.5;
    p.at("head.1.b")[1] = 4.0;
    const Tensor z = iqn_forward(net, random_states(5, 3, rng), std::vector<double>{0.0, 0.3, 1.0});
    for (std::size_t b = 0; b < 5; ++b) {
      for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_EQ(z_at(z, b, t, 0), -2.5);
        EXPECT_EQ(z_at(z, b, t, 1), 4.0);
      }
    }
  }
}

TEST(IqnForward, ShapeErrors) {
  Rng rng(10);
  IqnNetwork net(small_spec(), rng);
  EXPECT_THROW(iqn_forward(net, Tensor({2, 4}), std::vector<double>{0.5}), ShapeError);
  EXPECT_THROW(iqn_forward(net, Tensor({2, 3}), std::vector<double>{}), ShapeError);
  EXPECT_THROW(net.forward(Tensor({2, 3}), Tensor({3, 1})), ShapeError);
}

TEST(IqnForward, PermutationEquivariantInTau) {
  Rng rng(11);
  auto s = small_spec();
  s.merge = MergeKind::kConcat;
  s.embedding = EmbeddingKind::kLearnedMlp;
  IqnNetwork net(s, rng);
  const Tensor states = random_states(3, 3, rng);
  std::vector<double> taus{0.05, 0.31, 0.5, 0.77, 0.99};
  const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  std::vector<double> permuted;
  for (auto i : perm) permuted.push_back(taus[i]);
  const Tensor z = iqn_forward(net, states, taus);
  const Tensor zp = iqn_forward(net, states, permuted);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t t = 0; t < perm.size(); ++t) {
      for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(z_at(zp, b, t, a), z_at(z, b, perm[t], a));
    }
  }
}

TEST(IqnForward, ContinuousInTau) {
  Rng rng(12);
  auto s = small_spec();
  s.embedding_dim = 64;
  IqnNetwork net(s, rng);
  const auto& p = net.parameters();
  auto frob = [](const Tensor& t) {
    double s2 = 0.0;
    for (double v : t.data()) s2 += v * v;
    return std::sqrt(s2);
  };
  const Tensor states = random_states(4, 3, rng);
  NetworkPass pass = net.forward(states, Tensor({4, 1}, 0.5));
  const double psi_max = frob(pass.exec.output("psi"));
  // |d basis / d tau| <= pi * sqrt(sum i^2); relu and sigmoid are 1-Lipschitz.
  double basis_slope = 0.0;
  for (std::size_t i = 0; i < 64; ++i) basis_slope += double(i * i);
  basis_slope = std::numbers::pi * std::sqrt(basis_slope);
  const double lipschitz = basis_slope * frob(p.at("phi.w")) * psi_max * frob(p.at("head.0.w"));
  const double eps = 1e-6;
  for (double tau : {0.0, 0.1, 0.45, 0.8, 1.0 - eps}) {
    const Tensor a = iqn_forward(net, states, std::vector<double>{tau});
    const Tensor b = iqn_forward(net, states, std::vector<double>{tau + eps});
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(std::abs(a[i] - b[i]), lipschitz * eps);
    }
  }
}

TEST(IqnForward, DeepCopyIsIndependent) {
  Rng rng(13);
  IqnNetwork net(small_spec(), rng);
  IqnNetwork copy = net;
  copy.parameters().at("head.0.b")[0] += 1.0;
  const Tensor s = random_states(1, 3, rng);
  const std::vector<double> t{0.5};
  EXPECT_NEAR(z_at(iqn_forward(copy, s, t), 0, 0, 0) - z_at(iqn_forward(net, s, t), 0, 0, 0), 1.0, 1e-12);
}

// Every embedding x nonlinearity x merge x n combination, checked through the
// loss with pinned quantile levels.
TEST(IqnGradients, AllVariantsPassGradCheck) {
  std::size_t combos = 0;
  for (auto emb : {EmbeddingKind::kCosine, EmbeddingKind::kLearnedMlp}) {
    for (auto nl : {Nonlinearity::kRelu, Nonlinearity::kSigmoid}) {
      for (auto merge : {MergeKind::kHadamard, MergeKind::kConcat, MergeKind::kResidual}) {
        for (std::size_t n : {32u, 64u}) {
          Rng rng(100 + combos);
          ArchitectureSpec s;
          s.state_dim = 2;
          s.psi_hidden = {5};
          s.feature_dim = 4;
          s.embedding_dim = n;
          s.action_count = 2;
          s.embedding = emb;
          s.nonlinearity = nl;
          s.merge = merge;
          IqnNetwork online(s, rng), target(s, rng);
          std::vector<Transition> batch;
          for (int i = 0; i < 3; ++i) {
            batch.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                             rng.below(2),
                             rng.uniform(-1, 1),
                             {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                             i == 2});
          }
          LossConfig cfg;
          cfg.n_online = 3;
          cfg.n_target = 4;
          cfg.k_policy = 5;
          const TauDraws taus = draw_taus(batch.size(), cfg, rng);
          const LossResult base = iqn_loss_with_taus(online, target, batch, cfg, taus);
          Objective f = [&](const TensorMap& p) {
            IqnNetwork probe(s, p);
            const LossResult r = iqn_loss_with_taus(probe, target, batch, cfg, taus);
            return ObjectiveSample{r.loss, r.branch_signature, 0};
          };
          const auto report = grad_check(f, online.parameters(), base.gradients, 1e-5, 1e-4);
          EXPECT_TRUE(report.passed())
              << to_string(emb) << '/' << to_string(nl) << '/' << to_string(merge) << '/' << n
              << ": " << report.max_relative_error << " at " << report.worst_parameter;
          EXPECT_GT(report.compared, report.excluded);
          ++combos;
        }
      }
    }
  }
  EXPECT_EQ(combos, 24u);
}

TEST(QrForward, ZeroWeightsGiveBias) {
  Rng rng(14);
  QrNetwork net(small_spec(), 4, rng);
  auto& p = net.parameters();
  std::fill(p.at("head.0.w").data().begin(), p.at("head.0.w").data().end(), 0.0);
  std::fill(p.at("head.0.b").data().begin(), p.at("head.0.b").data().end(), 1.25);
  const Tensor z = qr_forward(net, random_states(3, 3, rng));
  ASSERT_EQ(z.shape(), (Shape{3, 4, 2}));
  for (double v : z.data()) EXPECT_EQ(v, 1.25);
}

TEST(QrForward, SingleQuantileHasDqnShapeAndIdenticalRows) {
  Rng rng(15);
  QrNetwork net(small_spec(), 1, rng);
  EXPECT_EQ(qr_midpoints(1), std::vector<double>{0.5});
  Tensor states({4, 3});
  for (std::size_t r = 0; r < 4; ++r) {
    states.at(r, 0) = 0.2;
    states.at(r, 1) = -0.7;
    states.at(r, 2) = 0.9;
  }
  const Tensor z = qr_forward(net, states);
  ASSERT_EQ(z.shape(), (Shape{4, 1, 2}));
  for (std::size_t r = 1; r < 4; ++r) {
    EXPECT_EQ(z.data()[r * 2], z.data()[0]);
    EXPECT_EQ(z.data()[r * 2 + 1], z.data()[1]);
  }
}

TEST(DqnForward, ShapeAndBias) {
  Rng rng(16);
  DqnNetwork net(small_spec(3, 4), rng);
  auto& p = net.parameters();
  std::fill(p.at("head.0.w").data().begin(), p.at("head.0.w").data().end(), 0.0);
  for (std::size_t a = 0; a < 4; ++a) p.at("head.0.b")[a] = double(a);
  const Tensor q = dqn_forward(net, random_states(2, 3, rng));
  ASSERT_EQ(q.shape(), (Shape{2, 4}));
  for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(q.at(1, a), double(a));
  EXPECT_THROW(dqn_forward(net, Tensor({2, 2})), ShapeError);
}

TEST(QBeta, ConstantNetworkReturnsBias) {
  Rng rng(17);
  IqnNetwork net(small_spec(), rng);
  auto& p = net.parameters();
  std::fill(p.at("head.0.w").data().begin(), p.at("head.0.w").data().end(), 0.0);
  p.at("head.0.b")[0] = 0.75;
  p.at("head.0.b")[1] = -3.0;
  const std::vector<double> x{0.1, 0.2, 0.3};
  for (const char* m : {"neutral", "cvar:0.1", "wang:-0.75", "norm:3", "cpw:0.71"}) {
    for (std::size_t k : {1u, 7u, 64u}) {
      const auto q = q_beta_estimate(net, x, parse_measure(m), k, rng);
      EXPECT_DOUBLE_EQ(q[0], 0.75);
      EXPECT_DOUBLE_EQ(q[1], -3.0);
    }
  }
  EXPECT_THROW(q_beta_estimate(net, x, DistortionMeasure::identity(), 0, rng), DomainError);
  EXPECT_THROW(q_beta_estimate(net, std::vector<double>{1.0}, DistortionMeasure::identity(), 1, rng), ShapeError);
}

TEST(QBeta, SingleSampleIsOneQuantileEvaluation) {
  Rng init(18);
  IqnNetwork net(small_spec(), init);
  const std::vector<double> x{0.4, -0.1, 0.6};
  Rng a(99), b(99);
  const auto m = DistortionMeasure::wang(0.5);
  const auto q = q_beta_estimate(net, x, m, 1, a);
  const double tau = sample_tau(m, b);
  const Tensor z = iqn_forward(net, Tensor({1, 3}, std::vector<double>(x)), std::vector<double>{tau});
  EXPECT_EQ(q[0], z_at(z, 0, 0, 0));
  EXPECT_EQ(q[1], z_at(z, 0, 0, 1));
}

// Z_tau(x, a) forced to (nearly) the step function over {0, 1, 2, 3}: three
// steep ramps in a learned tau embedding, summed by the head.
TEST(QBeta, StepFunctionDoubleUnderCvarHalf) {
  ArchitectureSpec s;
  s.state_dim = 1;
  s.psi_hidden = {};
  s.feature_dim = 3;
  s.embedding = EmbeddingKind::kLearnedMlp;
  s.embedding_dim = 6;
  s.action_count = 1;
  Rng rng(19);
  IqnNetwork net(s, rng);
  auto& p = net.parameters();
  zero_all(p);
  p.at("psi.0.b") = Tensor({1, 3}, 1.0);
  const double slope = 1e7;
  for (std::size_t k = 0; k < 3; ++k) {
    const double edge = (k + 1) / 4.0;
    p.at("phi.0.w")[2 * k] = slope;
    p.at("phi.0.b")[2 * k] = -slope * edge;
    p.at("phi.0.w")[2 * k + 1] = slope;
    p.at("phi.0.b")[2 * k + 1] = -slope * edge - 1.0;
    p.at("phi.1.w").at(2 * k, k) = 1.0;
    p.at("phi.1.w").at(2 * k + 1, k) = -1.0;
    p.at("head.0.w").at(k, 0) = 1.0;
  }
  const Tensor probe = iqn_forward(net, Tensor({1, 1}), std::vector<double>{0.1, 0.3, 0.6, 0.9});
  EXPECT_NEAR(probe[0], 0.0, 1e-9);
  EXPECT_NEAR(probe[1], 1.0, 1e-9);
  EXPECT_NEAR(probe[2], 2.0, 1e-9);
  EXPECT_NEAR(probe[3], 3.0, 1e-9);
  const std::vector<double> x{0.0};
  const auto q = q_beta_estimate(net, x, DistortionMeasure::cvar(0.5), 100000, rng);
  const auto exact = distorted_expectation_exact(ReturnQuantiles::from_values({0, 1, 2, 3}),
                                                 DistortionMeasure::cvar(0.5));
  EXPECT_NEAR(q[0], exact, 0.01);
  EXPECT_NEAR(q[0], 0.5, 0.01);
}

TEST(QBeta, IdentityConvergesAtMonteCarloRate) {
  Rng init(20);
  auto s = small_spec();
  s.embedding_dim = 16;
  IqnNetwork net(s, init);
  const std::vector<double> x{0.3, 0.3, -0.8};
  // Spread of Z_tau over tau on a fine grid.
  std::vector<double> grid;
  for (int i = 0; i <= 2000; ++i) grid.push_back(i / 2000.0);
  const Tensor z = iqn_forward(net, Tensor({1, 3}, std::vector<double>(x)), grid);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < grid.size(); ++t) mean += z_at(z, 0, t, 0);
  mean /= grid.size();
  for (std::size_t t = 0; t < grid.size(); ++t) m2 += std::pow(z_at(z, 0, t, 0) - mean, 2);
  const double sd = std::sqrt(m2 / grid.size());
  Rng rng(21);
  const double coarse = q_beta_estimate(net, x, DistortionMeasure::identity(), 100, rng)[0];
  const double fine = q_beta_estimate(net, x, DistortionMeasure::identity(), 100000, rng)[0];
  EXPECT_LT(std::abs(fine - mean), 5 * sd / std::sqrt(1e5) + 1e-6);
  EXPECT_LT(std::abs(coarse - fine), 5 * sd / std::sqrt(100.0));
}

TEST(QBeta, DeterministicGivenRng) {
  Rng init(22);
  IqnNetwork net(small_spec(), init);
  const std::vector<double> x{0.1, 0.1, 0.1};
  Rng a(5), b(5);
  EXPECT_EQ(q_beta_estimate(net, x, DistortionMeasure::cpw(0.71), 32, a),
            q_beta_estimate(net, x, DistortionMeasure::cpw(0.71), 32, b));
}
