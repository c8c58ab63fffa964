#include "mehmm/error.hpp"
#include "mehmm/model.hpp"

#include "oracle.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <cmath>
#include <map>

using namespace mehmm;

TEST_CASE("transition_row") {
  SUBCASE("zero parameters give the uniform row") {
    const std::vector<double> alpha{0.0, 0.0}, beta(8, 0.0), x(4, 0.3);
    const auto row = transition_row(alpha, beta, x);
    for (int s = 0; s < 3; ++s) CHECK(row[s] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("softmax inversion reproduces a target row") {
    const std::vector<double> alpha{std::log(0.02 / 0.97), std::log(0.01 / 0.97)}, beta(8, 0.0), x(4, 0.0);
    const auto row = transition_row(alpha, beta, x);
    CHECK(std::abs(row[0] - 0.97) < 1e-14);
    CHECK(std::abs(row[1] - 0.02) < 1e-14);
    CHECK(std::abs(row[2] - 0.01) < 1e-14);
  }
  SUBCASE("single covariate effect by hand") {
    // eta = (0, 0.5, 0): probabilities (1, e^0.5, 1) / (2 + e^0.5).
    const std::vector<double> alpha{0.0, 0.0};
    std::vector<double> beta(8, 0.0);
    beta[0] = 1.0;  // destination 2, covariate 1
    const std::vector<double> x{0.5, 0.0, 0.0, 0.0};
    const auto row = transition_row(alpha, beta, x);
    const double denom = 2.0 + std::exp(0.5);
    CHECK(row[0] == doctest::Approx(1.0 / denom).epsilon(1e-15));
    CHECK(row[1] == doctest::Approx(std::exp(0.5) / denom).epsilon(1e-15));
    CHECK(row[2] == doctest::Approx(1.0 / denom).epsilon(1e-15));
  }
  SUBCASE("large logits stay finite and normalized") {
    const std::vector<double> alpha{800.0, 790.0};
    const auto row = transition_row(alpha, std::vector<double>{}, std::vector<double>{});
    CHECK(std::abs(row.sum() - 1.0) < 1e-15);
    CHECK(row[0] == 0.0);
    CHECK(row[1] > row[2]);
  }
  SUBCASE("non-finite predictor") {
    const std::vector<double> alpha{NAN, 0.0};
    CHECK_THROWS_AS(transition_row(alpha, std::vector<double>{}, std::vector<double>{}), NumericalError);
  }
}

TEST_CASE("transition_matrix") {
  Rng rng = make_stream(21, {});
  SUBCASE("zero parameters") {
    const auto p = ModelParams::zeros(ModelKind::hmm, 2, 3, 3, 2);
    const auto d = oracle::random_design(rng, 2, 5, 1, true);
    const auto q = transition_matrix(p, d, 1, 3);
    CHECK((q.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("rows agree with transition_row and the direct formula; rows sum to 1") {
    for (int rep = 0; rep < 25; ++rep) {
      const int S = 2 + rep % 3;
      const auto d = oracle::random_design(rng, 3, 6, 2, true);
      const auto p = oracle::random_params(rng, ModelKind::hmm, 3, S, 3, 3, 2.0);
      const int i = rep % 3, t = rep % 5;
      const auto q = transition_matrix(p, d, i, t);
      const auto x = d.vector(i, t);
      for (int r = 0; r < S; ++r) {
        const auto row = transition_row(p.transition.alpha_row(i, r), p.transition.beta_row(r), x);
        CHECK(std::abs(q.row(r).sum() - 1.0) < 1e-12);
        for (int s = 0; s < S; ++s) {
          CHECK(q(r, s) == row[s]);
          CHECK(q(r, s) >= 0.0);
          CHECK(std::abs(q(r, s) - oracle::transition_prob(p, d, i, t, r, s)) < 1e-13);
        }
      }
    }
  }
  SUBCASE("posterior-mean style construction at x = 0 reproduces a target matrix") {
    const double target[3][3] = {{0.97, 0.02, 0.01}, {0.75, 0.21, 0.04}, {0.45, 0.03, 0.52}};
    auto p = ModelParams::zeros(ModelKind::markov, 1, 3, 3, 4);
    for (int r = 0; r < 3; ++r) {
      const auto logits = logits_from_row(std::vector<double>(target[r], target[r] + 3));
      for (int s = 1; s < 3; ++s) p.transition.alpha(0, r, s) = logits[static_cast<std::size_t>(s - 1)];
    }
    Eigen::MatrixXd q(3, 3);
    transition_matrix(p.transition, 0, std::vector<double>(4, 0.0), q);
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s) CHECK(std::abs(q(r, s) - target[r][s]) < 1e-12);
  }
}

TEST_CASE("multi_step_matrix") {
  Rng rng = make_stream(33, {});
  SUBCASE("gap 0 is the single-day matrix") {
    const auto d = oracle::random_design(rng, 1, 6, 1, true);
    const auto p = oracle::random_params(rng, ModelKind::hmm, 1, 3, 3, 2);
    CHECK((multi_step_matrix(p, d, 0, 2, 0) - transition_matrix(p, d, 0, 2)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("time-constant covariates: gap 1 is the square") {
    const auto d = oracle::random_design(rng, 1, 6, 2, false);
    const auto p = oracle::random_params(rng, ModelKind::hmm, 1, 3, 3, 2);
    const auto q = transition_matrix(p, d, 0, 0);
    CHECK((multi_step_matrix(p, d, 0, 1, 1) - q * q).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("time-varying, gap 2, S = 2: sum over the 4 intermediate paths") {
    const auto d = oracle::random_design(rng, 1, 6, 1, true);
    auto p = oracle::random_params(rng, ModelKind::hmm, 1, 2, 3, 2);
    for (double& b : p.transition.beta_values()) b = 2.0;  // strong time effect
    const int start = 1;
    const auto m = multi_step_matrix(p, d, 0, start, 2);
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        double brute = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int e = 0; e < 2; ++e)
            brute += oracle::transition_prob(p, d, 0, start, a, c) * oracle::transition_prob(p, d, 0, start + 1, c, e) *
                     oracle::transition_prob(p, d, 0, start + 2, e, b);
        CHECK(std::abs(m(a, b) - brute) < 1e-14);
      }
    }
    CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("Chapman-Kolmogorov over adjacent windows") {
    const auto d = oracle::random_design(rng, 2, 12, 2, true);
    const auto p = oracle::random_params(rng, ModelKind::hmm, 2, 3, 3, 3);
    for (int a = 0; a <= 4; ++a) {
      for (int b = 0; b <= 4; ++b) {
        const auto whole = multi_step_matrix(p, d, 1, 0, a + b + 1);
        const auto left = multi_step_matrix(p, d, 1, 0, a);
        const auto right = multi_step_matrix(p, d, 1, a + 1, b);
        CHECK((whole - left * right).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
  SUBCASE("window past the end") {
    const auto d = oracle::random_design(rng, 1, 5, 0, true);
    const auto p = ModelParams::zeros(ModelKind::hmm, 1, 2, 2, 1);
    CHECK_NOTHROW(multi_step_matrix(p, d, 0, 1, 2));
    CHECK_THROWS_AS(multi_step_matrix(p, d, 0, 2, 2), InputError);
    CHECK_THROWS_AS(multi_step_matrix(p, d, 0, 0, -1), InputError);
  }
}

TEST_CASE("emission_prob") {
  auto p = ModelParams::zeros(ModelKind::hmm, 1, 3, 3, 0);
  p.emission << 0.997, 0.003, 0.000, 0.026, 0.956, 0.018, 0.030, 0.004, 0.966;  // printed row sums to 1.001; first entry trimmed
  CHECK(emission_prob(p, 0, 0) == 0.997);
  CHECK(emission_prob(p, 0, 1) == 0.003);
  CHECK(emission_prob(p, 0, 2) == 0.0);
  for (int s = 0; s < 3; ++s) CHECK(std::abs(p.emission.row(s).sum() - 1.0) < 1e-12);
  CHECK_THROWS_AS(emission_prob(p, 3, 0), InputError);
  CHECK_NOTHROW(p.validate());
}

namespace {

ModelParams absorbing_params(ModelKind kind, int N) {
  auto p = ModelParams::zeros(kind, N, 3, 3, 0);
  p.initial << 1.0, 0.0, 0.0;
  if (kind == ModelKind::hmm) p.emission = Eigen::MatrixXd::Identity(3, 3);
  for (int i = 0; i < N; ++i) {
    p.transition.alpha(i, 0, 1) = -800.0;
    p.transition.alpha(i, 0, 2) = -800.0;
  }
  return p;
}

}  // namespace

TEST_CASE("simulate") {
  SUBCASE("absorbing first state with identity emissions gives an all-1 panel") {
    for (auto kind : {ModelKind::hmm, ModelKind::markov}) {
      const auto d = DesignMatrix::empty(4, 20);
      const auto sim = kind == ModelKind::hmm ? simulate_hmm(absorbing_params(kind, 4), d, 4, 20, std::nullopt, 5)
                                              : simulate_markov(absorbing_params(kind, 4), d, 4, 20, std::nullopt, 5);
      CHECK(sim.observed.level_counts()[0] == 80);
      CHECK(sim.hidden.has_value() == (kind == ModelKind::hmm));
    }
  }
  SUBCASE("same seed gives the same panel, different seed differs") {
    Rng rng = make_stream(3, {});
    const auto d = oracle::random_design(rng, 6, 30, 2, true);
    const auto p = oracle::random_params(rng, ModelKind::hmm, 6, 3, 3, 3);
    const auto a = simulate_hmm(p, d, 6, 30, std::nullopt, 99);
    const auto b = simulate_hmm(p, d, 6, 30, std::nullopt, 99);
    const auto c = simulate_hmm(p, d, 6, 30, std::nullopt, 100);
    CHECK(a.observed == b.observed);
    CHECK(*a.hidden == *b.hidden);
    CHECK_FALSE(a.complete == c.complete);
  }
  SUBCASE("mask hides cells but keeps the simulated values beneath") {
    Rng rng = make_stream(4, {});
    const auto d = oracle::random_design(rng, 3, 10, 1, true);
    const auto p = oracle::random_params(rng, ModelKind::markov, 3, 3, 3, 2);
    std::vector<std::uint8_t> mask(30, 0);
    mask[5] = mask[17] = 1;
    const auto sim = simulate_markov(p, d, 3, 10, mask, 8);
    CHECK(sim.observed.mask() == mask);
    CHECK(sim.observed.missing_count() == 2);
    for (int i = 0; i < 3; ++i)
      for (int t = 0; t < 10; ++t)
        if (!sim.observed.is_missing(i, t)) CHECK(sim.observed.level(i, t) == sim.complete(i, t));
  }
  SUBCASE("empirical transition frequencies match the rows within 3 standard errors") {
    for (auto kind : {ModelKind::hmm, ModelKind::markov}) {
      const int N = 1000, T = 101;
      auto p = ModelParams::zeros(kind, N, 3, 3, 0);
      const double target[3][3] = {{0.7, 0.2, 0.1}, {0.3, 0.5, 0.2}, {0.25, 0.15, 0.6}};
      for (int r = 0; r < 3; ++r) {
        const auto logits = logits_from_row(std::vector<double>(target[r], target[r] + 3));
        for (int i = 0; i < N; ++i)
          for (int s = 1; s < 3; ++s) p.transition.alpha(i, r, s) = logits[static_cast<std::size_t>(s - 1)];
      }
      if (kind == ModelKind::hmm) p.emission << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8;
      const auto d = DesignMatrix::empty(N, T);
      const auto sim = kind == ModelKind::hmm ? simulate_hmm(p, d, N, T, std::nullopt, 2024)
                                              : simulate_markov(p, d, N, T, std::nullopt, 2024);
      const StateGrid& path = kind == ModelKind::hmm ? *sim.hidden : sim.complete;
      double counts[3][3] = {};
      for (int i = 0; i < N; ++i)
        for (int t = 0; t + 1 < T; ++t) counts[path(i, t)][path(i, t + 1)] += 1.0;
      for (int r = 0; r < 3; ++r) {
        const double n = counts[r][0] + counts[r][1] + counts[r][2];
        for (int s = 0; s < 3; ++s) {
          const double se = std::sqrt(target[r][s] * (1 - target[r][s]) / n);
          CHECK(std::abs(counts[r][s] / n - target[r][s]) < 3 * se);
        }
      }
    }
  }
  SUBCASE("identity-emission HMM and Markov model give the same sequence law") {
    Rng rng = make_stream(12, {});
    const int N = 20000, T = 3;
    auto markov = oracle::random_params(rng, ModelKind::markov, 1, 2, 2, 1);
    markov.transition = markov.transition.resized(N);
    for (int i = 0; i < N; ++i)
      for (int r = 0; r < 2; ++r) markov.transition.alpha(i, r, 1) = markov.transition.alpha(0, r, 1);
    ModelParams hmm = markov;
    hmm.kind = ModelKind::hmm;
    const auto d = oracle::random_design(rng, N, T, 0, true);
    const auto a = simulate_markov(markov, d, N, T, std::nullopt, 1);
    const auto b = simulate_hmm(hmm, d, N, T, std::nullopt, 2);
    std::map<int, double> ca, cb;
    for (int i = 0; i < N; ++i) {
      ca[oracle::encode_path(a.complete.row(i), 2)] += 1;
      cb[oracle::encode_path(b.complete.row(i), 2)] += 1;
    }
    double chi2 = 0.0;
    int cells = 0;
    for (int code = 0; code < 8; ++code) {
      const double x = ca[code], y = cb[code];
      if (x + y == 0) continue;
      chi2 += (x - y) * (x - y) / (x + y);
      ++cells;
    }
    const boost::math::chi_squared dist(cells - 1);
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.001);
  }
}

TEST_CASE("logits_from_row clamps exact zeros") {
  const auto logits = logits_from_row(std::vector<double>{0.999, 0.001, 0.0});
  CHECK(std::isfinite(logits[1]));
  CHECK(logits[1] < -13.0);
}
