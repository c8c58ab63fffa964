#include "mehmm/error.hpp"
#include "mehmm/inference.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace mehmm;

TEST_CASE("forward likelihood matches brute-force enumeration") {
  Rng rng = make_stream(101, {});
  for (int rep = 0; rep < 30; ++rep) {
    const int S = 2 + rep % 2;
    const int T = 3 + rep % 4;
    const auto kind = rep % 3 == 0 ? ModelKind::markov : ModelKind::hmm;
    const auto d = oracle::random_design(rng, 2, T, 2, true);
    const auto p = oracle::random_params(rng, kind, 2, S, kind == ModelKind::markov ? S : 3, 3, 1.5);
    const auto y = oracle::random_panel(rng, 2, T, p.n_levels(), 0.25);
    double total = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double brute = oracle::likelihood(y, d, p, i);
      if (y.observed_count(i) == 0) {
        CHECK(log_likelihood_subject(y, d, p, i) == 0.0);
        continue;
      }
      if (brute == 0.0) continue;
      const double ll = log_likelihood_subject(y, d, p, i);
      CHECK(std::abs(ll - std::log(brute)) < 1e-10);
      total += ll;
    }
    CHECK(std::abs(log_likelihood(y, d, p) - total) < 1e-10);
  }
}

TEST_CASE("single-state model reduces to a product of emission probabilities") {
  auto p = ModelParams::zeros(ModelKind::hmm, 1, 1, 3, 0);
  p.emission << 0.5, 0.3, 0.2;
  const ObservationPanel y(1, 5, 3, {0, 1, kMissing, 2, 0});
  const auto d = DesignMatrix::empty(1, 5);
  CHECK(std::abs(log_likelihood(y, d, p) - std::log(0.5 * 0.3 * 0.2 * 0.5)) < 1e-14);
}

TEST_CASE("a missing day is bridged by the two-step transition") {
  Rng rng = make_stream(7, {});
  const auto d = oracle::random_design(rng, 1, 3, 1, true);
  const auto p = oracle::random_params(rng, ModelKind::markov, 1, 3, 3, 2);
  const ObservationPanel y(1, 3, 3, {2, kMissing, 1});
  const auto two = multi_step_matrix(p, d, 0, 0, 1);
  const double expected = std::log(p.initial[2] * two(2, 1));
  CHECK(std::abs(log_likelihood_markov(y, d, p) - expected) < 1e-13);
  CHECK(std::abs(log_likelihood(y, d, p) - expected) < 1e-13);
}

TEST_CASE("Markov complete-data likelihood") {
  Rng rng = make_stream(8, {});
  const auto d = oracle::random_design(rng, 1, 4, 1, true);
  const auto p = oracle::random_params(rng, ModelKind::markov, 1, 3, 3, 2);
  const ObservationPanel y(1, 4, 3, {0, kMissing, 2, 1});
  StateGrid full(1, 4);
  full.values = {0, 1, 2, 1};
  double expected = std::log(p.initial[0]);
  for (int t = 0; t < 3; ++t) expected += std::log(oracle::transition_prob(p, d, 0, t, full(0, t), full(0, t + 1)));
  CHECK(std::abs(log_likelihood_markov(y, d, p, &full) - expected) < 1e-13);
}

TEST_CASE("dimension mismatches are input errors") {
  const auto p = ModelParams::zeros(ModelKind::hmm, 2, 2, 3, 0);
  const ObservationPanel y(3, 4, 3, std::vector<int>(12, 0));
  CHECK_THROWS_AS(log_likelihood(y, DesignMatrix::empty(3, 4), p), InputError);
}

TEST_CASE("Viterbi finds the brute-force argmax") {
  Rng rng = make_stream(55, {});
  for (int rep = 0; rep < 20; ++rep) {
    const int S = 2 + rep % 2;
    const int T = 4 + rep % 3;
    const auto d = oracle::random_design(rng, 1, T, 1, true);
    const auto p = oracle::random_params(rng, ModelKind::hmm, 1, S, 3, 2, 1.5);
    const auto y = oracle::random_panel(rng, 1, T, 3, 0.2);
    const auto best = oracle::best_path(y, d, p, 0);
    const auto v = viterbi_subject(y, d, p, 0);
    CHECK(std::abs(v.log_joint - best.log_joint) < 1e-10);
    CHECK(std::abs(log_joint(y, d, p, 0, v.states) - best.log_joint) < 1e-10);
    // No other path beats the decoded one.
    oracle::for_each_path(S, T, [&](const std::vector<int>& path) {
      CHECK(log_joint(y, d, p, 0, path) <= v.log_joint + 1e-10);
    });
  }
}

TEST_CASE("Viterbi breaks ties toward the lower state") {
  const auto p = ModelParams::zeros(ModelKind::hmm, 1, 2, 2, 0);
  const ObservationPanel y(1, 3, 2, {0, 1, 0});
  const auto v = viterbi_subject(y, DesignMatrix::empty(1, 3), p, 0);
  CHECK(v.states == std::vector<int>{0, 0, 0});
}

TEST_CASE("FFBS draws match the exact path posterior") {
  Rng rng = make_stream(77, {});
  const int S = 2, T = 4;
  const auto d = oracle::random_design(rng, 1, T, 1, true);
  const auto p = oracle::random_params(rng, ModelKind::hmm, 1, S, 3, 2);
  const ObservationPanel y(1, T, 3, {0, kMissing, 2, 1});
  const auto exact = oracle::path_posterior(y, d, p, 0);
  std::vector<double> freq(exact.size(), 0.0);
  const int draws = 200000;
  SubjectTransitions q(p.transition, d, 0);
  std::vector<int> out(T);
  Rng draw_rng = make_stream(78, {});
  for (int k = 0; k < draws; ++k) {
    ffbs_subject(y.row(0), q, p, draw_rng, out);
    freq[static_cast<std::size_t>(oracle::encode_path(out, S))] += 1.0 / draws;
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) tv += 0.5 * std::abs(freq[k] - exact[k]);
  CHECK(tv < 0.01);
}

TEST_CASE("FFBS under identity emissions reproduces observed cells") {
  Rng rng = make_stream(9, {});
  const auto d = oracle::random_design(rng, 4, 12, 1, true);
  const auto p = oracle::random_params(rng, ModelKind::markov, 4, 3, 3, 2);
  const auto y = oracle::random_panel(rng, 4, 12, 3, 0.3);
  Rng draw_rng = make_stream(10, {});
  const auto grid = ffbs_sample_hidden(y, d, p, draw_rng);
  for (int i = 0; i < 4; ++i)
    for (int t = 0; t < 12; ++t)
      if (!y.is_missing(i, t)) CHECK(grid(i, t) == y.level(i, t));
}

TEST_CASE("smoothed marginals equal brute-force posterior marginals") {
  Rng rng = make_stream(31, {});
  const int S = 3, T = 4;
  const auto d = oracle::random_design(rng, 1, T, 2, true);
  const auto p = oracle::random_params(rng, ModelKind::hmm, 1, S, 3, 3);
  const ObservationPanel y(1, T, 3, {1, 0, kMissing, 2});
  const auto exact = oracle::path_posterior(y, d, p, 0);
  Eigen::MatrixXd brute = Eigen::MatrixXd::Zero(T, S);
  int code = 0;
  oracle::for_each_path(S, T, [&](const std::vector<int>& path) {
    for (int t = 0; t < T; ++t) brute(t, path[static_cast<std::size_t>(t)]) += exact[static_cast<std::size_t>(code)];
    ++code;
  });
  const auto smoothed = smoothed_marginals(y, d, p);
  CHECK((smoothed[0] - brute).cwiseAbs().maxCoeff() < 1e-12);
  const auto fb = forward_backward(y, d, p, 0);
  CHECK(std::abs(fb.log_likelihood - std::log(oracle::likelihood(y, d, p, 0))) < 1e-12);
  CHECK((fb.filtered.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("one-step predictive probabilities multiply to the likelihood") {
  Rng rng = make_stream(41, {});
  const auto d = oracle::random_design(rng, 5, 15, 2, true);
  const auto p = oracle::random_params(rng, ModelKind::hmm, 5, 3, 3, 3);
  const auto y = oracle::random_panel(rng, 5, 15, 3, 0.2);
  const auto grid = pointwise_predictive(y, d, p, PredictiveMode::one_step);
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int t = 0; t < 15; ++t) {
      const auto v = grid.at(i, t);
      CHECK(v.has_value() == !y.is_missing(i, t));
      if (v) total += std::log(*v);
    }
  }
  CHECK(std::abs(total - log_likelihood(y, d, p)) < 1e-10);
}

TEST_CASE("Markov-mode predictive on a Markov model is the transition entry") {
  Rng rng = make_stream(42, {});
  const auto d = oracle::random_design(rng, 1, 5, 1, true);
  const auto p = oracle::random_params(rng, ModelKind::markov, 1, 3, 3, 2);
  const ObservationPanel y(1, 5, 3, {1, 2, kMissing, 0, 0});
  const auto grid = pointwise_predictive(y, d, p, PredictiveMode::markov);
  CHECK(std::abs(*grid.at(0, 0) - p.initial[1]) < 1e-14);
  CHECK(std::abs(*grid.at(0, 1) - oracle::transition_prob(p, d, 0, 0, 1, 2)) < 1e-14);
  CHECK_FALSE(grid.at(0, 2).has_value());
  CHECK(std::abs(*grid.at(0, 3) - multi_step_matrix(p, d, 0, 1, 1)(2, 0)) < 1e-14);
  CHECK(std::abs(*grid.at(0, 4) - oracle::transition_prob(p, d, 0, 3, 0, 0)) < 1e-14);
  // For a Markov model both modes agree, since the chain forgets everything but the last observation.
  const auto one = pointwise_predictive(y, d, p, PredictiveMode::one_step);
  for (int t : {0, 1, 3, 4}) CHECK(std::abs(*one.at(0, t) - *grid.at(0, t)) < 1e-13);
}

TEST_CASE("complete_grid") {
  const ObservationPanel full(1, 3, 3, {0, 2, 1});
  CHECK(complete_grid(full).values == std::vector<int>{0, 2, 1});
  CHECK_THROWS_AS(complete_grid(ObservationPanel(1, 2, 3, {0, kMissing})), InputError);
}
