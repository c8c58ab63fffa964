#include "mehmm/model.hpp"

#include "mehmm/error.hpp"

#include <algorithm>
#include <cmath>

namespace mehmm {

void transition_row(std::span<const double> alpha_row, std::span<const double> beta_row,
                    std::span<const double> x, std::span<double> out) {
  const std::size_t dests = alpha_row.size();
  const std::size_t p = x.size();
  out[0] = 0.0;
  double max_eta = 0.0;
  for (std::size_t s = 0; s < dests; ++s) {
    double eta = alpha_row[s];
    const double* b = beta_row.data() + s * p;
    for (std::size_t k = 0; k < p; ++k) eta += x[k] * b[k];
    if (!std::isfinite(eta)) throw NumericalError("non-finite linear predictor in transition row");
    out[s + 1] = eta;
    max_eta = std::max(max_eta, eta);
  }
  double total = 0.0;
  for (std::size_t s = 0; s <= dests; ++s) {
    out[s] = std::exp(out[s] - max_eta);
    total += out[s];
  }
  for (std::size_t s = 0; s <= dests; ++s) out[s] /= total;
}

Eigen::VectorXd transition_row(std::span<const double> alpha_row, std::span<const double> beta_row,
                               std::span<const double> x) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(alpha_row.size() + 1));
  transition_row(alpha_row, beta_row, x, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

void transition_matrix(const TransitionParams& params, int subject, std::span<const double> x,
                       Eigen::Ref<Eigen::MatrixXd> out) {
  const int S = params.n_states();
  double row[64];
  if (S > 64) throw InputError("too many states");
  for (int r = 0; r < S; ++r) {
    transition_row(params.alpha_row(subject, r), params.beta_row(r), x,
                   std::span<double>(row, static_cast<std::size_t>(S)));
    for (int s = 0; s < S; ++s) out(r, s) = row[s];
  }
}

Eigen::MatrixXd transition_matrix(const ModelParams& params, const DesignMatrix& design, int subject, int day) {
  if (subject < 0 || subject >= params.n_subjects() || day < 0 || day >= design.n_days()) {
    throw InputError("transition_matrix: index out of range");
  }
  const auto x = design.vector(subject, day);
  Eigen::MatrixXd out(params.n_states(), params.n_states());
  transition_matrix(params.transition, subject, x, out);
  return out;
}

Eigen::MatrixXd multi_step_matrix(const ModelParams& params, const DesignMatrix& design, int subject,
                                  int start_day, int gap) {
  if (gap < 0 || start_day < 0 || start_day + gap + 1 > design.n_days() - 1) {
    throw InputError("multi_step_matrix: window exceeds the panel");
  }
  Eigen::MatrixXd product = transition_matrix(params, design, subject, start_day);
  for (int d = start_day + 1; d <= start_day + gap; ++d) {
    product = product * transition_matrix(params, design, subject, d);
  }
  return product;
}

double emission_prob(const ModelParams& params, int state, int level) {
  if (state < 0 || state >= params.n_states() || level < 0 || level >= params.n_levels()) {
    throw InputError("emission_prob: index out of range");
  }
  return params.emission(state, level);
}

SimulatedPanel simulate(const ModelParams& params, const DesignMatrix& design,
                        std::span<const std::uint8_t> mask, Rng& rng) {
  const int N = params.n_subjects();
  const int T = design.n_days();
  const int S = params.n_states();
  const int M = params.n_levels();
  if (design.n_subjects() < N) throw InputError("simulate: design has fewer subjects than parameters");
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(N) * static_cast<std::size_t>(T)) {
    throw InputError("simulate: mask dimensions do not match");
  }
  const bool hmm = params.kind == ModelKind::hmm;

  SimulatedPanel out;
  StateGrid hidden(N, T);
  out.complete = StateGrid(N, T);
  std::vector<double> x(static_cast<std::size_t>(design.n_covariates()));
  std::vector<double> row(static_cast<std::size_t>(S));
  std::vector<double> initial(params.initial.data(), params.initial.data() + S);

  for (int i = 0; i < N; ++i) {
    int state = categorical(rng, initial);
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        design.fill(i, t - 1, x);
        transition_row(params.transition.alpha_row(i, state), params.transition.beta_row(state), x, row);
        state = categorical(rng, row);
      }
      hidden(i, t) = state;
      if (hmm) {
        const Eigen::VectorXd e = params.emission.row(state).transpose();
        out.complete(i, t) = categorical(rng, std::span<const double>(e.data(), static_cast<std::size_t>(M)));
      } else {
        out.complete(i, t) = state;
      }
    }
  }

  std::vector<int> levels = out.complete.values;
  if (!mask.empty()) {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (mask[k]) levels[k] = kMissing;
    }
  }
  out.observed = ObservationPanel(N, T, M, std::move(levels));
  if (hmm) out.hidden = std::move(hidden);
  return out;
}

namespace {

SimulatedPanel simulate_checked(ModelKind kind, const ModelParams& params, const DesignMatrix& design,
                                int n_subjects, int n_days, const std::optional<std::vector<std::uint8_t>>& mask,
                                std::uint64_t seed) {
  if (params.kind != kind) throw InputError("simulate: parameter kind does not match the requested model");
  if (params.n_subjects() != n_subjects || design.n_subjects() != n_subjects || design.n_days() != n_days) {
    throw InputError("simulate: dimensions of parameters, design and request disagree");
  }
  params.validate(1e-9);
  Rng rng = make_stream(seed, {3});
  auto out = simulate(params, design, mask ? std::span<const std::uint8_t>(*mask) : std::span<const std::uint8_t>{},
                      rng);
  out.seed = seed;
  return out;
}

}  // namespace

SimulatedPanel simulate_hmm(const ModelParams& params, const DesignMatrix& design, int n_subjects, int n_days,
                            const std::optional<std::vector<std::uint8_t>>& mask, std::uint64_t seed) {
  return simulate_checked(ModelKind::hmm, params, design, n_subjects, n_days, mask, seed);
}

SimulatedPanel simulate_markov(const ModelParams& params, const DesignMatrix& design, int n_subjects,
                               int n_days, const std::optional<std::vector<std::uint8_t>>& mask,
                               std::uint64_t seed) {
  return simulate_checked(ModelKind::markov, params, design, n_subjects, n_days, mask, seed);
}

std::vector<double> logits_from_row(std::span<const double> probabilities, double floor) {
  std::vector<double> p(probabilities.begin(), probabilities.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::max(v, floor);
    total += v;
  }
  for (double& v : p) v /= total;
  std::vector<double> logits;
  for (std::size_t s = 1; s < p.size(); ++s) logits.push_back(std::log(p[s] / p[0]));
  return logits;
}

}  // namespace mehmm
