#include "mehmm/error.hpp"
#include "mehmm/mcmc.hpp"

#include <algorithm>
#include <cmath>

namespace mehmm {

namespace {

struct Accumulators {
  Eigen::MatrixXd transition;
  Eigen::MatrixXd emission;
  Eigen::VectorXd initial;
};

/// E-step for one subject; returns its log-likelihood.
double expected_counts(std::span<const int> y, const EmFit& fit, Accumulators& acc, Eigen::MatrixXd& fwd,
                       Eigen::MatrixXd& bwd, Eigen::VectorXd& scale) {
  const int S = static_cast<int>(fit.transition.rows());
  const int T = static_cast<int>(y.size());
  fwd.resize(T, S);
  bwd.resize(T, S);
  scale.resize(T);
  auto emit = [&](int t) -> Eigen::VectorXd {
    const int level = y[static_cast<std::size_t>(t)];
    if (level == kMissing) return Eigen::VectorXd::Ones(S);
    return fit.emission.col(level);
  };

  double loglik = 0.0;
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd v = t == 0 ? Eigen::VectorXd(fit.initial) : Eigen::VectorXd(fit.transition.transpose() * fwd.row(t - 1).transpose());
    v = v.cwiseProduct(emit(t));
    const double c = v.sum();
    if (!(c > 0.0)) throw NumericalError("EM: observations have zero probability");
    scale[t] = c;
    fwd.row(t) = v.transpose() / c;
    loglik += std::log(c);
  }
  bwd.row(T - 1).setOnes();
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd next = emit(t + 1).cwiseProduct(bwd.row(t + 1).transpose());
    bwd.row(t) = (fit.transition * next).transpose() / scale[t + 1];
  }
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd gamma = fwd.row(t).cwiseProduct(bwd.row(t)).transpose();
    gamma /= gamma.sum();
    if (t == 0) acc.initial += gamma;
    const int level = y[static_cast<std::size_t>(t)];
    if (level != kMissing) acc.emission.col(level) += gamma;
    if (t + 1 < T) {
      const Eigen::VectorXd next = emit(t + 1).cwiseProduct(bwd.row(t + 1).transpose());
      Eigen::MatrixXd xi = fwd.row(t).transpose() * next.transpose();
      xi = xi.cwiseProduct(fit.transition) / scale[t + 1];
      acc.transition += xi;
    }
  }
  return loglik;
}

void normalize_rows(Eigen::MatrixXd& target, const Eigen::MatrixXd& counts) {
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    const double total = counts.row(r).sum();
    if (total > 0.0) target.row(r) = counts.row(r) / total;
  }
}

}  // namespace

EmFit em_initialize(const ObservationPanel& panel, int n_states, const EmOptions& options) {
  const int S = n_states;
  const int M = panel.n_levels();
  if (S < 1) throw InputError("em_initialize: need at least one state");
  if (panel.n_subjects() == 0 || panel.n_days() == 0) throw InputError("em_initialize: empty panel");
  if (options.identity_emission && S != M) throw InputError("em_initialize: identity emissions need S = M");

  std::vector<int> subjects;
  for (int i = 0; i < panel.n_subjects(); ++i)
    if (panel.observed_count(i) > 0) subjects.push_back(i);
  if (subjects.empty()) throw InputError("em_initialize: panel has no observed cells");

  EmFit fit;
  fit.transition = Eigen::MatrixXd::Constant(S, S, S > 1 ? 0.2 / (S - 1) : 1.0);
  fit.transition.diagonal().setConstant(S > 1 ? 0.8 : 1.0);
  fit.initial = Eigen::VectorXd::Constant(S, 1.0 / S);
  if (options.identity_emission) {
    fit.emission = Eigen::MatrixXd::Identity(S, M);
  } else {
    fit.emission = Eigen::MatrixXd::Constant(S, M, M > 1 ? 0.3 / (M - 1) : 1.0);
    for (int s = 0; s < S; ++s) {
      const int m = S > 1 ? static_cast<int>(std::lround(static_cast<double>(s) * (M - 1) / (S - 1))) : 0;
      fit.emission(s, m) = M > 1 ? 0.7 : 1.0;
    }
  }

  Accumulators acc;
  Eigen::MatrixXd fwd, bwd;
  Eigen::VectorXd scale;
  double previous = -INFINITY;
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    acc.transition = Eigen::MatrixXd::Zero(S, S);
    acc.emission = Eigen::MatrixXd::Zero(S, M);
    acc.initial = Eigen::VectorXd::Zero(S);
    double loglik = 0.0;
    for (int i : subjects) loglik += expected_counts(panel.row(i), fit, acc, fwd, bwd, scale);
    fit.log_likelihood.push_back(loglik);
    if (iter > 0 && loglik - previous < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (iter == options.max_iterations) break;
    previous = loglik;

    normalize_rows(fit.transition, acc.transition);
    if (!options.identity_emission) normalize_rows(fit.emission, acc.emission);
    fit.initial = acc.initial / acc.initial.sum();
    fit.iterations = iter + 1;
  }
  return fit;
}

ModelParams init_chain(const EmFit& em, ModelKind kind, int n_subjects, int n_covariates, int chain_index,
                       double jitter_scale, std::uint64_t seed) {
  const int S = static_cast<int>(em.transition.rows());
  const int M = static_cast<int>(em.emission.cols());
  if (kind == ModelKind::markov && S != M) throw InputError("init_chain: Markov model needs S = M");
  if (jitter_scale < 0.0) throw InputError("init_chain: negative jitter scale");
  ModelParams p = ModelParams::zeros(kind, n_subjects, S, M, n_covariates);

  for (int r = 0; r < S; ++r) {
    std::vector<double> row(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) row[static_cast<std::size_t>(s)] = em.transition(r, s);
    const auto logits = logits_from_row(row);
    for (int s = 1; s < S; ++s) p.transition.mu(r, s) = logits[static_cast<std::size_t>(s - 1)];
  }
  Rng rng = make_stream(seed, {static_cast<std::uint64_t>(chain_index), 2});
  for (int i = 0; i < n_subjects; ++i)
    for (int r = 0; r < S; ++r)
      for (int s = 1; s < S; ++s) {
        const double z = jitter_scale > 0.0 ? standard_normal(rng) : 0.0;
        p.transition.alpha(i, r, s) = p.transition.mu(r, s) + jitter_scale * z;
      }

  auto floored = [](Eigen::VectorXd v) {
    v = v.cwiseMax(1e-6);
    return Eigen::VectorXd(v / v.sum());
  };
  p.initial = floored(em.initial);
  if (kind == ModelKind::hmm) {
    for (int s = 0; s < S; ++s) p.emission.row(s) = floored(em.emission.row(s).transpose()).transpose();
  }
  return p;
}

}  // namespace mehmm
