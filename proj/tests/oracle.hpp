#pragma once

// Test-only reference computations: direct softmax evaluation and brute-force
// enumeration over hidden paths. Nothing here calls the forward recursion.

#include "mehmm/dataset.hpp"
#include "mehmm/params.hpp"
#include "mehmm/random.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using mehmm::DesignMatrix;
using mehmm::ModelParams;
using mehmm::ObservationPanel;

/// Transition probability written straight from the multinomial-logit formula.
inline double transition_prob(const ModelParams& p, const DesignMatrix& d, int i, int day, int from, int to) {
  const int S = p.n_states();
  auto eta = [&](int s) {
    double v = p.transition.alpha(i, from, s);
    for (int k = 0; k < d.n_covariates(); ++k) v += d.value(i, day, k) * p.transition.beta(from, s, k);
    return v;
  };
  double denom = 1.0;
  for (int s = 1; s < S; ++s) denom += std::exp(eta(s));
  return to == 0 ? 1.0 / denom : std::exp(eta(to)) / denom;
}

/// Joint probability p(H = path, Y_obs) for one subject.
inline double joint_prob(const ObservationPanel& y, const DesignMatrix& d, const ModelParams& p, int i,
                         const std::vector<int>& path) {
  double v = p.initial[path[0]];
  for (int t = 0; t < y.n_days(); ++t) {
    if (t > 0) v *= transition_prob(p, d, i, t - 1, path[t - 1], path[t]);
    if (!y.is_missing(i, t)) v *= p.emission(path[t], y.level(i, t));
  }
  return v;
}

/// Calls f(path) for every path in {0..S-1}^T, in lexicographic order.
inline void for_each_path(int S, int T, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  while (true) {
    f(path);
    int k = T - 1;
    while (k >= 0 && path[static_cast<std::size_t>(k)] == S - 1) {
      path[static_cast<std::size_t>(k)] = 0;
      --k;
    }
    if (k < 0) return;
    ++path[static_cast<std::size_t>(k)];
  }
}

inline double likelihood(const ObservationPanel& y, const DesignMatrix& d, const ModelParams& p, int i) {
  double total = 0.0;
  for_each_path(p.n_states(), y.n_days(), [&](const std::vector<int>& path) { total += joint_prob(y, d, p, i, path); });
  return total;
}

struct Argmax {
  std::vector<int> path;
  double log_joint = -INFINITY;
};

inline Argmax best_path(const ObservationPanel& y, const DesignMatrix& d, const ModelParams& p, int i) {
  Argmax best;
  for_each_path(p.n_states(), y.n_days(), [&](const std::vector<int>& path) {
    const double lj = std::log(joint_prob(y, d, p, i, path));
    if (lj > best.log_joint) {
      best.log_joint = lj;
      best.path = path;
    }
  });
  return best;
}

/// Posterior probability of every path, indexed by base-S encoding (first day most significant).
inline std::vector<double> path_posterior(const ObservationPanel& y, const DesignMatrix& d, const ModelParams& p,
                                          int i) {
  std::vector<double> probs;
  double total = 0.0;
  for_each_path(p.n_states(), y.n_days(), [&](const std::vector<int>& path) {
    probs.push_back(joint_prob(y, d, p, i, path));
    total += probs.back();
  });
  for (double& v : probs) v /= total;
  return probs;
}

inline int encode_path(std::span<const int> path, int S) {
  int code = 0;
  for (int s : path) code = code * S + s;
  return code;
}

// ---------------------------------------------------------------------------
// Random fixtures

inline DesignMatrix random_design(mehmm::Rng& rng, int N, int T, int n_subject_covariates, bool with_time) {
  std::vector<DesignMatrix::Column> cols;
  std::normal_distribution<double> z(0.0, 0.5);
  for (int k = 0; k < n_subject_covariates; ++k) {
    DesignMatrix::Column c;
    c.record.name = "z" + std::to_string(k);
    for (int i = 0; i < N; ++i) c.values.push_back(z(rng));
    cols.push_back(c);
  }
  if (with_time) {
    DesignMatrix::Column c;
    c.record.name = "time";
    c.per_day = true;
    for (int t = 0; t < T; ++t) c.values.push_back(T > 1 ? -0.5 + static_cast<double>(t) / (T - 1) : 0.0);
    cols.push_back(c);
  }
  return DesignMatrix(N, T, cols);
}

inline Eigen::VectorXd random_simplex(mehmm::Rng& rng, int n) {
  std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
  return mehmm::dirichlet(rng, ones);
}

inline ModelParams random_params(mehmm::Rng& rng, mehmm::ModelKind kind, int N, int S, int M, int p,
                                 double logit_sd = 1.0) {
  ModelParams params = ModelParams::zeros(kind, N, S, M, p);
  std::normal_distribution<double> z(0.0, logit_sd);
  for (double& v : params.transition.alpha_values()) v = z(rng);
  for (double& v : params.transition.beta_values()) v = 0.5 * z(rng);
  for (double& v : params.transition.mu_values()) v = z(rng);
  for (double& v : params.transition.sigma_values()) v = 0.5 + std::abs(z(rng));
  params.initial = random_simplex(rng, S);
  if (kind == mehmm::ModelKind::hmm) {
    for (int s = 0; s < S; ++s) params.emission.row(s) = random_simplex(rng, M).transpose();
  }
  return params;
}

inline ObservationPanel random_panel(mehmm::Rng& rng, int N, int T, int M, double missing_rate) {
  std::vector<int> levels;
  std::uniform_int_distribution<int> level(0, M - 1);
  for (int k = 0; k < N * T; ++k) {
    levels.push_back(mehmm::uniform01(rng) < missing_rate ? mehmm::kMissing : level(rng));
  }
  return ObservationPanel(N, T, M, levels);
}

}  // namespace oracle
