#include "mehmm/inference.hpp"

#include "mehmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mehmm {

SubjectTransitions::SubjectTransitions(const TransitionParams& params, const DesignMatrix& design, int subject) {
  compute(params, design, subject);
}

void SubjectTransitions::compute(const TransitionParams& params, const DesignMatrix& design, int subject) {
  n_states_ = params.n_states();
  n_steps_ = std::max(design.n_days() - 1, 0);
  const auto S = static_cast<std::size_t>(n_states_);
  values_.resize(static_cast<std::size_t>(n_steps_) * S * S);
  x_.resize(static_cast<std::size_t>(design.n_covariates()));
  for (int t = 0; t < n_steps_; ++t) {
    design.fill(subject, t, x_);
    double* m = values_.data() + static_cast<std::size_t>(t) * S * S;
    for (int r = 0; r < n_states_; ++r) {
      transition_row(params.alpha_row(subject, r), params.beta_row(r), x_,
                     std::span<double>(m + static_cast<std::size_t>(r) * S, S));
    }
  }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double emission_factor(const ModelParams& params, int state, int level) {
  return level == kMissing ? 1.0 : params.emission(state, level);
}

/// Scaled forward recursion. `filtered` is T x S row-major. Returns the log
/// likelihood, or -inf (filtered left partially filled) on a zero normalizer.
double forward_pass(std::span<const int> levels, const SubjectTransitions& q, const ModelParams& params,
                    std::vector<double>& filtered, std::vector<double>& scaling) {
  const int S = params.n_states();
  const int T = static_cast<int>(levels.size());
  const auto Su = static_cast<std::size_t>(S);
  filtered.assign(static_cast<std::size_t>(T) * Su, 0.0);
  scaling.assign(static_cast<std::size_t>(T), 1.0);
  double loglik = 0.0;
  for (int t = 0; t < T; ++t) {
    double* cur = filtered.data() + static_cast<std::size_t>(t) * Su;
    if (t == 0) {
      for (int s = 0; s < S; ++s) cur[s] = params.initial[s];
    } else {
      const double* prev = cur - Su;
      const double* m = q.matrix(t - 1);
      for (int s = 0; s < S; ++s) cur[s] = 0.0;
      for (int r = 0; r < S; ++r) {
        const double w = prev[r];
        if (w == 0.0) continue;
        const double* row = m + static_cast<std::size_t>(r) * Su;
        for (int s = 0; s < S; ++s) cur[s] += w * row[s];
      }
    }
    double c = 0.0;
    for (int s = 0; s < S; ++s) {
      cur[s] *= emission_factor(params, s, levels[static_cast<std::size_t>(t)]);
      c += cur[s];
    }
    if (!(c > 0.0)) return kNegInf;
    for (int s = 0; s < S; ++s) cur[s] /= c;
    scaling[static_cast<std::size_t>(t)] = c;
    loglik += std::log(c);
  }
  return loglik;
}

bool any_observed(std::span<const int> levels) {
  return std::any_of(levels.begin(), levels.end(), [](int v) { return v != kMissing; });
}

void check_dims(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params) {
  if (panel.n_subjects() != params.n_subjects() || design.n_subjects() < panel.n_subjects() ||
      design.n_days() != panel.n_days()) {
    throw InputError("panel, design and parameter dimensions disagree");
  }
  if (panel.n_levels() != params.n_levels()) {
    throw InputError("panel levels do not match the emission matrix");
  }
  if (design.n_covariates() != params.n_covariates()) {
    throw InputError("design covariate count does not match the parameters");
  }
}

}  // namespace

ForwardBackwardResult forward_backward(const ObservationPanel& panel, const DesignMatrix& design,
                                       const ModelParams& params, int subject) {
  check_dims(panel, design, params);
  const int S = params.n_states();
  const int T = panel.n_days();
  const auto Su = static_cast<std::size_t>(S);
  const auto levels = panel.row(subject);
  const SubjectTransitions q(params.transition, design, subject);
  std::vector<double> filtered, scaling;
  const double ll = forward_pass(levels, q, params, filtered, scaling);
  if (!std::isfinite(ll)) throw NumericalError("observations have zero probability under the parameters");

  ForwardBackwardResult out;
  out.log_likelihood = any_observed(levels) ? ll : 0.0;
  out.filtered.resize(T, S);
  out.smoothed.resize(T, S);
  out.scaling.resize(T);
  for (int t = 0; t < T; ++t) {
    out.scaling[t] = scaling[static_cast<std::size_t>(t)];
    for (int s = 0; s < S; ++s) out.filtered(t, s) = filtered[static_cast<std::size_t>(t) * Su + static_cast<std::size_t>(s)];
  }

  // Scaled backward pass: beta_t(r) = sum_s Q_t(r,s) e_t+1(s) beta_t+1(s) / c_t+1.
  std::vector<double> beta(Su, 1.0), next(Su);
  for (int t = T - 1; t >= 0; --t) {
    double total = 0.0;
    for (int s = 0; s < S; ++s) {
      out.smoothed(t, s) = out.filtered(t, s) * beta[static_cast<std::size_t>(s)];
      total += out.smoothed(t, s);
    }
    out.smoothed.row(t) /= total;
    if (t == 0) break;
    const double* m = q.matrix(t - 1);
    const int y = levels[static_cast<std::size_t>(t)];
    for (int r = 0; r < S; ++r) {
      double acc = 0.0;
      for (int s = 0; s < S; ++s) {
        acc += m[static_cast<std::size_t>(r) * Su + static_cast<std::size_t>(s)] * emission_factor(params, s, y) *
               beta[static_cast<std::size_t>(s)];
      }
      next[static_cast<std::size_t>(r)] = acc / out.scaling[t];
    }
    beta.swap(next);
  }
  return out;
}

double log_likelihood_subject(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                              int subject) {
  const auto levels = panel.row(subject);
  if (!any_observed(levels)) return 0.0;
  const SubjectTransitions q(params.transition, design, subject);
  std::vector<double> filtered, scaling;
  return forward_pass(levels, q, params, filtered, scaling);
}

double log_likelihood(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params) {
  check_dims(panel, design, params);
  SubjectTransitions q;
  std::vector<double> filtered, scaling;
  double total = 0.0;
  for (int i = 0; i < panel.n_subjects(); ++i) {
    const auto levels = panel.row(i);
    if (!any_observed(levels)) continue;
    q.compute(params.transition, design, i);
    total += forward_pass(levels, q, params, filtered, scaling);
  }
  return total;
}

double log_likelihood_hmm(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params) {
  if (params.kind != ModelKind::hmm) throw InputError("log_likelihood_hmm: parameters are not for an HMM");
  return log_likelihood(panel, design, params);
}

double log_likelihood_markov(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                             const StateGrid* imputed) {
  if (params.kind != ModelKind::markov) throw InputError("log_likelihood_markov: parameters are not for a Markov model");
  if (imputed == nullptr) return log_likelihood(panel, design, params);

  check_dims(panel, design, params);
  if (imputed->n_subjects != panel.n_subjects() || imputed->n_days != panel.n_days()) {
    throw InputError("imputed panel dimensions do not match");
  }
  SubjectTransitions q;
  double total = 0.0;
  for (int i = 0; i < panel.n_subjects(); ++i) {
    for (int t = 0; t < panel.n_days(); ++t) {
      if (!panel.is_missing(i, t) && panel.level(i, t) != (*imputed)(i, t)) {
        throw InputError("imputed panel disagrees with an observed cell");
      }
    }
    q.compute(params.transition, design, i);
    total += std::log(params.initial[(*imputed)(i, 0)]);
    for (int t = 0; t + 1 < panel.n_days(); ++t) total += std::log(q(t, (*imputed)(i, t), (*imputed)(i, t + 1)));
  }
  return total;
}

void ffbs_subject(std::span<const int> levels, const SubjectTransitions& transitions, const ModelParams& params,
                  Rng& rng, std::span<int> out) {
  const int S = params.n_states();
  const int T = static_cast<int>(levels.size());
  const auto Su = static_cast<std::size_t>(S);
  thread_local std::vector<double> filtered, scaling, weights;
  const double ll = forward_pass(levels, transitions, params, filtered, scaling);
  if (!std::isfinite(ll)) throw NumericalError("FFBS: observations have zero probability under the parameters");
  weights.resize(Su);
  const double* last = filtered.data() + static_cast<std::size_t>(T - 1) * Su;
  out[static_cast<std::size_t>(T - 1)] = categorical(rng, std::span<const double>(last, Su));
  for (int t = T - 2; t >= 0; --t) {
    const int next = out[static_cast<std::size_t>(t + 1)];
    const double* f = filtered.data() + static_cast<std::size_t>(t) * Su;
    for (int r = 0; r < S; ++r) weights[static_cast<std::size_t>(r)] = f[r] * transitions(t, r, next);
    out[static_cast<std::size_t>(t)] = categorical(rng, weights);
  }
}

StateGrid ffbs_sample_hidden(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                             Rng& rng) {
  check_dims(panel, design, params);
  StateGrid grid(panel.n_subjects(), panel.n_days());
  SubjectTransitions q;
  for (int i = 0; i < panel.n_subjects(); ++i) {
    q.compute(params.transition, design, i);
    ffbs_subject(panel.row(i), q, params, rng, grid.row(i));
  }
  return grid;
}

std::vector<Eigen::MatrixXd> smoothed_marginals(const ObservationPanel& panel, const DesignMatrix& design,
                                                const ModelParams& params) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(panel.n_subjects()));
  for (int i = 0; i < panel.n_subjects(); ++i) out.push_back(forward_backward(panel, design, params, i).smoothed);
  return out;
}

ViterbiPath viterbi_subject(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                            int subject) {
  check_dims(panel, design, params);
  const int S = params.n_states();
  const int T = panel.n_days();
  const auto Su = static_cast<std::size_t>(S);
  const auto levels = panel.row(subject);
  const SubjectTransitions q(params.transition, design, subject);

  auto safe_log = [](double v) { return v > 0.0 ? std::log(v) : kNegInf; };
  std::vector<double> delta(Su), next(Su);
  std::vector<int> back(static_cast<std::size_t>(T) * Su, 0);
  for (int s = 0; s < S; ++s) {
    delta[static_cast<std::size_t>(s)] =
        safe_log(params.initial[s]) + safe_log(emission_factor(params, s, levels[0]));
  }
  for (int t = 1; t < T; ++t) {
    const int y = levels[static_cast<std::size_t>(t)];
    for (int s = 0; s < S; ++s) {
      double best = kNegInf;
      int arg = 0;
      for (int r = 0; r < S; ++r) {
        const double v = delta[static_cast<std::size_t>(r)] + safe_log(q(t - 1, r, s));
        if (v > best) {
          best = v;
          arg = r;
        }
      }
      next[static_cast<std::size_t>(s)] = best + safe_log(emission_factor(params, s, y));
      back[static_cast<std::size_t>(t) * Su + static_cast<std::size_t>(s)] = arg;
    }
    delta.swap(next);
  }
  ViterbiPath path;
  path.states.assign(static_cast<std::size_t>(T), 0);
  int arg = 0;
  double best = kNegInf;
  for (int s = 0; s < S; ++s) {
    if (delta[static_cast<std::size_t>(s)] > best) {
      best = delta[static_cast<std::size_t>(s)];
      arg = s;
    }
  }
  path.log_joint = best;
  path.states[static_cast<std::size_t>(T - 1)] = arg;
  for (int t = T - 1; t > 0; --t) {
    arg = back[static_cast<std::size_t>(t) * Su + static_cast<std::size_t>(arg)];
    path.states[static_cast<std::size_t>(t - 1)] = arg;
  }
  return path;
}

std::vector<ViterbiPath> viterbi(const ObservationPanel& panel, const DesignMatrix& design,
                                 const ModelParams& params) {
  std::vector<ViterbiPath> out;
  out.reserve(static_cast<std::size_t>(panel.n_subjects()));
  for (int i = 0; i < panel.n_subjects(); ++i) out.push_back(viterbi_subject(panel, design, params, i));
  return out;
}

double log_joint(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params, int subject,
                 std::span<const int> path) {
  check_dims(panel, design, params);
  if (static_cast<int>(path.size()) != panel.n_days()) throw InputError("log_joint: path length mismatch");
  const SubjectTransitions q(params.transition, design, subject);
  double total = std::log(params.initial[path[0]]);
  for (int t = 0; t < panel.n_days(); ++t) {
    const int y = panel.level(subject, t);
    if (t > 0) total += std::log(q(t - 1, path[static_cast<std::size_t>(t - 1)], path[static_cast<std::size_t>(t)]));
    if (y != kMissing) total += std::log(params.emission(path[static_cast<std::size_t>(t)], y));
  }
  return total;
}

std::optional<double> PredictiveGrid::at(int i, int t) const {
  const double v = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_days) + static_cast<std::size_t>(t)];
  if (std::isnan(v)) return std::nullopt;
  return v;
}

PredictiveGrid pointwise_predictive(const ObservationPanel& panel, const DesignMatrix& design,
                                    const ModelParams& params, PredictiveMode mode) {
  check_dims(panel, design, params);
  const int S = params.n_states();
  const int T = panel.n_days();
  const auto Su = static_cast<std::size_t>(S);
  PredictiveGrid grid;
  grid.n_subjects = panel.n_subjects();
  grid.n_days = T;
  grid.values.assign(static_cast<std::size_t>(grid.n_subjects) * static_cast<std::size_t>(T),
                     std::numeric_limits<double>::quiet_NaN());
  SubjectTransitions q;
  std::vector<double> filtered, scaling;
  std::vector<double> prior(Su), cond(Su), tmp(Su);

  for (int i = 0; i < panel.n_subjects(); ++i) {
    const auto levels = panel.row(i);
    q.compute(params.transition, design, i);
    double* row_out = grid.values.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(T);

    if (mode == PredictiveMode::one_step) {
      // The forward normalizer on an observed day is p(y_t | earlier observed y).
      if (!std::isfinite(forward_pass(levels, q, params, filtered, scaling))) {
        throw NumericalError("pointwise_predictive: zero-probability observation");
      }
      for (int t = 0; t < T; ++t) {
        if (levels[static_cast<std::size_t>(t)] != kMissing) row_out[t] = scaling[static_cast<std::size_t>(t)];
      }
      continue;
    }

    // Markov mode: carry the unconditional state marginal forward; on each
    // observed day condition on that single observation only.
    for (int s = 0; s < S; ++s) prior[static_cast<std::size_t>(s)] = params.initial[s];
    bool have_cond = false;
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        auto step = [&](std::vector<double>& v) {
          std::fill(tmp.begin(), tmp.end(), 0.0);
          for (int r = 0; r < S; ++r)
            for (int s = 0; s < S; ++s) tmp[static_cast<std::size_t>(s)] += v[static_cast<std::size_t>(r)] * q(t - 1, r, s);
          v.swap(tmp);
        };
        step(prior);
        if (have_cond) step(cond);
      }
      const int y = levels[static_cast<std::size_t>(t)];
      if (y == kMissing) continue;
      const std::vector<double>& base = have_cond ? cond : prior;
      double p = 0.0;
      for (int s = 0; s < S; ++s) p += base[static_cast<std::size_t>(s)] * params.emission(s, y);
      row_out[t] = p;
      double total = 0.0;
      for (int s = 0; s < S; ++s) {
        cond[static_cast<std::size_t>(s)] = prior[static_cast<std::size_t>(s)] * params.emission(s, y);
        total += cond[static_cast<std::size_t>(s)];
      }
      if (!(total > 0.0)) throw NumericalError("pointwise_predictive: zero-probability observation");
      for (double& v : cond) v /= total;
      have_cond = true;
    }
  }
  return grid;
}

StateGrid complete_grid(const ObservationPanel& panel) {
  StateGrid grid(panel.n_subjects(), panel.n_days());
  for (int i = 0; i < panel.n_subjects(); ++i) {
    for (int t = 0; t < panel.n_days(); ++t) {
      if (panel.is_missing(i, t)) throw InputError("complete_grid: panel has missing cells");
      grid(i, t) = panel.level(i, t);
    }
  }
  return grid;
}

}  // namespace mehmm
