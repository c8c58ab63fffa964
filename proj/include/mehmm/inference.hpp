#pragma once

// Exact likelihoods, smoothing, sampling and decoding.
//
// Missing observations contribute an emission factor of one, so the forward
// vector is carried across a gap of g missing days by the product of the g+1
// daily transition matrices, which is exactly multi_step_matrix. The Markov
// model runs through the same recursions with identity emissions: observed
// cells pin the chain and missing runs are marginalized (likelihood) or
// imputed (sampling). The first day always uses the initial distribution,
// whether or not it is observed.

#include "mehmm/dataset.hpp"
#include "mehmm/model.hpp"
#include "mehmm/params.hpp"
#include "mehmm/random.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace mehmm {

/// Daily transition matrices of one subject, days 0..T-2, flat row-major.
class SubjectTransitions {
public:
  SubjectTransitions() = default;
  SubjectTransitions(const TransitionParams& params, const DesignMatrix& design, int subject);

  void compute(const TransitionParams& params, const DesignMatrix& design, int subject);

  int n_states() const { return n_states_; }
  int n_steps() const { return n_steps_; }
  double operator()(int day, int from, int to) const {
    return values_[(static_cast<std::size_t>(day) * static_cast<std::size_t>(n_states_) +
                    static_cast<std::size_t>(from)) * static_cast<std::size_t>(n_states_) +
                   static_cast<std::size_t>(to)];
  }
  const double* matrix(int day) const {
    return values_.data() + static_cast<std::size_t>(day) * static_cast<std::size_t>(n_states_ * n_states_);
  }

private:
  int n_states_ = 0;
  int n_steps_ = 0;
  std::vector<double> values_;
  std::vector<double> x_;
};

struct ForwardBackwardResult {
  double log_likelihood = 0.0;
  Eigen::MatrixXd filtered;  ///< T x S, p(H_t | Y_1..t)
  Eigen::MatrixXd smoothed;  ///< T x S, p(H_t | all observed Y)
  Eigen::VectorXd scaling;   ///< T per-day normalizers; log_likelihood = sum(log scaling)
};

ForwardBackwardResult forward_backward(const ObservationPanel& panel, const DesignMatrix& design,
                                       const ModelParams& params, int subject);

/// log p(Y_obs,i | theta) for one subject; 0 when the subject has no observed cell.
double log_likelihood_subject(const ObservationPanel& panel, const DesignMatrix& design,
                              const ModelParams& params, int subject);

/// Observed-data log-likelihood summed over subjects (either model kind).
double log_likelihood(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params);

double log_likelihood_hmm(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params);

/// Without `imputed`: the observed-data likelihood with missing runs
/// marginalized. With `imputed` (a complete panel agreeing with every observed
/// cell): the complete-data likelihood log pi(y_1) + sum log Q_t(y_t, y_t+1).
double log_likelihood_markov(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                             const StateGrid* imputed = nullptr);

/// Exact draw of one subject's state path from p(H_i | Y_obs, theta) into `out`.
/// `transitions` must hold the subject's matrices. Throws NumericalError if
/// the observations have zero probability.
void ffbs_subject(std::span<const int> levels, const SubjectTransitions& transitions, const ModelParams& params,
                  Rng& rng, std::span<int> out);

/// Hidden-state grid drawn subject by subject from one stream.
StateGrid ffbs_sample_hidden(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                             Rng& rng);

/// Per subject, the T x S matrix of p(H_t = s | Y_obs, theta).
std::vector<Eigen::MatrixXd> smoothed_marginals(const ObservationPanel& panel, const DesignMatrix& design,
                                                const ModelParams& params);

struct ViterbiPath {
  std::vector<int> states;
  double log_joint = 0.0;
};

/// Most probable state path per subject. Ties go to the lower state index.
std::vector<ViterbiPath> viterbi(const ObservationPanel& panel, const DesignMatrix& design,
                                 const ModelParams& params);
ViterbiPath viterbi_subject(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params,
                            int subject);

/// log p(H_i = path, Y_obs,i | theta).
double log_joint(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params, int subject,
                 std::span<const int> path);

enum class PredictiveMode {
  one_step,  ///< p(y_t | every observed y before t)
  markov,    ///< p(y_t | most recent observed y before t)
};

struct PredictiveGrid {
  int n_subjects = 0;
  int n_days = 0;
  std::vector<double> values;  ///< NaN where the cell is missing

  std::optional<double> at(int i, int t) const;
};

PredictiveGrid pointwise_predictive(const ObservationPanel& panel, const DesignMatrix& design,
                                    const ModelParams& params, PredictiveMode mode);

/// Converts a Markov-model panel of complete values into a StateGrid; throws if any cell is missing.
StateGrid complete_grid(const ObservationPanel& panel);

}  // namespace mehmm
