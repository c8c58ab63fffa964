#pragma once

// Generative kernels shared by both models: covariate-dependent
// multinomial-logit transition rows, emissions, and forward simulation.
//
// The transition into day t+1 uses the design vector of day t.

#include "mehmm/dataset.hpp"
#include "mehmm/params.hpp"
#include "mehmm/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mehmm {

/// N x T grid of 0-based states (hidden states, or complete observations).
struct StateGrid {
  int n_subjects = 0;
  int n_days = 0;
  std::vector<int> values;

  StateGrid() = default;
  StateGrid(int subjects, int days, int fill = 0)
      : n_subjects(subjects), n_days(days),
        values(static_cast<std::size_t>(subjects) * static_cast<std::size_t>(days), fill) {}

  int& operator()(int i, int t) { return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_days) + static_cast<std::size_t>(t)]; }
  int operator()(int i, int t) const { return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_days) + static_cast<std::size_t>(t)]; }
  std::span<int> row(int i) { return std::span<int>(values).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(n_days), static_cast<std::size_t>(n_days)); }
  std::span<const int> row(int i) const { return std::span<const int>(values).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(n_days), static_cast<std::size_t>(n_days)); }

  bool operator==(const StateGrid&) const = default;
};

/// One multinomial-logit row: out[s] = exp(eta_s) / (1 + sum_{k>=1} exp(eta_k))
/// with eta_0 = 0 and eta_s = alpha_row[s-1] + x . beta_row[s-1, :].
/// `beta_row` is (S-1) x p destination-major. Evaluated after subtracting the
/// largest logit. Throws NumericalError for a non-finite linear predictor.
void transition_row(std::span<const double> alpha_row, std::span<const double> beta_row,
                    std::span<const double> x, std::span<double> out);
Eigen::VectorXd transition_row(std::span<const double> alpha_row, std::span<const double> beta_row,
                               std::span<const double> x);

/// S x S matrix for one subject given an explicit design vector.
void transition_matrix(const TransitionParams& params, int subject, std::span<const double> x,
                       Eigen::Ref<Eigen::MatrixXd> out);
/// Matrix governing the move from `day` to `day + 1`.
Eigen::MatrixXd transition_matrix(const ModelParams& params, const DesignMatrix& design, int subject, int day);

/// Ordered product of the gap+1 daily matrices for days start_day..start_day+gap:
/// the law of the state on day start_day+gap+1 given the state on start_day.
Eigen::MatrixXd multi_step_matrix(const ModelParams& params, const DesignMatrix& design, int subject,
                                  int start_day, int gap);

double emission_prob(const ModelParams& params, int state, int level);

struct SimulatedPanel {
  std::optional<StateGrid> hidden;  ///< HMM only
  StateGrid complete;               ///< every simulated observation, masked or not
  ObservationPanel observed;        ///< `complete` with the mask applied
  std::uint64_t seed = 0;
};

/// Forward simulation of the model. For an HMM, states start from `initial`,
/// move through daily transition matrices and emit through `emission`; for
/// the Markov model the chain runs directly on the observations. Cells under
/// `mask` (row-major, 1 = missing) are reported missing but still simulated.
SimulatedPanel simulate(const ModelParams& params, const DesignMatrix& design,
                        std::span<const std::uint8_t> mask, Rng& rng);

SimulatedPanel simulate_hmm(const ModelParams& params, const DesignMatrix& design, int n_subjects, int n_days,
                            const std::optional<std::vector<std::uint8_t>>& mask, std::uint64_t seed);
SimulatedPanel simulate_markov(const ModelParams& params, const DesignMatrix& design, int n_subjects,
                               int n_days, const std::optional<std::vector<std::uint8_t>>& mask,
                               std::uint64_t seed);

/// Softmax inversion: logits (relative to state 0) reproducing a probability
/// row. Probabilities below `floor` are raised to it and the row renormalized.
std::vector<double> logits_from_row(std::span<const double> probabilities, double floor = 1e-6);

}  // namespace mehmm
