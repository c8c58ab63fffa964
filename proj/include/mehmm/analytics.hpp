#pragma once

// Posterior summaries built on the fitted chains: average predictive
// comparisons, stationary distributions, posterior predictive checks,
// serial-dependence comparisons and relapse episodes.

#include "mehmm/dataset.hpp"
#include "mehmm/inference.hpp"
#include "mehmm/mcmc.hpp"
#include "mehmm/params.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace mehmm {

/// Two values of one input on the standardized scale.
struct PredictiveComparisonRequest {
  std::string input_name;
  double u_hi = 0.5;
  double u_lo = -0.5;
};

/// Binary inputs compare their two standardized codes; continuous inputs
/// compare mean + 1 sd with mean - 1 sd (+-0.5 after standardization).
PredictiveComparisonRequest default_request(const DesignMatrix& design, const std::string& input_name);

/// Which posterior draws to use: every `stride`-th draw of every chain.
struct DrawSelection {
  std::size_t stride = 1;
};

/// Per draw, the S x S matrix B(j, m) averaged over subjects i and days
/// t = 0..T-2, with the input set to u_hi minus set to u_lo and the other
/// inputs at their observed values.
std::vector<Eigen::MatrixXd> average_transition_difference(const ChainSet& chains, const DesignMatrix& design,
                                                           const PredictiveComparisonRequest& request,
                                                           DrawSelection selection = {});
Eigen::MatrixXd average_transition_difference(const ModelParams& params, const DesignMatrix& design,
                                              const PredictiveComparisonRequest& request);

/// pi* with pi* Q = pi*, sum 1. Throws NumericalError for a reducible or
/// periodic matrix (more than one eigenvalue of unit modulus).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& q);

/// Per draw, the S-vector of stationary-probability differences averaged over
/// subjects, each subject's matrix taken at the design of the last day.
std::vector<Eigen::VectorXd> average_stationary_difference(const ChainSet& chains, const DesignMatrix& design,
                                                           const PredictiveComparisonRequest& request,
                                                           DrawSelection selection = {});
Eigen::VectorXd average_stationary_difference(const ModelParams& params, const DesignMatrix& design,
                                              const PredictiveComparisonRequest& request);

/// Mean over draws of one subject's transition matrix on `day`.
Eigen::MatrixXd posterior_mean_transitions(const ChainSet& chains, const DesignMatrix& design, int subject, int day);

/// Mean over draws of softmax(mu_r): the matrix of a subject with average
/// random intercepts and an all-zero design vector.
Eigen::MatrixXd average_subject_transitions(const ChainSet& chains);
Eigen::MatrixXd average_subject_transitions(const ModelParams& params);

enum class PpcMode {
  new_subjects,   ///< alpha_rep ~ N(mu, sigma^2) for every subject
  same_subjects,  ///< alpha of the draw itself
};

/// One replicate panel from one draw, with `mask` (1 = missing) applied.
ObservationPanel ppc_replicate(const ModelParams& draw, const DesignMatrix& design, PpcMode mode,
                               std::span<const std::uint8_t> mask, Rng& rng);

/// Named statistics of a three-level panel (abstinent, moderate, heavy):
/// mean and variance of per-subject moderate and heavy day counts, mean and sd
/// of the first drinking day over subjects who drink, the Never-Drinker count,
/// and per 28-day block the mean and sd of the abstinent, moderate and heavy
/// day counts. Missing days are ignored; variances use divisor n - 1.
struct PpcStatistics {
  std::vector<std::string> names;
  std::vector<double> values;

  double at(std::string_view name) const;
  bool operator==(const PpcStatistics&) const = default;
};

PpcStatistics ppc_statistics(const ObservationPanel& panel);
/// Same statistics from running tallies fed day by day.
PpcStatistics ppc_statistics_incremental(const ObservationPanel& panel);

/// Names of the block statistics (6 blocks x 3 levels x 2 moments for T = 168).
std::vector<std::string> block_statistic_names(int n_days);

/// First observed day (1-based) with a drinking level (0-based level >= 1), or 0 if none.
int first_drinking_day(std::span<const int> levels);

/// Share of replicates below the observed value, ties counting one half.
double ppc_quantile(double observed, std::span<const double> replicates);

struct PpcResult {
  std::string name;
  double observed = 0.0;
  std::vector<double> replicates;
  double quantile = 0.0;
};

/// One replicate per selected draw; stream {seed, 3, 1} for the replicates.
std::vector<PpcResult> posterior_predictive_check(const ChainSet& chains, const ObservationPanel& panel,
                                                  const DesignMatrix& design, PpcMode mode, std::uint64_t seed,
                                                  DrawSelection selection = {});

struct MotifRow {
  std::string motif;  ///< "iji" or "ijj"
  int first = 0;      ///< level i, 0-based
  int second = 0;     ///< level j, 0-based
  int count = 0;
  double hmm_probability = 0.0;     ///< mean one-step probability of the third value
  double markov_probability = 0.0;
};

/// Observed triplets on consecutive days (i, j, i) and (i, j, j), i != j, and
/// the mean predictive probability of the third value under each model.
std::vector<MotifRow> serial_dependence_table(const ObservationPanel& panel, const DesignMatrix& design,
                                              const ModelParams& hmm, const ModelParams& markov,
                                              PredictiveMode mode = PredictiveMode::one_step);
std::vector<MotifRow> serial_dependence_table(const ObservationPanel& panel, const DesignMatrix& design,
                                              const ChainSet& hmm, const ChainSet& markov,
                                              PredictiveMode mode = PredictiveMode::one_step);

struct Episode {
  int start = 0;  ///< 1-based first day
  int end = 0;    ///< 1-based last day, inclusive
  int state = 0;  ///< most frequent relapse state in the run (lowest on ties), 0-based
};

/// Maximal runs of days whose decoded state lies in `relapse_states`.
std::vector<std::vector<Episode>> relapse_segments(const std::vector<ViterbiPath>& paths,
                                                   const std::set<int>& relapse_states);
std::vector<Episode> relapse_segments(std::span<const int> path, const std::set<int>& relapse_states);

}  // namespace mehmm
