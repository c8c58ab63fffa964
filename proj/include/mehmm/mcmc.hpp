#pragma once

// Metropolis-within-Gibbs samplers for the mixed-effects HMM and Markov model.
//
// One sweep of the HMM sampler draws, in order: hidden states by FFBS, the
// random intercepts alpha, the fixed effects beta, the means mu, the standard
// deviations sigma, the emission rows P and the initial distribution pi. The
// Markov sweep imputes the missing observations in place of the FFBS step and
// skips P.
//
// The sigma update draws sigma^2 from a scaled inverse chi-squared law. With
// N subjects, a prior p(sigma^2) proportional to (sigma^2)^-(nu0/2 + 1)
// exp(-nu0 s0^2 / (2 sigma^2)) and SS = sum_i (alpha_i - mu)^2, the full
// conditional is
//   sigma^2 = (nu0 s0^2 + SS) / X,  X ~ chi^2 with N + nu0 degrees of freedom.
// The flat prior on sigma corresponds to nu0 = -1, s0^2 = 0 (N - 1 degrees of
// freedom); a flat prior on sigma^2 to nu0 = -2, s0^2 = 0.

#include "mehmm/dataset.hpp"
#include "mehmm/model.hpp"
#include "mehmm/params.hpp"
#include "mehmm/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mehmm {

enum class SigmaPrior {
  flat_sigma,     ///< p(sigma) constant
  flat_variance,  ///< p(sigma^2) constant
  inv_chi2,       ///< proper scaled inverse chi-squared(sigma_df, sigma_scale^2)
};

struct PriorSpec {
  double beta_sd = 10.0;
  double mu_sd = 10.0;
  SigmaPrior sigma_prior = SigmaPrior::flat_sigma;
  double sigma_df = 0.0;     ///< inv_chi2 only
  double sigma_scale = 0.0;  ///< inv_chi2 only
  double dirichlet_concentration = 1.0;

  /// (nu0, s0^2) of the equivalent scaled inverse chi-squared prior.
  std::pair<double, double> sigma_hyper() const;
  void validate() const;
};

struct SamplerConfig {
  int n_chains = 3;
  int n_burnin = 10000;
  int n_keep = 10000;
  int thin = 1;
  double rw_step_alpha = 0.4;
  double rw_step_beta = 0.1;
  bool adapt_during_burnin = true;
  double target_acceptance = 0.44;
  double jitter_scale = 0.1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool store_state_trace = false;

  void validate() const;
};

/// Pooled homogeneous HMM fitted by Baum-Welch.
struct EmFit {
  Eigen::MatrixXd transition;  ///< S x S
  Eigen::MatrixXd emission;    ///< S x M
  Eigen::VectorXd initial;     ///< S
  std::vector<double> log_likelihood;  ///< one entry per completed iteration, starting at the initial point
  int iterations = 0;
  bool converged = false;
};

struct EmOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;
  /// Keep emissions at the identity (the Markov model, S = M).
  bool identity_emission = false;
};

/// Baum-Welch for a homogeneous HMM pooled over subjects; missing cells are
/// marginalized. Starts from a fixed diagonal-heavy point.
EmFit em_initialize(const ObservationPanel& panel, int n_states, const EmOptions& options = {});

/// Starting parameters for one chain: beta = 0, mu from softmax inversion of
/// the EM rows, alpha = mu + jitter_scale * N(0, 1), sigma = 1, pi and P from EM
/// (floored at 1e-6 and renormalized).
ModelParams init_chain(const EmFit& em, ModelKind kind, int n_subjects, int n_covariates, int chain_index,
                       double jitter_scale, std::uint64_t seed);

/// Metropolis acceptance tallies, one slot per logit block (r, s) for alpha and
/// per (r, s, k) for beta, plus the current step sizes.
struct AcceptanceRecord {
  std::vector<double> alpha_accepted, alpha_proposed, alpha_step;
  std::vector<double> beta_accepted, beta_proposed, beta_step;

  double alpha_rate() const;
  double beta_rate() const;
  void reset_counts();
};

/// Sampler state for one chain. The panel and design are referenced, not copied.
class Sampler {
public:
  Sampler(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, const PriorSpec& prior,
          const SamplerConfig& config, ModelParams initial, std::uint64_t seed, int chain_index);

  /// One full iteration. `adapt` enables Robbins-Monro step adaptation with
  /// gain (iteration + 1)^-0.6.
  void sweep(int iteration, bool adapt);

  void update_states();
  void update_alpha(int iteration, bool adapt);
  void update_beta(int iteration, bool adapt);
  void update_mu();
  void update_sigma();
  void update_emissions();
  void update_pi();

  /// Swap the data (same dimensions), as in joint-distribution tests.
  void set_panel(const ObservationPanel& panel);
  /// Replace the current hidden states / imputed observations.
  void set_states(const StateGrid& states);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const StateGrid& states() const { return states_; }
  const AcceptanceRecord& acceptance() const { return acceptance_; }
  AcceptanceRecord& acceptance() { return acceptance_; }
  ModelKind kind() const { return kind_; }

private:
  /// Transitions out of one origin state, grouped by subject, with cached
  /// linear predictors eta = alpha + x . beta for destinations 1..S-1.
  struct RowData {
    std::vector<int> dest;
    std::vector<double> x;    ///< entries x p
    std::vector<double> eta;  ///< entries x (S-1)
    std::vector<std::size_t> subject_begin;  ///< N+1 offsets
  };
  void rebuild_rows();

  ModelKind kind_;
  const ObservationPanel* panel_;
  const DesignMatrix* design_;
  PriorSpec prior_;
  SamplerConfig config_;
  ModelParams params_;
  StateGrid states_;
  AcceptanceRecord acceptance_;
  Rng chain_rng_;
  std::vector<Rng> subject_rngs_;
  std::vector<RowData> rows_;
};

/// Exact imputation of the missing observations of a Markov-model panel.
StateGrid sample_missing_y(const ModelParams& params, const ObservationPanel& panel, const DesignMatrix& design,
                           Rng& rng);

/// Draws of the conjugate full conditionals, exposed for testing.
double draw_mu(Rng& rng, std::span<const double> alpha, double sigma, double mu_sd);
double draw_sigma2(Rng& rng, std::span<const double> alpha, double mu, const PriorSpec& prior);
Eigen::VectorXd draw_dirichlet_counts(Rng& rng, std::span<const double> counts, double concentration);

struct Chain {
  int chain_index = 0;
  std::uint64_t seed = 0;
  std::vector<int> iterations;   ///< sweep number of each kept draw (0-based, burn-in included)
  std::vector<double> values;    ///< n_draws x layout size, row-major
  std::vector<double> deviance;  ///< per kept draw
  AcceptanceRecord burnin_acceptance;
  AcceptanceRecord acceptance;   ///< post-burn-in
  StateGrid final_states;        ///< hidden states (HMM) or imputed panel (Markov) at the last sweep
  std::vector<double> occupancy; ///< N x T x S tallies of kept draws (HMM)
  std::vector<StateGrid> state_trace;

  std::size_t n_draws() const { return deviance.size(); }
};

struct ChainSet {
  ModelKind kind = ModelKind::hmm;
  ModelParams shape;  ///< dimensions only
  PriorSpec prior;
  SamplerConfig config;
  std::vector<Chain> chains;

  int n_chains() const { return static_cast<int>(chains.size()); }
  std::size_t n_draws() const { return chains.empty() ? 0 : chains.front().n_draws(); }
  std::size_t dimension() const;
  const std::vector<std::string>& names() const;

  ModelParams draw(int chain, std::size_t g) const;
  std::span<const double> flat_draw(int chain, std::size_t g) const;
  /// Trace of one scalar parameter (by layout index) in one chain.
  std::vector<double> trace(int chain, std::size_t index) const;
  std::vector<double> trace(int chain, std::string_view name) const;
  /// Every draw of every chain, chain-major.
  std::vector<ModelParams> all_draws() const;

private:
  mutable std::optional<ParameterLayout> layout_;
  const ParameterLayout& layout() const;
};

/// EM-initialized single chain.
Chain run_chain(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, int n_states,
                const PriorSpec& prior, const SamplerConfig& config, int chain_index);
/// Chain from explicit starting parameters.
Chain run_chain_from(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design,
                     const PriorSpec& prior, const SamplerConfig& config, int chain_index, ModelParams initial);

/// config.n_chains independent chains, up to config.threads at a time.
ChainSet run_chains(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, int n_states,
                    const PriorSpec& prior, const SamplerConfig& config);

}  // namespace mehmm
