#pragma once

// Parameter containers for the mixed-effects HMM and the first-order Markov
// model.
//
// States are 0-based in memory; state 0 is the multinomial-logit baseline, so
// the logit parameters exist only for destinations 1..S-1. Every
// destination-indexed accessor takes the destination state itself (1..S-1),
// not a shifted index.
//
// The Markov model is stored in the same container with S = M and an identity
// emission matrix that is never sampled; its rows are indexed by the previous
// observation.

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mehmm {

enum class ModelKind { hmm, markov };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

class TransitionParams {
public:
  TransitionParams() = default;
  TransitionParams(int n_subjects, int n_states, int n_covariates);

  int n_subjects() const { return n_subjects_; }
  int n_states() const { return n_states_; }
  int n_covariates() const { return n_covariates_; }

  double& alpha(int subject, int from, int to) { return alpha_[alpha_index(subject, from, to)]; }
  double alpha(int subject, int from, int to) const { return alpha_[alpha_index(subject, from, to)]; }
  /// The S-1 intercepts of row `from` for one subject (destinations 1..S-1).
  std::span<const double> alpha_row(int subject, int from) const {
    return std::span<const double>(alpha_).subspan(alpha_index(subject, from, 1), dests());
  }

  double& beta(int from, int to, int k) { return beta_[beta_index(from, to, k)]; }
  double beta(int from, int to, int k) const { return beta_[beta_index(from, to, k)]; }
  /// (S-1) x p block of fixed effects for row `from`, destination-major.
  std::span<const double> beta_row(int from) const {
    return std::span<const double>(beta_).subspan(beta_index(from, 1, 0), dests() * ncov());
  }

  double& mu(int from, int to) { return mu_[block_index(from, to)]; }
  double mu(int from, int to) const { return mu_[block_index(from, to)]; }
  double& sigma(int from, int to) { return sigma_[block_index(from, to)]; }
  double sigma(int from, int to) const { return sigma_[block_index(from, to)]; }

  std::vector<double>& alpha_values() { return alpha_; }
  const std::vector<double>& alpha_values() const { return alpha_; }
  std::vector<double>& beta_values() { return beta_; }
  const std::vector<double>& beta_values() const { return beta_; }
  std::vector<double>& mu_values() { return mu_; }
  const std::vector<double>& mu_values() const { return mu_; }
  std::vector<double>& sigma_values() { return sigma_; }
  const std::vector<double>& sigma_values() const { return sigma_; }

  /// Copy restricted to a different subject count; new subjects get alpha = mu.
  TransitionParams resized(int n_subjects) const;

  bool operator==(const TransitionParams&) const = default;

private:
  std::size_t dests() const { return static_cast<std::size_t>(n_states_ - 1); }
  std::size_t ncov() const { return static_cast<std::size_t>(n_covariates_); }
  std::size_t block_index(int from, int to) const {
    return static_cast<std::size_t>(from) * dests() + static_cast<std::size_t>(to - 1);
  }
  std::size_t alpha_index(int subject, int from, int to) const {
    return static_cast<std::size_t>(subject) * static_cast<std::size_t>(n_states_) * dests() +
           block_index(from, to);
  }
  std::size_t beta_index(int from, int to, int k) const {
    return block_index(from, to) * ncov() + static_cast<std::size_t>(k);
  }

  int n_subjects_ = 0;
  int n_states_ = 0;
  int n_covariates_ = 0;
  std::vector<double> alpha_;
  std::vector<double> beta_;
  std::vector<double> mu_;
  std::vector<double> sigma_;
};

struct ModelParams {
  ModelKind kind = ModelKind::hmm;
  TransitionParams transition;
  Eigen::VectorXd initial;   ///< S-vector
  Eigen::MatrixXd emission;  ///< S x M; identity for the Markov model

  int n_states() const { return transition.n_states(); }
  int n_levels() const { return static_cast<int>(emission.cols()); }
  int n_subjects() const { return transition.n_subjects(); }
  int n_covariates() const { return transition.n_covariates(); }

  /// Zero logits, unit sigmas, uniform initial distribution; emissions uniform
  /// (HMM) or identity (Markov, requires n_states == n_levels).
  static ModelParams zeros(ModelKind kind, int n_subjects, int n_states, int n_levels, int n_covariates);

  /// Throws InputError describing the first violated invariant.
  void validate(double tol = 1e-12) const;

  bool operator==(const ModelParams& other) const;
};

/// Flat, named view of every scalar parameter, in a fixed documented order:
/// alpha[i][r][s], beta[r][s][k], mu[r][s], sigma[r][s], pi[s], then P[s][m]
/// (HMM only). Indices in names are 1-based; r, s run over states and
/// s >= 2 for the logit blocks.
class ParameterLayout {
public:
  ParameterLayout(ModelKind kind, int n_subjects, int n_states, int n_levels, int n_covariates);
  explicit ParameterLayout(const ModelParams& params);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  /// Position of a name, or -1.
  long index_of(std::string_view name) const;

  std::vector<double> flatten(const ModelParams& params) const;
  /// Inverse of flatten; `shape` supplies kind and dimensions.
  ModelParams unflatten(std::span<const double> values, const ModelParams& shape) const;

  /// Where each block starts in the flat vector.
  std::size_t alpha_offset() const { return 0; }
  std::size_t beta_offset() const { return beta_offset_; }
  std::size_t mu_offset() const { return mu_offset_; }
  std::size_t sigma_offset() const { return sigma_offset_; }
  std::size_t pi_offset() const { return pi_offset_; }
  std::size_t emission_offset() const { return emission_offset_; }

private:
  ModelKind kind_;
  std::vector<std::string> names_;
  std::size_t beta_offset_ = 0, mu_offset_ = 0, sigma_offset_ = 0, pi_offset_ = 0, emission_offset_ = 0;
};

/// Key-value text: a "# mehmm-params 1" line, dimension lines
/// (model, subjects, states, levels, covariates), then "<name> <value>" per
/// scalar in ParameterLayout order.
void write_params(std::ostream& out, const ModelParams& params);
void write_params(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_params(std::istream& in, const std::string& source = "<stream>");
ModelParams read_params(const std::filesystem::path& path);

}  // namespace mehmm
