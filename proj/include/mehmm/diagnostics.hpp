#pragma once

// Convergence and model-comparison summaries over stored chains.
//
// Potential scale reduction, without chain splitting, for m chains of n draws:
//   W = mean of the within-chain variances (divisor n - 1)
//   B = n * variance of the chain means (divisor m - 1)
//   R = sqrt(((n - 1) / n * W + B / n) / W)
// Effective sample size uses Geyer's initial positive sequence: autocorrelation
// pairs rho(2k) + rho(2k+1) are summed while positive, and
//   ESS = n / (-1 + 2 * sum of the retained pairs).

#include "mehmm/dataset.hpp"
#include "mehmm/mcmc.hpp"
#include "mehmm/params.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mehmm {

/// Empty when the within-chain variance is zero.
std::optional<double> potential_scale_reduction(const std::vector<std::vector<double>>& chains);

/// Single-chain ESS; empty for a constant trace.
std::optional<double> effective_sample_size(std::span<const double> trace);
/// Sum of the per-chain values; empty if any chain is constant.
std::optional<double> effective_sample_size(const std::vector<std::vector<double>>& chains);

/// -2 log p(Y_obs | params).
double deviance(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params);

enum class MeanSpace {
  probability,  ///< average pi and P entrywise, then renormalize
  logit,        ///< average log pi and log P, then apply the softmax
};

/// Posterior mean over every kept draw of every chain.
ModelParams posterior_mean(const ChainSet& chains, MeanSpace space = MeanSpace::probability);

struct DicReport {
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  double p_d = 0.0;
  double dic = 0.0;
};

DicReport dic(const ChainSet& chains, const ObservationPanel& panel, const DesignMatrix& design,
              MeanSpace space = MeanSpace::probability);
/// D-bar from the given deviances, D(theta-bar) as given.
DicReport dic_from(std::span<const double> deviances, double deviance_at_mean);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double prob);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  std::optional<double> rhat;
  std::optional<double> ess;
};

/// One row per scalar parameter, pooling chains. R-hat needs at least two chains.
std::vector<ParameterSummary> summarize(const ChainSet& chains);
ParameterSummary summarize_scalar(const std::string& name, const std::vector<std::vector<double>>& chains);

/// State order placing emission modes in increasing level (ties by mean
/// level): canonical[k] is the current state shown as state k.
std::vector<int> canonical_order(const ModelParams& params);

/// Parameters with states relabelled by `order`. Logit blocks are
/// re-expressed against the new baseline, which is exact for alpha, beta and
/// mu; sigma becomes sqrt(sigma_a^2 + sigma_b^2), an approximation.
ModelParams relabel(const ModelParams& params, const std::vector<int>& order);

/// Number of draws whose canonical order is not the identity.
std::size_t label_order_violations(const ChainSet& chains);

}  // namespace mehmm
