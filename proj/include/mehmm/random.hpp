#pragma once

// Random streams and the handful of distributions the samplers draw from.
//
// Every stream is a mt19937_64 seeded from std::seed_seq over
// (user seed, tags...). Tags used by the library:
//   {seed, chain, 0}          chain-level updates (beta, mu, sigma, pi, P)
//   {seed, chain, 1, subject} per-subject updates (FFBS / imputation, alpha)
//   {seed, chain, 2}          initial jitter
//   {seed, 3, ...}            simulation and posterior-predictive replicates

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace mehmm {

using Rng = std::mt19937_64;

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
double gamma_draw(Rng& rng, double shape);

/// Index k with probability weights[k] / sum(weights). Weights need not be normalized.
int categorical(Rng& rng, std::span<const double> weights);

Eigen::VectorXd dirichlet(Rng& rng, std::span<const double> concentration);

/// Draw of v from the scaled inverse chi-squared law with `df` degrees of
/// freedom and scale s^2, i.e. v = df * s^2 / X with X ~ chi^2_df.
double scaled_inv_chi2(Rng& rng, double df, double scale2);

}  // namespace mehmm
