#include "mehmm/diagnostics.hpp"

#include "mehmm/error.hpp"
#include "mehmm/inference.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace mehmm {

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

std::optional<double> potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InputError("R-hat needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 2) throw InputError("R-hat needs at least two draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) throw InputError("R-hat needs chains of equal length");
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(variance_of(c));
  }
  const double W = mean_of(vars);
  if (!(W > 0.0)) return std::nullopt;
  const double B = static_cast<double>(n) * variance_of(means);
  const double nd = static_cast<double>(n);
  return std::sqrt(((nd - 1.0) / nd * W + B / nd) / W);
}

std::optional<double> effective_sample_size(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < 4) throw InputError("ESS needs at least four draws");
  const double m = mean_of(trace);
  std::size_t padded = 1;
  while (padded < 2 * n) padded <<= 1;
  std::vector<double> centered(padded, 0.0);
  for (std::size_t k = 0; k < n; ++k) centered[k] = trace[k] - m;

  // Autocovariances by FFT of the zero-padded series.
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, centered);
  for (auto& z : spectrum) z = std::norm(z);
  std::vector<double> acov;
  fft.inv(acov, spectrum);
  const double c0 = acov[0];
  if (!(c0 > 1e-300 * static_cast<double>(n))) return std::nullopt;
  double sum = 0.0;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    const double pair = (acov[lag] + acov[lag + 1]) / c0;
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = -1.0 + 2.0 * sum;
  return static_cast<double>(n) / std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
}

std::optional<double> effective_sample_size(const std::vector<std::vector<double>>& chains) {
  double total = 0.0;
  for (const auto& c : chains) {
    const auto e = effective_sample_size(std::span<const double>(c));
    if (!e) return std::nullopt;
    total += *e;
  }
  return total;
}

double deviance(const ObservationPanel& panel, const DesignMatrix& design, const ModelParams& params) {
  return -2.0 * log_likelihood(panel, design, params);
}

ModelParams posterior_mean(const ChainSet& chains, MeanSpace space) {
  if (chains.n_draws() == 0) throw InputError("posterior mean of an empty chain set");
  const ParameterLayout layout(chains.shape);
  const std::size_t dim = layout.size();
  const std::size_t pi_begin = layout.pi_offset();
  std::vector<double> sum(dim, 0.0);
  double count = 0.0;
  for (int c = 0; c < chains.n_chains(); ++c) {
    for (std::size_t g = 0; g < chains.chains[static_cast<std::size_t>(c)].n_draws(); ++g) {
      const auto flat = chains.flat_draw(c, g);
      for (std::size_t k = 0; k < dim; ++k) {
        const bool probability = k >= pi_begin;
        sum[k] += probability && space == MeanSpace::logit ? std::log(std::max(flat[k], 1e-300)) : flat[k];
      }
      count += 1.0;
    }
  }
  for (double& v : sum) v /= count;
  if (space == MeanSpace::logit) {
    for (std::size_t k = pi_begin; k < dim; ++k) sum[k] = std::exp(sum[k]);
  }
  ModelParams mean = layout.unflatten(sum, chains.shape);
  mean.initial /= mean.initial.sum();
  if (mean.kind == ModelKind::hmm) {
    for (Eigen::Index s = 0; s < mean.emission.rows(); ++s) mean.emission.row(s) /= mean.emission.row(s).sum();
  }
  return mean;
}

DicReport dic_from(std::span<const double> deviances, double deviance_at_mean) {
  if (deviances.empty()) throw InputError("DIC needs at least one draw");
  DicReport r;
  r.mean_deviance = mean_of(deviances);
  r.deviance_at_mean = deviance_at_mean;
  r.p_d = r.mean_deviance - r.deviance_at_mean;
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

DicReport dic(const ChainSet& chains, const ObservationPanel& panel, const DesignMatrix& design, MeanSpace space) {
  std::vector<double> all;
  for (const auto& c : chains.chains) all.insert(all.end(), c.deviance.begin(), c.deviance.end());
  return dic_from(all, deviance(panel, design, posterior_mean(chains, space)));
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ParameterSummary summarize_scalar(const std::string& name, const std::vector<std::vector<double>>& chains) {
  ParameterSummary s;
  s.name = name;
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  s.mean = mean_of(pooled);
  s.sd = pooled.size() > 1 ? std::sqrt(variance_of(pooled)) : 0.0;
  s.q025 = quantile(pooled, 0.025);
  s.q975 = quantile(pooled, 0.975);
  if (chains.size() >= 2 && chains.front().size() >= 2) s.rhat = potential_scale_reduction(chains);
  if (chains.front().size() >= 4) s.ess = effective_sample_size(chains);
  return s;
}

std::vector<ParameterSummary> summarize(const ChainSet& chains) {
  std::vector<ParameterSummary> out;
  const auto& names = chains.names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<std::vector<double>> traces;
    for (int c = 0; c < chains.n_chains(); ++c) traces.push_back(chains.trace(c, k));
    out.push_back(summarize_scalar(names[k], traces));
  }
  return out;
}

std::vector<int> canonical_order(const ModelParams& params) {
  const int S = params.n_states();
  std::vector<int> order(static_cast<std::size_t>(S));
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int s) {
    Eigen::Index mode = 0;
    params.emission.row(s).maxCoeff(&mode);
    double mean = 0.0;
    for (Eigen::Index m = 0; m < params.emission.cols(); ++m) mean += static_cast<double>(m) * params.emission(s, m);
    return std::pair{static_cast<double>(mode), mean};
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  return order;
}

ModelParams relabel(const ModelParams& params, const std::vector<int>& order) {
  const int S = params.n_states();
  const int N = params.n_subjects();
  const int p = params.n_covariates();
  if (static_cast<int>(order.size()) != S) throw InputError("relabel: order has the wrong length");
  ModelParams out = ModelParams::zeros(params.kind, N, S, params.n_levels(), p);
  const auto& tr = params.transition;
  auto& nt = out.transition;
  const int base = order[0];
  for (int a = 0; a < S; ++a) {
    const int r = order[static_cast<std::size_t>(a)];
    out.initial[a] = params.initial[r];
    out.emission.row(a) = params.emission.row(r);
    for (int b = 1; b < S; ++b) {
      const int o = order[static_cast<std::size_t>(b)];
      auto logit = [&](auto&& get, int dest) { return dest == 0 ? 0.0 : get(dest); };
      for (int i = 0; i < N; ++i) {
        auto get = [&](int d) { return tr.alpha(i, r, d); };
        nt.alpha(i, a, b) = logit(get, o) - logit(get, base);
      }
      for (int k = 0; k < p; ++k) {
        auto get = [&](int d) { return tr.beta(r, d, k); };
        nt.beta(a, b, k) = logit(get, o) - logit(get, base);
      }
      auto mu = [&](int d) { return tr.mu(r, d); };
      nt.mu(a, b) = logit(mu, o) - logit(mu, base);
      const double so = o == 0 ? 0.0 : tr.sigma(r, o);
      const double sb = base == 0 ? 0.0 : tr.sigma(r, base);
      nt.sigma(a, b) = std::sqrt(so * so + sb * sb);
    }
  }
  if (params.kind == ModelKind::markov) out.emission = params.emission;
  return out;
}

std::size_t label_order_violations(const ChainSet& chains) {
  std::size_t count = 0;
  for (int c = 0; c < chains.n_chains(); ++c) {
    for (std::size_t g = 0; g < chains.chains[static_cast<std::size_t>(c)].n_draws(); ++g) {
      const auto order = canonical_order(chains.draw(c, g));
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (order[k] != static_cast<int>(k)) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

}  // namespace mehmm
