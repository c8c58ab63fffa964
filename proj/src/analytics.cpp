#include "mehmm/analytics.hpp"

#include "mehmm/diagnostics.hpp"
#include "mehmm/error.hpp"
#include "mehmm/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace mehmm {

PredictiveComparisonRequest default_request(const DesignMatrix& design, const std::string& input_name) {
  const int k = design.index_of(input_name);
  const auto& record = design.column(k).record;
  PredictiveComparisonRequest request;
  request.input_name = design.column(k).record.name.empty() ? input_name : record.name;
  if (record.binary) {
    request.u_hi = record.apply(record.raw_high);
    request.u_lo = record.apply(record.raw_low);
  } else {
    request.u_hi = 0.5;
    request.u_lo = -0.5;
  }
  return request;
}

namespace {

int checked_input(const DesignMatrix& design, const PredictiveComparisonRequest& request) {
  const int k = design.index_of(request.input_name);
  if (request.u_hi == request.u_lo) throw InputError("predictive comparison needs two different input values");
  return k;
}

template <class F>
void for_each_draw(const ChainSet& chains, DrawSelection selection, F&& f) {
  if (selection.stride == 0) throw InputError("draw stride must be positive");
  for (int c = 0; c < chains.n_chains(); ++c) {
    const std::size_t n = chains.chains[static_cast<std::size_t>(c)].n_draws();
    for (std::size_t g = 0; g < n; g += selection.stride) f(chains.draw(c, g));
  }
}

}  // namespace

Eigen::MatrixXd average_transition_difference(const ModelParams& params, const DesignMatrix& design,
                                              const PredictiveComparisonRequest& request) {
  const int k = checked_input(design, request);
  const int S = params.n_states();
  const int N = params.n_subjects();
  const int T = design.n_days();
  if (T < 2) throw InputError("predictive comparison needs at least two days");
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(S, S);
  Eigen::MatrixXd hi(S, S), lo(S, S);
  std::vector<double> x_hi(static_cast<std::size_t>(design.n_covariates()));
  std::vector<double> x_lo(x_hi.size());
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t + 1 < T; ++t) {
      design.fill(i, t, x_hi);
      x_lo = x_hi;
      x_hi[static_cast<std::size_t>(k)] = request.u_hi;
      x_lo[static_cast<std::size_t>(k)] = request.u_lo;
      transition_matrix(params.transition, i, x_hi, hi);
      transition_matrix(params.transition, i, x_lo, lo);
      total += hi - lo;
    }
  }
  return total / (static_cast<double>(N) * (T - 1));
}

std::vector<Eigen::MatrixXd> average_transition_difference(const ChainSet& chains, const DesignMatrix& design,
                                                           const PredictiveComparisonRequest& request,
                                                           DrawSelection selection) {
  checked_input(design, request);
  std::vector<Eigen::MatrixXd> out;
  for_each_draw(chains, selection, [&](const ModelParams& p) { out.push_back(average_transition_difference(p, design, request)); });
  return out;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& q) {
  const Eigen::Index S = q.rows();
  if (S == 0 || q.cols() != S) throw InputError("stationary distribution needs a square matrix");
  for (Eigen::Index r = 0; r < S; ++r) {
    if (q.row(r).minCoeff() < 0.0 || std::abs(q.row(r).sum() - 1.0) > 1e-9) {
      throw InputError("stationary distribution needs a row-stochastic matrix");
    }
  }
  if (S == 1) return Eigen::VectorXd::Ones(1);

  const Eigen::EigenSolver<Eigen::MatrixXd> eigen(q, false);
  int unit = 0;
  for (Eigen::Index k = 0; k < S; ++k)
    if (std::abs(eigen.eigenvalues()[k]) > 1.0 - 1e-9) ++unit;
  if (unit != 1) throw NumericalError("transition matrix is reducible or periodic; no unique stationary distribution");

  Eigen::MatrixXd a = q.transpose() - Eigen::MatrixXd::Identity(S, S);
  a.row(S - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  b[S - 1] = 1.0;
  const auto lu = a.fullPivLu();
  Eigen::VectorXd pi = lu.solve(b);
  pi += lu.solve(b - a * pi);
  return pi;
}

Eigen::VectorXd average_stationary_difference(const ModelParams& params, const DesignMatrix& design,
                                              const PredictiveComparisonRequest& request) {
  const int k = checked_input(design, request);
  const int S = params.n_states();
  const int N = params.n_subjects();
  const int last = design.n_days() - 1;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(S);
  Eigen::MatrixXd q(S, S);
  std::vector<double> x(static_cast<std::size_t>(design.n_covariates()));
  for (int i = 0; i < N; ++i) {
    design.fill(i, last, x);
    x[static_cast<std::size_t>(k)] = request.u_hi;
    transition_matrix(params.transition, i, x, q);
    total += stationary_distribution(q);
    x[static_cast<std::size_t>(k)] = request.u_lo;
    transition_matrix(params.transition, i, x, q);
    total -= stationary_distribution(q);
  }
  return total / N;
}

std::vector<Eigen::VectorXd> average_stationary_difference(const ChainSet& chains, const DesignMatrix& design,
                                                           const PredictiveComparisonRequest& request,
                                                           DrawSelection selection) {
  checked_input(design, request);
  std::vector<Eigen::VectorXd> out;
  for_each_draw(chains, selection, [&](const ModelParams& p) { out.push_back(average_stationary_difference(p, design, request)); });
  return out;
}

Eigen::MatrixXd posterior_mean_transitions(const ChainSet& chains, const DesignMatrix& design, int subject, int day) {
  const int S = chains.shape.n_states();
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(S, S);
  double count = 0.0;
  for_each_draw(chains, {}, [&](const ModelParams& p) {
    total += transition_matrix(p, design, subject, day);
    count += 1.0;
  });
  if (count == 0.0) throw InputError("posterior mean of an empty chain set");
  return total / count;
}

Eigen::MatrixXd average_subject_transitions(const ModelParams& params) {
  const int S = params.n_states();
  Eigen::MatrixXd q(S, S);
  std::vector<double> mu(static_cast<std::size_t>(S > 1 ? S - 1 : 0));
  for (int r = 0; r < S; ++r) {
    for (int s = 1; s < S; ++s) mu[static_cast<std::size_t>(s - 1)] = params.transition.mu(r, s);
    q.row(r) = transition_row(mu, std::span<const double>{}, std::span<const double>{}).transpose();
  }
  return q;
}

Eigen::MatrixXd average_subject_transitions(const ChainSet& chains) {
  const int S = chains.shape.n_states();
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(S, S);
  double count = 0.0;
  for_each_draw(chains, {}, [&](const ModelParams& p) {
    total += average_subject_transitions(p);
    count += 1.0;
  });
  if (count == 0.0) throw InputError("posterior mean of an empty chain set");
  return total / count;
}

ObservationPanel ppc_replicate(const ModelParams& draw, const DesignMatrix& design, PpcMode mode,
                               std::span<const std::uint8_t> mask, Rng& rng) {
  if (mode == PpcMode::same_subjects) return simulate(draw, design, mask, rng).observed;
  ModelParams p = draw;
  const int S = p.n_states();
  for (int i = 0; i < p.n_subjects(); ++i)
    for (int r = 0; r < S; ++r)
      for (int s = 1; s < S; ++s)
        p.transition.alpha(i, r, s) = p.transition.mu(r, s) + p.transition.sigma(r, s) * standard_normal(rng);
  return simulate(p, design, mask, rng).observed;
}

double PpcStatistics::at(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return values[k];
  throw InputError("unknown statistic " + std::string(name));
}

namespace {

constexpr int kBlockDays = 28;
constexpr const char* kLevelNames[3] = {"abstinent", "moderate", "heavy"};

int n_blocks(int n_days) { return std::max(1, (n_days + kBlockDays - 1) / kBlockDays); }

std::pair<double, double> mean_var(const std::vector<long>& counts) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (counts.empty()) return {nan, nan};
  double sum = 0.0;
  for (long c : counts) sum += static_cast<double>(c);
  const double mean = sum / static_cast<double>(counts.size());
  if (counts.size() < 2) return {mean, nan};
  double ss = 0.0;
  for (long c : counts) ss += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  return {mean, ss / static_cast<double>(counts.size() - 1)};
}

/// Integer tallies from which every statistic is computed.
struct Tallies {
  std::vector<long> moderate, heavy;  ///< per subject
  std::vector<long> fdd;              ///< per subject, 0 = never drank
  std::vector<std::vector<long>> block;  ///< [block * 3 + level][subject]
};

PpcStatistics finish(const Tallies& t, int n_days) {
  PpcStatistics out;
  auto add = [&](std::string name, double v) {
    out.names.push_back(std::move(name));
    out.values.push_back(v);
  };
  const auto [mod_mean, mod_var] = mean_var(t.moderate);
  const auto [heavy_mean, heavy_var] = mean_var(t.heavy);
  add("mean_moderate", mod_mean);
  add("var_moderate", mod_var);
  add("mean_heavy", heavy_mean);
  add("var_heavy", heavy_var);
  std::vector<long> drinkers;
  for (long d : t.fdd)
    if (d > 0) drinkers.push_back(d);
  const auto [fdd_mean, fdd_var] = mean_var(drinkers);
  add("fdd_mean", fdd_mean);
  add("fdd_sd", std::sqrt(fdd_var));
  add("never_drinkers", static_cast<double>(t.fdd.size() - drinkers.size()));
  const auto names = block_statistic_names(n_days);
  for (std::size_t k = 0; k < t.block.size(); ++k) {
    const auto [m, v] = mean_var(t.block[k]);
    add(names[2 * k], m);
    add(names[2 * k + 1], std::sqrt(v));
  }
  return out;
}

void check_three_levels(const ObservationPanel& panel) {
  if (panel.n_levels() != 3) throw InputError("posterior predictive statistics need three levels");
}

}  // namespace

std::vector<std::string> block_statistic_names(int n_days) {
  std::vector<std::string> names;
  for (int b = 0; b < n_blocks(n_days); ++b) {
    for (const char* level : kLevelNames) {
      const std::string stem = "block" + std::to_string(b + 1) + "_" + level;
      names.push_back(stem + "_mean");
      names.push_back(stem + "_sd");
    }
  }
  return names;
}

int first_drinking_day(std::span<const int> levels) {
  for (std::size_t t = 0; t < levels.size(); ++t)
    if (levels[t] != kMissing && levels[t] >= 1) return static_cast<int>(t) + 1;
  return 0;
}

PpcStatistics ppc_statistics(const ObservationPanel& panel) {
  check_three_levels(panel);
  const int N = panel.n_subjects();
  const int T = panel.n_days();
  const int B = n_blocks(T);
  Tallies t;
  t.block.assign(static_cast<std::size_t>(B * 3), std::vector<long>(static_cast<std::size_t>(N), 0));
  for (int i = 0; i < N; ++i) {
    const auto row = panel.row(i);
    t.moderate.push_back(std::count(row.begin(), row.end(), 1));
    t.heavy.push_back(std::count(row.begin(), row.end(), 2));
    t.fdd.push_back(first_drinking_day(row));
    for (int b = 0; b < B; ++b) {
      const auto begin = row.begin() + b * kBlockDays;
      const auto end = row.begin() + std::min(T, (b + 1) * kBlockDays);
      for (int m = 0; m < 3; ++m) t.block[static_cast<std::size_t>(b * 3 + m)][static_cast<std::size_t>(i)] = std::count(begin, end, m);
    }
  }
  return finish(t, T);
}

PpcStatistics ppc_statistics_incremental(const ObservationPanel& panel) {
  check_three_levels(panel);
  const int N = panel.n_subjects();
  const int T = panel.n_days();
  const auto Nu = static_cast<std::size_t>(N);
  Tallies t;
  t.moderate.assign(Nu, 0);
  t.heavy.assign(Nu, 0);
  t.fdd.assign(Nu, 0);
  t.block.assign(static_cast<std::size_t>(n_blocks(T) * 3), std::vector<long>(Nu, 0));
  for (int day = 0; day < T; ++day) {
    const int block = day / kBlockDays;
    for (int i = 0; i < N; ++i) {
      if (panel.is_missing(i, day)) continue;
      const int y = panel.level(i, day);
      const auto iu = static_cast<std::size_t>(i);
      if (y == 1) ++t.moderate[iu];
      if (y == 2) ++t.heavy[iu];
      if (y >= 1 && t.fdd[iu] == 0) t.fdd[iu] = day + 1;
      ++t.block[static_cast<std::size_t>(block * 3 + y)][iu];
    }
  }
  return finish(t, T);
}

double ppc_quantile(double observed, std::span<const double> replicates) {
  if (replicates.empty()) throw InputError("posterior predictive quantile needs at least one replicate");
  double below = 0.0;
  for (double r : replicates) {
    if (r < observed) below += 1.0;
    else if (r == observed) below += 0.5;
  }
  return below / static_cast<double>(replicates.size());
}

std::vector<PpcResult> posterior_predictive_check(const ChainSet& chains, const ObservationPanel& panel,
                                                  const DesignMatrix& design, PpcMode mode, std::uint64_t seed,
                                                  DrawSelection selection) {
  const auto observed = ppc_statistics(panel);
  std::vector<PpcResult> results(observed.names.size());
  for (std::size_t k = 0; k < results.size(); ++k) {
    results[k].name = observed.names[k];
    results[k].observed = observed.values[k];
  }
  Rng rng = make_stream(seed, {3, 1});
  const auto& mask = panel.mask();
  for_each_draw(chains, selection, [&](const ModelParams& p) {
    const auto stats = ppc_statistics(ppc_replicate(p, design, mode, mask, rng));
    for (std::size_t k = 0; k < results.size(); ++k) results[k].replicates.push_back(stats.values[k]);
  });
  for (auto& r : results) {
    std::vector<double> finite;
    for (double v : r.replicates)
      if (!std::isnan(v)) finite.push_back(v);
    r.quantile = finite.empty() || std::isnan(r.observed) ? std::numeric_limits<double>::quiet_NaN()
                                                          : ppc_quantile(r.observed, finite);
  }
  return results;
}

std::vector<MotifRow> serial_dependence_table(const ObservationPanel& panel, const DesignMatrix& design,
                                              const ModelParams& hmm, const ModelParams& markov,
                                              PredictiveMode mode) {
  const auto ph = pointwise_predictive(panel, design, hmm, mode);
  const auto pm = pointwise_predictive(panel, design, markov, mode);
  std::map<std::tuple<std::string, int, int>, MotifRow> rows;
  for (int i = 0; i < panel.n_subjects(); ++i) {
    for (int t = 0; t + 2 < panel.n_days(); ++t) {
      if (panel.is_missing(i, t) || panel.is_missing(i, t + 1) || panel.is_missing(i, t + 2)) continue;
      const int a = panel.level(i, t), b = panel.level(i, t + 1), c = panel.level(i, t + 2);
      if (a == b || (c != a && c != b)) continue;
      const std::string motif = c == a ? "iji" : "ijj";
      auto& row = rows[{motif, a, b}];
      row.motif = motif;
      row.first = a;
      row.second = b;
      ++row.count;
      row.hmm_probability += *ph.at(i, t + 2);
      row.markov_probability += *pm.at(i, t + 2);
    }
  }
  std::vector<MotifRow> out;
  for (auto& [key, row] : rows) {
    row.hmm_probability /= row.count;
    row.markov_probability /= row.count;
    out.push_back(row);
  }
  return out;
}

std::vector<MotifRow> serial_dependence_table(const ObservationPanel& panel, const DesignMatrix& design,
                                              const ChainSet& hmm, const ChainSet& markov, PredictiveMode mode) {
  return serial_dependence_table(panel, design, posterior_mean(hmm), posterior_mean(markov), mode);
}

std::vector<Episode> relapse_segments(std::span<const int> path, const std::set<int>& relapse_states) {
  std::vector<Episode> out;
  const int T = static_cast<int>(path.size());
  int t = 0;
  while (t < T) {
    if (!relapse_states.count(path[static_cast<std::size_t>(t)])) {
      ++t;
      continue;
    }
    const int start = t;
    std::map<int, int> tally;
    while (t < T && relapse_states.count(path[static_cast<std::size_t>(t)])) ++tally[path[static_cast<std::size_t>(t++)]];
    const auto most = std::max_element(tally.begin(), tally.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    out.push_back(Episode{start + 1, t, most->first});
  }
  return out;
}

std::vector<std::vector<Episode>> relapse_segments(const std::vector<ViterbiPath>& paths,
                                                   const std::set<int>& relapse_states) {
  std::vector<std::vector<Episode>> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(relapse_segments(p.states, relapse_states));
  return out;
}

}  // namespace mehmm
