#include "mehmm/mcmc.hpp"

#include "mehmm/error.hpp"
#include "mehmm/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace mehmm {

std::pair<double, double> PriorSpec::sigma_hyper() const {
  switch (sigma_prior) {
    case SigmaPrior::flat_sigma: return {-1.0, 0.0};
    case SigmaPrior::flat_variance: return {-2.0, 0.0};
    case SigmaPrior::inv_chi2: return {sigma_df, sigma_scale * sigma_scale};
  }
  return {-1.0, 0.0};
}

void PriorSpec::validate() const {
  if (!(beta_sd > 0.0) || !(mu_sd > 0.0)) throw InputError("prior standard deviations must be positive");
  if (!(dirichlet_concentration > 0.0)) throw InputError("Dirichlet concentration must be positive");
  if (sigma_prior == SigmaPrior::inv_chi2 && (!(sigma_df > 0.0) || !(sigma_scale > 0.0))) {
    throw InputError("inverse chi-squared sigma prior needs positive df and scale");
  }
}

void SamplerConfig::validate() const {
  if (n_chains < 1 || n_burnin < 0 || n_keep < 1 || thin < 1) throw InputError("chain counts must be positive");
  if (!(rw_step_alpha > 0.0) || !(rw_step_beta > 0.0)) throw InputError("random-walk steps must be positive");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) throw InputError("target acceptance must lie in (0, 1)");
  if (jitter_scale < 0.0) throw InputError("jitter scale must be non-negative");
  if (threads < 1) throw InputError("threads must be positive");
}

double AcceptanceRecord::alpha_rate() const {
  double a = 0.0, n = 0.0;
  for (std::size_t k = 0; k < alpha_accepted.size(); ++k) {
    a += alpha_accepted[k];
    n += alpha_proposed[k];
  }
  return n > 0.0 ? a / n : NAN;
}

double AcceptanceRecord::beta_rate() const {
  double a = 0.0, n = 0.0;
  for (std::size_t k = 0; k < beta_accepted.size(); ++k) {
    a += beta_accepted[k];
    n += beta_proposed[k];
  }
  return n > 0.0 ? a / n : NAN;
}

void AcceptanceRecord::reset_counts() {
  std::fill(alpha_accepted.begin(), alpha_accepted.end(), 0.0);
  std::fill(alpha_proposed.begin(), alpha_proposed.end(), 0.0);
  std::fill(beta_accepted.begin(), beta_accepted.end(), 0.0);
  std::fill(beta_proposed.begin(), beta_proposed.end(), 0.0);
}

double draw_mu(Rng& rng, std::span<const double> alpha, double sigma, double mu_sd) {
  double sum = 0.0;
  for (double a : alpha) sum += a;
  const double precision = static_cast<double>(alpha.size()) / (sigma * sigma) + 1.0 / (mu_sd * mu_sd);
  const double mean = sum / (sigma * sigma) / precision;
  return mean + standard_normal(rng) / std::sqrt(precision);
}

double draw_sigma2(Rng& rng, std::span<const double> alpha, double mu, const PriorSpec& prior) {
  const auto [nu0, s02] = prior.sigma_hyper();
  const double df = static_cast<double>(alpha.size()) + nu0;
  if (!(df > 0.0)) throw InputError("sigma update needs at least 2 subjects under an improper prior");
  double ss = 0.0;
  for (double a : alpha) ss += (a - mu) * (a - mu);
  const double total = ss + (nu0 > 0.0 ? nu0 * s02 : 0.0);
  if (!(total > 0.0)) throw NumericalError("sigma update: random intercepts have zero spread");
  return scaled_inv_chi2(rng, df, total / df);
}

Eigen::VectorXd draw_dirichlet_counts(Rng& rng, std::span<const double> counts, double concentration) {
  std::vector<double> conc(counts.begin(), counts.end());
  for (double& c : conc) c += concentration;
  return dirichlet(rng, conc);
}

StateGrid sample_missing_y(const ModelParams& params, const ObservationPanel& panel, const DesignMatrix& design,
                           Rng& rng) {
  if (params.kind != ModelKind::markov) throw InputError("sample_missing_y needs Markov-model parameters");
  return ffbs_sample_hidden(panel, design, params, rng);
}

namespace {

/// log(1 + sum_s exp(eta_s)) with eta_dest shifted by delta.
inline double log_normalizer(const double* eta, int dests, int shifted, double delta) {
  double top = 0.0;
  for (int s = 0; s < dests; ++s) top = std::max(top, eta[s] + (s == shifted ? delta : 0.0));
  double total = std::exp(-top);
  for (int s = 0; s < dests; ++s) total += std::exp(eta[s] + (s == shifted ? delta : 0.0) - top);
  return top + std::log(total);
}

/// Log-likelihood of the transitions in [begin, end) with column `col` of eta
/// shifted by delta(e).
template <class Delta>
double row_loglik(const std::vector<int>& dest, const std::vector<double>& eta, int dests, std::size_t begin,
                  std::size_t end, int col, Delta delta) {
  double total = 0.0;
  for (std::size_t e = begin; e < end; ++e) {
    const double* row = eta.data() + e * static_cast<std::size_t>(dests);
    const double d = delta(e);
    const int to = dest[e];
    if (to > 0) total += row[to - 1] + (to - 1 == col ? d : 0.0);
    total -= log_normalizer(row, dests, col, d);
  }
  return total;
}

}  // namespace

Sampler::Sampler(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, const PriorSpec& prior,
                 const SamplerConfig& config, ModelParams initial, std::uint64_t seed, int chain_index)
    : kind_(kind), panel_(&panel), design_(&design), prior_(prior), config_(config), params_(std::move(initial)),
      states_(panel.n_subjects(), panel.n_days()),
      chain_rng_(make_stream(seed, {static_cast<std::uint64_t>(chain_index), 0})) {
  prior_.validate();
  if (params_.kind != kind) throw InputError("sampler: parameter kind does not match the model");
  if (params_.n_subjects() != panel.n_subjects() || design.n_days() != panel.n_days() ||
      design.n_subjects() < panel.n_subjects() || design.n_covariates() != params_.n_covariates() ||
      params_.n_levels() != panel.n_levels()) {
    throw InputError("sampler: panel, design and parameter dimensions disagree");
  }
  params_.validate(1e-9);
  const int S = params_.n_states();
  const auto blocks = static_cast<std::size_t>(S * (S - 1));
  const auto beta_blocks = blocks * static_cast<std::size_t>(params_.n_covariates());
  acceptance_.alpha_accepted.assign(blocks, 0.0);
  acceptance_.alpha_proposed.assign(blocks, 0.0);
  acceptance_.alpha_step.assign(blocks, config_.rw_step_alpha);
  acceptance_.beta_accepted.assign(beta_blocks, 0.0);
  acceptance_.beta_proposed.assign(beta_blocks, 0.0);
  acceptance_.beta_step.assign(beta_blocks, config_.rw_step_beta);
  subject_rngs_.reserve(static_cast<std::size_t>(panel.n_subjects()));
  for (int i = 0; i < panel.n_subjects(); ++i) {
    subject_rngs_.push_back(make_stream(seed, {static_cast<std::uint64_t>(chain_index), 1, static_cast<std::uint64_t>(i)}));
  }
  rows_.resize(static_cast<std::size_t>(S));
}

void Sampler::set_panel(const ObservationPanel& panel) {
  if (panel.n_subjects() != panel_->n_subjects() || panel.n_days() != panel_->n_days() ||
      panel.n_levels() != panel_->n_levels()) {
    throw InputError("set_panel: dimensions differ");
  }
  panel_ = &panel;
}

void Sampler::set_states(const StateGrid& states) {
  if (states.n_subjects != states_.n_subjects || states.n_days != states_.n_days) {
    throw InputError("set_states: dimensions differ");
  }
  states_ = states;
  rebuild_rows();
}

void Sampler::sweep(int iteration, bool adapt) {
  update_states();
  update_alpha(iteration, adapt);
  update_beta(iteration, adapt);
  update_mu();
  update_sigma();
  if (kind_ == ModelKind::hmm) update_emissions();
  update_pi();
}

void Sampler::update_states() {
  SubjectTransitions q;
  for (int i = 0; i < panel_->n_subjects(); ++i) {
    q.compute(params_.transition, *design_, i);
    ffbs_subject(panel_->row(i), q, params_, subject_rngs_[static_cast<std::size_t>(i)], states_.row(i));
  }
  rebuild_rows();
}

void Sampler::rebuild_rows() {
  const int S = params_.n_states();
  const int N = states_.n_subjects;
  const int T = states_.n_days;
  const int p = params_.n_covariates();
  const int dests = S - 1;
  for (auto& row : rows_) {
    row.dest.clear();
    row.x.clear();
    row.eta.clear();
    row.subject_begin.assign(static_cast<std::size_t>(N) + 1, 0);
  }
  std::vector<double> x(static_cast<std::size_t>(p));
  for (int i = 0; i < N; ++i) {
    for (auto& row : rows_) row.subject_begin[static_cast<std::size_t>(i)] = row.dest.size();
    for (int t = 0; t + 1 < T; ++t) {
      const int r = states_(i, t);
      RowData& row = rows_[static_cast<std::size_t>(r)];
      row.dest.push_back(states_(i, t + 1));
      design_->fill(i, t, x);
      row.x.insert(row.x.end(), x.begin(), x.end());
      for (int s = 1; s <= dests; ++s) {
        double eta = params_.transition.alpha(i, r, s);
        for (int k = 0; k < p; ++k) eta += x[static_cast<std::size_t>(k)] * params_.transition.beta(r, s, k);
        row.eta.push_back(eta);
      }
    }
  }
  for (auto& row : rows_) row.subject_begin[static_cast<std::size_t>(N)] = row.dest.size();
}

void Sampler::update_alpha(int iteration, bool adapt) {
  const int S = params_.n_states();
  const int N = params_.n_subjects();
  const int dests = S - 1;
  if (dests == 0) return;
  const double gain = std::pow(iteration + 1.0, -0.6);
  std::vector<double> accepted_now(static_cast<std::size_t>(S * dests), 0.0);
  for (int i = 0; i < N; ++i) {
    Rng& rng = subject_rngs_[static_cast<std::size_t>(i)];
    for (int r = 0; r < S; ++r) {
      RowData& row = rows_[static_cast<std::size_t>(r)];
      const std::size_t begin = row.subject_begin[static_cast<std::size_t>(i)];
      const std::size_t end = row.subject_begin[static_cast<std::size_t>(i) + 1];
      for (int s = 1; s <= dests; ++s) {
        const std::size_t block = static_cast<std::size_t>(r * dests + s - 1);
        const double mu = params_.transition.mu(r, s);
        const double sigma = params_.transition.sigma(r, s);
        double& alpha = params_.transition.alpha(i, r, s);
        const double delta = acceptance_.alpha_step[block] * standard_normal(rng);
        const double proposal = alpha + delta;
        const double current_ll = row_loglik(row.dest, row.eta, dests, begin, end, s - 1, [](std::size_t) { return 0.0; });
        if (!std::isfinite(current_ll)) throw NumericalError("alpha update: non-finite log posterior at the current state");
        const double proposal_ll = row_loglik(row.dest, row.eta, dests, begin, end, s - 1, [&](std::size_t) { return delta; });
        const double log_ratio = proposal_ll - current_ll +
                                 ((alpha - mu) * (alpha - mu) - (proposal - mu) * (proposal - mu)) / (2.0 * sigma * sigma);
        acceptance_.alpha_proposed[block] += 1.0;
        if (std::log(uniform01(rng)) < log_ratio) {
          alpha = proposal;
          for (std::size_t e = begin; e < end; ++e) row.eta[e * static_cast<std::size_t>(dests) + static_cast<std::size_t>(s - 1)] += delta;
          acceptance_.alpha_accepted[block] += 1.0;
          accepted_now[block] += 1.0;
        }
      }
    }
  }
  if (adapt) {
    for (std::size_t block = 0; block < accepted_now.size(); ++block) {
      const double rate = accepted_now[block] / N;
      acceptance_.alpha_step[block] *= std::exp(gain * (rate - config_.target_acceptance));
    }
  }
}

void Sampler::update_beta(int iteration, bool adapt) {
  const int S = params_.n_states();
  const int p = params_.n_covariates();
  const int dests = S - 1;
  const auto pu = static_cast<std::size_t>(p);
  const double gain = std::pow(iteration + 1.0, -0.6);
  const double var = prior_.beta_sd * prior_.beta_sd;
  for (int r = 0; r < S; ++r) {
    RowData& row = rows_[static_cast<std::size_t>(r)];
    const std::size_t n = row.dest.size();
    for (int s = 1; s <= dests; ++s) {
      for (int k = 0; k < p; ++k) {
        const std::size_t block = static_cast<std::size_t>((r * dests + s - 1) * p + k);
        double& beta = params_.transition.beta(r, s, k);
        const double delta = acceptance_.beta_step[block] * standard_normal(chain_rng_);
        const double proposal = beta + delta;
        const auto xk = [&](std::size_t e) { return row.x[e * pu + static_cast<std::size_t>(k)]; };
        const double current_ll = row_loglik(row.dest, row.eta, dests, 0, n, s - 1, [](std::size_t) { return 0.0; });
        if (!std::isfinite(current_ll)) throw NumericalError("beta update: non-finite log posterior at the current state");
        const double proposal_ll = row_loglik(row.dest, row.eta, dests, 0, n, s - 1, [&](std::size_t e) { return delta * xk(e); });
        const double log_ratio = proposal_ll - current_ll + (beta * beta - proposal * proposal) / (2.0 * var);
        acceptance_.beta_proposed[block] += 1.0;
        bool accepted = false;
        if (std::log(uniform01(chain_rng_)) < log_ratio) {
          beta = proposal;
          for (std::size_t e = 0; e < n; ++e) row.eta[e * static_cast<std::size_t>(dests) + static_cast<std::size_t>(s - 1)] += delta * xk(e);
          acceptance_.beta_accepted[block] += 1.0;
          accepted = true;
        }
        if (adapt) {
          acceptance_.beta_step[block] *= std::exp(gain * ((accepted ? 1.0 : 0.0) - config_.target_acceptance));
        }
      }
    }
  }
}

void Sampler::update_mu() {
  const int S = params_.n_states();
  const int N = params_.n_subjects();
  std::vector<double> alpha(static_cast<std::size_t>(N));
  for (int r = 0; r < S; ++r) {
    for (int s = 1; s < S; ++s) {
      for (int i = 0; i < N; ++i) alpha[static_cast<std::size_t>(i)] = params_.transition.alpha(i, r, s);
      params_.transition.mu(r, s) = draw_mu(chain_rng_, alpha, params_.transition.sigma(r, s), prior_.mu_sd);
    }
  }
}

void Sampler::update_sigma() {
  const int S = params_.n_states();
  const int N = params_.n_subjects();
  std::vector<double> alpha(static_cast<std::size_t>(N));
  for (int r = 0; r < S; ++r) {
    for (int s = 1; s < S; ++s) {
      for (int i = 0; i < N; ++i) alpha[static_cast<std::size_t>(i)] = params_.transition.alpha(i, r, s);
      params_.transition.sigma(r, s) = std::sqrt(draw_sigma2(chain_rng_, alpha, params_.transition.mu(r, s), prior_));
    }
  }
}

void Sampler::update_emissions() {
  const int S = params_.n_states();
  const int M = params_.n_levels();
  std::vector<double> counts(static_cast<std::size_t>(S * M), 0.0);
  for (int i = 0; i < panel_->n_subjects(); ++i) {
    for (int t = 0; t < panel_->n_days(); ++t) {
      const int y = panel_->level(i, t);
      if (y != kMissing) counts[static_cast<std::size_t>(states_(i, t) * M + y)] += 1.0;
    }
  }
  for (int s = 0; s < S; ++s) {
    const auto row = draw_dirichlet_counts(
        chain_rng_, std::span<const double>(counts).subspan(static_cast<std::size_t>(s * M), static_cast<std::size_t>(M)),
        prior_.dirichlet_concentration);
    params_.emission.row(s) = row.transpose();
  }
}

void Sampler::update_pi() {
  const int S = params_.n_states();
  std::vector<double> counts(static_cast<std::size_t>(S), 0.0);
  for (int i = 0; i < states_.n_subjects; ++i) counts[static_cast<std::size_t>(states_(i, 0))] += 1.0;
  params_.initial = draw_dirichlet_counts(chain_rng_, counts, prior_.dirichlet_concentration);
}

std::size_t ChainSet::dimension() const { return layout().size(); }

const std::vector<std::string>& ChainSet::names() const { return layout().names(); }

const ParameterLayout& ChainSet::layout() const {
  if (!layout_) layout_.emplace(shape);
  return *layout_;
}

std::span<const double> ChainSet::flat_draw(int chain, std::size_t g) const {
  const std::size_t dim = dimension();
  const auto& c = chains.at(static_cast<std::size_t>(chain));
  if (g >= c.n_draws()) throw InputError("draw index out of range");
  return std::span<const double>(c.values).subspan(g * dim, dim);
}

ModelParams ChainSet::draw(int chain, std::size_t g) const { return layout().unflatten(flat_draw(chain, g), shape); }

std::vector<double> ChainSet::trace(int chain, std::size_t index) const {
  const std::size_t dim = dimension();
  if (index >= dim) throw InputError("parameter index out of range");
  const auto& c = chains.at(static_cast<std::size_t>(chain));
  std::vector<double> out(c.n_draws());
  for (std::size_t g = 0; g < out.size(); ++g) out[g] = c.values[g * dim + index];
  return out;
}

std::vector<double> ChainSet::trace(int chain, std::string_view name) const {
  const long index = layout().index_of(name);
  if (index < 0) throw InputError("unknown parameter " + std::string(name));
  return trace(chain, static_cast<std::size_t>(index));
}

std::vector<ModelParams> ChainSet::all_draws() const {
  std::vector<ModelParams> out;
  out.reserve(chains.size() * n_draws());
  for (int c = 0; c < n_chains(); ++c)
    for (std::size_t g = 0; g < chains[static_cast<std::size_t>(c)].n_draws(); ++g) out.push_back(draw(c, g));
  return out;
}

Chain run_chain_from(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design,
                     const PriorSpec& prior, const SamplerConfig& config, int chain_index, ModelParams initial) {
  config.validate();
  const ParameterLayout layout(initial);
  Sampler sampler(kind, panel, design, prior, config, std::move(initial), config.seed, chain_index);
  Chain chain;
  chain.chain_index = chain_index;
  chain.seed = config.seed;
  const int N = panel.n_subjects();
  const int T = panel.n_days();
  const int S = sampler.params().n_states();
  if (kind == ModelKind::hmm) chain.occupancy.assign(static_cast<std::size_t>(N) * T * S, 0.0);
  chain.values.reserve(static_cast<std::size_t>(config.n_keep) * layout.size());
  chain.deviance.reserve(static_cast<std::size_t>(config.n_keep));

  const int total = config.n_burnin + config.n_keep * config.thin;
  for (int iter = 0; iter < total; ++iter) {
    const bool burnin = iter < config.n_burnin;
    sampler.sweep(iter, burnin && config.adapt_during_burnin);
    if (iter + 1 == config.n_burnin) {
      chain.burnin_acceptance = sampler.acceptance();
      sampler.acceptance().reset_counts();
    }
    if (burnin || (iter - config.n_burnin) % config.thin != 0) continue;
    const auto flat = layout.flatten(sampler.params());
    chain.values.insert(chain.values.end(), flat.begin(), flat.end());
    chain.deviance.push_back(-2.0 * log_likelihood(panel, design, sampler.params()));
    chain.iterations.push_back(iter);
    if (kind == ModelKind::hmm) {
      const StateGrid& h = sampler.states();
      for (std::size_t k = 0; k < h.values.size(); ++k) chain.occupancy[k * static_cast<std::size_t>(S) + static_cast<std::size_t>(h.values[k])] += 1.0;
    }
    if (config.store_state_trace) chain.state_trace.push_back(sampler.states());
  }
  if (config.n_burnin == 0) chain.burnin_acceptance = AcceptanceRecord{};
  chain.acceptance = sampler.acceptance();
  chain.final_states = sampler.states();
  return chain;
}

namespace {

EmFit starting_fit(ModelKind kind, const ObservationPanel& panel, int n_states) {
  EmOptions options;
  if (kind == ModelKind::markov) {
    if (n_states != panel.n_levels()) throw InputError("the Markov model has one state per observed level");
    options.identity_emission = true;
  }
  return em_initialize(panel, n_states, options);
}

}  // namespace

Chain run_chain(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, int n_states,
                const PriorSpec& prior, const SamplerConfig& config, int chain_index) {
  const EmFit em = starting_fit(kind, panel, n_states);
  auto initial = init_chain(em, kind, panel.n_subjects(), design.n_covariates(), chain_index, config.jitter_scale,
                            config.seed);
  return run_chain_from(kind, panel, design, prior, config, chain_index, std::move(initial));
}

ChainSet run_chains(ModelKind kind, const ObservationPanel& panel, const DesignMatrix& design, int n_states,
                    const PriorSpec& prior, const SamplerConfig& config) {
  config.validate();
  prior.validate();
  const EmFit em = starting_fit(kind, panel, n_states);
  ChainSet set;
  set.kind = kind;
  set.prior = prior;
  set.config = config;
  set.shape = ModelParams::zeros(kind, panel.n_subjects(), n_states, panel.n_levels(), design.n_covariates());
  set.names();
  set.chains.resize(static_cast<std::size_t>(config.n_chains));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const int c = next.fetch_add(1);
      if (c >= config.n_chains) return;
      try {
        auto initial = init_chain(em, kind, panel.n_subjects(), design.n_covariates(), c, config.jitter_scale,
                                  config.seed);
        set.chains[static_cast<std::size_t>(c)] = run_chain_from(kind, panel, design, prior, config, c, std::move(initial));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_workers = std::min(config.threads, config.n_chains);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return set;
}

}  // namespace mehmm
