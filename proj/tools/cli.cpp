#include "cli.hpp"

#include "manifest.hpp"

#include "mehmm/analytics.hpp"
#include "mehmm/chain_io.hpp"
#include "mehmm/dataset.hpp"
#include "mehmm/diagnostics.hpp"
#include "mehmm/error.hpp"
#include "mehmm/inference.hpp"
#include "mehmm/mcmc.hpp"
#include "mehmm/model.hpp"
#include "mehmm/text_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

namespace mehmm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Output helpers

std::ofstream open_csv(const fs::path& path, std::string_view kind, std::string_view header) {
  auto out = text::open_output(path);
  out << schema_line(kind) << '\n' << header << '\n';
  return out;
}

std::string fmt(double v) { return std::isnan(v) ? "NA" : text::format_double(v); }
std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

std::string idx(int v) { return "[" + std::to_string(v + 1) + "]"; }

// ---------------------------------------------------------------------------
// Data

struct DataSpec {
  fs::path y;
  fs::path x;
  std::string missing_token = "NA";
  int levels = 3;
};

struct Data {
  ObservationPanel panel;
  DesignMatrix design;
  std::vector<InputFile> inputs;
};

json data_json(const DataSpec& d) {
  return {{"y", d.y.empty() ? "" : fs::absolute(d.y).string()},
          {"x", d.x.empty() ? "" : fs::absolute(d.x).string()},
          {"missing_token", d.missing_token},
          {"levels", d.levels}};
}

Data load_data(const DataSpec& spec) {
  if (spec.y.empty()) throw InputError("no observation file given (--y)");
  Data d;
  d.panel = load_observations(spec.y, spec.missing_token, spec.levels);
  d.inputs.push_back(hash_input("y", spec.y));
  if (spec.x.empty()) {
    d.design = DesignMatrix::empty(d.panel.n_subjects(), d.panel.n_days());
  } else {
    const auto raw = load_covariates(spec.x);
    if (raw.n_subjects() != d.panel.n_subjects()) {
      throw InputError(spec.x.string() + ": " + std::to_string(raw.n_subjects()) + " covariate rows but " +
                       std::to_string(d.panel.n_subjects()) + " observation rows");
    }
    d.design = DesignMatrix::from_raw(raw, d.panel.n_days());
    d.inputs.push_back(hash_input("x", spec.x));
  }
  return d;
}

/// Data of an earlier fit, from its manifest; explicit --y/--x override.
Data fit_data(const fs::path& fit_dir, const DataSpec& overrides) {
  const auto manifest = read_manifest(fit_dir);
  DataSpec spec = overrides;
  std::map<std::string, std::string> recorded_hash;
  try {
    const auto& data = manifest.at("config").at("data");
    if (spec.y.empty()) spec.y = data.at("y").get<std::string>();
    if (spec.x.empty()) spec.x = data.at("x").get<std::string>();
    spec.missing_token = data.at("missing_token").get<std::string>();
    spec.levels = data.at("levels").get<int>();
    for (const auto& f : manifest.at("inputs")) recorded_hash[f.at("path").get<std::string>()] = f.at("sha256");
  } catch (const json::exception& e) {
    throw InputError(fit_dir.string() + "/manifest.json: not a fit manifest (" + e.what() + ")");
  }
  Data d = load_data(spec);
  for (const auto& f : d.inputs) {
    const auto it = recorded_hash.find(f.path.string());
    if (it != recorded_hash.end() && it->second != f.sha256) {
      throw InputError(f.path.string() + " changed since the fit in " + fit_dir.string());
    }
  }
  return d;
}

ChainSet load_fit(const fs::path& dir, RunManifest& manifest) {
  if (dir.empty()) throw InputError("no fit directory given (--fit)");
  manifest.inputs.push_back(hash_input("fit", dir / "samples.csv"));
  return load_chain_set(dir);
}

void check_fit_matches(const ChainSet& chains, const Data& data) {
  if (chains.shape.n_subjects() != data.panel.n_subjects() || chains.shape.n_levels() != data.panel.n_levels() ||
      chains.shape.n_covariates() != data.design.n_covariates()) {
    throw InputError("fit dimensions do not match the data");
  }
}

void prepare_out(const fs::path& out) {
  if (out.empty()) throw InputError("no output directory given (--out)");
  fs::create_directories(out);
}

MeanSpace parse_mean_space(const std::string& s) {
  if (text::iequals(s, "probability")) return MeanSpace::probability;
  if (text::iequals(s, "logit")) return MeanSpace::logit;
  throw InputError("unknown mean space '" + s + "' (expected probability or logit)");
}

void add_data_options(CLI::App* cmd, DataSpec& d, bool required_y) {
  auto* y = cmd->add_option("--y", d.y, "observation file (subjects x days, codes 1..M)");
  if (required_y) y->required();
  cmd->add_option("--x", d.x, "covariate file (sex, treatment, d_drink, d_heavy)");
  cmd->add_option("--missing-token", d.missing_token, "missing-cell token")->capture_default_str();
  cmd->add_option("--levels", d.levels, "number of ordinal levels M")->capture_default_str()->check(CLI::PositiveNumber);
}

template <class F>
void each_draw(const ChainSet& chains, std::size_t stride, F&& f) {
  if (stride == 0) throw InputError("--stride must be positive");
  for (int c = 0; c < chains.n_chains(); ++c) {
    const Chain& chain = chains.chains[static_cast<std::size_t>(c)];
    for (std::size_t g = 0; g < chain.n_draws(); g += stride) f(c, g, chain.iterations[g] + 1);
  }
}

struct Interval {
  double mean, lo, hi;
};

Interval interval(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return {m / static_cast<double>(v.size()), quantile(v, 0.025), quantile(v, 0.975)};
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  DataSpec data;
  std::string model = "hmm";
  int states = 3;
  SamplerConfig config;
  PriorSpec prior;
  std::string sigma_prior = "flat-sigma";
  bool no_adapt = false;
  fs::path out;
};

void add_fit(CLI::App& app, FitOptions& o) {
  auto* cmd = app.add_subcommand("fit", "run the MCMC sampler and store posterior draws");
  add_data_options(cmd, o.data, true);
  cmd->add_option("--model", o.model, "hmm or markov")->capture_default_str()->check(CLI::IsMember({"hmm", "markov"}));
  cmd->add_option("--states", o.states, "hidden states S (markov: forced to M)")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--chains", o.config.n_chains, "independent chains")->capture_default_str();
  cmd->add_option("--burnin", o.config.n_burnin, "burn-in sweeps per chain")->capture_default_str();
  cmd->add_option("--keep", o.config.n_keep, "kept draws per chain")->capture_default_str();
  cmd->add_option("--thin", o.config.thin, "sweeps per kept draw")->capture_default_str();
  cmd->add_option("--seed", o.config.seed, "master seed")->capture_default_str();
  cmd->add_option("--threads", o.config.threads, "chains run at once")->capture_default_str();
  cmd->add_option("--step-alpha", o.config.rw_step_alpha, "initial random-walk step for alpha")->capture_default_str();
  cmd->add_option("--step-beta", o.config.rw_step_beta, "initial random-walk step for beta")->capture_default_str();
  cmd->add_option("--target-acceptance", o.config.target_acceptance, "adaptation target")->capture_default_str();
  cmd->add_option("--jitter", o.config.jitter_scale, "sd of the alpha jitter around the EM start")->capture_default_str();
  cmd->add_flag("--no-adapt", o.no_adapt, "keep the random-walk steps fixed during burn-in");
  cmd->add_flag("--store-states", o.config.store_state_trace, "keep every kept draw's hidden states in memory");
  cmd->add_option("--beta-sd", o.prior.beta_sd, "prior sd of beta")->capture_default_str();
  cmd->add_option("--mu-sd", o.prior.mu_sd, "prior sd of mu")->capture_default_str();
  cmd->add_option("--sigma-prior", o.sigma_prior, "flat-sigma, flat-variance or inv-chi2")->capture_default_str();
  cmd->add_option("--sigma-df", o.prior.sigma_df, "inv-chi2 degrees of freedom")->capture_default_str();
  cmd->add_option("--sigma-scale", o.prior.sigma_scale, "inv-chi2 scale")->capture_default_str();
  cmd->add_option("--dirichlet", o.prior.dirichlet_concentration, "Dirichlet concentration for pi and P")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_fit(FitOptions& o, RunManifest& manifest, std::ostream& out) {
  const Data data = load_data(o.data);
  manifest.inputs = data.inputs;
  const ModelKind kind = parse_model_kind(o.model);
  o.prior.sigma_prior = parse_sigma_prior(o.sigma_prior);
  o.config.adapt_during_burnin = !o.no_adapt;
  const int states = kind == ModelKind::markov ? data.panel.n_levels() : o.states;
  o.prior.validate();
  o.config.validate();
  prepare_out(o.out);

  const ChainSet chains = run_chains(kind, data.panel, data.design, states, o.prior, o.config);
  save_chain_set(o.out, chains);
  for (const auto& c : chains.chains) manifest.seeds.push_back(c.seed);
  manifest.config = {{"data", data_json(o.data)},
                     {"model", to_string(kind)},
                     {"states", states},
                     {"chains", o.config.n_chains},
                     {"burnin", o.config.n_burnin},
                     {"keep", o.config.n_keep},
                     {"thin", o.config.thin},
                     {"seed", o.config.seed},
                     {"threads", o.config.threads},
                     {"adapt", o.config.adapt_during_burnin},
                     {"prior",
                      {{"beta_sd", o.prior.beta_sd},
                       {"mu_sd", o.prior.mu_sd},
                       {"sigma_prior", to_string(o.prior.sigma_prior)},
                       {"sigma_df", o.prior.sigma_df},
                       {"sigma_scale", o.prior.sigma_scale},
                       {"dirichlet", o.prior.dirichlet_concentration}}}};

  out << "fit: " << to_string(kind) << " S=" << states << ", " << data.panel.n_subjects() << " subjects x "
      << data.panel.n_days() << " days, " << chains.n_chains() << " chains x " << chains.n_draws() << " draws\n";
  for (const auto& c : chains.chains) {
    out << "  chain " << c.chain_index + 1 << ": alpha acceptance " << text::format_double(c.acceptance.alpha_rate());
    if (data.design.n_covariates() > 0) out << ", beta acceptance " << text::format_double(c.acceptance.beta_rate());
    out << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  fs::path params;
  fs::path x;
  std::string model = "hmm";
  int subjects = 60;
  int days = 168;
  double missing_rate = 0.0;
  double sigma = 0.5;
  std::uint64_t seed = 1;
  fs::path out;
};

void add_simulate(CLI::App& app, SimulateOptions& o) {
  auto* cmd = app.add_subcommand("simulate", "simulate a panel from given or built-in parameters");
  cmd->add_option("--params", o.params, "parameter file; without it, built-in three-state parameters are used");
  cmd->add_option("--x", o.x, "covariate file supplying the design");
  cmd->add_option("--model", o.model, "model of the built-in parameters: hmm or markov")->capture_default_str()->check(CLI::IsMember({"hmm", "markov"}));
  cmd->add_option("--subjects", o.subjects, "subjects (built-in parameters without --x)")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--days", o.days, "days")->capture_default_str()->check(CLI::Range(2, 1000000));
  cmd->add_option("--missing-rate", o.missing_rate, "share of cells masked at random")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--sigma", o.sigma, "random-intercept sd of the built-in parameters")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "seed")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

/// Three-state parameters at published posterior-mean values: transition rows
/// from the reported matrices, emission rows near the reported ones.
ModelParams builtin_params(ModelKind kind, int n_subjects, int n_covariates, double sigma, Rng& rng) {
  ModelParams p = ModelParams::zeros(kind, n_subjects, 3, 3, n_covariates);
  Eigen::Matrix3d q;
  if (kind == ModelKind::hmm) {
    q << 0.98, 0.01, 0.01, 0.72, 0.26, 0.02, 0.41, 0.02, 0.57;
    p.emission << 0.997, 0.003, 0.0, 0.026, 0.956, 0.018, 0.030, 0.004, 0.966;
  } else {
    q << 0.97, 0.02, 0.01, 0.75, 0.21, 0.04, 0.45, 0.03, 0.52;
  }
  p.initial << 0.936, 0.034, 0.030;
  for (int r = 0; r < 3; ++r) {
    for (int s = 1; s < 3; ++s) {
      p.transition.mu(r, s) = std::log(q(r, s) / q(r, 0));
      p.transition.sigma(r, s) = sigma;
      for (int i = 0; i < n_subjects; ++i) {
        p.transition.alpha(i, r, s) = p.transition.mu(r, s) + sigma * standard_normal(rng);
      }
    }
  }
  return p;
}

ObservationPanel grid_panel(const StateGrid& g, int levels) {
  return ObservationPanel(g.n_subjects, g.n_days, levels, g.values);
}

int cmd_simulate(const SimulateOptions& o, RunManifest& manifest, std::ostream& out) {
  std::optional<RawCovariates> raw;
  if (!o.x.empty()) {
    raw = load_covariates(o.x);
    manifest.inputs.push_back(hash_input("x", o.x));
  }
  ModelParams params;
  int n_subjects = raw ? raw->n_subjects() : o.subjects;
  const int n_covariates = raw ? 4 : 0;
  if (!o.params.empty()) {
    params = read_params(o.params);
    manifest.inputs.push_back(hash_input("params", o.params));
    if (raw && params.n_subjects() != n_subjects) throw InputError("parameter file and --x disagree on subjects");
    n_subjects = params.n_subjects();
    if (params.n_covariates() != n_covariates) {
      throw InputError("parameter file has " + std::to_string(params.n_covariates()) + " covariates but the design has " +
                       std::to_string(n_covariates));
    }
  } else {
    Rng rng = make_stream(o.seed, {3, 3});
    params = builtin_params(parse_model_kind(o.model), n_subjects, n_covariates, o.sigma, rng);
  }
  const DesignMatrix design = raw ? DesignMatrix::from_raw(*raw, o.days) : DesignMatrix::empty(n_subjects, o.days);

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_subjects) * static_cast<std::size_t>(o.days), 0);
  Rng mask_rng = make_stream(o.seed, {3, 2});
  for (auto& m : mask) m = uniform01(mask_rng) < o.missing_rate ? 1 : 0;
  Rng rng = make_stream(o.seed, {3, 0});
  const auto sim = simulate(params, design, mask, rng);

  prepare_out(o.out);
  write_observations(o.out / "y.csv", sim.observed);
  write_observations(o.out / "complete.csv", grid_panel(sim.complete, params.n_levels()));
  if (sim.hidden) write_observations(o.out / "hidden.csv", grid_panel(*sim.hidden, params.n_states()));
  write_params(o.out / "params.txt", params);
  manifest.seeds.push_back(o.seed);
  manifest.config = {{"model", to_string(params.kind)},
                     {"subjects", n_subjects},
                     {"days", o.days},
                     {"missing_rate", o.missing_rate},
                     {"builtin_params", o.params.empty()},
                     {"sigma", o.sigma},
                     {"seed", o.seed}};
  out << "simulate: " << n_subjects << " subjects x " << o.days << " days, " << sim.observed.missing_count()
      << " cells masked\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseOptions {
  fs::path fit;
  DataSpec data;
  std::string mean_space = "probability";
  fs::path out;
};

void add_diagnose(CLI::App& app, DiagnoseOptions& o) {
  auto* cmd = app.add_subcommand("diagnose", "R-hat, ESS, posterior summaries and DIC of a fit");
  cmd->add_option("--fit", o.fit, "fit directory")->required();
  cmd->add_option("--y", o.data.y, "override the fit's observation file");
  cmd->add_option("--x", o.data.x, "override the fit's covariate file");
  cmd->add_option("--mean-space", o.mean_space, "posterior-mean space for D(theta-bar): probability or logit")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

/// Traces of softmax(mu_r), the transition matrix of an average subject.
std::vector<ParameterSummary> average_transition_summaries(const ChainSet& chains) {
  const int S = chains.shape.n_states();
  std::vector<std::vector<std::vector<double>>> traces(static_cast<std::size_t>(S * S));
  for (auto& t : traces) t.resize(static_cast<std::size_t>(chains.n_chains()));
  each_draw(chains, 1, [&](int c, std::size_t g, int) {
    const auto q = average_subject_transitions(chains.draw(c, g));
    for (int r = 0; r < S; ++r)
      for (int s = 0; s < S; ++s) traces[static_cast<std::size_t>(r * S + s)][static_cast<std::size_t>(c)].push_back(q(r, s));
  });
  std::vector<ParameterSummary> out;
  for (int r = 0; r < S; ++r)
    for (int s = 0; s < S; ++s) out.push_back(summarize_scalar("Qbar" + idx(r) + idx(s), traces[static_cast<std::size_t>(r * S + s)]));
  return out;
}

int cmd_diagnose(const DiagnoseOptions& o, RunManifest& manifest, std::ostream& out) {
  const ChainSet chains = load_fit(o.fit, manifest);
  const Data data = fit_data(o.fit, o.data);
  check_fit_matches(chains, data);
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  if (chains.n_draws() < 4) throw InputError("diagnose needs at least four draws per chain");
  prepare_out(o.out);

  auto summaries = summarize(chains);
  const auto derived = average_transition_summaries(chains);
  summaries.insert(summaries.end(), derived.begin(), derived.end());
  auto csv = open_csv(o.out / "summary.csv", "summary", "parameter,mean,sd,q025,q975,rhat,ess");
  double worst = 0.0;
  for (const auto& s : summaries) {
    csv << s.name << ',' << fmt(s.mean) << ',' << fmt(s.sd) << ',' << fmt(s.q025) << ',' << fmt(s.q975) << ','
        << fmt(s.rhat) << ',' << fmt(s.ess) << '\n';
    if (s.rhat) worst = std::max(worst, *s.rhat);
  }
  csv.close();

  const auto space = parse_mean_space(o.mean_space);
  const auto report = dic(chains, data.panel, data.design, space);
  const auto violations = label_order_violations(chains);
  auto d = open_csv(o.out / "dic.csv", "dic", "statistic,value");
  d << "mean_deviance," << fmt(report.mean_deviance) << "\ndeviance_at_mean," << fmt(report.deviance_at_mean)
    << "\np_d," << fmt(report.p_d) << "\ndic," << fmt(report.dic) << "\nlabel_order_violations," << violations << '\n';
  d.close();
  manifest.config = {{"fit", fs::absolute(o.fit).string()}, {"mean_space", o.mean_space}};

  out << "diagnose: " << summaries.size() << " parameters, DIC " << fmt(report.dic) << " (pD " << fmt(report.p_d)
      << ")\n";
  if (chains.n_chains() < 2) {
    out << "  R-hat unavailable: needs at least two chains\n";
  } else {
    out << "  largest R-hat " << fmt(worst) << '\n';
  }
  if (violations > 0) out << "  " << violations << " draws break the canonical state order\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ppc

struct PpcOptions {
  fs::path fit;
  DataSpec data;
  std::string mode = "new-subjects";
  std::uint64_t seed = 1;
  std::size_t stride = 1;
  fs::path out;
};

void add_ppc(CLI::App& app, PpcOptions& o) {
  auto* cmd = app.add_subcommand("ppc", "posterior predictive checks of count, first-drinking-day and block statistics");
  cmd->add_option("--fit", o.fit, "fit directory")->required();
  cmd->add_option("--y", o.data.y, "override the fit's observation file");
  cmd->add_option("--x", o.data.x, "override the fit's covariate file");
  cmd->add_option("--mode", o.mode, "new-subjects or same-subjects")->capture_default_str()->check(CLI::IsMember({"new-subjects", "same-subjects"}));
  cmd->add_option("--seed", o.seed, "seed for the replicates")->capture_default_str();
  cmd->add_option("--stride", o.stride, "use every k-th draw")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_ppc(const PpcOptions& o, RunManifest& manifest, std::ostream& out) {
  const ChainSet chains = load_fit(o.fit, manifest);
  const Data data = fit_data(o.fit, o.data);
  check_fit_matches(chains, data);
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  prepare_out(o.out);
  const PpcMode mode = o.mode == "same-subjects" ? PpcMode::same_subjects : PpcMode::new_subjects;
  const auto results = posterior_predictive_check(chains, data.panel, data.design, mode, o.seed, {o.stride});

  std::vector<std::pair<int, int>> draws;
  each_draw(chains, o.stride, [&](int c, std::size_t, int iteration) { draws.emplace_back(c + 1, iteration); });
  auto tidy = open_csv(o.out / "ppc_draws.csv", "ppc_draws", "chain,iteration,statistic,value");
  for (std::size_t g = 0; g < draws.size(); ++g)
    for (const auto& r : results)
      tidy << draws[g].first << ',' << draws[g].second << ',' << r.name << ',' << fmt(r.replicates[g]) << '\n';
  tidy.close();

  auto summary = open_csv(o.out / "ppc_summary.csv", "ppc_summary", "statistic,observed,mean,q025,q975,quantile");
  int extreme = 0;
  for (const auto& r : results) {
    std::vector<double> finite;
    for (double v : r.replicates)
      if (!std::isnan(v)) finite.push_back(v);
    const Interval iv = finite.empty() ? Interval{NAN, NAN, NAN} : interval(finite);
    summary << r.name << ',' << fmt(r.observed) << ',' << fmt(iv.mean) << ',' << fmt(iv.lo) << ',' << fmt(iv.hi) << ','
            << fmt(r.quantile) << '\n';
    if (r.quantile < 0.025 || r.quantile > 0.975) ++extreme;
  }
  summary.close();
  manifest.seeds.push_back(o.seed);
  manifest.config = {{"fit", fs::absolute(o.fit).string()}, {"mode", o.mode}, {"seed", o.seed}, {"stride", o.stride}};
  out << "ppc: " << results.size() << " statistics over " << draws.size() << " replicates, " << extreme
      << " outside the central 95%\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// apc

struct ApcOptions {
  fs::path fit;
  DataSpec data;
  std::vector<std::string> inputs;
  std::optional<double> hi, lo;
  std::size_t stride = 1;
  fs::path out;
};

void add_apc(CLI::App& app, ApcOptions& o) {
  auto* cmd = app.add_subcommand("apc", "average predictive comparisons of transition and stationary probabilities");
  cmd->add_option("--fit", o.fit, "fit directory")->required();
  cmd->add_option("--y", o.data.y, "override the fit's observation file");
  cmd->add_option("--x", o.data.x, "override the fit's covariate file");
  cmd->add_option("--input", o.inputs, "covariate to compare (repeatable; default all)");
  cmd->add_option("--hi", o.hi, "high value on the raw scale (single --input only)");
  cmd->add_option("--lo", o.lo, "low value on the raw scale (single --input only)");
  cmd->add_option("--stride", o.stride, "use every k-th draw")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_apc(ApcOptions& o, RunManifest& manifest, std::ostream& out) {
  const ChainSet chains = load_fit(o.fit, manifest);
  const Data data = fit_data(o.fit, o.data);
  check_fit_matches(chains, data);
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  if (data.design.n_covariates() == 0) throw InputError("the fit has no covariates to compare");
  if (o.inputs.empty())
    for (const auto& c : data.design.columns()) o.inputs.push_back(c.record.name);
  if ((o.hi || o.lo) && o.inputs.size() != 1) throw InputError("--hi and --lo need exactly one --input");
  prepare_out(o.out);

  const int S = chains.shape.n_states();
  std::vector<std::pair<int, int>> draws;
  each_draw(chains, o.stride, [&](int c, std::size_t, int iteration) { draws.emplace_back(c + 1, iteration); });
  auto b_draws = open_csv(o.out / "apc_draws.csv", "apc_draws", "input,chain,iteration,from,to,value");
  auto b_summary = open_csv(o.out / "apc_summary.csv", "apc_summary", "input,u_hi,u_lo,from,to,mean,q025,q975");
  auto s_draws = open_csv(o.out / "stationary_draws.csv", "stationary_draws", "input,chain,iteration,state,value");
  auto s_summary = open_csv(o.out / "stationary_summary.csv", "stationary_summary", "input,u_hi,u_lo,state,mean,q025,q975");
  json requests = json::array();
  for (const auto& name : o.inputs) {
    auto request = default_request(data.design, name);
    const auto& record = data.design.column(data.design.index_of(name)).record;
    if (o.hi) request.u_hi = record.apply(*o.hi);
    if (o.lo) request.u_lo = record.apply(*o.lo);
    requests.push_back({{"input", request.input_name}, {"u_hi", request.u_hi}, {"u_lo", request.u_lo}});
    const auto b = average_transition_difference(chains, data.design, request, {o.stride});
    const auto st = average_stationary_difference(chains, data.design, request, {o.stride});
    const std::string head = request.input_name + ",";
    for (std::size_t g = 0; g < b.size(); ++g) {
      const std::string who = head + std::to_string(draws[g].first) + "," + std::to_string(draws[g].second) + ",";
      for (int r = 0; r < S; ++r)
        for (int s = 0; s < S; ++s) b_draws << who << r + 1 << ',' << s + 1 << ',' << fmt(b[g](r, s)) << '\n';
      for (int s = 0; s < S; ++s) s_draws << who << s + 1 << ',' << fmt(st[g][s]) << '\n';
    }
    const std::string range = head + fmt(request.u_hi) + "," + fmt(request.u_lo) + ",";
    for (int r = 0; r < S; ++r) {
      for (int s = 0; s < S; ++s) {
        std::vector<double> v;
        for (const auto& m : b) v.push_back(m(r, s));
        const auto iv = interval(v);
        b_summary << range << r + 1 << ',' << s + 1 << ',' << fmt(iv.mean) << ',' << fmt(iv.lo) << ',' << fmt(iv.hi) << '\n';
      }
    }
    for (int s = 0; s < S; ++s) {
      std::vector<double> v;
      for (const auto& m : st) v.push_back(m[s]);
      const auto iv = interval(v);
      s_summary << range << s + 1 << ',' << fmt(iv.mean) << ',' << fmt(iv.lo) << ',' << fmt(iv.hi) << '\n';
    }
  }
  manifest.config = {{"fit", fs::absolute(o.fit).string()}, {"requests", requests}, {"stride", o.stride}};
  out << "apc: " << o.inputs.size() << " inputs over " << draws.size() << " draws\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transitions

struct TransitionsOptions {
  fs::path fit;
  DataSpec data;
  int day = 1;
  fs::path out;
};

void add_transitions(CLI::App& app, TransitionsOptions& o) {
  auto* cmd = app.add_subcommand("transitions", "posterior-mean transition matrices per subject and for an average subject");
  cmd->add_option("--fit", o.fit, "fit directory")->required();
  cmd->add_option("--y", o.data.y, "override the fit's observation file");
  cmd->add_option("--x", o.data.x, "override the fit's covariate file");
  cmd->add_option("--day", o.day, "day (1-based) whose transition matrices are reported")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_transitions(const TransitionsOptions& o, RunManifest& manifest, std::ostream& out) {
  const ChainSet chains = load_fit(o.fit, manifest);
  const Data data = fit_data(o.fit, o.data);
  check_fit_matches(chains, data);
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  if (o.day < 1 || o.day > data.panel.n_days()) throw InputError("--day outside 1.." + std::to_string(data.panel.n_days()));
  prepare_out(o.out);
  const int S = chains.shape.n_states();

  auto subjects = open_csv(o.out / "subject_transitions.csv", "subject_transitions", "subject,from,to,mean");
  for (int i = 0; i < data.panel.n_subjects(); ++i) {
    const auto q = posterior_mean_transitions(chains, data.design, i, o.day - 1);
    for (int r = 0; r < S; ++r)
      for (int s = 0; s < S; ++s) subjects << i + 1 << ',' << r + 1 << ',' << s + 1 << ',' << fmt(q(r, s)) << '\n';
  }
  subjects.close();

  std::vector<std::vector<double>> draws(static_cast<std::size_t>(S * S));
  each_draw(chains, 1, [&](int c, std::size_t g, int) {
    const auto q = average_subject_transitions(chains.draw(c, g));
    for (int k = 0; k < S * S; ++k) draws[static_cast<std::size_t>(k)].push_back(q(k / S, k % S));
  });
  auto average = open_csv(o.out / "average_transitions.csv", "average_transitions", "from,to,mean,q025,q975");
  for (int k = 0; k < S * S; ++k) {
    const auto iv = interval(draws[static_cast<std::size_t>(k)]);
    average << k / S + 1 << ',' << k % S + 1 << ',' << fmt(iv.mean) << ',' << fmt(iv.lo) << ',' << fmt(iv.hi) << '\n';
  }
  manifest.config = {{"fit", fs::absolute(o.fit).string()}, {"day", o.day}};
  out << "transitions: " << data.panel.n_subjects() << " subjects on day " << o.day << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// viterbi

struct ViterbiOptions {
  fs::path fit;
  fs::path params;
  DataSpec data;
  std::string mean_space = "probability";
  std::vector<int> subjects;
  std::vector<int> relapse_states;
  fs::path out;
};

void add_viterbi(CLI::App& app, ViterbiOptions& o) {
  auto* cmd = app.add_subcommand("viterbi", "most probable hidden paths, smoothed marginals and relapse episodes");
  auto* fit = cmd->add_option("--fit", o.fit, "fit directory (decodes at the posterior mean)");
  auto* params = cmd->add_option("--params", o.params, "parameter file to decode with instead of a fit");
  fit->excludes(params);
  add_data_options(cmd, o.data, false);
  cmd->add_option("--mean-space", o.mean_space, "posterior-mean space: probability or logit")->capture_default_str();
  cmd->add_option("--subject", o.subjects, "subject to decode, 1-based (repeatable; default all)");
  cmd->add_option("--relapse-state", o.relapse_states, "relapse state, 1-based (repeatable; default the last state)");
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_viterbi(const ViterbiOptions& o, RunManifest& manifest, std::ostream& out) {
  ModelParams params;
  Data data;
  if (!o.fit.empty()) {
    const ChainSet chains = load_fit(o.fit, manifest);
    data = fit_data(o.fit, o.data);
    check_fit_matches(chains, data);
    params = posterior_mean(chains, parse_mean_space(o.mean_space));
  } else if (!o.params.empty()) {
    params = read_params(o.params);
    manifest.inputs.push_back(hash_input("params", o.params));
    data = load_data(o.data);
  } else {
    throw InputError("viterbi needs --fit or --params");
  }
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  if (params.n_subjects() != data.panel.n_subjects()) throw InputError("parameters and data disagree on subjects");
  const int S = params.n_states();
  std::set<int> relapse;
  for (int s : o.relapse_states) {
    if (s < 1 || s > S) throw InputError("--relapse-state outside 1.." + std::to_string(S));
    relapse.insert(s - 1);
  }
  if (relapse.empty()) relapse.insert(S - 1);
  std::vector<int> subjects;
  for (int i : o.subjects) {
    if (i < 1 || i > data.panel.n_subjects()) throw InputError("--subject outside 1.." + std::to_string(data.panel.n_subjects()));
    subjects.push_back(i - 1);
  }
  if (subjects.empty())
    for (int i = 0; i < data.panel.n_subjects(); ++i) subjects.push_back(i);
  prepare_out(o.out);

  const auto paths = viterbi(data.panel, data.design, params);
  const auto marginals = smoothed_marginals(data.panel, data.design, params);
  std::string header = "subject,day,observed,state";
  for (int s = 0; s < S; ++s) header += ",p" + std::to_string(s + 1);
  auto csv = open_csv(o.out / "viterbi.csv", "viterbi", header);
  auto episodes = open_csv(o.out / "episodes.csv", "episodes", "subject,start,end,state");
  std::size_t n_episodes = 0;
  for (int i : subjects) {
    const auto& path = paths[static_cast<std::size_t>(i)].states;
    const auto& m = marginals[static_cast<std::size_t>(i)];
    for (int t = 0; t < data.panel.n_days(); ++t) {
      csv << i + 1 << ',' << t + 1 << ',';
      if (data.panel.is_missing(i, t)) {
        csv << "NA";
      } else {
        csv << data.panel.level(i, t) + 1;
      }
      csv << ',' << path[static_cast<std::size_t>(t)] + 1;
      for (int s = 0; s < S; ++s) csv << ',' << fmt(m(t, s));
      csv << '\n';
    }
    for (const auto& e : relapse_segments(path, relapse)) {
      episodes << i + 1 << ',' << e.start << ',' << e.end << ',' << e.state + 1 << '\n';
      ++n_episodes;
    }
  }
  json relapse_json = json::array();
  for (int s : relapse) relapse_json.push_back(s + 1);
  manifest.config = {{"source", o.fit.empty() ? fs::absolute(o.params).string() : fs::absolute(o.fit).string()},
                     {"mean_space", o.mean_space},
                     {"relapse_states", relapse_json}};
  out << "viterbi: " << subjects.size() << " subjects decoded, " << n_episodes << " relapse episodes\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serial

struct SerialOptions {
  fs::path hmm;
  fs::path markov;
  DataSpec data;
  std::string mode = "one-step";
  fs::path out;
};

void add_serial(CLI::App& app, SerialOptions& o) {
  auto* cmd = app.add_subcommand("serial", "serial-dependence motifs under a fitted HMM and Markov model");
  cmd->add_option("--hmm", o.hmm, "HMM fit directory")->required();
  cmd->add_option("--markov", o.markov, "Markov fit directory")->required();
  cmd->add_option("--y", o.data.y, "override the fits' observation file");
  cmd->add_option("--x", o.data.x, "override the fits' covariate file");
  cmd->add_option("--mode", o.mode, "one-step or markov predictive")->capture_default_str()->check(CLI::IsMember({"one-step", "markov"}));
  cmd->add_option("--out", o.out, "output directory")->required();
}

int cmd_serial(const SerialOptions& o, RunManifest& manifest, std::ostream& out) {
  const ChainSet hmm = load_fit(o.hmm, manifest);
  const ChainSet markov = load_fit(o.markov, manifest);
  if (hmm.kind != ModelKind::hmm || markov.kind != ModelKind::markov) {
    throw InputError("serial needs an HMM fit for --hmm and a Markov fit for --markov");
  }
  const Data data = fit_data(o.hmm, o.data);
  const Data markov_data = fit_data(o.markov, o.data);
  if (!(data.panel == markov_data.panel)) throw InputError("the two fits were run on different observations");
  check_fit_matches(hmm, data);
  check_fit_matches(markov, data);
  for (const auto& f : data.inputs) manifest.inputs.push_back(f);
  prepare_out(o.out);
  const auto mode = o.mode == "markov" ? PredictiveMode::markov : PredictiveMode::one_step;
  const auto rows = serial_dependence_table(data.panel, data.design, hmm, markov, mode);
  auto csv = open_csv(o.out / "motifs.csv", "motifs", "motif,first,second,count,hmm_probability,markov_probability");
  for (const auto& r : rows) {
    csv << r.motif << ',' << r.first + 1 << ',' << r.second + 1 << ',' << r.count << ',' << fmt(r.hmm_probability)
        << ',' << fmt(r.markov_probability) << '\n';
  }
  manifest.config = {{"hmm", fs::absolute(o.hmm).string()}, {"markov", fs::absolute(o.markov).string()}, {"mode", o.mode}};
  out << "serial: " << rows.size() << " motifs\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian mixed-effects hidden Markov and Markov models for ordinal panel data", "mehmm"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "key-value config file; options of a command go under [command]");
  app.require_subcommand(1);

  FitOptions fit;
  SimulateOptions sim;
  DiagnoseOptions diag;
  PpcOptions ppc;
  ApcOptions apc;
  TransitionsOptions trans;
  ViterbiOptions vit;
  SerialOptions serial;
  add_fit(app, fit);
  add_simulate(app, sim);
  add_diagnose(app, diag);
  add_ppc(app, ppc);
  add_apc(app, apc);
  add_transitions(app, trans);
  add_viterbi(app, vit);
  add_serial(app, serial);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  RunManifest manifest;
  manifest.arguments = args;
  manifest.started = utc_now();
  try {
    const auto* cmd = app.get_subcommands().front();
    manifest.command = cmd->get_name();
    int code = kExitOk;
    fs::path dir;
    if (manifest.command == "fit") {
      code = cmd_fit(fit, manifest, out);
      dir = fit.out;
    } else if (manifest.command == "simulate") {
      code = cmd_simulate(sim, manifest, out);
      dir = sim.out;
    } else if (manifest.command == "diagnose") {
      code = cmd_diagnose(diag, manifest, out);
      dir = diag.out;
    } else if (manifest.command == "ppc") {
      code = cmd_ppc(ppc, manifest, out);
      dir = ppc.out;
    } else if (manifest.command == "apc") {
      code = cmd_apc(apc, manifest, out);
      dir = apc.out;
    } else if (manifest.command == "transitions") {
      code = cmd_transitions(trans, manifest, out);
      dir = trans.out;
    } else if (manifest.command == "viterbi") {
      code = cmd_viterbi(vit, manifest, out);
      dir = vit.out;
    } else if (manifest.command == "serial") {
      code = cmd_serial(serial, manifest, out);
      dir = serial.out;
    }
    write_manifest(dir, manifest);
    return code;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace mehmm::cli
