#include "mehmm/chain_io.hpp"

#include "mehmm/error.hpp"
#include "mehmm/text_io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <unordered_map>

namespace mehmm {

using nlohmann::json;

std::string schema_line(std::string_view kind) {
  return "# mehmm-schema " + std::to_string(kSchemaVersion) + " " + std::string(kind);
}

void check_schema_line(std::string_view line, std::string_view kind, const std::string& source) {
  const auto body = text::trim(line);
  const std::string prefix = "# mehmm-schema ";
  if (body.substr(0, prefix.size()) != prefix) throw InputError(source + ": missing schema line");
  if (body != schema_line(kind)) {
    throw InputError(source + ": schema mismatch (found '" + std::string(body) + "', expected '" +
                     schema_line(kind) + "')");
  }
}

std::string to_string(SigmaPrior prior) {
  switch (prior) {
    case SigmaPrior::flat_sigma: return "flat-sigma";
    case SigmaPrior::flat_variance: return "flat-variance";
    case SigmaPrior::inv_chi2: return "inv-chi2";
  }
  return "flat-sigma";
}

SigmaPrior parse_sigma_prior(std::string_view text) {
  if (text::iequals(text, "flat-sigma")) return SigmaPrior::flat_sigma;
  if (text::iequals(text, "flat-variance")) return SigmaPrior::flat_variance;
  if (text::iequals(text, "inv-chi2")) return SigmaPrior::inv_chi2;
  throw InputError("unknown sigma prior '" + std::string(text) + "' (expected flat-sigma, flat-variance or inv-chi2)");
}

namespace {

void put(std::ostream& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

void put(std::ostream& out, long v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

json prior_json(const PriorSpec& p) {
  return {{"beta_sd", p.beta_sd},
          {"mu_sd", p.mu_sd},
          {"sigma_prior", to_string(p.sigma_prior)},
          {"sigma_df", p.sigma_df},
          {"sigma_scale", p.sigma_scale},
          {"dirichlet_concentration", p.dirichlet_concentration}};
}

PriorSpec prior_from(const json& j) {
  PriorSpec p;
  p.beta_sd = j.at("beta_sd");
  p.mu_sd = j.at("mu_sd");
  p.sigma_prior = parse_sigma_prior(j.at("sigma_prior").get<std::string>());
  p.sigma_df = j.at("sigma_df");
  p.sigma_scale = j.at("sigma_scale");
  p.dirichlet_concentration = j.at("dirichlet_concentration");
  return p;
}

json config_json(const SamplerConfig& c) {
  return {{"n_chains", c.n_chains},
          {"n_burnin", c.n_burnin},
          {"n_keep", c.n_keep},
          {"thin", c.thin},
          {"rw_step_alpha", c.rw_step_alpha},
          {"rw_step_beta", c.rw_step_beta},
          {"adapt_during_burnin", c.adapt_during_burnin},
          {"target_acceptance", c.target_acceptance},
          {"jitter_scale", c.jitter_scale},
          {"seed", c.seed},
          {"threads", c.threads},
          {"store_state_trace", c.store_state_trace}};
}

SamplerConfig config_from(const json& j) {
  SamplerConfig c;
  c.n_chains = j.at("n_chains");
  c.n_burnin = j.at("n_burnin");
  c.n_keep = j.at("n_keep");
  c.thin = j.at("thin");
  c.rw_step_alpha = j.at("rw_step_alpha");
  c.rw_step_beta = j.at("rw_step_beta");
  c.adapt_during_burnin = j.at("adapt_during_burnin");
  c.target_acceptance = j.at("target_acceptance");
  c.jitter_scale = j.at("jitter_scale");
  c.seed = j.at("seed");
  c.threads = j.at("threads");
  c.store_state_trace = j.at("store_state_trace");
  return c;
}

/// Reads the schema line, the header, then hands every data row's fields to `row`.
template <class F>
void read_csv(const std::filesystem::path& path, std::string_view kind, std::string_view header, F&& row) {
  auto in = text::open_input(path);
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty file");
  check_schema_line(line, kind, source);
  if (!std::getline(in, line) || text::trim(line) != header) {
    throw InputError(text::where(source, 2, "expected header '" + std::string(header) + "'"));
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    row(fields, line_no, source);
  }
}

long field_int(const std::vector<std::string>& f, std::size_t k, std::size_t line_no, const std::string& source) {
  const auto v = k < f.size() ? text::parse_int(f[k]) : std::nullopt;
  if (!v) throw InputError(text::where(source, line_no, "expected an integer in column " + std::to_string(k + 1)));
  return static_cast<long>(*v);
}

double field_double(const std::vector<std::string>& f, std::size_t k, std::size_t line_no, const std::string& source) {
  const auto v = k < f.size() ? text::parse_double(f[k]) : std::nullopt;
  if (!v) throw InputError(text::where(source, line_no, "expected a number in column " + std::to_string(k + 1)));
  return *v;
}

}  // namespace

void write_samples(std::ostream& out, const ChainSet& chains) {
  out << schema_line("samples") << "\niteration,chain,parameter,value\n";
  const auto& names = chains.names();
  for (int c = 0; c < chains.n_chains(); ++c) {
    const Chain& chain = chains.chains[static_cast<std::size_t>(c)];
    for (std::size_t g = 0; g < chain.n_draws(); ++g) {
      const auto draw = chains.flat_draw(c, g);
      for (std::size_t k = 0; k < draw.size(); ++k) {
        put(out, static_cast<long>(chain.iterations[g]) + 1);
        out.put(',');
        put(out, static_cast<long>(c) + 1);
        out.put(',');
        out << names[k];
        out.put(',');
        put(out, draw[k]);
        out.put('\n');
      }
    }
  }
}

void write_deviance(std::ostream& out, const ChainSet& chains) {
  out << schema_line("deviance") << "\niteration,chain,deviance\n";
  for (int c = 0; c < chains.n_chains(); ++c) {
    const Chain& chain = chains.chains[static_cast<std::size_t>(c)];
    for (std::size_t g = 0; g < chain.n_draws(); ++g) {
      out << chain.iterations[g] + 1 << ',' << c + 1 << ',' << text::format_double(chain.deviance[g]) << '\n';
    }
  }
}

void write_acceptance(std::ostream& out, const ChainSet& chains) {
  out << schema_line("acceptance") << "\nchain,phase,block,index,accepted,proposed,rate,step\n";
  const int S = chains.shape.n_states();
  const int p = chains.shape.n_covariates();
  auto rows = [&](int c, const char* phase, const AcceptanceRecord& a) {
    for (std::size_t b = 0; b < a.alpha_step.size(); ++b) {
      const int r = static_cast<int>(b) / (S - 1), s = static_cast<int>(b) % (S - 1) + 1;
      const double rate = a.alpha_proposed[b] > 0 ? a.alpha_accepted[b] / a.alpha_proposed[b] : 0.0;
      out << c + 1 << ',' << phase << ",alpha,[" << r + 1 << "][" << s + 1 << "]," << a.alpha_accepted[b] << ','
          << a.alpha_proposed[b] << ',' << text::format_double(rate) << ',' << text::format_double(a.alpha_step[b])
          << '\n';
    }
    for (std::size_t b = 0; b < a.beta_step.size(); ++b) {
      const int k = static_cast<int>(b) % p, rs = static_cast<int>(b) / p;
      const int r = rs / (S - 1), s = rs % (S - 1) + 1;
      const double rate = a.beta_proposed[b] > 0 ? a.beta_accepted[b] / a.beta_proposed[b] : 0.0;
      out << c + 1 << ',' << phase << ",beta,[" << r + 1 << "][" << s + 1 << "][" << k + 1 << "],"
          << a.beta_accepted[b] << ',' << a.beta_proposed[b] << ',' << text::format_double(rate) << ','
          << text::format_double(a.beta_step[b]) << '\n';
    }
  };
  for (int c = 0; c < chains.n_chains(); ++c) {
    rows(c, "burnin", chains.chains[static_cast<std::size_t>(c)].burnin_acceptance);
    rows(c, "kept", chains.chains[static_cast<std::size_t>(c)].acceptance);
  }
}

void write_occupancy(std::ostream& out, const ChainSet& chains) {
  out << schema_line("occupancy") << "\nsubject,day,state,probability\n";
  if (chains.chains.empty() || chains.chains.front().occupancy.empty()) return;
  const auto size = chains.chains.front().occupancy.size();
  std::vector<double> total(size, 0.0);
  double draws = 0.0;
  for (const auto& c : chains.chains) {
    for (std::size_t k = 0; k < size; ++k) total[k] += c.occupancy[k];
    draws += static_cast<double>(c.n_draws());
  }
  const int S = chains.shape.n_states();
  const std::size_t T = size / static_cast<std::size_t>(S) / static_cast<std::size_t>(chains.shape.n_subjects());
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t cell = k / static_cast<std::size_t>(S);
    out << cell / T + 1 << ',' << cell % T + 1 << ',' << k % static_cast<std::size_t>(S) + 1 << ','
        << text::format_double(draws > 0 ? total[k] / draws : 0.0) << '\n';
  }
}

void save_chain_set(const std::filesystem::path& dir, const ChainSet& chains) {
  std::filesystem::create_directories(dir);
  json meta = {{"schema", kSchemaVersion},
               {"model", to_string(chains.kind)},
               {"subjects", chains.shape.n_subjects()},
               {"states", chains.shape.n_states()},
               {"levels", chains.shape.n_levels()},
               {"covariates", chains.shape.n_covariates()},
               {"prior", prior_json(chains.prior)},
               {"config", config_json(chains.config)}};
  json list = json::array();
  for (int c = 0; c < chains.n_chains(); ++c) {
    const Chain& chain = chains.chains[static_cast<std::size_t>(c)];
    list.push_back({{"chain", c + 1}, {"seed", chain.seed}, {"draws", chain.n_draws()}});
  }
  meta["chains"] = list;
  text::open_output(dir / "chains.json") << meta.dump(2) << '\n';

  std::vector<char> buffer(1 << 20);
  std::ofstream samples;
  samples.rdbuf()->pubsetbuf(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  samples.open(dir / "samples.csv");
  if (!samples) throw InputError("cannot open " + (dir / "samples.csv").string() + " for writing");
  write_samples(samples, chains);
  samples.close();

  auto deviance = text::open_output(dir / "deviance.csv");
  write_deviance(deviance, chains);
  auto acceptance = text::open_output(dir / "acceptance.csv");
  write_acceptance(acceptance, chains);
  if (chains.kind == ModelKind::hmm) {
    auto occupancy = text::open_output(dir / "occupancy.csv");
    write_occupancy(occupancy, chains);
  }
}

ChainSet load_chain_set(const std::filesystem::path& dir) {
  const auto meta_path = dir / "chains.json";
  if (!std::filesystem::exists(meta_path)) throw InputError(dir.string() + ": not a fit directory (no chains.json)");
  json meta;
  try {
    meta = json::parse(text::open_input(meta_path));
  } catch (const json::exception& e) {
    throw InputError(meta_path.string() + ": " + e.what());
  }
  ChainSet set;
  try {
    if (meta.at("schema").get<int>() != kSchemaVersion) {
      throw InputError(meta_path.string() + ": schema mismatch (found " + meta.at("schema").dump() + ", expected " +
                       std::to_string(kSchemaVersion) + ")");
    }
    set.kind = parse_model_kind(meta.at("model").get<std::string>());
    set.shape = ModelParams::zeros(set.kind, meta.at("subjects"), meta.at("states"), meta.at("levels"),
                                   meta.at("covariates"));
    set.prior = prior_from(meta.at("prior"));
    set.config = config_from(meta.at("config"));
    for (const auto& c : meta.at("chains")) {
      Chain chain;
      chain.chain_index = c.at("chain").get<int>() - 1;
      chain.seed = c.at("seed");
      set.chains.push_back(std::move(chain));
    }
  } catch (const json::exception& e) {
    throw InputError(meta_path.string() + ": " + e.what());
  }

  const ParameterLayout layout(set.shape);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < layout.size(); ++k) index.emplace(layout.names()[k], k);
  const std::size_t dim = layout.size();
  const long n_chains = set.n_chains();
  auto chain_of = [&](long c, std::size_t line_no, const std::string& source) -> Chain& {
    if (c < 1 || c > n_chains) throw InputError(text::where(source, line_no, "chain index out of range"));
    return set.chains[static_cast<std::size_t>(c - 1)];
  };

  std::vector<std::size_t> filled(set.chains.size(), 0);
  read_csv(dir / "samples.csv", "samples", "iteration,chain,parameter,value",
           [&](const std::vector<std::string>& f, std::size_t line_no, const std::string& source) {
             const long it = field_int(f, 0, line_no, source) - 1;
             const long c = field_int(f, 1, line_no, source);
             Chain& chain = chain_of(c, line_no, source);
             const auto k = f.size() > 2 ? index.find(f[2]) : index.end();
             if (k == index.end()) throw InputError(text::where(source, line_no, "unknown parameter"));
             if (chain.iterations.empty() || chain.iterations.back() != it) {
               chain.iterations.push_back(static_cast<int>(it));
               chain.values.resize(chain.values.size() + dim, 0.0);
             }
             chain.values[(chain.iterations.size() - 1) * dim + k->second] = field_double(f, 3, line_no, source);
             ++filled[static_cast<std::size_t>(c - 1)];
           });
  read_csv(dir / "deviance.csv", "deviance", "iteration,chain,deviance",
           [&](const std::vector<std::string>& f, std::size_t line_no, const std::string& source) {
             Chain& chain = chain_of(field_int(f, 1, line_no, source), line_no, source);
             const long it = field_int(f, 0, line_no, source) - 1;
             const std::size_t g = chain.deviance.size();
             if (g >= chain.iterations.size() || chain.iterations[g] != it) {
               throw InputError(text::where(source, line_no, "deviance row does not match the samples"));
             }
             chain.deviance.push_back(field_double(f, 2, line_no, source));
           });
  for (std::size_t c = 0; c < set.chains.size(); ++c) {
    const Chain& chain = set.chains[c];
    if (filled[c] != chain.iterations.size() * dim || chain.deviance.size() != chain.iterations.size()) {
      throw InputError(dir.string() + ": incomplete draws for chain " + std::to_string(c + 1));
    }
    if (chain.n_draws() != set.chains.front().n_draws()) {
      throw InputError(dir.string() + ": chains have different numbers of draws");
    }
  }
  return set;
}

}  // namespace mehmm
