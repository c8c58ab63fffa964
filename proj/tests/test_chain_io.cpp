#include "mehmm/chain_io.hpp"
#include "mehmm/error.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mehmm;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mehmm_chain_io_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ChainSet short_run(ModelKind kind) {
  Rng rng = make_stream(21, {});
  const auto d = oracle::random_design(rng, 4, 12, 1, true);
  const auto y = oracle::random_panel(rng, 4, 12, 3, 0.1);
  SamplerConfig config;
  config.n_chains = 2;
  config.n_burnin = 5;
  config.n_keep = 6;
  config.thin = 2;
  config.seed = 9;
  PriorSpec prior;
  prior.sigma_prior = SigmaPrior::inv_chi2;
  prior.sigma_df = 3;
  prior.sigma_scale = 0.5;
  return run_chains(kind, y, d, kind == ModelKind::hmm ? 2 : 3, prior, config);
}

void replace_first_line(const std::filesystem::path& path, const std::string& line) {
  std::ifstream in(path);
  std::stringstream rest;
  std::string first;
  std::getline(in, first);
  rest << in.rdbuf();
  in.close();
  std::ofstream(path) << line << '\n' << rest.str();
}

}  // namespace

TEST_CASE("chain sets round-trip through a fit directory") {
  for (auto kind : {ModelKind::hmm, ModelKind::markov}) {
    const auto set = short_run(kind);
    const auto dir = scratch(to_string(kind));
    save_chain_set(dir, set);
    const auto back = load_chain_set(dir);
    CHECK(back.kind == kind);
    CHECK(back.prior.sigma_prior == SigmaPrior::inv_chi2);
    CHECK(back.prior.sigma_df == 3);
    CHECK(back.config.thin == 2);
    CHECK(back.config.seed == 9);
    REQUIRE(back.n_chains() == 2);
    for (int c = 0; c < 2; ++c) {
      const auto& a = set.chains[static_cast<std::size_t>(c)];
      const auto& b = back.chains[static_cast<std::size_t>(c)];
      CHECK(a.values == b.values);
      CHECK(a.deviance == b.deviance);
      CHECK(a.iterations == b.iterations);
      CHECK(a.seed == b.seed);
    }
    CHECK(std::filesystem::exists(dir / "acceptance.csv"));
    CHECK(std::filesystem::exists(dir / "occupancy.csv") == (kind == ModelKind::hmm));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("occupancy rows are probabilities") {
  const auto set = short_run(ModelKind::hmm);
  std::stringstream out;
  write_occupancy(out, set);
  std::string line;
  std::getline(out, line);
  CHECK(line == schema_line("occupancy"));
  std::getline(out, line);
  double total = 0.0;
  int rows = 0;
  while (std::getline(out, line)) {
    const auto v = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    total += v;
    ++rows;
  }
  CHECK(rows == 4 * 12 * 2);
  CHECK(total == doctest::Approx(4 * 12));
}

TEST_CASE("schema and structure errors") {
  const auto set = short_run(ModelKind::hmm);
  const auto dir = scratch("errors");
  save_chain_set(dir, set);
  SUBCASE("schema version mismatch") {
    replace_first_line(dir / "samples.csv", "# mehmm-schema 99 samples");
    CHECK_THROWS_AS(load_chain_set(dir), InputError);
  }
  SUBCASE("missing schema line") {
    replace_first_line(dir / "deviance.csv", "iteration,chain,deviance");
    CHECK_THROWS_AS(load_chain_set(dir), InputError);
  }
  SUBCASE("missing artifact") {
    std::filesystem::remove(dir / "deviance.csv");
    CHECK_THROWS_AS(load_chain_set(dir), InputError);
  }
  SUBCASE("not a fit directory") {
    std::filesystem::remove(dir / "chains.json");
    CHECK_THROWS_AS(load_chain_set(dir), InputError);
  }
  std::filesystem::remove_all(dir);
  CHECK(parse_sigma_prior("FLAT-VARIANCE") == SigmaPrior::flat_variance);
  CHECK_THROWS_AS(parse_sigma_prior("uniform"), InputError);
}
