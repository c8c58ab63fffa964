#include "cli.hpp"
#include "manifest.hpp"

#include "mehmm/chain_io.hpp"
#include "mehmm/dataset.hpp"
#include "mehmm/text_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using mehmm::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "mehmm_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string p(const std::string& name) { return (workdir() / name).string(); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(mehmm::text::split(line, ','));
  }
  return rows;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_x(const fs::path& path, int n) {
  std::ofstream out(path);
  out << "sex,treatment,d_drink,d_heavy\n";
  for (int i = 0; i < n; ++i) out << (i % 3 == 0 ? "female" : "male") << ',' << i % 2 << ',' << 0.1 + 0.02 * i << ',' << 0.01 * i << '\n';
}

}  // namespace

TEST_CASE("simulate, fit and diagnose end to end") {
  write_x(workdir() / "x.csv", 16);
  auto r = call({"simulate", "--x", p("x.csv"), "--days", "30", "--missing-rate", "0.15", "--seed", "2", "--out", p("sim")});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(p("sim/y.csv")));
  CHECK(fs::exists(p("sim/hidden.csv")));
  CHECK(fs::exists(p("sim/manifest.json")));
  const auto y = mehmm::load_observations(p("sim/y.csv"));
  CHECK(y.n_subjects() == 16);
  CHECK(y.n_days() == 30);

  r = call({"fit", "--y", p("sim/y.csv"), "--x", p("x.csv"), "--chains", "1", "--burnin", "10", "--keep", "10", "--seed", "4",
            "--out", p("fit1")});
  REQUIRE(r.code == 0);
  for (const char* f : {"samples.csv", "deviance.csv", "acceptance.csv", "occupancy.csv", "chains.json", "manifest.json"})
    CHECK(fs::exists(workdir() / "fit1" / f));

  SUBCASE("one-chain diagnose reports R-hat as unavailable") {
    r = call({"diagnose", "--fit", p("fit1"), "--out", p("diag1")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("R-hat unavailable") != std::string::npos);
    const auto rows = read_csv(p("diag1/summary.csv"));
    REQUIRE(rows.size() > 1);
    CHECK(rows[0] == std::vector<std::string>{"parameter", "mean", "sd", "q025", "q975", "rhat", "ess"});
    for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k][5] == "NA");
    const auto dic = read_csv(p("diag1/dic.csv"));
    CHECK(dic.size() == 6);
  }
  SUBCASE("identical seed and inputs give byte-identical samples") {
    r = call({"fit", "--y", p("sim/y.csv"), "--x", p("x.csv"), "--chains", "1", "--burnin", "10", "--keep", "10", "--seed", "4",
              "--out", p("fit1b")});
    REQUIRE(r.code == 0);
    CHECK(slurp(p("fit1/samples.csv")) == slurp(p("fit1b/samples.csv")));
    CHECK(slurp(p("fit1/deviance.csv")) == slurp(p("fit1b/deviance.csv")));
  }
  SUBCASE("two chains give R-hat values") {
    r = call({"fit", "--y", p("sim/y.csv"), "--x", p("x.csv"), "--chains", "2", "--burnin", "10", "--keep", "10", "--threads", "2",
              "--out", p("fit2")});
    REQUIRE(r.code == 0);
    r = call({"diagnose", "--fit", p("fit2"), "--out", p("diag2")});
    REQUIRE(r.code == 0);
    const auto rows = read_csv(p("diag2/summary.csv"));
    int with_rhat = 0;
    for (std::size_t k = 1; k < rows.size(); ++k) with_rhat += rows[k][5] != "NA";
    CHECK(with_rhat > 0);
  }
  SUBCASE("downstream commands") {
    CHECK(call({"apc", "--fit", p("fit1"), "--input", "treatment", "--out", p("apc")}).code == 0);
    const auto apc = read_csv(p("apc/apc_draws.csv"));
    CHECK(apc.size() == 1 + 10 * 9);
    CHECK(call({"transitions", "--fit", p("fit1"), "--day", "5", "--out", p("tr")}).code == 0);
    CHECK(read_csv(p("tr/subject_transitions.csv")).size() == 1 + 16 * 9);
    CHECK(call({"viterbi", "--fit", p("fit1"), "--out", p("vit")}).code == 0);
    const auto vit = read_csv(p("vit/viterbi.csv"));
    CHECK(vit.size() == 1 + 16 * 30);
    CHECK(vit[0].size() == 7);
    CHECK(call({"viterbi", "--params", p("sim/params.txt"), "--y", p("sim/y.csv"), "--x", p("x.csv"), "--out", p("vit2")}).code == 0);
    CHECK(call({"ppc", "--fit", p("fit1"), "--out", p("ppc")}).code == 0);
    CHECK(read_csv(p("ppc/ppc_summary.csv")).size() == 1 + 7 + 12);
  }
}

TEST_CASE("ppc modes differ on a fixture with large random effects") {
  REQUIRE(call({"simulate", "--subjects", "12", "--days", "30", "--sigma", "2", "--seed", "5", "--out", p("simre")}).code == 0);
  REQUIRE(call({"fit", "--y", p("simre/y.csv"), "--chains", "1", "--burnin", "20", "--keep", "20", "--out", p("fitre")}).code == 0);
  REQUIRE(call({"ppc", "--fit", p("fitre"), "--mode", "new-subjects", "--out", p("ppc_new")}).code == 0);
  REQUIRE(call({"ppc", "--fit", p("fitre"), "--mode", "same-subjects", "--out", p("ppc_same")}).code == 0);
  CHECK(read_csv(p("ppc_new/ppc_draws.csv")) != read_csv(p("ppc_same/ppc_draws.csv")));
}

TEST_CASE("errors and exit codes") {
  CHECK(call({}).code == 2);
  CHECK(call({"fit", "--out", p("nowhere")}).code == 2);
  CHECK(call({"fit", "--y", p("missing.csv"), "--out", p("nowhere")}).code == 2);
  CHECK(call({"diagnose", "--fit", p("no_such_fit"), "--out", p("d")}).code == 2);
  CHECK(call({"--help"}).code == 0);
  {
    std::ofstream bad(workdir() / "bad.csv");
    bad << "1,2,3\n1,4,1\n";
  }
  const auto r = call({"fit", "--y", p("bad.csv"), "--out", p("badfit")});
  CHECK(r.code == 2);
  CHECK(r.err.find("bad.csv:2") != std::string::npos);

  SUBCASE("schema mismatch in an upstream artifact") {
    REQUIRE(call({"simulate", "--subjects", "4", "--days", "10", "--out", p("sims")}).code == 0);
    REQUIRE(call({"fit", "--y", p("sims/y.csv"), "--chains", "1", "--burnin", "2", "--keep", "4", "--out", p("fits")}).code == 0);
    auto text = slurp(p("fits/deviance.csv"));
    text.replace(0, text.find('\n'), "# mehmm-schema 2 deviance");
    std::ofstream(p("fits/deviance.csv")) << text;
    const auto e = call({"diagnose", "--fit", p("fits"), "--out", p("diags")});
    CHECK(e.code == 2);
    CHECK(e.err.find("schema mismatch") != std::string::npos);
  }
}

TEST_CASE("config file precedence") {
  REQUIRE(call({"simulate", "--subjects", "4", "--days", "10", "--out", p("simc")}).code == 0);
  {
    std::ofstream cfg(workdir() / "run.ini");
    cfg << "[fit]\nchains=1\nburnin=3\nkeep=4\nseed=11\n";
  }
  REQUIRE(call({"--config", p("run.ini"), "fit", "--y", p("simc/y.csv"), "--keep", "6", "--out", p("fitc")}).code == 0);
  const auto set = mehmm::load_chain_set(p("fitc"));
  CHECK(set.n_chains() == 1);
  CHECK(set.n_draws() == 6);
  CHECK(set.config.seed == 11);
  const auto manifest = mehmm::cli::read_manifest(p("fitc"));
  CHECK(manifest.at("command") == "fit");
  CHECK(manifest.at("inputs").size() == 1);
  CHECK(manifest.at("inputs")[0].at("sha256") == mehmm::cli::sha256_file(p("simc/y.csv")));
}

TEST_CASE("sha256") {
  std::ofstream(workdir() / "abc.txt") << "abc";
  CHECK(mehmm::cli::sha256_file(p("abc.txt")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
