#pragma once

// On-disk form of a ChainSet. A fit directory holds
//   chains.json     dimensions, prior, sampler settings, per-chain seeds
//   samples.csv     iteration,chain,parameter,value (one row per scalar per kept draw)
//   deviance.csv    iteration,chain,deviance
//   acceptance.csv  chain,phase,block,index,accepted,proposed,rate,step
//   occupancy.csv   subject,day,state,probability (HMM only)
// Every CSV starts with "# mehmm-schema <version> <kind>". Chains, subjects,
// days and states are 1-based in files; iterations count sweeps from 1,
// burn-in included.

#include "mehmm/mcmc.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace mehmm {

inline constexpr int kSchemaVersion = 1;

std::string schema_line(std::string_view kind);
/// Throws InputError unless `line` is the schema line for `kind` at kSchemaVersion.
void check_schema_line(std::string_view line, std::string_view kind, const std::string& source);

void write_samples(std::ostream& out, const ChainSet& chains);
void write_deviance(std::ostream& out, const ChainSet& chains);
void write_acceptance(std::ostream& out, const ChainSet& chains);
/// Share of kept draws, pooled over chains, in which each subject-day sat in each state.
void write_occupancy(std::ostream& out, const ChainSet& chains);

/// Writes every file above into `dir`, creating it if needed.
void save_chain_set(const std::filesystem::path& dir, const ChainSet& chains);
/// Reads chains.json, samples.csv and deviance.csv back. Acceptance records,
/// occupancy and final states are not restored.
ChainSet load_chain_set(const std::filesystem::path& dir);

std::string to_string(SigmaPrior prior);
SigmaPrior parse_sigma_prior(std::string_view text);

}  // namespace mehmm
