#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tunedemand/io/ingest.hpp"

namespace tunedemand::io {

/// Synthetic songs from a scenario document:
///
///   {"model": "envelope" | "counting", "release_date": "YYYY-MM-DD", "weeks": T,
///    "channels": C, "ambient": D, "covariates": "random" | "zeros", "songs": [...]}
///
/// Envelope songs list strata with "taus" [A,S,D,R], "nodes" [mu_A,mu_S,mu_D],
/// optional "dispersion" (absent: Poisson), "noiseless" and per-phase
/// "effects" [{"theta":[..],"gamma":[..]} x4]. Counting songs give a
/// "population", "segments" as [first, last) listener ranges (overlap
/// allowed), per-segment "theta"/"gamma" and a "link" ("identity" or "logit").
/// Song s draws from stream s of the seed.
std::vector<SongData> simulate_scenario(const nlohmann::json& scenario, std::uint64_t seed);

/// All songs of a scenario as one CSV in the ingest schema.
std::string simulate_scenario_csv(const nlohmann::json& scenario, std::uint64_t seed);

}  // namespace tunedemand::io
