#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tunedemand/io/ingest.hpp"
#include "tunedemand/io/store.hpp"

namespace tunedemand::io {

using nlohmann::json;

/// Store operations shared by the CLI and the HTTP service. Every mutating
/// operation appends {"op", "request", "config_hash"} to the run log, and
/// document ids derive from the data hash and the resolved request, so
/// replaying a log into an empty store rebuilds the same documents.

json song_to_json(const SongData& song);
SongData song_from_json(const json& doc);

/// Request {"csv": text, "mapping": {...}, "replace": bool}. Conflicting
/// re-ingest without "replace" throws ConflictError before anything is written.
json ingest_op(ProjectStore& store, const json& request);

/// {"song_id", "seed", "mcmc": {...}}: Null model over the song's strata.
json fit_null_op(ProjectStore& store, const json& request);

/// {"song_id", "stratum" (default: aggregate), "family": "negbin" | "least_squares",
///  "min_phase_weeks"}: change points, then the partite fit.
json fit_adsr_op(ProjectStore& store, const json& request);

/// {"song_id", "seed", "mcmc", "sample_taus", "taus"}: forced model posterior.
json fit_forced_op(ProjectStore& store, const json& request);

/// {"song_ids" (default: all), "k", "seed", "z_normalize"}.
json classify_op(ProjectStore& store, const json& request);

/// {"fit_id", "scheme": "null" | "forced", "policy": {...}, "sizes", "covariates"}.
json optimize_op(ProjectStore& store, const json& request);

/// Read-only plan plus predictive quantiles under the planned spend, with the
/// zero-spend baseline and the objective delta.
json whatif_op(const ProjectStore& store, const json& request);

/// Quantile curves at the song's observed covariates.
json predictive_op(const ProjectStore& store, const std::string& fit_id, const std::vector<double>& levels);

/// Frequentist control chart of the aggregate curve.
json control_chart_op(const ProjectStore& store, const std::string& song_id, double level = 0.9);

/// Song curves in the ingest CSV schema.
std::string export_song_op(const ProjectStore& store, const std::string& song_id);

/// Runs one logged operation again.
json apply_logged(ProjectStore& store, const json& entry, const ProjectStore& inputs);

/// Replays `source`'s run log into `target`.
void replay(const ProjectStore& source, ProjectStore& target);

}  // namespace tunedemand::io
