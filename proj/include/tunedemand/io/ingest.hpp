#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tunedemand/core_model.hpp"

namespace tunedemand::io {

struct IngestRecord {
  std::string song_id;
  std::string artist_id;
  std::string stratum;
  std::int64_t week_start = 0;  // days since 1970-01-01
  std::int64_t streams = 0;
  std::int64_t release = 0;
  std::vector<double> x;
  std::vector<double> z;
  std::size_t line = 0;
};

/// CSV header names for each field. Empty covariate lists mean: take every
/// column whose header starts with "x_" (endogenous) or "z_" (exogenous).
struct ColumnMapping {
  std::string song_id = "song_id";
  std::string artist_id = "artist_id";
  std::string stratum = "stratum";
  std::string week_start = "week_start";
  std::string streams = "streams";
  std::string release_date = "release_date";
  std::vector<std::string> endogenous;
  std::vector<std::string> exogenous;

  static ColumnMapping from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct IngestReport {
  std::vector<IngestRecord> records;
  std::vector<RejectedRow> rejects;
  std::vector<std::string> endogenous;  // covariate columns in use
  std::vector<std::string> exogenous;
};

/// Parses and validates rows. Malformed rows land in `rejects` with a
/// reason; a missing required column throws ConfigurationError.
IngestReport parse_csv(std::string_view text, const ColumnMapping& mapping = {});
IngestReport ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping = {});

/// One song at the release-week origin.
struct SongData {
  std::string song_id;
  std::string artist_id;
  std::int64_t release = 0;
  std::vector<std::string> strata;  // sorted; curve s has stratum index s
  std::vector<DemandCurve> curves;
  CovariatePath covariates;
  std::vector<std::string> endogenous;
  std::vector<std::string> exogenous;
  std::vector<std::string> warnings;

  std::size_t horizon() const { return covariates.horizon(); }
  DemandCurve aggregate() const;
};

/// Week 0 is the release week; gaps become zero counts and zero
/// covariates; pre-release rows are dropped with a warning; rows falling in
/// the same (stratum, week) are summed with a warning. Throws
/// ValidationError when nothing remains after release, ConfigurationError
/// when the records mix songs.
SongData translate_to_origin(std::span<const IngestRecord> records, const std::vector<std::string>& endogenous = {},
                             const std::vector<std::string>& exogenous = {});

/// Records grouped by song id, in sorted id order.
std::vector<std::vector<IngestRecord>> group_by_song(const std::vector<IngestRecord>& records);

/// Rows in the ingest schema for every stratum of a song.
std::string export_csv(const SongData& song);

}  // namespace tunedemand::io
