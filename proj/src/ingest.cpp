#include "tunedemand/io/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tunedemand/error.hpp"
#include "tunedemand/io/dates.hpp"

namespace tunedemand::io {
namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
  ColumnMapping m;
  m.song_id = j.value("song_id", m.song_id);
  m.artist_id = j.value("artist_id", m.artist_id);
  m.stratum = j.value("stratum", m.stratum);
  m.week_start = j.value("week_start", m.week_start);
  m.streams = j.value("streams", m.streams);
  m.release_date = j.value("release_date", m.release_date);
  m.endogenous = j.value("endogenous", std::vector<std::string>{});
  m.exogenous = j.value("exogenous", std::vector<std::string>{});
  return m;
}

nlohmann::json ColumnMapping::to_json() const {
  return {{"song_id", song_id},       {"artist_id", artist_id}, {"stratum", stratum},
          {"week_start", week_start}, {"streams", streams},     {"release_date", release_date},
          {"endogenous", endogenous}, {"exogenous", exogenous}};
}

IngestReport parse_csv(std::string_view text, const ColumnMapping& mapping) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  while (!lines.empty() && trim(std::string(lines.back())).empty()) lines.pop_back();
  if (lines.empty()) throw ConfigurationError("CSV has no header");

  std::vector<std::string> header;
  for (auto& h : split_line(lines.front())) header.push_back(trim(h));
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigurationError("missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_song = column(mapping.song_id), c_artist = column(mapping.artist_id),
             c_stratum = column(mapping.stratum), c_week = column(mapping.week_start),
             c_streams = column(mapping.streams), c_release = column(mapping.release_date);

  IngestReport report;
  report.endogenous = mapping.endogenous;
  report.exogenous = mapping.exogenous;
  if (report.endogenous.empty() && report.exogenous.empty()) {
    for (const auto& h : header) {
      if (h.rfind("x_", 0) == 0) report.endogenous.push_back(h);
      if (h.rfind("z_", 0) == 0) report.exogenous.push_back(h);
    }
  }
  std::vector<std::size_t> c_x, c_z;
  for (const auto& n : report.endogenous) c_x.push_back(column(n));
  for (const auto& n : report.exogenous) c_z.push_back(column(n));

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto line_no = li + 1;
    if (trim(std::string(lines[li])).empty()) continue;
    auto fields = split_line(lines[li]);
    for (auto& f : fields) f = trim(f);
    auto reject = [&](const std::string& why) { report.rejects.push_back({line_no, why}); };
    if (fields.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
      continue;
    }
    IngestRecord r;
    r.line = line_no;
    r.song_id = fields[c_song];
    r.artist_id = fields[c_artist];
    r.stratum = fields[c_stratum];
    if (r.song_id.empty() || r.stratum.empty()) {
      reject("empty song or stratum id");
      continue;
    }
    const auto week = parse_date(fields[c_week]);
    const auto release = parse_date(fields[c_release]);
    if (!week) {
      reject("unparseable week_start '" + fields[c_week] + "'");
      continue;
    }
    if (!release) {
      reject("unparseable release_date '" + fields[c_release] + "'");
      continue;
    }
    r.week_start = *week;
    r.release = *release;
    if (!parse_int(fields[c_streams], r.streams)) {
      reject("stream count is not an integer");
      continue;
    }
    if (r.streams < 0) {
      reject("negative stream count");
      continue;
    }
    bool ok = true;
    auto covariate = [&](const std::vector<std::size_t>& cols, std::vector<double>& out) {
      for (auto c : cols) {
        double v = 0.0;
        if (!parse_double(fields[c], v) || v < 0.0 || v > 1.0) {
          reject("covariate '" + header[c] + "' is not a number in [0, 1]");
          ok = false;
          return;
        }
        out.push_back(v);
      }
    };
    covariate(c_x, r.x);
    if (ok) covariate(c_z, r.z);
    if (!ok) continue;
    report.records.push_back(std::move(r));
  }
  return report;
}

IngestReport ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), mapping);
}

DemandCurve SongData::aggregate() const {
  DemandCurve total;
  total.song_id = song_id;
  total.values.assign(horizon(), 0);
  for (const auto& c : curves)
    for (std::size_t t = 0; t < c.values.size(); ++t) total.values[t] += c.values[t];
  return total;
}

SongData translate_to_origin(std::span<const IngestRecord> records, const std::vector<std::string>& endogenous,
                             const std::vector<std::string>& exogenous) {
  if (records.empty()) throw ValidationError("no records to translate");
  SongData song;
  song.song_id = records.front().song_id;
  song.artist_id = records.front().artist_id;
  song.release = records.front().release;
  song.endogenous = endogenous;
  song.exogenous = exogenous;
  const auto C = records.front().x.size();
  const auto D = records.front().z.size();

  std::map<std::string, std::map<std::int64_t, std::int64_t>> counts;
  std::map<std::int64_t, std::pair<std::vector<double>, double>> cov_sum;  // week -> (sum, rows)
  std::size_t pre_release = 0, merged = 0;
  std::int64_t last = -1;
  for (const auto& r : records) {
    if (r.song_id != song.song_id) throw ConfigurationError("records mix songs");
    if (r.release != song.release) {
      song.warnings.push_back("line " + std::to_string(r.line) + ": release date differs from the song's first row; first kept");
    }
    if (r.x.size() != C || r.z.size() != D) throw ConfigurationError("records differ in covariate columns");
    const auto w = week_index(song.release, r.week_start);
    if (w < 0) {
      ++pre_release;
      continue;
    }
    auto& slot = counts[r.stratum];
    if (slot.count(w)) ++merged;
    slot[w] += r.streams;
    auto& cs = cov_sum[w];
    if (cs.first.empty()) cs.first.assign(C + D, 0.0);
    for (std::size_t c = 0; c < C; ++c) cs.first[c] += r.x[c];
    for (std::size_t d = 0; d < D; ++d) cs.first[C + d] += r.z[d];
    cs.second += 1.0;
    last = std::max(last, w);
  }
  if (pre_release > 0) song.warnings.push_back(std::to_string(pre_release) + " pre-release rows dropped");
  if (merged > 0) song.warnings.push_back(std::to_string(merged) + " duplicate (stratum, week) rows summed");
  if (last < 0) throw ValidationError("song '" + song.song_id + "' has no data on or after its release: empty curve");

  const auto T = static_cast<std::size_t>(last + 1);
  int index = 0;
  for (const auto& [name, weeks] : counts) {
    song.strata.push_back(name);
    DemandCurve curve;
    curve.song_id = song.song_id;
    curve.stratum = index++;
    curve.values.assign(T, 0);
    for (const auto& [w, v] : weeks) curve.values[static_cast<std::size_t>(w)] = v;
    song.curves.push_back(std::move(curve));
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
  for (const auto& [w, cs] : cov_sum) {
    for (std::size_t c = 0; c < C; ++c) x(w, static_cast<Eigen::Index>(c)) = cs.first[c] / cs.second;
    for (std::size_t d = 0; d < D; ++d) z(w, static_cast<Eigen::Index>(d)) = cs.first[C + d] / cs.second;
  }
  song.covariates = CovariatePath(std::move(x), std::move(z));
  return song;
}

std::vector<std::vector<IngestRecord>> group_by_song(const std::vector<IngestRecord>& records) {
  std::map<std::string, std::vector<IngestRecord>> by_song;
  for (const auto& r : records) by_song[r.song_id].push_back(r);
  std::vector<std::vector<IngestRecord>> out;
  for (auto& [_, rs] : by_song) out.push_back(std::move(rs));
  return out;
}

std::string export_csv(const SongData& song) {
  std::ostringstream os;
  os << "song_id,artist_id,stratum,week_start,streams,release_date";
  for (const auto& n : song.endogenous) os << ',' << csv_field(n);
  for (const auto& n : song.exogenous) os << ',' << csv_field(n);
  os << '\n';
  for (std::size_t s = 0; s < song.curves.size(); ++s) {
    for (std::size_t t = 0; t < song.horizon(); ++t) {
      os << csv_field(song.song_id) << ',' << csv_field(song.artist_id) << ',' << csv_field(song.strata[s]) << ','
         << format_date(song.release + 7 * static_cast<std::int64_t>(t)) << ',' << song.curves[s].values[t] << ','
         << format_date(song.release);
      for (std::size_t c = 0; c < song.covariates.channels(); ++c)
        os << ',' << number(song.covariates.endogenous(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
      for (std::size_t d = 0; d < song.covariates.ambient(); ++d)
        os << ',' << number(song.covariates.exogenous(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)));
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace tunedemand::io
