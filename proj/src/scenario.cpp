#include "tunedemand/io/scenario.hpp"

#include <cmath>

#include "tunedemand/core_model.hpp"
#include "tunedemand/envelope.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/io/dates.hpp"
#include "tunedemand/io/json_codec.hpp"

namespace tunedemand::io {
namespace {

CovariatePath make_covariates(const nlohmann::json& spec, std::size_t T, std::size_t C, std::size_t D, Rng& rng) {
  if (spec.is_object()) {
    auto p = spec.get<CovariatePath>();
    if (p.horizon() != T || p.channels() != C || p.ambient() != D) {
      throw ConfigurationError("scenario covariates do not match weeks, channels and ambient");
    }
    return p;
  }
  const auto kind = spec.is_string() ? spec.get<std::string>() : std::string("random");
  if (kind == "zeros") return CovariatePath::zeros(T, C, D);
  if (kind != "random") throw ConfigurationError("covariates must be 'random', 'zeros' or an {x, z} object");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
  Eigen::MatrixXd z(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(t, c) = rng.uniform();
    for (Eigen::Index d = 0; d < z.cols(); ++d) z(t, d) = rng.uniform();
  }
  return CovariatePath(std::move(x), std::move(z));
}

std::vector<std::string> names(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(prefix) + std::to_string(i));
  return out;
}

void envelope_song(const nlohmann::json& s, SongData& song, Rng& rng) {
  const auto T = song.horizon();
  const auto C = song.covariates.channels();
  const auto D = song.covariates.ambient();
  int index = 0;
  for (const auto& st : s.at("strata")) {
    const auto k = st.at("taus").get<std::vector<std::size_t>>();
    const auto mu = st.at("nodes").get<std::vector<double>>();
    if (k.size() != 4 || mu.size() != 3) throw ConfigurationError("stratum needs 4 taus and 3 nodes");
    EnvelopeFit fit;
    fit.taus = {k[0], k[1], k[2], k[3]};
    fit.taus.validate(T);
    fit.horizon = T;
    fit.nodes = {mu[0], mu[1], mu[2]};
    for (std::size_t r = 0; r < 4; ++r) {
      fit.effects[r].theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(C));
      fit.effects[r].gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
      if (st.contains("effects")) {
        fit.effects[r].theta = st["effects"].at(r).at("theta").get<Eigen::VectorXd>();
        fit.effects[r].gamma = st["effects"].at(r).at("gamma").get<Eigen::VectorXd>();
        if (static_cast<std::size_t>(fit.effects[r].theta.size()) != C ||
            static_cast<std::size_t>(fit.effects[r].gamma.size()) != D) {
          throw ConfigurationError("stratum effects do not match channels and ambient");
        }
      }
    }
    fit.refresh_lines();
    const auto mean = envelope_prediction(fit, song.covariates);
    const bool noiseless = st.value("noiseless", false);
    const bool poisson = !st.contains("dispersion") || st["dispersion"].is_null();
    DemandCurve curve;
    curve.song_id = song.song_id;
    curve.stratum = index++;
    for (std::size_t t = 0; t < T; ++t) {
      if (noiseless) {
        curve.values.push_back(std::llround(mean[t]));
      } else if (poisson) {
        curve.values.push_back(rng.poisson(mean[t]));
      } else {
        curve.values.push_back(mean[t] > 0.0 ? rng.negative_binomial(mean[t], st["dispersion"].get<double>()) : 0);
      }
    }
    song.strata.push_back(st.value("name", "stratum-" + std::to_string(index - 1)));
    song.curves.push_back(std::move(curve));
  }
}

void counting_song(const nlohmann::json& s, SongData& song, Rng& rng) {
  const auto T = song.horizon();
  const auto N = s.at("population").get<std::size_t>();
  const ListenerPopulation pop{N, T};
  pop.validate();
  std::vector<Membership> segments;
  AffinityModel model;
  model.link = s.value("link", "identity") == "logit" ? Link::InverseLogit : Link::IdentityClipped;
  for (const auto& seg : s.at("segments")) {
    const auto range = seg.at("members").get<std::vector<std::size_t>>();
    if (range.size() != 2 || range[0] >= range[1] || range[1] > N) {
      throw ConfigurationError("segment members must be a [first, last) range inside the population");
    }
    Membership m;
    for (auto i = range[0]; i < range[1]; ++i) m.push_back(static_cast<ListenerId>(i));
    segments.push_back(std::move(m));
    model.theta.push_back(seg.at("theta").get<Eigen::VectorXd>());
    model.gamma.push_back(seg.at("gamma").get<Eigen::VectorXd>());
    song.strata.push_back(seg.value("name", "segment-" + std::to_string(song.strata.size())));
  }
  model.check_dimensions(song.covariates.channels(), song.covariates.ambient());
  const auto covering = SegmentCovering::constant(N, T, segments);
  song.curves = simulate_demand(covering, model, song.covariates, rng, song.song_id);
}

}  // namespace

std::vector<SongData> simulate_scenario(const nlohmann::json& scenario, std::uint64_t seed) {
  const auto model = scenario.value("model", "envelope");
  if (model != "envelope" && model != "counting") throw ConfigurationError("model must be 'envelope' or 'counting'");
  const auto release = parse_date(scenario.value("release_date", "2021-01-04"));
  if (!release) throw ConfigurationError("scenario release_date is not a date");
  const auto T = scenario.value("weeks", std::size_t{40});
  const auto C = scenario.value("channels", std::size_t{1});
  const auto D = scenario.value("ambient", std::size_t{1});
  const Rng root(seed);
  std::vector<SongData> out;
  std::size_t index = 0;
  for (const auto& s : scenario.at("songs")) {
    Rng rng = root.split(index++);
    SongData song;
    song.song_id = s.at("song_id").get<std::string>();
    song.artist_id = s.value("artist_id", "artist");
    song.release = s.contains("release_date") ? parse_date(s["release_date"].get<std::string>()).value_or(*release) : *release;
    song.covariates = make_covariates(s.value("covariates", scenario.value("covariates", nlohmann::json("random"))), T, C, D, rng);
    song.endogenous = names("x_", C);
    song.exogenous = names("z_", D);
    if (model == "envelope") {
      envelope_song(s, song, rng);
    } else {
      counting_song(s, song, rng);
    }
    out.push_back(std::move(song));
  }
  return out;
}

std::string simulate_scenario_csv(const nlohmann::json& scenario, std::uint64_t seed) {
  std::string csv;
  bool first = true;
  for (const auto& song : simulate_scenario(scenario, seed)) {
    auto part = export_csv(song);
    if (!first) part = part.substr(part.find('\n') + 1);
    csv += part;
    first = false;
  }
  return csv;
}

}  // namespace tunedemand::io
