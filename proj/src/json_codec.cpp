#include "tunedemand/io/json_codec.hpp"

#include "tunedemand/error.hpp"

namespace nlohmann {

void adl_serializer<Eigen::VectorXd>::to_json(json& j, const Eigen::VectorXd& v) {
  j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
}

void adl_serializer<Eigen::VectorXd>::from_json(const json& j, Eigen::VectorXd& v) {
  v.resize(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
}

void adl_serializer<Eigen::MatrixXd>::to_json(json& j, const Eigen::MatrixXd& m) {
  j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
}

void adl_serializer<Eigen::MatrixXd>::from_json(const json& j, Eigen::MatrixXd& m) {
  const auto rows = j.size();
  const auto cols = rows == 0 ? 0 : j.at(0).size();
  m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw tunedemand::ValidationError("ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
}

}  // namespace nlohmann

namespace tunedemand {
namespace {

const char* family_name(EnvelopeFamily f) { return f == EnvelopeFamily::NegBin ? "negbin" : "least_squares"; }

}  // namespace

void to_json(json& j, const CovariatePath& p) { j = json{{"x", p.endogenous}, {"z", p.exogenous}}; }

void from_json(const json& j, CovariatePath& p) {
  Eigen::MatrixXd x = j.at("x").get<Eigen::MatrixXd>();
  Eigen::MatrixXd z = j.at("z").get<Eigen::MatrixXd>();
  // An empty block still needs the horizon's rows.
  if (x.rows() == 0) x.resize(z.rows(), 0);
  if (z.rows() == 0) z.resize(x.rows(), 0);
  p = CovariatePath(std::move(x), std::move(z));
}

void to_json(json& j, const DemandCurve& c) {
  j = json{{"song_id", c.song_id}, {"stratum", c.stratum ? json(*c.stratum) : json(nullptr)},
           {"values", c.values}, {"origin", c.origin}};
}

void from_json(const json& j, DemandCurve& c) {
  c.song_id = j.value("song_id", "");
  c.stratum = j.contains("stratum") && !j["stratum"].is_null() ? std::optional<int>(j["stratum"].get<int>()) : std::nullopt;
  c.values = j.at("values").get<std::vector<std::int64_t>>();
  c.origin = j.value("origin", true);
}

void to_json(json& j, const ChangePoints& t) {
  j = json{{"tau_A", t.attack}, {"tau_S", t.sustain}, {"tau_D", t.decay}, {"tau_R", t.release}};
}

void from_json(const json& j, ChangePoints& t) {
  t.attack = j.at("tau_A").get<std::size_t>();
  t.sustain = j.at("tau_S").get<std::size_t>();
  t.decay = j.at("tau_D").get<std::size_t>();
  t.release = j.at("tau_R").get<std::size_t>();
}

void to_json(json& j, const EnvelopeFit& f) {
  j = f.taus;
  j["horizon"] = f.horizon;
  j["mu_A"] = f.nodes[0];
  j["mu_S"] = f.nodes[1];
  j["mu_D"] = f.nodes[2];
  j["alpha"] = f.alpha;
  j["beta"] = f.beta;
  json effects = json::array();
  for (const auto& e : f.effects) effects.push_back({{"theta", e.theta}, {"gamma", e.gamma}});
  j["effects"] = effects;
  j["dispersion"] = f.dispersion ? json(*f.dispersion) : json(nullptr);
  j["family"] = family_name(f.family);
  j["log_likelihood"] = f.log_likelihood;
  j["iterations"] = f.iterations;
}

void from_json(const json& j, EnvelopeFit& f) {
  f.taus = j.get<ChangePoints>();
  f.horizon = j.value("horizon", std::size_t{0});
  f.nodes = {j.at("mu_A").get<double>(), j.at("mu_S").get<double>(), j.at("mu_D").get<double>()};
  const auto& effects = j.at("effects");
  if (effects.size() != 4) throw ValidationError("envelope fit needs four phase effects");
  for (std::size_t r = 0; r < 4; ++r) {
    f.effects[r].theta = effects[r].at("theta").get<Eigen::VectorXd>();
    f.effects[r].gamma = effects[r].at("gamma").get<Eigen::VectorXd>();
  }
  f.dispersion = j.contains("dispersion") && !j["dispersion"].is_null() ? std::optional<double>(j["dispersion"].get<double>())
                                                                       : std::nullopt;
  f.family = j.value("family", "negbin") == "least_squares" ? EnvelopeFamily::LeastSquares : EnvelopeFamily::NegBin;
  f.log_likelihood = j.value("log_likelihood", 0.0);
  f.iterations = j.value("iterations", 0);
  f.refresh_lines();
}

void to_json(json& j, const RegressionFit& f) {
  j = json{{"theta", f.theta},
           {"gamma", f.gamma},
           {"std_errors", f.std_errors},
           {"dispersion", f.dispersion ? json(*f.dispersion) : json(nullptr)},
           {"log_likelihood", f.log_likelihood},
           {"family", f.family == CountFamily::NegBin ? "negbin" : "poisson"},
           {"iterations", f.iterations}};
}

void to_json(json& j, const ControlChart& c) {
  j = json{{"mean", c.mean}, {"lower", c.lower}, {"upper", c.upper}, {"level", c.level}};
}

void to_json(json& j, const BudgetPolicy& p) { j = json{{"weekly", p.weekly}, {"social_cap", p.social_cap}}; }

void from_json(const json& j, BudgetPolicy& p) {
  p.weekly = j.at("weekly").get<std::vector<double>>();
  p.social_cap = j.value("social_cap", 0.0);
}

void to_json(json& j, const AllocationPath& a) {
  json spend = json::array();
  for (const auto& week : a.spend) {
    json w = json::array();
    for (const auto& seg : week) w.push_back(seg);
    spend.push_back(std::move(w));
  }
  j = json{{"scheme", a.scheme == Scheme::Null ? "null" : "forced"},
           {"spend", spend},
           {"affinity", a.affinity},
           {"weekly_spend", a.weekly_spend},
           {"total_spend", a.total_spend},
           {"objective", a.objective},
           {"warnings", a.warnings}};
}

void to_json(json& j, const SchemeComparison& s) {
  j = json{{"closed_form", s.closed_form},
           {"closed_form_objective", s.closed_form_objective},
           {"closed_form_spend", s.closed_form_spend},
           {"lp", {{"spend", s.lp.spend}, {"objective", s.lp.objective}}},
           {"budget_violation", s.budget_violation},
           {"dominant", s.dominant}};
}

void to_json(json& j, const KMeansResult& r) {
  json clusters = json::array();
  for (std::size_t c = 0; c < r.clusters.size(); ++c) {
    clusters.push_back({{"id", c},
                        {"centroid", r.clusters[c].centroid},
                        {"members", r.clusters[c].members},
                        {"inertia", r.clusters[c].inertia}});
  }
  j = json{{"clusters", clusters},
           {"assignment", r.assignment},
           {"inertia_trace", r.inertia_trace},
           {"iterations", r.iterations}};
}

void to_json(json& j, const PredictiveQuantiles& q) {
  j = json{{"levels", q.levels}, {"segments", q.segments}, {"aggregate", q.aggregate}, {"aggregate_mean", q.aggregate_mean}};
}

void to_json(json& j, const ArtistPrior& a) {
  j = json{{"artist_id", a.artist_id}, {"segments", a.segments},   {"mean_x", a.mean_x},
           {"scale_x", a.scale_x},     {"mean_z", a.mean_z},       {"scale_z", a.scale_z},
           {"dispersion_shape", a.dispersion_shape}, {"dispersion_rate", a.dispersion_rate}};
}

void from_json(const json& j, ArtistPrior& a) {
  a.artist_id = j.value("artist_id", "");
  a.segments = j.at("segments").get<std::size_t>();
  a.mean_x = j.at("mean_x").get<Eigen::VectorXd>();
  a.scale_x = j.at("scale_x").get<Eigen::VectorXd>();
  a.mean_z = j.at("mean_z").get<Eigen::VectorXd>();
  a.scale_z = j.at("scale_z").get<Eigen::VectorXd>();
  a.dispersion_shape = j.value("dispersion_shape", 2.0);
  a.dispersion_rate = j.value("dispersion_rate", 0.5);
}

void to_json(json& j, const NullModelSpec& s) {
  j = json{{"channels", s.channels}, {"ambient", s.ambient}, {"artists", s.artists},
           {"lkj_dof_x", s.lkj_dof_x}, {"lkj_dof_z", s.lkj_dof_z}};
}

void from_json(const json& j, NullModelSpec& s) {
  s.channels = j.at("channels").get<std::size_t>();
  s.ambient = j.at("ambient").get<std::size_t>();
  s.artists = j.at("artists").get<std::vector<ArtistPrior>>();
  s.lkj_dof_x = j.value("lkj_dof_x", 4.0);
  s.lkj_dof_z = j.value("lkj_dof_z", 4.0);
}

void to_json(json& j, const McmcConfig& c) {
  j = json{{"chains", c.chains},         {"warmup", c.warmup},
           {"draws", c.draws},           {"seed", c.seed},
           {"prior_only", c.prior_only}, {"correlation_moves", c.correlation_moves}};
}

void from_json(const json& j, McmcConfig& c) {
  const McmcConfig d;
  c.chains = j.value("chains", d.chains);
  c.warmup = j.value("warmup", d.warmup);
  c.draws = j.value("draws", d.draws);
  c.seed = j.value("seed", d.seed);
  c.prior_only = j.value("prior_only", d.prior_only);
  c.correlation_moves = j.value("correlation_moves", d.correlation_moves);
}

void to_json(json& j, const ForcedModelSpec& s) {
  j = json{{"node_log_mean", s.node_log_mean ? json(*s.node_log_mean) : json(nullptr)},
           {"node_log_sd", s.node_log_sd},
           {"effect_scale", s.effect_scale},
           {"dispersion_shape", s.dispersion_shape},
           {"dispersion_rate", s.dispersion_rate},
           {"taus", s.taus ? json(*s.taus) : json(nullptr)},
           {"sample_taus", s.sample_taus},
           {"tau_step", s.tau_step}};
}

void from_json(const json& j, ForcedModelSpec& s) {
  const ForcedModelSpec d;
  s.node_log_mean = j.contains("node_log_mean") && !j["node_log_mean"].is_null()
                        ? std::optional<double>(j["node_log_mean"].get<double>())
                        : std::nullopt;
  s.node_log_sd = j.value("node_log_sd", d.node_log_sd);
  s.effect_scale = j.value("effect_scale", d.effect_scale);
  s.dispersion_shape = j.value("dispersion_shape", d.dispersion_shape);
  s.dispersion_rate = j.value("dispersion_rate", d.dispersion_rate);
  s.taus = j.contains("taus") && !j["taus"].is_null() ? std::optional<ChangePoints>(j["taus"].get<ChangePoints>())
                                                     : std::nullopt;
  s.sample_taus = j.value("sample_taus", d.sample_taus);
  s.tau_step = j.value("tau_step", d.tau_step);
}

json merged(json base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) return patch;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    base[it.key()] = base.contains(it.key()) ? merged(base[it.key()], it.value()) : it.value();
  }
  return base;
}

}  // namespace tunedemand
