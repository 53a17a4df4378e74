#include "tunedemand/io/operations.hpp"

#include <algorithm>
#include <cmath>

#include "tunedemand/bayes.hpp"
#include "tunedemand/clustering.hpp"
#include "tunedemand/envelope.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/estimation.hpp"
#include "tunedemand/forced_bayes.hpp"
#include "tunedemand/io/dates.hpp"
#include "tunedemand/io/draws_io.hpp"
#include "tunedemand/io/json_codec.hpp"
#include "tunedemand/optimizer.hpp"

namespace tunedemand::io {
namespace {

const std::vector<double> kDefaultLevels{0.05, 0.5, 0.95};

void log_op(ProjectStore& store, const std::string& op, const json& request) {
  store.append_log({{"op", op}, {"request", request}, {"config_hash", fnv1a_hex(request.dump())}});
}

std::uint64_t seed_of(const json& request) { return request.value("seed", std::uint64_t{1}); }

McmcConfig mcmc_of(const json& request) {
  McmcConfig c = request.value("mcmc", json::object()).get<McmcConfig>();
  c.seed = seed_of(request);
  return c;
}

std::string song_id_of(const json& request) {
  if (!request.contains("song_id") || !request["song_id"].is_string()) throw ValidationError("request needs a song_id");
  return request["song_id"].get<std::string>();
}

json summarize_columns(const std::vector<std::string>& names, const std::vector<Eigen::MatrixXd>& chains,
                       const std::vector<double>& rhat, const std::vector<double>& ess) {
  json out = json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<double> v;
    for (const auto& c : chains)
      for (Eigen::Index i = 0; i < c.rows(); ++i) v.push_back(c(i, static_cast<Eigen::Index>(k)));
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    auto q = [&](double p) {
      auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
      return v[std::clamp<std::size_t>(i, 1, v.size()) - 1];
    };
    out[names[k]] = {{"mean", mean},
                     {"sd", v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0},
                     {"q05", q(0.05)},
                     {"q50", q(0.5)},
                     {"q95", q(0.95)},
                     {"rhat", rhat[k]},
                     {"ess", ess[k]}};
  }
  return out;
}

DemandCurve curve_for(const SongData& song, const json& request) {
  if (!request.contains("stratum") || request["stratum"].is_null()) return song.aggregate();
  const auto name = request["stratum"].get<std::string>();
  auto it = std::find(song.strata.begin(), song.strata.end(), name);
  if (it == song.strata.end()) throw NotFoundError("song has no stratum '" + name + "'");
  return song.curves[static_cast<std::size_t>(it - song.strata.begin())];
}

PosteriorDraws load_null_draws(const ProjectStore& store, const json& fit) {
  auto table = read_draws(store.draws_dir(fit.at("id").get<std::string>()));
  PosteriorDraws draws;
  draws.spec = fit.at("spec").get<NullModelSpec>();
  draws.config = fit.at("mcmc").get<McmcConfig>();
  draws.names = std::move(table.names);
  draws.chains = std::move(table.chains);
  return draws;
}

// Proposed covariates: the request's path or the song's, cut to the policy horizon.
CovariatePath planning_path(const SongData& song, const json& request, std::size_t weeks) {
  CovariatePath path = request.contains("covariates") ? request["covariates"].get<CovariatePath>() : song.covariates;
  if (path.horizon() < weeks) throw ValidationError("covariate path is shorter than the budget policy");
  if (path.channels() != song.covariates.channels() || path.ambient() != song.covariates.ambient()) {
    throw ValidationError("covariate path does not match the song's channels and ambient signals");
  }
  return CovariatePath(path.endogenous.topRows(static_cast<Eigen::Index>(weeks)),
                       path.exogenous.topRows(static_cast<Eigen::Index>(weeks)));
}

std::vector<double> sizes_of(const json& request, std::size_t segments) {
  auto sizes = request.value("sizes", std::vector<double>(segments, 1.0));
  if (sizes.size() != segments) throw ValidationError("need one size per segment");
  return sizes;
}

struct PlanInputs {
  std::vector<WeekState> states;
  std::optional<ChangePoints> taus;
  CovariatePath path;
};

PlanInputs plan_inputs(const ProjectStore& store, const json& fit, const SongData& song, const json& request,
                       std::size_t weeks) {
  PlanInputs in;
  in.path = planning_path(song, request, weeks);
  const auto kind = fit.at("kind").get<std::string>();
  const auto C = static_cast<Eigen::Index>(song.covariates.channels());
  if (kind == "null") {
    const auto means = load_null_draws(store, fit).posterior_mean();
    const auto J = means.theta.size();
    const auto sizes = sizes_of(request, J);
    for (std::size_t t = 0; t < weeks; ++t) {
      WeekState w;
      for (std::size_t j = 0; j < J; ++j) w.push_back({means.theta[j].head(C), means.gamma[j], in.path.z(t), sizes[j]});
      in.states.push_back(std::move(w));
    }
  } else {
    std::vector<EnvelopeFit> fits;
    if (kind == "adsr") {
      fits.push_back(fit.at("envelope").get<EnvelopeFit>());
    } else {
      for (const auto& f : fit.at("mean_fits")) fits.push_back(f.get<EnvelopeFit>());
    }
    const auto sizes = sizes_of(request, fits.size());
    in.taus = fits.front().taus;
    for (std::size_t t = 0; t < weeks; ++t) {
      WeekState w;
      for (std::size_t j = 0; j < fits.size(); ++j) {
        const auto& e = fits[j].effects[static_cast<int>(phase_of(t, fits[j].taus))];
        w.push_back({e.theta, e.gamma, in.path.z(t), sizes[j]});
      }
      in.states.push_back(std::move(w));
    }
  }
  return in;
}

Scheme scheme_of(const json& request) {
  const auto s = request.value("scheme", "null");
  if (s == "null") return Scheme::Null;
  if (s == "forced") return Scheme::Forced;
  throw ValidationError("scheme must be 'null' or 'forced'");
}

// Planned spend as per-segment covariate paths, clipped into [0, 1].
std::vector<CovariatePath> spend_paths(const AllocationPath& plan, const CovariatePath& base, std::size_t segments) {
  std::vector<CovariatePath> out;
  for (std::size_t j = 0; j < segments; ++j) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(base.endogenous.rows(), base.endogenous.cols());
    for (std::size_t t = 0; t < plan.spend.size(); ++t) {
      if (plan.spend[t][j].size() == x.cols()) x.row(static_cast<Eigen::Index>(t)) = plan.spend[t][j].cwiseMin(1.0).transpose();
    }
    out.emplace_back(std::move(x), base.exogenous);
  }
  return out;
}

json envelope_quantiles(const std::vector<EnvelopeFit>& fits, const std::vector<CovariatePath>& paths,
                        const std::vector<double>& levels) {
  PredictiveQuantiles q;
  q.levels = levels;
  const auto T = paths.front().horizon();
  q.aggregate_mean.assign(T, 0.0);
  for (std::size_t j = 0; j < fits.size(); ++j) {
    const auto mean = envelope_prediction(fits[j], paths[j]);
    std::vector<std::vector<double>> curves(levels.size(), std::vector<double>(T));
    for (std::size_t l = 0; l < levels.size(); ++l)
      for (std::size_t t = 0; t < T; ++t) {
        curves[l][t] = static_cast<double>(fits[j].dispersion ? negbin_quantile(mean[t], *fits[j].dispersion, levels[l])
                                                              : poisson_quantile(mean[t], levels[l]));
      }
    for (std::size_t t = 0; t < T; ++t) q.aggregate_mean[t] += mean[t];
    q.segments.push_back(std::move(curves));
  }
  // Sums of per-segment quantiles are not quantiles of the sum; one segment is exact.
  q.aggregate = q.segments.size() == 1 ? q.segments.front() : std::vector<std::vector<double>>{};
  return q;
}

std::vector<EnvelopeFit> envelope_fits(const json& fit) {
  std::vector<EnvelopeFit> fits;
  if (fit.at("kind") == "adsr") {
    fits.push_back(fit.at("envelope").get<EnvelopeFit>());
  } else {
    for (const auto& f : fit.at("mean_fits")) fits.push_back(f.get<EnvelopeFit>());
  }
  return fits;
}

json quantiles_for(const ProjectStore& store, const json& fit, const std::vector<CovariatePath>& paths,
                   const std::vector<double>& levels, std::uint64_t seed) {
  if (fit.at("kind") == "null") {
    const auto draws = load_null_draws(store, fit);
    Rng rng(seed);
    return posterior_predictive(draws, paths, levels, rng);
  }
  return envelope_quantiles(envelope_fits(fit), paths, levels);
}

void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw ValidationError("need at least one quantile level");
  for (double q : levels)
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("quantile levels must lie in (0, 1)");
}

}  // namespace

json song_to_json(const SongData& song) {
  json curves = json::array();
  for (const auto& c : song.curves) curves.push_back(c.values);
  json doc{{"song_id", song.song_id},
           {"artist_id", song.artist_id},
           {"release_date", format_date(song.release)},
           {"strata", song.strata},
           {"curves", curves},
           {"covariates", song.covariates},
           {"endogenous", song.endogenous},
           {"exogenous", song.exogenous}};
  doc["data_hash"] = fnv1a_hex(doc.dump());
  doc["warnings"] = song.warnings;
  return doc;
}

SongData song_from_json(const json& doc) {
  SongData song;
  song.song_id = doc.at("song_id").get<std::string>();
  song.artist_id = doc.value("artist_id", "");
  const auto release = parse_date(doc.at("release_date").get<std::string>());
  if (!release) throw ValidationError("stored release date is not a date");
  song.release = *release;
  song.strata = doc.at("strata").get<std::vector<std::string>>();
  int index = 0;
  for (const auto& values : doc.at("curves")) {
    DemandCurve c;
    c.song_id = song.song_id;
    c.stratum = index++;
    c.values = values.get<std::vector<std::int64_t>>();
    song.curves.push_back(std::move(c));
  }
  song.covariates = doc.at("covariates").get<CovariatePath>();
  song.endogenous = doc.value("endogenous", std::vector<std::string>{});
  song.exogenous = doc.value("exogenous", std::vector<std::string>{});
  song.warnings = doc.value("warnings", std::vector<std::string>{});
  return song;
}

json ingest_op(ProjectStore& store, const json& request) {
  if (!request.contains("csv") || !request["csv"].is_string()) throw ValidationError("ingest needs a 'csv' text field");
  const auto text = request["csv"].get<std::string>();
  const auto mapping = ColumnMapping::from_json(request.value("mapping", json::object()));
  const bool replace = request.value("replace", false);
  const auto report = parse_csv(text, mapping);

  std::vector<json> docs;
  json warnings = json::array();
  for (const auto& records : group_by_song(report.records)) {
    try {
      docs.push_back(song_to_json(translate_to_origin(records, report.endogenous, report.exogenous)));
      for (const auto& w : docs.back()["warnings"]) warnings.push_back(records.front().song_id + ": " + w.get<std::string>());
    } catch (const ValidationError& e) {
      warnings.push_back(records.front().song_id + " skipped: " + e.what());
    }
  }
  {
    auto guard = store.lock_writes();
    for (const auto& d : docs) {
      const auto id = d["song_id"].get<std::string>();
      if (!replace && store.has("songs", id) && store.get("songs", id) != d) {
        throw ConflictError("song '" + id + "' already stored with different data; resend with \"replace\": true");
      }
    }
  }
  const auto input = store.save_input(text);
  json songs = json::array();
  for (const auto& d : docs) {
    store.put("songs", d["song_id"].get<std::string>(), d, /*replace=*/true);
    songs.push_back(d["song_id"]);
  }
  log_op(store, "ingest", {{"input", input}, {"mapping", mapping.to_json()}, {"replace", replace}});
  json rejects = json::array();
  for (const auto& r : report.rejects) rejects.push_back({{"line", r.line}, {"reason", r.reason}});
  return {{"songs", songs}, {"records", report.records.size()}, {"rejects", rejects}, {"warnings", warnings}, {"input", input}};
}

json fit_null_op(ProjectStore& store, const json& request_in) {
  json request = request_in;
  request["seed"] = seed_of(request_in);
  const auto song_doc = store.get("songs", song_id_of(request));
  const auto song = song_from_json(song_doc);
  const auto config = mcmc_of(request);
  request["mcmc"] = config;

  NullModelData data;
  for (const auto& c : song.curves) data.segments.push_back({c, song.covariates});
  NullModelSpec spec = request.contains("spec") ? request["spec"].get<NullModelSpec>()
                                                : NullModelSpec::defaults(song.covariates.channels(),
                                                                          song.covariates.ambient(), {song.curves.size()});
  if (!request.contains("spec")) spec.artists.front().artist_id = song.artist_id;
  const auto draws = fit_null_model(data, spec, config);

  const auto id = "null-" + fnv1a_hex(song_doc["data_hash"].get<std::string>() + request.dump());
  write_draws(store.draws_dir(id), {draws.names, draws.chains});
  json doc{{"id", id},
           {"kind", "null"},
           {"song_id", song.song_id},
           {"data_hash", song_doc["data_hash"]},
           {"seed", config.seed},
           {"request", request},
           {"spec", spec},
           {"mcmc", config},
           {"strata", song.strata},
           {"parameters", summarize_columns(draws.names, draws.chains, draws.rhat, draws.ess)},
           {"max_rhat", draws.max_rhat()},
           {"acceptance", draws.acceptance},
           {"warnings", draws.warnings}};
  store.put("fits", id, doc, /*replace=*/true);
  log_op(store, "fit_null", request);
  return doc;
}

json fit_adsr_op(ProjectStore& store, const json& request_in) {
  json request = request_in;
  request["seed"] = seed_of(request_in);
  const auto song_doc = store.get("songs", song_id_of(request));
  const auto song = song_from_json(song_doc);
  const auto curve = curve_for(song, request);
  ChangePointConfig cp;
  cp.min_phase_weeks = request.value("min_phase_weeks", cp.min_phase_weeks);
  PartiteOptions opts;
  const auto family = request.value("family", "negbin");
  if (family != "negbin" && family != "least_squares") throw ValidationError("family must be 'negbin' or 'least_squares'");
  opts.family = family == "negbin" ? EnvelopeFamily::NegBin : EnvelopeFamily::LeastSquares;
  const auto taus = request.contains("taus") ? request["taus"].get<ChangePoints>() : fit_changepoints(curve, cp);
  const auto fit = fit_partite(curve, taus, song.covariates, opts);

  const auto id = "adsr-" + fnv1a_hex(song_doc["data_hash"].get<std::string>() + request.dump());
  json doc{{"id", id},
           {"kind", "adsr"},
           {"song_id", song.song_id},
           {"data_hash", song_doc["data_hash"]},
           {"seed", request["seed"]},
           {"request", request},
           {"envelope", fit}};
  store.put("fits", id, doc, /*replace=*/true);
  log_op(store, "fit_adsr", request);
  return doc;
}

json fit_forced_op(ProjectStore& store, const json& request_in) {
  json request = request_in;
  request["seed"] = seed_of(request_in);
  const auto song_doc = store.get("songs", song_id_of(request));
  const auto song = song_from_json(song_doc);
  const auto config = mcmc_of(request);
  request["mcmc"] = config;
  ForcedModelSpec spec = request.value("spec", json::object()).get<ForcedModelSpec>();
  spec.sample_taus = request.value("sample_taus", spec.sample_taus);
  if (request.contains("taus")) spec.taus = request["taus"].get<ChangePoints>();
  if (!spec.taus && !spec.sample_taus) spec.taus = fit_changepoints(song.aggregate());
  std::vector<ForcedSeries> data;
  for (const auto& c : song.curves) data.push_back({c, song.covariates});
  const auto post = fit_forced_model_bayes(data, spec, config);

  const auto id = "forced-" + fnv1a_hex(song_doc["data_hash"].get<std::string>() + request.dump());
  write_draws(store.draws_dir(id), {post.names, post.chains});
  json mean_fits = json::array();
  for (std::size_t j = 0; j < post.segments; ++j) {
    auto f = post.mean_fit(j);
    mean_fits.push_back(f);
  }
  json doc{{"id", id},
           {"kind", "forced"},
           {"song_id", song.song_id},
           {"data_hash", song_doc["data_hash"]},
           {"seed", config.seed},
           {"request", request},
           {"spec", spec},
           {"mcmc", config},
           {"strata", song.strata},
           {"tau_mode", post.tau_mode()},
           {"mean_fits", mean_fits},
           {"parameters", summarize_columns(post.names, post.chains, post.rhat, post.ess)},
           {"acceptance", post.acceptance},
           {"warnings", post.warnings}};
  store.put("fits", id, doc, /*replace=*/true);
  log_op(store, "fit_forced", request);
  return doc;
}

json classify_op(ProjectStore& store, const json& request_in) {
  json request = request_in;
  request["seed"] = seed_of(request_in);
  auto ids = request.value("song_ids", store.list("songs"));
  std::sort(ids.begin(), ids.end());
  request["song_ids"] = ids;
  KMeansOptions opts;
  opts.k = request.value("k", opts.k);
  opts.seed = request["seed"].get<std::uint64_t>();
  opts.z_normalize = request.value("z_normalize", false);
  opts.max_iterations = request.value("max_iterations", opts.max_iterations);
  std::vector<Series> curves;
  std::string hashes;
  for (const auto& id : ids) {
    const auto doc = store.get("songs", id);
    hashes += doc["data_hash"].get<std::string>();
    const auto agg = song_from_json(doc).aggregate();
    curves.emplace_back(agg.values.begin(), agg.values.end());
  }
  if (opts.k > curves.size()) throw ValidationError("k exceeds the number of songs");
  const auto result = kmeans_curves(curves, opts);
  json out = result;
  for (auto& c : out["clusters"]) {
    json members = json::array();
    for (const auto& m : c["members"]) members.push_back(ids[m.get<std::size_t>()]);
    c["song_ids"] = members;
  }
  const auto id = "clusters-" + fnv1a_hex(hashes + request.dump());
  json doc{{"id", id}, {"request", request}, {"song_ids", ids}, {"result", out}};
  store.put("clusters", id, doc, /*replace=*/true);
  log_op(store, "classify", request);
  return doc;
}

json optimize_op(ProjectStore& store, const json& request) {
  if (!request.contains("fit_id")) throw ValidationError("optimize needs a fit_id");
  if (!request.contains("policy")) throw ValidationError("optimize needs a budget policy");
  const auto fit = store.get("fits", request["fit_id"].get<std::string>());
  const auto song = song_from_json(store.get("songs", fit.at("song_id").get<std::string>()));
  const auto policy = request["policy"].get<BudgetPolicy>();
  policy.validate();
  const auto scheme = scheme_of(request);
  if (scheme == Scheme::Forced && fit.at("kind") == "null") {
    throw ValidationError("the forced scheme needs an adsr or forced fit");
  }
  const auto in = plan_inputs(store, fit, song, request, policy.weekly.size());
  const auto plan = plan_horizon(policy, in.states, scheme, in.taus);
  const auto id = "plan-" + fnv1a_hex(fit.at("id").get<std::string>() + request.dump());
  json doc{{"id", id}, {"fit_id", fit["id"]}, {"request", request}, {"policy", policy}, {"plan", plan}};
  store.put("plans", id, doc, /*replace=*/true);
  log_op(store, "optimize", request);
  return doc;
}

json whatif_op(const ProjectStore& store, const json& request) {
  if (!request.contains("fit_id")) throw ValidationError("what-if needs a fit_id");
  if (!request.contains("policy")) throw ValidationError("what-if needs a budget policy");
  const auto fit = store.get("fits", request["fit_id"].get<std::string>());
  const auto song = song_from_json(store.get("songs", fit.at("song_id").get<std::string>()));
  const auto policy = request["policy"].get<BudgetPolicy>();
  policy.validate();
  const auto levels = request.value("levels", kDefaultLevels);
  check_levels(levels);
  const auto scheme = scheme_of(request);
  if (scheme == Scheme::Forced && fit.at("kind") == "null") {
    throw ValidationError("the forced scheme needs an adsr or forced fit");
  }
  const auto weeks = policy.weekly.size();
  if (weeks == 0) throw ValidationError("budget policy has no weeks");
  const auto in = plan_inputs(store, fit, song, request, weeks);
  const auto plan = plan_horizon(policy, in.states, scheme, in.taus);
  BudgetPolicy none{std::vector<double>(weeks, 0.0), policy.social_cap};
  const auto baseline = plan_horizon(none, in.states, scheme, in.taus);
  const auto J = in.states.front().size();
  const auto seed = request.value("seed", fit.value("seed", std::uint64_t{1}));
  return {{"plan", plan},
          {"baseline_plan", baseline},
          {"objective_delta", plan.objective - baseline.objective},
          {"predictive", quantiles_for(store, fit, spend_paths(plan, in.path, J), levels, seed)},
          {"baseline", quantiles_for(store, fit, spend_paths(baseline, in.path, J), levels, seed)}};
}

json predictive_op(const ProjectStore& store, const std::string& fit_id, const std::vector<double>& levels) {
  check_levels(levels);
  const auto fit = store.get("fits", fit_id);
  const auto song = song_from_json(store.get("songs", fit.at("song_id").get<std::string>()));
  const auto segments = fit.at("kind") == "adsr" ? std::size_t{1} : song.curves.size();
  std::vector<CovariatePath> paths(segments, song.covariates);
  json out = quantiles_for(store, fit, paths, levels, fit.value("seed", std::uint64_t{1}));
  out["fit_id"] = fit_id;
  return out;
}

json control_chart_op(const ProjectStore& store, const std::string& song_id, double level) {
  const auto song = song_from_json(store.get("songs", song_id));
  const auto fit = fit_count_regression(song.aggregate(), song.covariates, CountFamily::NegBin);
  json out = conditional_demand_chart(fit, song.covariates, level);
  out["fit"] = fit;
  out["observed"] = song.aggregate().values;
  return out;
}

std::string export_song_op(const ProjectStore& store, const std::string& song_id) {
  return export_csv(song_from_json(store.get("songs", song_id)));
}

json apply_logged(ProjectStore& store, const json& entry, const ProjectStore& inputs) {
  const auto op = entry.at("op").get<std::string>();
  const auto& request = entry.at("request");
  if (op == "ingest") {
    json r = request;
    r["csv"] = inputs.load_input(request.at("input").get<std::string>());
    r.erase("input");
    return ingest_op(store, r);
  }
  if (op == "fit_null") return fit_null_op(store, request);
  if (op == "fit_adsr") return fit_adsr_op(store, request);
  if (op == "fit_forced") return fit_forced_op(store, request);
  if (op == "classify") return classify_op(store, request);
  if (op == "optimize") return optimize_op(store, request);
  throw ValidationError("unknown logged operation '" + op + "'");
}

void replay(const ProjectStore& source, ProjectStore& target) {
  for (const auto& entry : source.read_log()) apply_logged(target, entry, source);
}

}  // namespace tunedemand::io
