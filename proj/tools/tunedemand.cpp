#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tunedemand/error.hpp"
#include "tunedemand/io/ingest.hpp"
#include "tunedemand/io/json_codec.hpp"
#include "tunedemand/io/operations.hpp"
#include "tunedemand/io/report_svg.hpp"
#include "tunedemand/io/scenario.hpp"
#include "tunedemand/io/service.hpp"
#include "tunedemand/io/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tunedemand;
using namespace tunedemand::io;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) { return json::parse(read_file(path)); }

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

std::string plan_csv(const json& plan) {
  std::ostringstream out;
  out << "week,segment,channel,spend\n";
  const auto& spend = plan.at("spend");
  for (std::size_t t = 0; t < spend.size(); ++t)
    for (std::size_t j = 0; j < spend[t].size(); ++j)
      for (std::size_t c = 0; c < spend[t][j].size(); ++c) out << t << ',' << j << ',' << c << ',' << spend[t][j][c].dump() << '\n';
  return out.str();
}

struct Globals {
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string store = "tunedemand-store";
  std::string config;
  std::string format = "json";
  std::string output;
};

// Request = --config file, then flags on top.
json request_from(const Globals& g, json flags) {
  json request = g.config.empty() ? json::object() : read_json(g.config);
  if (!request.is_object()) throw ValidationError("--config must hold a JSON object");
  request = merged(request, flags);
  if (g.seed_set || !request.contains("seed")) request["seed"] = g.seed;
  return request;
}

void emit(const Globals& g, const json& doc) { write_out(g.output, doc.dump(2) + "\n"); }

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("'" + text + "' is not a comma-separated list of numbers");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming demand modeling, change-point envelopes and budget planning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--store", g.store, "Project store directory")->envname("TUNEDEMAND_STORE");
  app.add_option("--config", g.config, "JSON file with request fields");
  app.add_option("--output-format", g.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("-o,--output", g.output, "Output file (default stdout)");

  std::string scenario;
  auto* simulate = app.add_subcommand("simulate", "Synthetic curves from a scenario file");
  simulate->add_option("--scenario", scenario, "Scenario JSON")->required();

  std::string input, mapping;
  bool replace = false;
  auto* ingest = app.add_subcommand("ingest", "Load a CSV of weekly stream counts");
  ingest->add_option("input", input, "CSV file")->required();
  ingest->add_option("--mapping", mapping, "JSON column mapping");
  ingest->add_flag("--replace", replace, "Overwrite songs already stored");

  std::string song, stratum, family;
  int chains = 0, warmup = 0, draws = 0;
  auto* fit_null = app.add_subcommand("fit-null", "Bayesian null model");
  fit_null->add_option("--song", song)->required();
  fit_null->add_option("--chains", chains);
  fit_null->add_option("--warmup", warmup);
  fit_null->add_option("--draws", draws);

  auto* fit_adsr = app.add_subcommand("fit-adsr", "Change points and the partite envelope fit");
  fit_adsr->add_option("--song", song)->required();
  fit_adsr->add_option("--stratum", stratum);
  fit_adsr->add_option("--family", family)->check(CLI::IsMember({"negbin", "least_squares"}));

  bool sample_taus = false;
  auto* fit_forced = app.add_subcommand("fit-forced", "Bayesian forced model");
  fit_forced->add_option("--song", song)->required();
  fit_forced->add_option("--chains", chains);
  fit_forced->add_option("--warmup", warmup);
  fit_forced->add_option("--draws", draws);
  fit_forced->add_flag("--sample-taus", sample_taus);

  std::size_t k = 0;
  bool z_normalize = false;
  auto* classify = app.add_subcommand("classify", "DTW k-means over stored songs");
  classify->add_option("--k", k);
  classify->add_flag("--z-normalize", z_normalize);

  std::string fit_id, scheme = "null", weekly, policy_file;
  double budget = -1.0, social_cap = 0.0;
  std::size_t weeks = 0;
  bool whatif = false;
  auto* optimize = app.add_subcommand("optimize", "Plan spend over the horizon");
  optimize->add_option("--fit", fit_id)->required();
  optimize->add_option("--scheme", scheme)->check(CLI::IsMember({"null", "forced"}));
  optimize->add_option("--weekly", weekly, "Comma-separated weekly budgets");
  optimize->add_option("--budget", budget, "Total budget split evenly over --weeks");
  optimize->add_option("--weeks", weeks);
  optimize->add_option("--social-cap", social_cap);
  optimize->add_option("--policy", policy_file, "BudgetPolicy JSON");
  optimize->add_flag("--whatif", whatif, "Also report predictive quantiles against zero spend");

  ServiceConfig service = ServiceConfig{};
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API");
  serve_cmd->add_option("--host", service.host)->envname("TUNEDEMAND_HOST");
  serve_cmd->add_option("--port", service.port)->envname("TUNEDEMAND_PORT");

  std::string out_dir = "reports";
  std::vector<std::string> report_songs;
  auto* report = app.add_subcommand("report", "Per-song control chart and envelope SVG");
  report->add_option("--song", report_songs, "Songs (default: all)");
  report->add_option("--fit", fit_id, "adsr fit to overlay (default: fit one)");
  report->add_option("--out-dir", out_dir);

  auto* export_cmd = app.add_subcommand("export", "Stored song as CSV");
  export_cmd->add_option("--song", song)->required();

  std::string source;
  auto* replay_cmd = app.add_subcommand("replay", "Rebuild the store from another store's run log");
  replay_cmd->add_option("--from", source)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (simulate->parsed()) {
      const auto doc = read_json(scenario);
      if (g.format == "csv") {
        write_out(g.output, simulate_scenario_csv(doc, g.seed));
      } else {
        json songs = json::array();
        for (const auto& s : simulate_scenario(doc, g.seed)) songs.push_back(song_to_json(s));
        emit(g, {{"songs", songs}});
      }
      return 0;
    }
    if (serve_cmd->parsed()) {
      service.store = g.store;
      return serve(service);
    }

    ProjectStore store(g.store);
    if (ingest->parsed()) {
      json flags{{"csv", read_file(input)}, {"replace", replace}};
      if (!mapping.empty()) flags["mapping"] = read_json(mapping);
      auto request = request_from(g, flags);
      request.erase("seed");
      emit(g, ingest_op(store, request));
    } else if (fit_null->parsed() || fit_forced->parsed()) {
      json flags{{"song_id", song}};
      if (chains) flags["mcmc"]["chains"] = chains;
      if (warmup) flags["mcmc"]["warmup"] = warmup;
      if (draws) flags["mcmc"]["draws"] = draws;
      if (sample_taus) flags["sample_taus"] = true;
      const auto request = request_from(g, flags);
      const auto doc = fit_null->parsed() ? fit_null_op(store, request) : fit_forced_op(store, request);
      for (const auto& w : doc["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
      emit(g, doc);
    } else if (fit_adsr->parsed()) {
      json flags{{"song_id", song}};
      if (!stratum.empty()) flags["stratum"] = stratum;
      if (!family.empty()) flags["family"] = family;
      const auto doc = fit_adsr_op(store, request_from(g, flags));
      if (g.format == "csv") {
        const auto& e = doc["envelope"];
        write_out(g.output, "fit_id,tau_A,tau_S,tau_D,tau_R\n" + doc["id"].get<std::string>() + "," + e["tau_A"].dump() + "," +
                                e["tau_S"].dump() + "," + e["tau_D"].dump() + "," + e["tau_R"].dump() + "\n");
      } else {
        emit(g, doc);
      }
    } else if (classify->parsed()) {
      json flags = json::object();
      if (k) flags["k"] = k;
      if (z_normalize) flags["z_normalize"] = true;
      emit(g, classify_op(store, request_from(g, flags)));
    } else if (optimize->parsed()) {
      json flags{{"fit_id", fit_id}, {"scheme", scheme}};
      if (!policy_file.empty()) {
        flags["policy"] = read_json(policy_file);
      } else if (!weekly.empty()) {
        flags["policy"] = {{"weekly", parse_list(weekly)}, {"social_cap", social_cap}};
      } else if (budget >= 0.0) {
        if (weeks == 0) throw ValidationError("--budget needs --weeks");
        flags["policy"] = {{"weekly", std::vector<double>(weeks, budget / static_cast<double>(weeks))}, {"social_cap", social_cap}};
      }
      auto request = request_from(g, flags);
      if (!request.contains("policy")) throw ValidationError("optimize needs --weekly, --budget or --policy");
      const auto doc = whatif ? whatif_op(store, request) : optimize_op(store, request);
      const auto& plan = doc["plan"];
      for (const auto& w : plan["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
      if (g.format == "csv") {
        write_out(g.output, plan_csv(plan));
      } else {
        emit(g, doc);
      }
    } else if (report->parsed()) {
      if (report_songs.empty()) report_songs = store.list("songs");
      json written = json::array();
      for (const auto& id : report_songs) {
        SongReport r;
        r.title = id;
        r.observed = song_from_json(store.get("songs", id)).aggregate().values;
        try {
          const auto chart = control_chart_op(store, id);
          ControlChart c;
          c.mean = chart["mean"].get<std::vector<double>>();
          c.lower = chart["lower"].get<std::vector<double>>();
          c.upper = chart["upper"].get<std::vector<double>>();
          c.level = chart["level"].get<double>();
          r.chart = c;
        } catch (const std::exception& e) {
          std::cerr << "warning: " << id << ": no control chart (" << e.what() << ")\n";
        }
        try {
          json fit = !fit_id.empty() ? store.get("fits", fit_id) : fit_adsr_op(store, {{"song_id", id}, {"seed", g.seed}});
          if (fit["song_id"] == id && fit["kind"] == "adsr") r.envelope = fit["envelope"].get<EnvelopeFit>();
        } catch (const FitError& e) {
          std::cerr << "warning: " << id << ": no envelope (" << e.what() << ")\n";
        }
        const auto path = (fs::path(out_dir) / (id + ".svg")).string();
        write_out(path, render_song_svg(r));
        written.push_back(path);
      }
      emit(g, {{"reports", written}});
    } else if (export_cmd->parsed()) {
      write_out(g.output, export_song_op(store, song));
    } else if (replay_cmd->parsed()) {
      ProjectStore from(source);
      replay(from, store);
      emit(g, {{"replayed", from.read_log().size()}, {"store", g.store}});
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    for (const auto& d : e.details()) std::cerr << "  " << d << '\n';
    return 1;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "invalid JSON: " << e.what() << '\n';
    return 1;
  } catch (const NotFoundError& e) {
    std::cerr << "not found: " << e.what() << '\n';
    return 1;
  } catch (const ConflictError& e) {
    std::cerr << "conflict: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
