// aps: command-line front end for simulations, survey analysis, one-shot
// batch planning and the HTTP service.
//
// Exit codes: 0 success, 1 invalid input, 2 missing or unreadable input file.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aps/error.hpp"
#include "aps/log.hpp"
#include "aps/service.hpp"
#include "aps/simulator.hpp"
#include "aps/survey.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kInvalidInput = 1;
constexpr int kMissingFile = 2;

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw aps::InvalidInput(std::string("'") + path + "' is not valid JSON: " + e.what(), "config");
  }
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

aps::ApiServer* running_server = nullptr;

void on_signal(int) {
  if (running_server) running_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive sampling for estimating many pmfs uniformly well"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::optional<std::int64_t> batch_size;

  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment and write report.json and report.csv");
  simulate->add_option("--config", config, "Experiment config (JSON)")->required();
  simulate->add_option("--out", out, "Output directory")->capture_default_str();
  simulate->add_option("--seed", seed, "Override the config seed");
  simulate->add_option("--workers", workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  std::optional<std::int64_t> replications;
  simulate->add_option("--replications", replications, "Override the replication count")->check(CLI::PositiveNumber);

  std::string survey_csv;
  std::optional<double> theta_overall;
  std::vector<double> theta;
  std::optional<std::int64_t> survey_reps;
  std::optional<std::int64_t> budget;
  auto* analyze = app.add_subcommand("analyze-survey", "Compare actual, oracle, constrained and adaptive allocations");
  analyze->add_option("survey", survey_csv, "Survey CSV: category,weight,samples,positives[,theta]")->required();
  analyze->add_option("--config", config, "Optional JSON with batch, replications, seed, theta, theta_overall, budget");
  analyze->add_option("--out", out, "Output directory")->capture_default_str();
  analyze->add_option("--seed", seed, "Replay seed");
  analyze->add_option("--workers", workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  analyze->add_option("--batch-size", batch_size, "Batch size B of the adaptive replay (default 100)")->check(CLI::PositiveNumber);
  analyze->add_option("--replications", survey_reps, "Replay replications (default 200)")->check(CLI::PositiveNumber);
  analyze->add_option("--theta", theta, "Per-category targets, one per category");
  analyze->add_option("--theta-overall", theta_overall, "Overall target")->check(CLI::PositiveNumber);
  analyze->add_option("--budget", budget, "Budget N (default: total collected)")->check(CLI::PositiveNumber);

  auto* plan = app.add_subcommand("plan-batch", "Recommend the next batch from a session snapshot");
  plan->add_option("--config", config, "Session snapshot (JSON, as returned by GET /sessions/{id})")->required();
  plan->add_option("--batch-size", batch_size, "Batch size B")->required()->check(CLI::PositiveNumber);
  plan->add_option("--out", out, "Output file (default: stdout)");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> journal;
  std::optional<std::string> token;
  auto* serve = app.add_subcommand("serve", "Start the HTTP/JSON service");
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--journal", journal, "Append-only journal file; replayed on startup");
  serve->add_option("--token", token, "Static bearer token required on every route except /healthz")->envname("APS_TOKEN");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      auto cfg = aps::experiment_config_from_json(read_json(config));
      if (seed) cfg.seed = *seed;
      if (replications) cfg.replications = *replications;
      cfg.workers = workers;
      aps::log::info("simulating " + std::to_string(cfg.replications) + " replications, N = " + std::to_string(cfg.budget));
      const auto report = aps::run_experiment(cfg);
      const fs::path dir(out);
      open_out(dir / "report.json") << aps::to_json(report).dump(2) << '\n';
      auto csv = open_out(dir / "report.csv");
      aps::write_csv(csv, report);
      std::cout << "wrote " << (dir / "report.json").string() << " and " << (dir / "report.csv").string() << '\n';
    } else if (*analyze) {
      if (!fs::exists(survey_csv)) throw MissingFile("cannot read '" + survey_csv + "'");
      const auto ds = aps::ingest(survey_csv);
      aps::CompareOptions opts;
      if (!config.empty()) {
        const auto j = read_json(config);
        opts.batch = j.value("batch", opts.batch);
        opts.replications = j.value("replications", opts.replications);
        opts.seed = j.value("seed", opts.seed);
        if (j.contains("theta")) opts.theta = j.at("theta").get<std::vector<double>>();
        if (j.contains("theta_overall")) opts.theta_overall = j.at("theta_overall").get<double>();
        if (j.contains("budget")) opts.budget = j.at("budget").get<std::int64_t>();
      }
      if (batch_size) opts.batch = *batch_size;
      if (survey_reps) opts.replications = *survey_reps;
      if (seed) opts.seed = *seed;
      if (!theta.empty()) opts.theta = theta;
      if (theta_overall) opts.theta_overall = *theta_overall;
      if (budget) opts.budget = *budget;
      opts.workers = workers;
      const auto cmp = aps::compare_allocations(ds, opts);
      const fs::path dir(out);
      open_out(dir / "comparison.json") << aps::to_json(cmp).dump(2) << '\n';
      auto csv = open_out(dir / "comparison.csv");
      aps::write_csv(csv, cmp);
      if (!cmp.feasible) {
        std::cerr << "warning: targets are infeasible with N = " << cmp.budget << " (lambda* = " << cmp.lambda << ")\n";
      }
      std::cout << "wrote " << (dir / "comparison.json").string() << " and " << (dir / "comparison.csv").string() << '\n';
    } else if (*plan) {
      const auto snap = read_json(config);
      const auto session = aps::Session::restore(snap);
      const auto rec = session->recommend(*batch_size);
      if (plan->count("--out")) {
        open_out(fs::path(out)) << rec.dump(2) << '\n';
      } else {
        std::cout << rec.dump(2) << '\n';
      }
    } else if (*serve) {
      aps::SessionStore store(journal);
      aps::ApiServer server(store, token);
      running_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ':' << port << std::endl;
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ':' << port << '\n';
        return kInvalidInput;
      }
    }
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingFile;
  } catch (const aps::InvalidInput& e) {
    std::cerr << "error: " << e.what();
    if (!e.field().empty()) std::cerr << " (field: " << e.field() << ")";
    std::cerr << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
  return 0;
}
