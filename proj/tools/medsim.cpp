#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "medsim/error.hpp"
#include "medsim/run.hpp"
#include "medsim/service.hpp"

using namespace medsim;

namespace {

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

RunConfig config_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                const std::string& out) {
  auto cfg = load_run_config(path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out = out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated-patient consultations and their evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out", out, "Override the output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Run doctor/patient consultations");
  add_common(simulate);
  auto* evaluate = app.add_subcommand("evaluate", "Judge transcripts and write the report");
  add_common(evaluate);
  auto* report = app.add_subcommand("report", "Rebuild the report from persisted results");
  add_common(report);
  auto* ingest = app.add_subcommand("ingest", "Turn raw ED records into patient profiles");
  add_common(ingest);

  auto* serve = app.add_subcommand("serve", "Serve the practice and annotation API");
  add_common(serve);
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  auto* agree = app.add_subcommand("agree", "Gwet AC1/AC2 over a ratings CSV");
  std::string ratings;
  int categories = 4;
  int n_boot = kDefaultBootstrap;
  std::uint64_t agree_seed = kDefaultSeed;
  agree->add_option("ratings", ratings, "item_id,rater_id,rating CSV")->required()->check(CLI::ExistingFile);
  agree->add_option("--categories", categories, "Number of rating categories");
  agree->add_option("--bootstrap", n_boot, "Bootstrap resamples");
  agree->add_option("--seed", agree_seed, "Bootstrap seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the configuration exit code; --help exits 0.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (agree->parsed()) {
      std::cout << cmd_agree(ratings, categories, n_boot, agree_seed).dump(2) << "\n";
      return 0;
    }
    const auto cfg = config_with_overrides(config_path, seed, out);
    if (simulate->parsed()) {
      auto r = cmd_simulate(cfg);
      std::cout << "planned " << r.planned << ", ran " << r.completed << ", skipped " << r.skipped << ", aborted "
                << r.aborted << "\n";
      return r.aborted > 0 ? 3 : 0;
    }
    if (evaluate->parsed()) {
      auto r = cmd_evaluate(cfg);
      std::cout << "evaluated " << r.evaluated << " sessions (" << r.failed << " with failed steps), "
                << r.judge_calls << " judge calls; report at " << RunLayout{cfg.out}.report().string() << "\n";
      return r.failed > 0 ? 3 : 0;
    }
    if (report->parsed()) {
      cmd_report(cfg);
      std::cout << "report at " << RunLayout{cfg.out}.report().string() << "\n";
      return 0;
    }
    if (ingest->parsed()) {
      auto r = cmd_ingest(cfg);
      std::cout << r.records << " records: " << r.accepted << " accepted, " << r.rejected << " rejected\n";
      return 0;
    }
    Service svc(cfg, make_client(cfg.patient));
    g_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << host << ":" << port << "\n" << std::flush;
    if (!svc.listen(host, port)) {
      std::cerr << "could not bind " << host << ":" << port << "\n";
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
