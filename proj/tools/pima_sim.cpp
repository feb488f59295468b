// pima_sim: run campaigns, print the DT-length table, run the oracle checks.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pima/pima.hpp"
#include "support/acceptance.hpp"

namespace fs = std::filesystem;

namespace {

int simulate(const std::string& config, const std::string& protocol, std::optional<std::uint64_t> seed,
             const std::string& out) {
  pima::CampaignConfig cfg = pima::load_config(config);
  if (!protocol.empty()) cfg.protocols = {protocol};
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output = out;
  cfg.validate();

  const auto results = pima::run_campaign(cfg);
  fs::create_directories(cfg.output);
  const fs::path dir(cfg.output);
  std::ofstream res(dir / "results.csv");
  std::ofstream ecc(dir / "eccdf.csv");
  if (!res || !ecc) throw std::runtime_error("cannot write into '" + cfg.output + "'");
  pima::write_results_csv(res, results);
  pima::write_eccdf_csv(ecc, results);
  std::cout << "wrote " << (dir / "results.csv").string() << " and " << (dir / "eccdf.csv").string() << " ("
            << results.size() << " points)\n";
  return 0;
}

int table(std::size_t population, std::size_t nu_max) {
  pima::L2Table(population, nu_max).write_csv(std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIMA multiple-access simulator"};
  app.require_subcommand(1);

  std::string config, protocol, out;
  std::optional<std::uint64_t> seed;
  auto* sim = app.add_subcommand("simulate", "run a campaign and write results.csv and eccdf.csv");
  sim->add_option("--config", config, "campaign JSON file")->required()->check(CLI::ExistingFile);
  sim->add_option("--protocol", protocol, "run only this protocol (pima, tdma, saloha, cra2-full, ...)");
  sim->add_option("--seed", seed, "master seed");
  sim->add_option("--out", out, "output directory (default: config 'output')");

  std::size_t nu_max = 0, population = 50;
  auto* tab = app.add_subcommand("table", "optimal DT length per active count");
  tab->add_option("--nu-max", nu_max, "largest active count")->required()->check(CLI::PositiveNumber);
  tab->add_option("--N", population, "population size")->capture_default_str();

  bool full = false;
  auto* val = app.add_subcommand("validate", "run the oracle checks; nonzero exit on failure");
  val->add_flag("--full", full, "also run the long regression campaigns");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return simulate(config, protocol, seed, out);
    if (*tab) return table(population, nu_max);
    return acceptance::run_all(std::cout, full) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "pima_sim: " << e.what() << '\n';
    return 2;
  }
}
