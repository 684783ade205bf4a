#include "hardylab/cli.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace hl = hardylab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Multipolar Hardy inequality experiments"};
  app.set_version_flag("--version", std::string(hl::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  hl::Overrides ov;
  std::string seed_text;
  double tol = 0.0;
  std::size_t max_nodes = 0;
  bool parallel = false;
  std::string out, h_list, rho, domain, potential;

  for (const auto& [kind, name] : hl::kTaskNames) {
    CLI::App* task = app.add_subcommand(std::string(name), "run " + std::string(name) + " tasks");
    task->require_subcommand(1);
    CLI::App* run = task->add_subcommand("run", "execute the tasks of a config file");
    run->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    run->add_option("--tol", tol, "relative quadrature tolerance");
    run->add_option("--seed", seed_text, "random seed (decimal or 0x hex)");
    run->add_option("--max-nodes", max_nodes, "quadrature node budget");
    run->add_flag("--parallel", parallel, "run independent tasks concurrently");
    run->add_option("--out", out, "output directory");
    if (kind == hl::TaskKind::Eigen) {
      run->add_option("--h-list", h_list, "comma-separated grid spacings");
      run->add_option("--rho", rho, "regularization radius: a length, or a multiple of h such as 2h");
      run->add_option("--domain", domain, "grid domain as JSON or unit_cube");
    }
    if (kind == hl::TaskKind::Eigen || kind == hl::TaskKind::Potential)
      run->add_option("--potential", potential, "potential family name or JSON");
  }

  CLI11_PARSE(app, argc, argv);

  std::optional<hl::TaskKind> kind;
  for (const auto& [k, name] : hl::kTaskNames)
    if (app.got_subcommand(std::string(name))) kind = k;
  const CLI::App* run = app.get_subcommand(std::string(hl::to_string(*kind)))->get_subcommand("run");

  if (run->count("--tol")) ov.tol = tol;
  if (run->count("--max-nodes")) ov.max_nodes = max_nodes;
  if (run->count("--parallel")) ov.parallel = parallel;
  if (run->count("--out")) ov.out = out;
  if (!h_list.empty()) ov.h_list = h_list;
  if (!rho.empty()) ov.rho = rho;
  if (!domain.empty()) ov.domain = domain;
  if (!potential.empty()) ov.potential = potential;

  try {
    if (!seed_text.empty()) ov.seed = std::stoull(seed_text, nullptr, 0);
    std::ifstream f(config_path);
    std::stringstream buf;
    buf << f.rdbuf();
    const hl::RunConfig rc = hl::validate_config(buf.str(), kind, ov);
    const auto manifest = hl::run(rc);
    std::cout << hl::emit_report(manifest);
    return manifest.at("summary").at("pass").get<bool>() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "hardylab: " << e.what() << "\n";
    return 2;
  }
}
