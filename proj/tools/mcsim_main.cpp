#include <iostream>

#include "CLI11.hpp"
#include "mcsim/commands.hpp"

using namespace mcsim;

int main(int argc, char** argv) {
  CLI::App app{"Multi-chip coherence simulator: Rainbow token coherence and an HTA-style baseline"};
  app.require_subcommand(1);

  cli::SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run one trace under one protocol");
  s->add_option("--config", sim.config, "machine config file (defaults when omitted)");
  s->add_option("--protocol", sim.protocol, "rainbow or hta")->check(CLI::IsMember({"rainbow", "hta"}));
  s->add_option("--trace", sim.trace, "trace file")->required();
  s->add_option("--out", sim.out, "output directory");

  cli::SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "run both protocols across L/M/S tracking sizes");
  w->add_option("--config", sw.config, "machine config file");
  w->add_option("--trace", sw.trace, "trace file")->required();
  w->add_option("--sizes", sw.sizes, "comma-separated subset of L,M,S");
  w->add_option("--out", sw.out, "output directory");
  w->add_option("--jobs", sw.jobs, "parallel legs (0 = one per hardware thread)");

  cli::CheckArgs ck;
  std::string fault = "none";
  auto* c = app.add_subcommand("check", "exhaustively explore a tiny system");
  c->add_option("--chips", ck.bounds.chips, "chips (1-2)");
  c->add_option("--cores", ck.bounds.cores, "cores per chip (1-2)");
  c->add_option("--blocks", ck.bounds.blocks, "distinct blocks (1-2)");
  c->add_option("--budget", ck.bounds.budget, "memory operations issued in total (0-8)");
  c->add_option("--protocol", ck.bounds.protocol, "rainbow or hta")->check(CLI::IsMember({"rainbow", "hta"}));
  c->add_option("--max-states", ck.bounds.max_states, "state cap before giving up");
  c->add_option("--dir-entries", ck.bounds.dir_entries, "directory entries in the first pass");
  c->add_option("--pressure-budget", ck.bounds.pressure_budget, "op budget of the 1-entry pass (default: --budget)");
  c->add_option("--fault", fault, "seeded bug to inject");
  c->add_option("--out", ck.out, "directory for the replay file");

  cli::ReplayArgs rp;
  auto* r = app.add_subcommand("replay", "re-run a replay file written by check");
  r->add_option("file", rp.file, "replay file")->required();

  cli::GenerateArgs gen;
  std::string pattern = "private";
  auto* g = app.add_subcommand("generate", "write a synthetic trace");
  g->add_option("--config", gen.config, "machine config file (for the core count)");
  g->add_option("--pattern", pattern, "private, shared-uniform, producer-consumer or migratory");
  g->add_option("--footprint", gen.spec.footprint_blocks, "blocks per region");
  g->add_option("--ops-per-core", gen.spec.ops_per_core, "records per core");
  g->add_option("--shared-fraction", gen.spec.shared_fraction, "fraction of accesses to shared data");
  g->add_option("--write-fraction", gen.spec.write_fraction, "fraction of writes");
  g->add_option("--seed", gen.spec.seed, "generator seed");
  g->add_option("--out", gen.out, "trace file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInputError;
  }

  try {
    if (*s) return cli::cmd_simulate(sim, std::cout, std::cerr);
    if (*w) return cli::cmd_sweep(sw, std::cout, std::cerr);
    if (*c) {
      ck.bounds.fault = fault_from_string(fault);
      return cli::cmd_check(ck, std::cout, std::cerr);
    }
    if (*r) return cli::cmd_replay(rp, std::cout, std::cerr);
    if (*g) {
      gen.spec.pattern = pattern_from_string(pattern);
      return cli::cmd_generate(gen, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kInputError;
  }
  return cli::kInputError;
}
