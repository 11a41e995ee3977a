#include <CLI11.hpp>

#include "rvp/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Radial relativistic Vlasov-Poisson toolkit: steady states, rearrangements, functionals, coercivity, dynamics"};
  app.require_subcommand(1);
  rvp::cli::RunOptions opt;
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> help = {
      {"steady-state", "build the steady state and archive its tables"},
      {"rearrange", "rearrangement pipeline demo and equimeasurability trials"},
      {"functionals", "energy, J, subcritical and stability-gap reports"},
      {"coercivity", "Rayleigh quotient minimization with refinement trace"},
      {"evolve", "particle evolution from the steady state"},
      {"stability", "perturbation ladder of the stability experiment"},
      {"verify", "acceptance suite on the golden state"}};
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", opt.config_path, "YAML or JSON config file (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", opt.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--verbose", opt.verbose, "progress on stderr");
    sub->callback([&, sub, name = name] {
      opt.subcommand = name;
      if (sub->count("--seed")) opt.seed = seed;
    });
  }
  CLI11_PARSE(app, argc, argv);
  return rvp::cli::run(opt);
}
