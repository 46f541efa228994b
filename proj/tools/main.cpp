// Apache License, Version 2.0, refer to LICENSE.txt
#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "circssm/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"circssm: circular-latent Gaussian process state-space modeling"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  std::optional<int> chains_override;

  for (const std::string name :
       {"simulate", "mle", "fit", "forecast", "diagnose", "validate-gp"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "path to the run configuration file");
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--out", out_override, "override the output directory");
    sub->add_option("--chains", chains_override, "override the number of chains (fit)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    circssm::RunConfig cfg =
        config_path.empty() ? circssm::parse_config_text("seed=1\n")
                            : circssm::parse_config_file(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    if (chains_override) cfg.chains = *chains_override;
    return circssm::dispatch(command, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
