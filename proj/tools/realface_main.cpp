#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "realface/error.hpp"
#include "realface/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  bool no_bounds = false;
  std::string oracle;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

realface::RunConfig prepare(const Overrides& o) {
  auto config = realface::load_run_config(o.config);
  if (o.no_bounds) config.optimizer = realface::disable_bounds(config.optimizer);
  if (!o.oracle.empty()) config.oracle = realface::parse_oracle_selector(o.oracle, config.oracle);
  if (!o.out.empty()) config.out = o.out;
  if (o.seed) {
    // One seed for everything the run draws; per-attempt seeds derive from it.
    config.seed = *o.seed;
    for (auto& plan : config.attacks) plan.seed = *o.seed;
    config.sweep.seed = *o.seed;
    config.variation.seed = *o.seed;
  }
  if (o.workers) config.workers = *o.workers;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic face-synthesis attacks against black-box face recognition"};
  app.require_subcommand(1);

  Overrides o;
  using Command = int (*)(const realface::RunConfig&, std::ostream&);
  Command chosen = nullptr;

  const std::pair<const char*, std::pair<const char*, Command>> commands[] = {
      {"fit", {"Fit the semantic basis and write model.json", realface::cmd_fit}},
      {"attack", {"Run the configured attack campaigns", realface::cmd_attack}},
      {"sweep", {"Break-in success versus gallery size", realface::cmd_sweep_gallery_size}},
      {"variation", {"Break-in success across gallery compositions", realface::cmd_variation_study}},
      {"scoredist", {"Genuine/impostor score histogram and EER", realface::cmd_score_dist}},
  };
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--no-bounds", o.no_bounds, "Search without the realism box");
    sub->add_option("--oracle", o.oracle, "builtin | bridge:CMD | http:URL");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Override every campaign seed");
    sub->add_option("--workers", o.workers, "Parallel attempts for the builtin oracle (0 = all cores)");
    sub->callback([&chosen, fn = entry.second] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    return chosen(prepare(o), std::cout);
  } catch (const realface::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
