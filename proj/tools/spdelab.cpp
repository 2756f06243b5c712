#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spdelab/spdelab.h"

namespace {

std::string subcommand_list() {
  std::string out;
  for (size_t i = 0; i < spdelab_subcommand_count(); ++i) {
    if (i) out += ", ";
    out += spdelab_subcommand_name(i);
  }
  return out;
}

int fail(const char* what) {
  std::fprintf(stderr, "spdelab: %s: %s\n", what, spdelab_last_error());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malliavin-weight density estimation and superprocess SPDE experiments"};
  app.set_version_flag("--version", std::string(spdelab_version()));
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  app.add_option("subcommand", subcommand, "one of: " + subcommand_list())->required();
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--seed", seed, "base seed (overrides SPDELAB_SEED and rng.seed)");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  bool known = false;
  for (size_t i = 0; i < spdelab_subcommand_count(); ++i) known = known || subcommand == spdelab_subcommand_name(i);
  if (!known) {
    std::fprintf(stderr, "spdelab: unknown subcommand '%s'\n%s", subcommand.c_str(), app.help().c_str());
    return 1;
  }

  spdelab_config* config = nullptr;
  if (spdelab_config_load(config_path.c_str(), &config) != SPDELAB_OK) return fail("config");
  if (const char* env = std::getenv("SPDELAB_SEED"); env && !seed) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!*env || *end) {
      std::fprintf(stderr, "spdelab: SPDELAB_SEED must be an unsigned integer, got '%s'\n", env);
      spdelab_config_free(config);
      return 1;
    }
    spdelab_config_set_seed(config, v);
  }
  if (seed) spdelab_config_set_seed(config, *seed);
  if (workers && spdelab_config_set_workers(config, *workers) != SPDELAB_OK) {
    spdelab_config_free(config);
    return fail("workers");
  }
  if (out_dir && spdelab_config_set_out_dir(config, out_dir->c_str()) != SPDELAB_OK) {
    spdelab_config_free(config);
    return fail("out");
  }

  int code = 1;
  const spdelab_status st = spdelab_run(config, subcommand.c_str(), &code);
  spdelab_config_free(config);
  if (st != SPDELAB_OK) return fail(subcommand.c_str());
  if (code == 1) {
    std::fprintf(stderr, "spdelab %s: %s\n", subcommand.c_str(), spdelab_last_error());
  } else if (code == 2) {
    std::fprintf(stderr, "spdelab %s: a checked bound is VIOLATED (see the summary CSV)\n", subcommand.c_str());
  }
  return code;
}
