#include "spdelab/spdelab.h"

#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include "spdelab/error.hpp"
#include "spdelab/harness.hpp"

struct spdelab_config {
  spdelab::ExperimentConfig value;
};

namespace {

thread_local std::string last_error;

spdelab_status status_of(const std::string& code) {
  if (code == "parse-error") return SPDELAB_ERR_PARSE;
  if (code == "invalid-config") return SPDELAB_ERR_INVALID_CONFIG;
  if (code == "io-error") return SPDELAB_ERR_IO;
  if (code == "unknown-subcommand") return SPDELAB_ERR_UNKNOWN_SUBCOMMAND;
  return SPDELAB_ERR_INVALID_ARGUMENT;
}

template <class Fn>
spdelab_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const spdelab::Error& e) {
    last_error = e.qualified();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SPDELAB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SPDELAB_ERR_INTERNAL;
  }
}

spdelab_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return SPDELAB_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* spdelab_version(void) {
  static const std::string v(spdelab::version());
  return v.c_str();
}

const char* spdelab_status_name(spdelab_status status) {
  switch (status) {
    case SPDELAB_OK: return "ok";
    case SPDELAB_ERR_PARSE: return "parse-error";
    case SPDELAB_ERR_INVALID_CONFIG: return "invalid-config";
    case SPDELAB_ERR_IO: return "io-error";
    case SPDELAB_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case SPDELAB_ERR_UNKNOWN_SUBCOMMAND: return "unknown-subcommand";
    case SPDELAB_ERR_BUFFER_TOO_SMALL: return "buffer-too-small";
    case SPDELAB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* spdelab_last_error(void) { return last_error.c_str(); }

size_t spdelab_subcommand_count(void) { return spdelab::subcommands().size(); }

const char* spdelab_subcommand_name(size_t index) {
  const auto& names = spdelab::subcommands();
  return index < names.size() ? names[index].c_str() : nullptr;
}

spdelab_status spdelab_config_default(spdelab_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new spdelab_config{};
    return SPDELAB_OK;
  });
}

spdelab_status spdelab_config_load(const char* path, spdelab_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new spdelab_config{spdelab::load_config(path)};
    return SPDELAB_OK;
  });
}

spdelab_status spdelab_config_parse(const char* text, spdelab_config** out) {
  if (!text) return null_argument("text");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new spdelab_config{spdelab::parse_config(text)};
    return SPDELAB_OK;
  });
}

void spdelab_config_free(spdelab_config* config) { delete config; }

spdelab_status spdelab_config_set_seed(spdelab_config* config, uint64_t seed) {
  if (!config) return null_argument("config");
  config->value.seed = seed;
  last_error.clear();
  return SPDELAB_OK;
}

spdelab_status spdelab_config_set_workers(spdelab_config* config, int workers) {
  if (!config) return null_argument("config");
  return guarded([&] {
    auto copy = config->value;
    copy.workers = workers;
    spdelab::validate(copy);
    config->value = copy;
    return SPDELAB_OK;
  });
}

spdelab_status spdelab_config_set_out_dir(spdelab_config* config, const char* dir) {
  if (!config) return null_argument("config");
  if (!dir || !*dir) return null_argument("dir");
  config->value.out_dir = dir;
  last_error.clear();
  return SPDELAB_OK;
}

uint64_t spdelab_config_seed(const spdelab_config* config) { return config ? config->value.seed : 0; }

spdelab_status spdelab_config_serialize(const spdelab_config* config, char* buf, size_t cap, size_t* needed) {
  if (!config) return null_argument("config");
  return guarded([&] {
    const std::string s = spdelab::serialize(config->value);
    if (needed) *needed = s.size() + 1;
    if (!buf || cap < s.size() + 1) {
      last_error = "buffer needs " + std::to_string(s.size() + 1) + " bytes";
      return SPDELAB_ERR_BUFFER_TOO_SMALL;
    }
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return SPDELAB_OK;
  });
}

spdelab_status spdelab_run(const spdelab_config* config, const char* subcommand, int* exit_code) {
  if (!config) return null_argument("config");
  if (!subcommand) return null_argument("subcommand");
  if (!exit_code) return null_argument("exit_code");
  return guarded([&] {
    const auto& names = spdelab::subcommands();
    if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
      *exit_code = 1;
      throw spdelab::Error("harness", "unknown-subcommand", std::string("'") + subcommand + "'");
    }
    const auto result = spdelab::run(subcommand, config->value);
    *exit_code = result.exit_code;
    if (result.exit_code == 1) last_error = result.error;
    return SPDELAB_OK;
  });
}

}  // extern "C"
