#ifndef SPDELAB_H
#define SPDELAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SPDELAB_API __declspec(dllexport)
#else
#define SPDELAB_API __attribute__((visibility("default")))
#endif

typedef struct spdelab_config spdelab_config;

typedef enum spdelab_status {
  SPDELAB_OK = 0,
  SPDELAB_ERR_PARSE = 1,
  SPDELAB_ERR_INVALID_CONFIG = 2,
  SPDELAB_ERR_IO = 3,
  SPDELAB_ERR_INVALID_ARGUMENT = 4,
  SPDELAB_ERR_UNKNOWN_SUBCOMMAND = 5,
  SPDELAB_ERR_BUFFER_TOO_SMALL = 6,
  SPDELAB_ERR_INTERNAL = 7
} spdelab_status;

SPDELAB_API const char* spdelab_version(void);
SPDELAB_API const char* spdelab_status_name(spdelab_status status);

/* Message of the last failed call on this thread, "" if none. */
SPDELAB_API const char* spdelab_last_error(void);

SPDELAB_API size_t spdelab_subcommand_count(void);
SPDELAB_API const char* spdelab_subcommand_name(size_t index);

SPDELAB_API spdelab_status spdelab_config_default(spdelab_config** out);
SPDELAB_API spdelab_status spdelab_config_load(const char* path, spdelab_config** out);
SPDELAB_API spdelab_status spdelab_config_parse(const char* text, spdelab_config** out);
SPDELAB_API void spdelab_config_free(spdelab_config* config);

SPDELAB_API spdelab_status spdelab_config_set_seed(spdelab_config* config, uint64_t seed);
SPDELAB_API spdelab_status spdelab_config_set_workers(spdelab_config* config, int workers);
SPDELAB_API spdelab_status spdelab_config_set_out_dir(spdelab_config* config, const char* dir);
SPDELAB_API uint64_t spdelab_config_seed(const spdelab_config* config);

/* Writes the serialized config with its terminating NUL into buf when cap is
   large enough; *needed always receives the required size. */
SPDELAB_API spdelab_status spdelab_config_serialize(const spdelab_config* config, char* buf, size_t cap,
                                                    size_t* needed);

/* Runs a subcommand. *exit_code receives 0 (ok), 2 (a verdict VIOLATES) or
   1 (error; see spdelab_last_error). Outputs and manifest.json go to the
   configured out_dir. */
SPDELAB_API spdelab_status spdelab_run(const spdelab_config* config, const char* subcommand, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif
