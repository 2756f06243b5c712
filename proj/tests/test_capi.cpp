#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "spdelab/spdelab.h"

TEST_CASE("version and subcommands") {
  CHECK(std::string(spdelab_version()).size() > 0);
  CHECK(spdelab_subcommand_count() == 9);
  CHECK(std::string(spdelab_subcommand_name(0)) == "oracle");
  CHECK(spdelab_subcommand_name(99) == nullptr);
}

TEST_CASE("parse errors come back as status codes") {
  spdelab_config* c = nullptr;
  CHECK(spdelab_config_parse("[grid]\nn_t = x\n", &c) == SPDELAB_ERR_PARSE);
  CHECK(c == nullptr);
  CHECK(std::string(spdelab_last_error()).find("line 2") != std::string::npos);
  CHECK(spdelab_config_load("/nonexistent/spdelab.ini", &c) == SPDELAB_ERR_IO);
  CHECK(spdelab_config_parse("[run]\nworkers = 0\n", &c) == SPDELAB_ERR_INVALID_CONFIG);
  CHECK(spdelab_config_parse(nullptr, &c) == SPDELAB_ERR_INVALID_ARGUMENT);
  CHECK(std::string(spdelab_status_name(SPDELAB_ERR_PARSE)) == "parse-error");
}

TEST_CASE("serialize with a caller buffer") {
  spdelab_config* c = nullptr;
  REQUIRE(spdelab_config_default(&c) == SPDELAB_OK);
  CHECK(spdelab_config_set_seed(c, 99) == SPDELAB_OK);
  CHECK(spdelab_config_seed(c) == 99);
  CHECK(spdelab_config_set_workers(c, 0) == SPDELAB_ERR_INVALID_CONFIG);
  size_t needed = 0;
  CHECK(spdelab_config_serialize(c, nullptr, 0, &needed) == SPDELAB_ERR_BUFFER_TOO_SMALL);
  std::vector<char> buf(needed);
  REQUIRE(spdelab_config_serialize(c, buf.data(), buf.size(), &needed) == SPDELAB_OK);
  CHECK(std::string(buf.data()).find("seed = 99") != std::string::npos);
  spdelab_config* again = nullptr;
  REQUIRE(spdelab_config_parse(buf.data(), &again) == SPDELAB_OK);
  CHECK(spdelab_config_seed(again) == 99);
  spdelab_config_free(again);
  spdelab_config_free(c);
}

TEST_CASE("run through the handle") {
  spdelab_config* c = nullptr;
  REQUIRE(spdelab_config_parse("[kernel]\nfamily = zero\n[grid]\nt_max = 1\nn_t = 64\nx_min = -8\nx_max = 8\nn_x = 80\n"
                               "[mc]\nn_paths = 20000\n",
                               &c) == SPDELAB_OK);
  const auto dir = std::filesystem::temp_directory_path() / "spdelab_capi_run";
  std::filesystem::remove_all(dir);
  REQUIRE(spdelab_config_set_out_dir(c, dir.string().c_str()) == SPDELAB_OK);
  int code = -1;
  CHECK(spdelab_run(c, "oracle", &code) == SPDELAB_OK);
  CHECK(code == 0);
  CHECK(std::filesystem::exists(dir / "oracle.csv"));
  CHECK(spdelab_run(c, "nope", &code) == SPDELAB_ERR_UNKNOWN_SUBCOMMAND);
  CHECK(code == 1);
  spdelab_config_free(c);
}
