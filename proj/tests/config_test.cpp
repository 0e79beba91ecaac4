// tests/config_test.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include "maskbook/config.hpp"

using namespace maskbook;

TEST_SUITE_BEGIN("config");

TEST_CASE("sections, comments, and typed getters") {
  const auto config = ConfigFile::parse_string(
      "# comment\n"
      "top = 1\n"
      "[stft]\n"
      "win_length = 256\n"
      "hop=64\n"
      "window = sqrt_hann\n"
      "\n"
      "[oracle_study]\n"
      "r_max = 1, 1.5, 2\n"
      "masks = IAM,IBM\n"
      "optimize = true\n",
      "test.cfg");

  CHECK(config.get_int("top", 0) == 1);
  CHECK(config.get_int("stft.win_length", 0) == 256);
  CHECK(config.get_int("stft.hop", 0) == 64);
  CHECK(config.get_string("stft.window", "") == "sqrt_hann");
  CHECK(config.get_bool("oracle_study.optimize", false));
  CHECK(config.get_double_list("oracle_study.r_max", {}) ==
        std::vector<double>{1.0, 1.5, 2.0});
  CHECK(config.get_list("oracle_study.masks", {}) ==
        std::vector<std::string>{"IAM", "IBM"});
  CHECK(config.get_int("stft.missing", 42) == 42);
  CHECK(config.keys_in_section("stft").size() == 3);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    ConfigFile::parse_string("a = 1\nnonsense line\n", "bad.cfg");
    FAIL("expected a parse error");
  } catch (const std::exception& error) {
    CHECK(std::string(error.what()).find("bad.cfg:2") != std::string::npos);
  }

  try {
    ConfigFile::parse_string("[s]\nk = 1\nk = 2\n", "dup.cfg");
    FAIL("expected a duplicate-key error");
  } catch (const std::exception& error) {
    CHECK(std::string(error.what()).find("dup.cfg:3") != std::string::npos);
  }

  const auto config = ConfigFile::parse_string("[s]\nnum = banana\n", "type.cfg");
  try {
    (void)config.get_int("s.num", 0);
    FAIL("expected a type error");
  } catch (const std::exception& error) {
    CHECK(std::string(error.what()).find("type.cfg:2") != std::string::npos);
  }
}

TEST_CASE("missing required keys and files are reported") {
  const auto config = ConfigFile::parse_string("", "empty.cfg");
  CHECK_THROWS(config.require_string("corpus.manifest"));
  CHECK_THROWS(ConfigFile::parse_file("/nonexistent/maskbook.cfg"));
}

TEST_SUITE_END();
