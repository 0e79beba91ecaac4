// src/config.cpp

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

#include "maskbook/config.hpp"

#include <fstream>
#include <sstream>

namespace maskbook {

namespace {

std::string trim(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  size_t end = text.find_last_not_of(" \t");
  return text.substr(begin, end - begin + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& name) {
  ConfigFile config;
  config.name_ = name;
  std::istringstream stream(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        fail(name + ":" + std::to_string(line_no) + ": unterminated section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty())
        fail(name + ":" + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail(name + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail(name + ":" + std::to_string(line_no) + ": empty key");
    const std::string full_key = section.empty() ? key : section + "." + key;
    if (config.values_.count(full_key))
      fail(name + ":" + std::to_string(line_no) + ": duplicate key '" + full_key + "'");
    config.values_[full_key] = value;
    config.line_of_[full_key] = line_no;
  }
  return config;
}

void ConfigFile::type_error(const std::string& key, const std::string& expected) const {
  const auto line = line_of_.find(key);
  const std::string where =
      line == line_of_.end() ? name_ : name_ + ":" + std::to_string(line->second);
  fail(where + ": key '" + key + "' is not a valid " + expected + " (value '" +
       values_.at(key) + "')");
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string ConfigFile::require_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(name_ + ": missing required key '" + key + "'");
  return it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    const double value = std::stod(it->second, &used);
    if (used != it->second.size()) type_error(key, "number");
    return value;
  } catch (const std::logic_error&) {
    type_error(key, "number");
  }
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    const int value = std::stoi(it->second, &used);
    if (used != it->second.size()) type_error(key, "integer");
    return value;
  } catch (const std::logic_error&) {
    type_error(key, "integer");
  }
}

uint64_t ConfigFile::get_u64(const std::string& key, uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    const uint64_t value = std::stoull(it->second, &used);
    if (used != it->second.size()) type_error(key, "integer");
    return value;
  } catch (const std::logic_error&) {
    type_error(key, "integer");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  type_error(key, "boolean");
}

std::vector<std::string> ConfigFile::get_list(const std::string& key,
                                              const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> items;
  std::istringstream stream(it->second);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const std::string trimmed = trim(item);
    if (!trimmed.empty()) items.push_back(trimmed);
  }
  return items;
}

std::vector<double> ConfigFile::get_double_list(const std::string& key,
                                                const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> values;
  for (const auto& item : get_list(key, {})) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      type_error(key, "number list");
    }
  }
  return values;
}

std::vector<int> ConfigFile::get_int_list(const std::string& key,
                                          const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> values;
  for (const auto& item : get_list(key, {})) {
    try {
      values.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      type_error(key, "integer list");
    }
  }
  return values;
}

std::vector<std::string> ConfigFile::keys_in_section(const std::string& section) const {
  std::vector<std::string> keys;
  const std::string prefix = section + ".";
  for (const auto& [key, value] : values_)
    if (key.rfind(prefix, 0) == 0) keys.push_back(key);
  return keys;
}

}  // namespace maskbook
