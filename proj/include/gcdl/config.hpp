// Copyright 2026 The gcdl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration: a flat "dotted.key = value" text file checked against
// a fixed schema. Lines starting with '#' are comments.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gcdl/common.hpp"

namespace gcdl {

enum class FieldType { String, Path, UInt, Double, Bool };

struct ConfigField {
  std::string key;
  FieldType type;
  std::string default_value;  // empty with required = false means "unset"
  bool required = false;
  std::string doc;
};

const std::vector<ConfigField>& config_schema();

/// Canonical schema listing, one "key = default  # type; doc" line per field.
std::string print_schema();

class RunConfig {
 public:
  /// Parses `text`; `origin` prefixes error messages.
  static RunConfig parse(std::string_view text, std::string_view origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Applies a "key=value" override. Throws FormatError for unknown keys or
  /// values of the wrong type.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  /// Checks required fields and that referenced paths exist.
  void validate() const;

  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;  // set explicitly or non-empty default
  std::string get_string(const std::string& key) const { return get(key); }
  std::filesystem::path get_path(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Every field, sorted by key, as "key = value" lines.
  std::string canonical() const;
  std::string hash() const { return sha256_hex(canonical()); }

 private:
  RunConfig();
  std::map<std::string, std::string> values_;
};

}  // namespace gcdl
