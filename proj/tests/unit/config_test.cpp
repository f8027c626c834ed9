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

#include "gcdl/config.hpp"

#include <gtest/gtest.h>

#include <functional>

#include "test_util.hpp"

namespace gcdl {
namespace {

constexpr const char* kMinimal =
    "# minimal\n"
    "seed = 5\n"
    "paths.workdir = /tmp/x\n"
    "synth.generate = true\n";

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, ParsesValuesAndDefaults) {
  const RunConfig c = RunConfig::parse(kMinimal);
  EXPECT_EQ(c.get_uint("seed"), 5u);
  EXPECT_EQ(c.get_path("paths.workdir"), "/tmp/x");
  EXPECT_TRUE(c.get_bool("synth.generate"));
  EXPECT_EQ(c.get_uint("sampler.k"), 3u);
  EXPECT_DOUBLE_EQ(c.get_double("bm25.k1"), 1.2);
  EXPECT_FALSE(c.has("paths.data"));
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ErrorsCarryOriginAndLine) {
  EXPECT_NE(error_of([] { RunConfig::parse("seed = 1\nbogus.key = 2\n", "a.conf"); })
                .find("a.conf:2: unknown field 'bogus.key'"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("\n\nseed 1\n", "b.conf"); }).find("b.conf:3"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("sampler.k = three\n", "c.conf"); })
                .find("c.conf:1: field 'sampler.k' expects"),
            std::string::npos);
  EXPECT_THROW(RunConfig::parse("bm25.k1 = 1.2x\n"), FormatError);
  EXPECT_THROW(RunConfig::parse("synth.generate = maybe\n"), FormatError);
}

TEST(RunConfig, RequiredFieldsChecked) {
  EXPECT_NE(error_of([] { RunConfig::parse("paths.workdir = /tmp\n").validate(); })
                .find("'seed'"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("seed = 1\npaths.workdir = /tmp\n").validate(); })
                .find("paths.data"),
            std::string::npos);
  RunConfig c = RunConfig::parse(kMinimal);
  c.set("matcher.kind", "lexical");
  EXPECT_THROW(c.validate(), FormatError);
}

TEST(RunConfig, OverridesApplyAndAreChecked) {
  RunConfig c = RunConfig::parse(kMinimal);
  const std::string before = c.hash();
  c.set(std::string_view("sampler.k = 5"));
  EXPECT_EQ(c.get_uint("sampler.k"), 5u);
  EXPECT_NE(c.hash(), before);
  EXPECT_THROW(c.set(std::string_view("nope=1")), FormatError);
  EXPECT_THROW(c.set(std::string_view("sampler.k")), FormatError);
  EXPECT_THROW(c.set("sampler.k", "-1"), FormatError);
}

TEST(RunConfig, CanonicalFormIsOrderIndependent) {
  const RunConfig a = RunConfig::parse("seed = 1\npaths.workdir = w\nsampler.k = 2\n");
  const RunConfig b = RunConfig::parse("sampler.k=2\n# c\npaths.workdir=w\nseed=1");
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.canonical().find("ablate.max_epochs = 0\nbm25.b = 0.75\n"), 0u);
}

TEST(RunConfig, SchemaListsEveryField) {
  const std::string schema = print_schema();
  for (const auto& f : config_schema())
    EXPECT_NE(schema.find(f.key + " = "), std::string::npos) << f.key;
  EXPECT_NE(schema.find("seed =   # uint, required"), std::string::npos);
}

TEST(RunConfig, MissingFileIsFormatError) {
  EXPECT_THROW(RunConfig::load("/nonexistent/run.conf"), FormatError);
}

}  // namespace
}  // namespace gcdl
