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

// gcdl <stage> --config run.conf [--set key=value ...] [--workers N] [--seed S]
// gcdl schema

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcdl/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"group-wise contrastive dialogue learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> workers;
  std::optional<std::uint64_t> seed;

  std::vector<std::pair<std::string, CLI::App*>> stages;
  for (const auto& name : gcdl::stage_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--set", overrides, "override a configuration field (key=value)");
    sub->add_option("--workers", workers, "worker threads");
    sub->add_option("--seed", seed, "master seed");
    stages.emplace_back(name, sub);
  }
  CLI::App* schema = app.add_subcommand("schema", "print the configuration schema");

  CLI11_PARSE(app, argc, argv);

  try {
    if (schema->parsed()) {
      std::cout << gcdl::print_schema();
      return 0;
    }
    auto config = gcdl::RunConfig::load(config_path);
    for (const auto& o : overrides) config.set(o);
    if (workers) config.set("workers", std::to_string(*workers));
    if (seed) config.set("seed", std::to_string(*seed));
    for (const auto& [name, sub] : stages)
      if (sub->parsed()) gcdl::run_stage(name, config, std::cout);
    return 0;
  } catch (const gcdl::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return 3;
  } catch (const gcdl::FormatError& e) {
    std::cerr << "config/format error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
