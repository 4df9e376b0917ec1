/*
   Copyright 2026 The erwsim Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Runs the full acceptance registry and prints one verdict per criterion.
//
//   erw_acceptance [--out DIR] [--workers N] [--scale X] [--only ID]
//
// Exit status is 0 when every gating criterion passes, 1 otherwise.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "erw/harness.hpp"
#include "erw/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"erwsim acceptance suite"};
  erw::harness::Options options;
  options.out_dir = "acceptance_out";
  std::optional<unsigned> workers;
  std::optional<std::string> only;
  app.add_option("--out", options.out_dir, "Artifact directory");
  app.add_option("--workers", workers, "Worker threads (default: all cores)");
  app.add_option("--scale", options.scale, "Multiplier on Monte Carlo sizes");
  app.add_option("--only", only, "Run one criterion or module tag");
  CLI11_PARSE(app, argc, argv);
  options.workers = workers ? *workers : erw::default_workers();

  try {
    const auto summary = erw::harness::verify_all(only, options, [](const auto& report) {
      std::cout << erw::harness::verdict_line(report) << std::endl;
    });
    std::cout << '\n' << summary.table();
    return summary.exit_code();
  } catch (const erw::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }
}
