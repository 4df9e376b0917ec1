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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "erw/env.hpp"
#include "erw/rng.hpp"

// Experiment registry, runner and reports.
namespace erw::harness {

inline constexpr std::uint64_t kDefaultSeed = 20260101ULL;

/// One registered experiment. Sizes and thresholds are looked up by name
/// from the experiment body, so both can be overridden per run.
struct ExperimentSpec {
  std::string id;
  std::string title;
  /// Law file (relative to the law directory) or a bare delta; at most one.
  std::string law_file;
  std::optional<double> delta;
  std::vector<std::string> modules;
  std::map<std::string, std::uint64_t> sizes;
  std::map<std::string, double> thresholds;
  std::uint64_t seed = kDefaultSeed;
  unsigned workers = 1;
  bool gating = true;

  std::uint64_t size(const std::string& key) const;
  double threshold(const std::string& key) const;

  /// Throws UsageError if the spec is malformed or its law file is missing.
  void validate(const std::filesystem::path& law_dir) const;
};

struct Check {
  std::string name;
  double value = 0.0;
  std::optional<double> lo; // pass requires lo <= value
  std::optional<double> hi; // pass requires value < hi, or value <= hi when closed
  bool closed = false;
  bool pass = false;
};

/// Outcome of one experiment. Checks are only ever appended.
class Report {
public:
  Report() = default;
  Report(std::string id, std::uint64_t seed, unsigned workers, bool gating);

  /// Adds a check against [lo, hi) and returns its verdict.
  bool check(std::string name, double value, std::optional<double> lo, std::optional<double> hi);
  /// Adds a check against the closed range [lo, hi].
  bool check_range(std::string name, double value, double lo, double hi);
  void measure(std::string name, double value);
  void note(std::string text);
  void add_censored(std::string what, std::uint64_t count);

  const std::string& id() const { return id_; }
  const std::vector<Check>& checks() const { return checks_; }
  const std::map<std::string, double>& measured() const { return measured_; }
  const std::map<std::string, std::uint64_t>& censored() const { return censored_; }
  const std::vector<std::string>& notes() const { return notes_; }
  std::uint64_t seed() const { return seed_; }
  unsigned workers() const { return workers_; }
  bool gating() const { return gating_; }

  /// True iff there is at least one check and every check passed.
  bool pass() const;

  double runtime_seconds = 0.0;
  std::optional<std::string> error;

  /// Deterministic JSON of everything but the runtime.
  std::string to_json() const;

private:
  std::string id_;
  std::uint64_t seed_ = kDefaultSeed;
  unsigned workers_ = 1;
  bool gating_ = true;
  std::vector<Check> checks_;
  std::map<std::string, double> measured_;
  std::map<std::string, std::uint64_t> censored_;
  std::vector<std::string> notes_;
};

/// Where an experiment writes its artifacts; a null sink writes nothing.
class Sink {
public:
  Sink() = default;
  explicit Sink(std::filesystem::path dir);

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  /// Appends one row to samples.jsonl.
  void sample(const std::string& jsonl_row);
  /// Writes survival_<name>.csv with columns threshold,survival.
  void survival(const std::string& name, const std::vector<std::pair<double, double>>& pairs);

private:
  std::filesystem::path dir_;
  std::shared_ptr<std::ofstream> samples_;
};

struct Options {
  std::filesystem::path law_dir;
  std::filesystem::path out_dir = "out";
  bool write_files = true;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  /// Replaces the "reps" size of every experiment that has one, after scaling.
  std::optional<std::uint64_t> reps;
  /// Multiplies every size (rounded, at least 1).
  double scale = 1.0;
  /// Law file replacing the experiment's own law.
  std::optional<std::filesystem::path> law_override;
  std::map<std::string, double> threshold_overrides;
};

/// Law directory compiled into the library; overridable at run time.
std::filesystem::path default_law_dir();

using Body = std::function<void(const ExperimentSpec&, const EnvironmentLaw*, Report&, Sink&)>;

struct Experiment {
  ExperimentSpec spec;
  Body body;
};

/// All acceptance experiments in execution order.
const std::vector<Experiment>& registry();

const Experiment* find(const std::string& id);

/// Registry listing, one line per experiment.
std::string listing();

/// Applies the overrides in `options` to a registered spec.
ExperimentSpec configure(const ExperimentSpec& spec, const Options& options);

/// Runs one experiment. Writes samples.jsonl, report.json and timing.json
/// under out_dir/<id>. Body exceptions other than UsageError are recorded in
/// the report as a failure.
Report run_experiment(const Experiment& experiment, const Options& options);
Report run_experiment(const std::string& id, const Options& options);

struct Summary {
  std::vector<Report> reports;
  /// 0 when every gating experiment passed (or none matched), else 1.
  int exit_code() const;
  std::string table() const;
};

/// Runs every experiment whose id or module list matches `filter` (all when
/// empty), in registry order. Failures do not stop the suite; `progress`
/// receives each report as it completes.
Summary verify_all(const std::optional<std::string>& filter, const Options& options,
                   const std::function<void(const Report&)>& progress = {});

/// Same, over an explicit list of experiments.
Summary verify_all(const std::vector<Experiment>& experiments,
                   const std::optional<std::string>& filter, const Options& options,
                   const std::function<void(const Report&)>& progress = {});

/// One-line verdict, e.g. "AC3  PASS  sigma0_exponent=1.54 in [1.2, 1.8]".
std::string verdict_line(const Report& report);

} // namespace erw::harness
