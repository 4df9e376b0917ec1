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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "erw/branching.hpp"
#include "erw/diffusion.hpp"
#include "erw/env.hpp"
#include "erw/harness.hpp"
#include "erw/parallel.hpp"
#include "erw/stats.hpp"
#include "erw/walk.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Common {
  std::string law;
  std::optional<double> delta;
  std::size_t cookies = 0;
  std::uint64_t seed = erw::harness::kDefaultSeed;
  std::uint64_t reps = 1;
  unsigned workers = 1;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool with_law) {
  if (with_law) {
    app->add_option("--law", c.law, "Law file (JSON)")->check(CLI::ExistingFile);
    app->add_option("--cookies", c.cookies, "Stack length M used with --delta");
  }
  app->add_option("--delta", c.delta, "Total drift delta");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--reps", c.reps, "Number of independent runs")->check(CLI::PositiveNumber);
  app->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
  app->add_option("--out", c.out, "Output file (default stdout)");
}

erw::EnvironmentLaw law_of(const Common& c) {
  if (!c.law.empty() && c.delta) throw erw::UsageError("give --law or --delta, not both");
  if (!c.law.empty()) return erw::EnvironmentLaw::from_file(c.law);
  if (!c.delta) throw erw::UsageError("a law is required: --law FILE or --delta X");
  if (*c.delta < 0.0) throw erw::UsageError("--delta must be non-negative");
  const std::size_t M =
      c.cookies ? c.cookies : static_cast<std::size_t>(std::ceil(*c.delta)) + 1;
  return erw::EnvironmentLaw::homogeneous(*c.delta, M);
}

class Output {
public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
      file_.open(path, std::ios::trunc);
      if (!file_) throw erw::UsageError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
  std::ofstream file_;
};

int simulate_walk(const Common& c, std::optional<std::int64_t> level,
                  std::optional<std::uint64_t> horizon, bool stop_on_return) {
  const auto law = law_of(c);
  erw::walk::StopRule stop;
  stop.level = level;
  stop.horizon = horizon;
  stop.stop_on_return = stop_on_return;
  const erw::rng::Streams streams(c.seed, "simulate-walk");
  const auto records = erw::parallel_map(c.reps, c.workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    auto rec = erw::walk::simulate_walk(law, stop, rng);
    rec.seed = streams.token(r);
    return rec;
  });
  Output out(c.out);
  for (std::size_t r = 0; r < records.size(); ++r)
    out.stream() << erw::walk::to_jsonl(records[r], r) << '\n';
  return 0;
}

int simulate_bp(const Common& c, std::uint64_t v0, std::uint64_t max_generations) {
  const auto law = law_of(c);
  erw::branching::RunOptions options;
  options.caps.generations = max_generations;
  const erw::rng::Streams streams(c.seed, "simulate-bp");
  const auto runs = erw::parallel_map(c.reps, c.workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    auto run = erw::branching::run_to_extinction(law, v0, options, rng);
    run.seed = streams.token(r);
    return run;
  });
  Output out(c.out);
  for (std::size_t r = 0; r < runs.size(); ++r)
    out.stream() << erw::branching::to_jsonl(runs[r], r) << '\n';
  return 0;
}

int simulate_sde(const Common& c, double y0, std::optional<double> dt, std::optional<double> t_max,
                 std::vector<double> levels) {
  if (!c.delta) throw erw::UsageError("simulate sde needs --delta");
  auto config = erw::diffusion::DiffusionConfig::defaults(*c.delta, y0);
  if (dt) config.dt = *dt;
  if (t_max) config.t_max = *t_max;
  std::sort(levels.begin(), levels.end());
  config.levels = std::move(levels);
  config.validate();
  const erw::rng::Streams streams(c.seed, "simulate-sde");
  const auto results = erw::parallel_map(c.reps, c.workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    return erw::diffusion::simulate_Y(config, rng);
  });
  Output out(c.out);
  for (std::size_t r = 0; r < results.size(); ++r)
    out.stream() << erw::diffusion::to_jsonl(results[r], r, streams.token(r)) << '\n';
  return 0;
}

struct FitArgs {
  std::string in;
  std::string field;
  std::string method = "loglog";
  std::optional<double> lo;
  std::optional<double> hi;
  std::optional<double> expect_lo;
  std::optional<double> expect_hi;
  std::string experiment;
  bool sqrt = false;
  std::string out;
};

int fit_tail(const FitArgs& a) {
  std::ifstream in(a.in);
  if (!in) throw erw::UsageError("cannot read " + a.in);
  std::vector<double> values;
  std::size_t skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw erw::UsageError("bad JSONL row in " + a.in + ": " + e.what());
    }
    const auto it = row.find(a.field);
    if (it == row.end() || !it->is_number() ||
        (row.contains("censored") && row["censored"].is_boolean() && row["censored"].get<bool>())) {
      ++skipped;
      continue;
    }
    const double v = it->get<double>();
    values.push_back(a.sqrt ? std::sqrt(v) : v);
  }
  erw::stats::TailConfig config;
  config.lo = a.lo;
  config.hi = a.hi;
  const auto method =
      a.method == "hill" ? erw::stats::TailMethod::Hill : erw::stats::TailMethod::LogLogSurvival;
  const auto fit = erw::stats::fit_tail_exponent(values, method, config);
  bool pass = true;
  if (a.expect_lo) pass = pass && *a.expect_lo <= fit.exponent;
  if (a.expect_hi) pass = pass && fit.exponent <= *a.expect_hi;
  json j{{"experiment", a.experiment.empty() ? a.in : a.experiment},
         {"exponent", fit.exponent},
         {"stderr", fit.stderr_},
         {"range", {fit.lo, fit.hi}},
         {"pass", pass},
         {"method", erw::stats::to_string(fit.method)},
         {"n", values.size()},
         {"skipped", skipped},
         {"n_exceed", fit.n_exceed},
         {"curvature", fit.curvature},
         {"warnings", fit.warnings}};
  Output out(a.out);
  out.stream() << j.dump(2) << '\n';
  return pass ? 0 : 1;
}

int report(const fs::path& out_dir) {
  if (!fs::is_directory(out_dir)) throw erw::UsageError("no output directory " + out_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(out_dir))
    if (e.is_directory() && fs::exists(e.path() / "report.json"))
      files.push_back(e.path() / "report.json");
  std::sort(files.begin(), files.end());
  int code = 0;
  auto summary = json::array();
  for (const auto& f : files) {
    std::ifstream in(f);
    const json r = json::parse(in);
    const bool pass = r.value("pass", false);
    const bool gating = r.value("gating", true);
    if (gating && !pass) code = 1;
    double runtime = 0.0;
    if (std::ifstream t(f.parent_path() / "timing.json"); t)
      runtime = json::parse(t).value("runtime_seconds", 0.0);
    std::cout << std::left << std::setw(6) << r.value("experiment", "?") << std::setw(8)
              << (pass ? "PASS" : gating ? "FAIL" : "FAIL*") << std::fixed << std::setprecision(1)
              << runtime << "s\n";
    summary.push_back({{"experiment", r.value("experiment", "?")},
                       {"pass", pass},
                       {"gating", gating},
                       {"runtime_seconds", runtime}});
  }
  std::ofstream(out_dir / "summary.json", std::ios::trunc) << summary.dump(2) << '\n';
  std::cout << files.size() << " reports, exit " << code << '\n';
  return code;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"erw: excited random walk simulator and acceptance harness"};
  app.require_subcommand(1);

  Common common;

  auto* simulate = app.add_subcommand("simulate", "Simulate walks, branching runs or diffusions");
  simulate->require_subcommand(1);

  auto* walk = simulate->add_subcommand("walk", "Excited random walk trajectories");
  add_common(walk, common, true);
  std::optional<std::int64_t> level;
  std::optional<std::uint64_t> horizon;
  bool stop_on_return = false;
  walk->add_option("--level", level, "Stop at the first passage to this site");
  walk->add_option("--horizon", horizon, "Maximum number of steps");
  walk->add_flag("--return", stop_on_return, "Stop at the first return to the origin");

  auto* bp = simulate->add_subcommand("bp", "Branching process runs to extinction");
  add_common(bp, common, true);
  std::uint64_t v0 = 0;
  std::uint64_t max_generations = 10'000'000ULL;
  bp->add_option("--v0", v0, "Initial population");
  bp->add_option("--max-generations", max_generations, "Generation cap (censoring)");

  auto* sde = simulate->add_subcommand("sde", "Paths of the limiting diffusion");
  add_common(sde, common, false);
  double y0 = 1.0;
  std::optional<double> dt;
  std::optional<double> t_max;
  std::vector<double> levels;
  sde->add_option("--y0", y0, "Initial value");
  sde->add_option("--dt", dt, "Time step (default 1e-4 * max(y0, 1))");
  sde->add_option("--t-max", t_max, "Horizon (default 1e3 * y0)");
  sde->add_option("--levels", levels, "Monitored levels");

  auto* fit = app.add_subcommand("fit-tail", "Fit a survival exponent to a JSONL field");
  FitArgs fa;
  fit->add_option("--in", fa.in, "JSONL sample file")->required()->check(CLI::ExistingFile);
  fit->add_option("--field", fa.field, "Numeric field to fit")->required();
  fit->add_option("--method", fa.method, "loglog or hill")
      ->check(CLI::IsMember({"loglog", "hill"}));
  fit->add_option("--lo", fa.lo, "Lower threshold");
  fit->add_option("--hi", fa.hi, "Upper threshold");
  fit->add_option("--expect-lo", fa.expect_lo, "Pass if exponent >= this");
  fit->add_option("--expect-hi", fa.expect_hi, "Pass if exponent <= this");
  fit->add_option("--experiment", fa.experiment, "Experiment name for the report");
  fit->add_flag("--sqrt", fa.sqrt, "Fit the square root of the field");
  fit->add_option("--out", fa.out, "Output file (default stdout)");

  auto* verify = app.add_subcommand("verify", "Run acceptance experiments");
  std::optional<std::string> only;
  std::optional<std::string> tag;
  erw::harness::Options opts;
  std::string out_dir = "out";
  std::string law_dir;
  std::string law_override;
  std::optional<std::uint64_t> vseed;
  std::optional<unsigned> vworkers;
  std::optional<std::uint64_t> vreps;
  bool no_files = false;
  verify->add_option("--only", only, "Run a single experiment id");
  verify->add_option("--tag", tag, "Run experiments whose module list contains this tag");
  verify->add_option("--seed", vseed, "Master seed");
  verify->add_option("--workers", vworkers, "Worker threads (0 = all cores)");
  verify->add_option("--reps", vreps, "Override the main sample size");
  verify->add_option("--scale", opts.scale, "Multiply every sample size");
  verify->add_option("--law", law_override, "Law file replacing the experiment's law")
      ->check(CLI::ExistingFile);
  verify->add_option("--laws", law_dir, "Directory of registered law files");
  verify->add_option("--out", out_dir, "Output directory");
  verify->add_flag("--no-files", no_files, "Do not write sample or report files");

  auto* rep = app.add_subcommand("report", "Summarise reports written by verify");
  std::string report_dir = "out";
  rep->add_option("--out", report_dir, "Output directory of a verify run");

  auto* list = app.add_subcommand("list", "List registered experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*walk) return simulate_walk(common, level, horizon, stop_on_return);
    if (*bp) return simulate_bp(common, v0, max_generations);
    if (*sde) return simulate_sde(common, y0, dt, t_max, levels);
    if (*fit) return fit_tail(fa);
    if (*list) {
      std::cout << erw::harness::listing();
      return 0;
    }
    if (*rep) return report(report_dir);
    if (*verify) {
      opts.out_dir = out_dir;
      opts.write_files = !no_files;
      if (!law_dir.empty()) opts.law_dir = law_dir;
      if (!law_override.empty()) opts.law_override = law_override;
      opts.seed = vseed;
      opts.workers = vworkers;
      opts.reps = vreps;
      if (only && tag) throw erw::UsageError("give --only or --tag, not both");
      if (only && !erw::harness::find(*only))
        throw erw::UsageError("unknown experiment '" + *only + "'; registered:\n" +
                              erw::harness::listing());
      const auto summary = erw::harness::verify_all(
          only ? only : tag, opts,
          [](const erw::harness::Report& r) { std::cout << erw::harness::verdict_line(r) << std::endl; });
      std::cout << summary.table();
      return summary.exit_code();
    }
  } catch (const erw::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
