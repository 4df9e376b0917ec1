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

#include "erw/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "erw/branching.hpp"
#include "erw/diffusion.hpp"
#include "erw/limit_checks.hpp"
#include "erw/parallel.hpp"
#include "erw/stats.hpp"
#include "erw/walk.hpp"

#ifndef ERW_LAW_DIR
#define ERW_LAW_DIR "laws"
#endif

namespace erw::harness {

using nlohmann::json;

std::uint64_t ExperimentSpec::size(const std::string& key) const {
  const auto it = sizes.find(key);
  if (it == sizes.end()) throw UsageError(id + ": no size named '" + key + "'");
  return it->second;
}

double ExperimentSpec::threshold(const std::string& key) const {
  const auto it = thresholds.find(key);
  if (it == thresholds.end()) throw UsageError(id + ": no threshold named '" + key + "'");
  return it->second;
}

void ExperimentSpec::validate(const std::filesystem::path& law_dir) const {
  if (id.empty()) throw UsageError("experiment id is empty");
  if (!law_file.empty() && delta) throw UsageError(id + ": give a law file or a delta, not both");
  for (const auto& [key, n] : sizes)
    if (n == 0) throw UsageError(id + ": size '" + key + "' must be positive");
  if (!law_file.empty()) {
    const auto path = law_dir / law_file;
    if (!std::filesystem::exists(path))
      throw UsageError(id + ": law file not found: " + path.string());
  }
}

Report::Report(std::string id, std::uint64_t seed, unsigned workers, bool gating)
    : id_(std::move(id)), seed_(seed), workers_(workers), gating_(gating) {}

bool Report::check(std::string name, double value, std::optional<double> lo,
                   std::optional<double> hi) {
  bool ok = !std::isnan(value);
  if (lo) ok = ok && *lo <= value;
  if (hi) ok = ok && value < *hi;
  checks_.push_back({std::move(name), value, lo, hi, false, ok});
  return ok;
}

bool Report::check_range(std::string name, double value, double lo, double hi) {
  const bool ok = !std::isnan(value) && lo <= value && value <= hi;
  checks_.push_back({std::move(name), value, lo, hi, true, ok});
  return ok;
}

void Report::measure(std::string name, double value) { measured_[std::move(name)] = value; }

void Report::note(std::string text) { notes_.push_back(std::move(text)); }

void Report::add_censored(std::string what, std::uint64_t count) {
  censored_[std::move(what)] += count;
}

bool Report::pass() const {
  if (error || checks_.empty()) return false;
  return std::all_of(checks_.begin(), checks_.end(), [](const Check& c) { return c.pass; });
}

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

} // namespace

std::string Report::to_json() const {
  json j;
  j["experiment"] = id_;
  j["pass"] = pass();
  j["gating"] = gating_;
  j["seed"] = seed_;
  j["workers"] = workers_;
  auto checks = json::array();
  for (const Check& c : checks_)
    checks.push_back({{"name", c.name},
                      {"value", number(c.value)},
                      {"lo", optional_number(c.lo)},
                      {"hi", optional_number(c.hi)},
                      {"closed", c.closed},
                      {"pass", c.pass}});
  j["checks"] = checks;
  auto measured = json::object();
  for (const auto& [k, v] : measured_) measured[k] = number(v);
  j["measured"] = measured;
  j["censored"] = censored_;
  j["notes"] = notes_;
  j["error"] = error ? json(*error) : json(nullptr);
  return j.dump(2);
}

Sink::Sink(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  samples_ = std::make_shared<std::ofstream>(dir_ / "samples.jsonl", std::ios::trunc);
  if (!*samples_) throw std::runtime_error("cannot write " + (dir_ / "samples.jsonl").string());
}

void Sink::sample(const std::string& jsonl_row) {
  if (samples_) *samples_ << jsonl_row << '\n';
}

void Sink::survival(const std::string& name,
                    const std::vector<std::pair<double, double>>& pairs) {
  if (!enabled()) return;
  std::ofstream out(dir_ / ("survival_" + name + ".csv"), std::ios::trunc);
  out << "threshold,survival\n" << std::setprecision(17);
  for (const auto& [t, s] : pairs) out << t << ',' << s << '\n';
}

std::filesystem::path default_law_dir() {
  if (const char* env = std::getenv("ERW_LAW_DIR"); env && *env) return env;
  return ERW_LAW_DIR;
}

namespace {

// Deterministic memo of expensive samples shared by several experiments
// (for example the extinction runs behind both progeny and lifetime fits).
template <typename T>
class Memo {
public:
  template <typename Make>
  std::shared_ptr<const T> get(const std::string& key, Make&& make) {
    std::lock_guard lock(mutex_);
    auto& slot = entries_[key];
    if (!slot) slot = std::make_shared<const T>(make());
    return slot;
  }

private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const T>> entries_;
};

std::string key_of(const EnvironmentLaw& law, const rng::Streams& streams, std::uint64_t reps,
                    const std::string& extra = {}) {
  return law.to_json() + "|" + std::to_string(streams.master()) + "|" +
         std::to_string(streams.tag()) + "|" + std::to_string(reps) + "|" + extra;
}

struct ExtinctionRow {
  std::optional<std::uint64_t> sigma0;
  std::uint64_t progeny = 0;
  bool censored = false;
};

std::shared_ptr<const std::vector<ExtinctionRow>> extinction_runs(const EnvironmentLaw& law,
                                                                  std::uint64_t reps,
                                                                  const rng::Streams& streams,
                                                                  unsigned workers) {
  static Memo<std::vector<ExtinctionRow>> memo;
  return memo.get(key_of(law, streams, reps), [&] {
    const branching::RunOptions options;
    return parallel_map(reps, workers, [&](std::size_t r) {
      auto rng = streams.at(r);
      const auto run = branching::run_to_extinction(law, 0, options, rng);
      return ExtinctionRow{run.sigma0, run.progeny, run.censored};
    });
  });
}

std::shared_ptr<const diffusion::PathSample> diffusion_paths(const diffusion::DiffusionConfig& c,
                                                             std::uint64_t reps,
                                                             const rng::Streams& streams,
                                                             unsigned workers) {
  static Memo<diffusion::PathSample> memo;
  std::ostringstream key;
  key << std::setprecision(17) << c.delta << '|' << c.y0 << '|' << c.dt << '|' << c.t_max << '|'
      << streams.master() << '|' << streams.tag() << '|' << reps;
  return memo.get(key.str(), [&] { return diffusion::sample_paths(c, reps, streams, workers); });
}

EnvironmentLaw load_law(const std::filesystem::path& law_dir, const std::string& file) {
  return EnvironmentLaw::from_file((law_dir / file).string());
}

const EnvironmentLaw& need_law(const EnvironmentLaw* law, const ExperimentSpec& spec) {
  if (!law) throw UsageError(spec.id + ": experiment needs a law");
  return *law;
}

void write_fit(Sink& sink, const std::string& name, const std::string& experiment,
               const stats::TailFit& fit, bool pass) {
  sink.survival(name, fit.survival);
  if (!sink.enabled()) return;
  json j{{"experiment", experiment},
         {"exponent", number(fit.exponent)},
         {"stderr", number(fit.stderr_)},
         {"range", {number(fit.lo), number(fit.hi)}},
         {"pass", pass}};
  std::ofstream(sink.dir() / ("fit_" + name + ".json"), std::ios::trunc) << j.dump(2) << '\n';
}

void note_fit(Report& report, const std::string& name, const stats::TailFit& fit,
              double requested_hi) {
  report.measure(name + "_stderr", fit.stderr_);
  report.measure(name + "_range_lo", fit.lo);
  report.measure(name + "_range_hi", fit.hi);
  report.measure(name + "_curvature", fit.curvature);
  report.measure(name + "_n_exceed", static_cast<double>(fit.n_exceed));
  if (fit.hi < requested_hi)
    report.note(name + ": upper threshold lowered to " + std::to_string(fit.hi) +
                " for lack of exceedances");
  for (const auto& w : fit.warnings) report.note(name + ": " + w);
}

json row(std::initializer_list<std::pair<const std::string, json>> fields) {
  json out = json::object();
  for (const auto& [key, value] : fields) out[key] = value;
  return out;
}

// ---------------------------------------------------------------------------
// Experiment bodies.

void drift_identity(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                    Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const double delta = delta_of_law(law);
  const std::uint64_t draws = spec.size("reps");
  const std::uint64_t block = spec.size("block");
  const std::uint64_t blocks = (draws + block - 1) / block;
  const rng::Streams streams(spec.seed, spec.id);
  struct Block {
    std::uint64_t count = 0;
    double sum = 0.0;
    double sumsq = 0.0;
  };
  const auto parts = parallel_map(blocks, spec.workers, [&](std::size_t b) {
    auto rng = streams.at(b);
    Block out;
    out.count = std::min(block, draws - b * block);
    for (std::uint64_t i = 0; i < out.count; ++i) {
      const auto v = static_cast<double>(branching::drift_functional(law.sample(rng), rng));
      out.sum += v;
      out.sumsq += v * v;
    }
    return out;
  });
  double sum = 0.0;
  double sumsq = 0.0;
  for (std::size_t b = 0; b < parts.size(); ++b) {
    sum += parts[b].sum;
    sumsq += parts[b].sumsq;
    sink.sample(row({{"rep", b},
                     {"seed", streams.token(b)},
                     {"count", parts[b].count},
                     {"sum", parts[b].sum},
                     {"sumsq", parts[b].sumsq}})
                    .dump());
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
  const double se = std::sqrt(var / n);
  const double target = 1.0 - delta;
  const double diff = std::abs(mean - target);
  const double z = se > 0.0 ? diff / se : (diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
  report.measure("delta", delta);
  report.measure("mean", mean);
  report.measure("expected", target);
  report.measure("stderr", se);
  report.check("drift_z", z, std::nullopt, spec.threshold("max_z"));
}

void one_step_oracle(const ExperimentSpec& spec, const EnvironmentLaw*, Report& report,
                     Sink& sink) {
  struct Case {
    std::string name;
    std::vector<double> probs;
    std::uint64_t v0;
  };
  const std::vector<Case> cases = {
      {"M0_v0", {}, 0},           {"M0_v5", {}, 5},
      {"M1_p0.7_v0", {0.7}, 0},   {"M1_p0.3_v3", {0.3}, 3},
      {"M2_v0", {0.9, 0.6}, 0},   {"M2_v1", {0.9, 0.6}, 1},
      {"M2_v4", {0.2, 0.95}, 4},
  };
  const std::uint64_t draws = spec.size("reps");
  const std::size_t K = spec.size("cells");
  constexpr std::uint64_t kBlock = 10'000;
  const rng::Streams streams(spec.seed, spec.id);
  const double min_p = spec.threshold("min_p");
  for (const Case& c : cases) {
    const CookieStack stack(c.probs);
    const auto exact = branching::exact_V1_pmf(stack, c.v0, K);
    std::vector<double> expected(exact.pmf.begin(), exact.pmf.end());
    expected.push_back(exact.tail);
    const auto sub = streams.sub(c.name);
    const std::uint64_t blocks = (draws + kBlock - 1) / kBlock;
    const auto counts = parallel_map(blocks, spec.workers, [&](std::size_t b) {
      auto rng = sub.at(b);
      std::vector<std::uint64_t> h(K + 2, 0);
      const std::uint64_t m = std::min(kBlock, draws - b * kBlock);
      for (std::uint64_t i = 0; i < m; ++i)
        ++h[std::min<std::uint64_t>(branching::step_V(c.v0, stack, rng), K + 1)];
      return h;
    });
    std::vector<std::uint64_t> observed(K + 2, 0);
    for (const auto& h : counts)
      for (std::size_t k = 0; k < h.size(); ++k) observed[k] += h[k];
    const auto chi = stats::chi_square_gof(observed, expected);
    sink.sample(row({{"case", c.name},
                     {"probs", c.probs},
                     {"v0", c.v0},
                     {"draws", draws},
                     {"observed", observed},
                     {"chi2", chi.statistic},
                     {"dof", chi.dof},
                     {"p_value", chi.p_value}})
                    .dump());
    report.measure(c.name + "_chi2", chi.statistic);
    report.measure(c.name + "_dof", static_cast<double>(chi.dof));
    report.check(c.name + "_p_value", chi.p_value, min_p, std::nullopt);
  }
}

// Sigma0 and progeny fits use the same runs, keyed to the lifetime experiment.
constexpr const char* kExtinctionFamily = "AC3";

void extinction_tail(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                     Sink& sink, bool progeny) {
  const auto& law = need_law(law_ptr, spec);
  const std::uint64_t reps = spec.size("reps");
  const rng::Streams streams(spec.seed, kExtinctionFamily);
  const auto runs = extinction_runs(law, reps, streams, spec.workers);
  std::vector<double> values;
  values.reserve(runs->size());
  std::size_t censored = 0;
  for (std::size_t r = 0; r < runs->size(); ++r) {
    const auto& run = (*runs)[r];
    if (run.censored) {
      ++censored;
    } else {
      values.push_back(static_cast<double>(progeny ? run.progeny : *run.sigma0));
    }
    if (sink.enabled())
      sink.sample(row({{"rep", r},
                       {"seed", streams.token(r)},
                       {"v0", 0},
                       {"sigma0", run.sigma0 ? json(*run.sigma0) : json(nullptr)},
                       {"progeny", run.progeny},
                       {"censored", run.censored}})
                      .dump());
  }
  report.add_censored("runs", censored);
  const std::string name = progeny ? "progeny" : "sigma0";
  stats::TailConfig config;
  config.lo = spec.threshold("fit_lo");
  config.hi = spec.threshold("fit_hi");
  const auto fit = stats::fit_tail_exponent(values, stats::TailMethod::LogLogSurvival, config);
  const bool ok = report.check_range(name + "_exponent", fit.exponent, spec.threshold("exponent_lo"),
                               spec.threshold("exponent_hi"));
  note_fit(report, name, fit, *config.hi);
  write_fit(sink, name, spec.id, fit, ok);
  stats::TailConfig hill;
  hill.lo = config.lo;
  const auto hfit = stats::fit_tail_exponent(values, stats::TailMethod::Hill, hill);
  report.measure(name + "_hill_exponent", hfit.exponent);
  report.measure(name + "_hill_stderr", hfit.stderr_);
  report.measure("delta", delta_of_law(law));
  report.check("censored_fraction", static_cast<double>(censored) / static_cast<double>(reps),
               std::nullopt, spec.threshold("max_censored_fraction"));
}

void reversed_identity(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                       Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const auto n = static_cast<std::int64_t>(spec.size("n"));
  const std::vector<std::int64_t> ks = {0, n / 2, n - 1};
  const rng::Streams streams(spec.seed, spec.id);
  const auto rs = branching::reversed_identity_samples(law, n, ks, spec.size("reps"), streams,
                                                      10'000'000ULL, spec.workers);
  report.add_censored("walks_missing_level", rs.dropped);
  const std::size_t rows = rs.walk.empty() ? 0 : rs.walk[0].size();
  for (std::size_t r = 0; r < rows && sink.enabled(); ++r) {
    json w = json::array(), c = json::array();
    for (std::size_t i = 0; i < ks.size(); ++i) {
      w.push_back(rs.walk[i][r]);
      c.push_back(r < rs.chain[i].size() ? json(rs.chain[i][r]) : json(nullptr));
    }
    sink.sample(row({{"rep", r}, {"k", ks}, {"walk_D", w}, {"chain_V", c}}).dump());
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto ks_result = stats::ks_two_sample(rs.walk[i], rs.chain[i]);
    report.measure("p_value_k" + std::to_string(ks[i]), ks_result.p_value);
    report.check("ks_k" + std::to_string(ks[i]), ks_result.distance, std::nullopt,
                 spec.threshold("max_ks"));
  }
}

void speed_cross_check(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                       Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const rng::Streams streams(spec.seed, spec.id);
  const std::uint64_t n = spec.size("n");
  const auto walk_est =
      walk::estimate_speed(law, n, spec.size("reps"), streams.sub("walk"), spec.workers);
  const auto renewal = branching::renewal_estimate(law, spec.size("cycle_reps"), branching::Caps{},
                                                   streams.sub("cycles"), spec.workers);
  report.add_censored("cycles", renewal.censored);
  const double rel = std::abs(walk_est.speed - renewal.speed) / renewal.speed;
  report.measure("delta", delta_of_law(law));
  report.measure("walk_speed", walk_est.speed);
  report.measure("walk_speed_stderr", walk_est.stderr_);
  report.measure("renewal_speed", renewal.speed);
  report.measure("renewal_lambda", renewal.lambda);
  report.measure("renewal_mean_progeny", renewal.mean_progeny);
  report.check("relative_difference", rel, std::nullopt, spec.threshold("max_relative_difference"));

  const auto placebo = EnvironmentLaw::placebo(1);
  const auto p_est = walk::estimate_speed(placebo, n, spec.size("placebo_reps"),
                                          streams.sub("placebo"), spec.workers);
  report.measure("placebo_speed", p_est.speed);
  report.measure("placebo_stderr", p_est.stderr_);
  report.check("placebo_z", std::abs(p_est.speed) / p_est.stderr_, std::nullopt,
               spec.threshold("max_placebo_z"));
  sink.sample(row({{"side", "walk"}, {"n", n}, {"reps", walk_est.reps}, {"speed", walk_est.speed},
                   {"stderr", walk_est.stderr_}})
                  .dump());
  sink.sample(row({{"side", "renewal"}, {"cycles", renewal.used}, {"lambda", renewal.lambda},
                   {"mean_progeny", renewal.mean_progeny}, {"speed", renewal.speed}})
                  .dump());
  sink.sample(row({{"side", "placebo"}, {"n", n}, {"reps", p_est.reps}, {"speed", p_est.speed},
                   {"stderr", p_est.stderr_}})
                  .dump());
}

void dump_passage_times(Sink& sink, const rng::Streams& streams, std::uint64_t n,
                        const std::vector<double>& T) {
  if (!sink.enabled()) return;
  for (std::size_t r = 0; r < T.size(); ++r)
    sink.sample(row({{"rep", r}, {"seed", streams.token(r)}, {"n", n},
                     {"T_n", static_cast<std::uint64_t>(T[r])}})
                    .dump());
}

// Speed estimate shared by the normalisations at both n: total level over
// total time, pooled over the two samples.
double pooled_speed(const std::vector<std::vector<double>>& samples,
                    const std::vector<std::uint64_t>& levels) {
  double time = 0.0;
  double level = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (double t : samples[i]) time += t;
    level += static_cast<double>(levels[i]) * static_cast<double>(samples[i].size());
  }
  return level / time;
}

void stable_normalization(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr,
                          Report& report, Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const double delta = delta_of_law(law);
  const rng::Streams streams(spec.seed, spec.id);
  const std::vector<std::uint64_t> levels = {spec.size("n"), spec.size("n2")};
  const std::uint64_t reps = spec.size("reps");

  std::vector<std::vector<double>> T;
  for (std::uint64_t n : levels) {
    const auto sub = streams.sub("n=" + std::to_string(n));
    auto [t, dropped] = stats::passage_time_samples(law, n, reps, sub,
                                                    stats::PassageMethod::Branching,
                                                    100'000'000ULL, spec.workers);
    report.add_censored("n=" + std::to_string(n), dropped);
    dump_passage_times(sink, sub, n, t);
    T.push_back(std::move(t));
  }
  const double v = pooled_speed(T, levels);
  report.measure("delta", delta);
  report.measure("speed", v);
  std::vector<std::vector<double>> z;
  for (std::size_t i = 0; i < levels.size(); ++i)
    z.push_back(stats::normalize_passage_times(T[i], levels[i], v, delta));

  stats::TailConfig config;
  config.lo = spec.threshold("fit_lo");
  config.hi = spec.threshold("fit_hi");
  const auto fit = stats::fit_tail_exponent(z[0], stats::TailMethod::LogLogSurvival, config);
  const bool ok = report.check_range("tail_exponent", fit.exponent, spec.threshold("exponent_lo"),
                               spec.threshold("exponent_hi"));
  note_fit(report, "tail", fit, *config.hi);
  write_fit(sink, "normalized_T", spec.id, fit, ok);
  report.check("ks_between_n", stats::ks_two_sample(z[0], z[1]).distance, std::nullopt,
               spec.threshold("max_ks"));

  // The branching sampler against direct walks at a small level.
  const std::uint64_t cn = spec.size("cross_n");
  const std::uint64_t creps = spec.size("cross_reps");
  const auto a = stats::passage_time_samples(law, cn, creps, streams.sub("cross-branching"),
                                             stats::PassageMethod::Branching, 100'000'000ULL,
                                             spec.workers);
  const auto b = stats::passage_time_samples(law, cn, creps, streams.sub("cross-walk"),
                                             stats::PassageMethod::Walk, 100'000'000ULL,
                                             spec.workers);
  const auto cross = stats::ks_two_sample(a.first, b.first);
  report.measure("sampler_ks", cross.distance);
  report.check("sampler_agreement_p", cross.p_value, spec.threshold("min_sampler_p"),
               std::nullopt);
}

void subballistic_growth(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr,
                         Report& report, Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const std::vector<std::uint64_t> levels = {spec.size("n1"), spec.size("n2"), spec.size("n3")};
  const auto fit = stats::growth_exponent_subballistic(
      law, levels, spec.size("reps"), rng::Streams(spec.seed, spec.id), spec.size("bootstrap_reps"),
      spec.workers);
  for (std::size_t i = 0; i < fit.levels.size(); ++i)
    sink.sample(row({{"n", fit.levels[i]},
                     {"median_X", fit.median_position[i]},
                     {"median_max", fit.median_max[i]}})
                    .dump());
  report.measure("delta", delta_of_law(law));
  report.measure("slope_stderr", fit.slope_stderr);
  report.measure("slope_max", fit.slope_max);
  report.measure("slope_max_stderr", fit.slope_max_stderr);
  report.measure("difference_stderr", fit.difference_stderr);
  report.check_range("slope", fit.slope, spec.threshold("slope_lo"), spec.threshold("slope_hi"));
  report.check("max_slope_z", std::abs(fit.slope_max - fit.slope) / fit.difference_stderr,
               std::nullopt, spec.threshold("max_joint_z"));
}

void hitting_probabilities(const ExperimentSpec& spec, const EnvironmentLaw*, Report& report,
                           Sink& sink) {
  const double delta = *spec.delta;
  const double y = spec.threshold("y");
  const double a = spec.threshold("a");
  const double b = spec.threshold("b");
  const std::uint64_t reps = spec.size("reps");
  const rng::Streams streams(spec.seed, spec.id);
  const double exact = diffusion::hitting_prob(y, a, b, delta);

  struct Estimate {
    double p = 0.0;
    double se = 0.0;
    std::size_t undecided = 0;
  };
  auto estimate = [&](double dt, const std::string& name) {
    auto config = diffusion::DiffusionConfig::defaults(delta, y);
    config.dt = dt;
    config.levels = {a, b};
    config.stop_at_level = true;
    const auto sub = streams.sub(name);
    // 0: a first, 1: b first, 2: neither before t_max
    const auto outcome = parallel_map(reps, spec.workers, [&](std::size_t r) {
      auto rng = sub.at(r);
      const auto res = diffusion::simulate_Y(config, rng);
      const auto& ha = res.level_hits[0];
      const auto& hb = res.level_hits[1];
      if (ha && (!hb || *ha <= *hb)) return std::pair<int, double>{0, *ha};
      if (hb) return std::pair<int, double>{1, *hb};
      return std::pair<int, double>{2, res.final_time};
    });
    Estimate e;
    std::size_t low = 0;
    for (std::size_t r = 0; r < outcome.size(); ++r) {
      const auto [o, t] = outcome[r];
      if (o == 0) ++low;
      if (o == 2) ++e.undecided;
      if (sink.enabled())
        sink.sample(row({{"rep", r},
                         {"seed", sub.token(r)},
                         {"dt", dt},
                         {"exit", o == 0 ? json(a) : o == 1 ? json(b) : json(nullptr)},
                         {"time", t}})
                        .dump());
    }
    const double decided = static_cast<double>(reps - e.undecided);
    e.p = static_cast<double>(low) / decided;
    e.se = std::sqrt(e.p * (1.0 - e.p) / decided);
    return e;
  };
  const double dt = diffusion::DiffusionConfig::defaults(delta, y).dt;
  const auto full = estimate(dt, "dt");
  const auto half = estimate(dt / 2.0, "half-dt");
  report.add_censored("dt", full.undecided);
  report.add_censored("half_dt", half.undecided);
  report.measure("exact", exact);
  report.measure("estimate", full.p);
  report.measure("stderr", full.se);
  report.measure("estimate_half_dt", half.p);
  report.measure("stderr_half_dt", half.se);
  report.check("abs_error", std::abs(full.p - exact), std::nullopt, spec.threshold("max_abs_error"));
  report.check("half_dt_shift_z", std::abs(full.p - half.p) / std::hypot(full.se, half.se),
               std::nullopt, spec.threshold("max_shift_z"));
}

void dump_paths(Sink& sink, const rng::Streams& streams, const diffusion::PathSample& paths,
                double y0) {
  if (!sink.enabled()) return;
  for (std::size_t r = 0; r < paths.tau0.size(); ++r)
    sink.sample(row({{"rep", r},
                     {"seed", streams.token(r)},
                     {"y0", y0},
                     {"tau0", paths.tau0[r] ? json(*paths.tau0[r]) : json(nullptr)},
                     {"censored", !paths.tau0[r].has_value()},
                     {"area", paths.area[r]},
                     {"level_hits", json::array()}})
                    .dump());
}

// Unit-start paths shared by the tail and scaling experiments.
constexpr const char* kUnitPathFamily = "AC10";

void diffusion_tails(const ExperimentSpec& spec, const EnvironmentLaw*, Report& report,
                     Sink& sink) {
  const double delta = *spec.delta;
  const rng::Streams streams(spec.seed, kUnitPathFamily);
  const auto paths = diffusion_paths(diffusion::DiffusionConfig::defaults(delta, 1.0),
                                     spec.size("reps"), streams, spec.workers);
  dump_paths(sink, streams, *paths, 1.0);
  report.add_censored("paths", paths->censored);
  report.measure("t_max", paths->t_max);
  for (auto f : {diffusion::Functional::Tau0, diffusion::Functional::Area}) {
    const std::string name = diffusion::to_string(f);
    stats::TailConfig config;
    config.lo = spec.threshold(name + "_fit_lo");
    config.hi = spec.threshold(name + "_fit_hi");
    const auto exp = diffusion::tail_experiment(paths->functional(f), f, config);
    const bool ok = report.check_range(name + "_exponent", exp.fit.exponent,
                                 spec.threshold(name + "_exponent_lo"),
                                 spec.threshold(name + "_exponent_hi"));
    note_fit(report, name, exp.fit, *config.hi);
    write_fit(sink, name, spec.id, exp.fit, ok);
    if (exp.censoring_flag) report.note(name + ": censoring above 1% of exceedances");
  }
}

void diffusion_scaling(const ExperimentSpec& spec, const EnvironmentLaw*, Report& report,
                       Sink& sink) {
  const double delta = *spec.delta;
  const double y = spec.threshold("y");
  const std::uint64_t reps = spec.size("reps");
  const rng::Streams scaled_streams(spec.seed, spec.id);
  const rng::Streams unit_streams(spec.seed, kUnitPathFamily);
  const auto scaled = diffusion_paths(diffusion::DiffusionConfig::defaults(delta, y), reps,
                                      scaled_streams, spec.workers);
  const auto unit = diffusion_paths(diffusion::DiffusionConfig::defaults(delta, 1.0), reps,
                                    unit_streams, spec.workers);
  dump_paths(sink, scaled_streams, *scaled, y);
  report.add_censored("scaled", scaled->censored);
  report.add_censored("unit", unit->censored);
  for (auto f : {diffusion::Functional::Tau0, diffusion::Functional::Area}) {
    const auto rep = diffusion::scaling_report(scaled->functional(f), unit->functional(f), y, f,
                                               spec.threshold("max_ks"));
    const std::string name = diffusion::to_string(f);
    report.measure(name + "_p_value", rep.p_value);
    report.check(name + "_ks", rep.ks_distance, std::nullopt, spec.threshold("max_ks"));
  }
}

void diffusion_approximation(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr,
                             Report& report, Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const double eps = spec.threshold("epsilon");
  const double y = spec.threshold("y");
  const std::uint64_t reps = spec.size("reps");
  const rng::Streams streams(spec.seed, spec.id);
  auto run = [&](std::uint64_t n) {
    const auto rep = stats::weakcon_check(law, eps, y, n, reps, streams,
                                          stats::WeakconFunctional::HittingTime, spec.workers);
    report.add_censored("branching_n=" + std::to_string(n), rep.censored_branching);
    report.add_censored("diffusion_n=" + std::to_string(n), rep.censored_diffusion);
    for (std::size_t r = 0; r < rep.branching.size() && sink.enabled(); ++r)
      sink.sample(row({{"n", n}, {"side", "branching"}, {"index", r},
                       {"value", rep.branching[r]}}).dump());
    return rep;
  };
  const std::uint64_t n_small = spec.size("n_small");
  const std::uint64_t n = spec.size("n");
  const auto small = run(n_small);
  const auto large = run(n);
  for (std::size_t r = 0; r < large.diffusion.size() && sink.enabled(); ++r)
    sink.sample(row({{"side", "diffusion"}, {"index", r}, {"value", large.diffusion[r]}}).dump());
  const double margin =
      spec.threshold("noise_coefficient") * std::sqrt(2.0 / static_cast<double>(reps));
  report.measure("delta", delta_of_law(law));
  report.measure("ks_n_small", small.ks_distance);
  report.measure("noise_margin", margin);
  report.check("ks", large.ks_distance, std::nullopt, spec.threshold("max_ks"));
  report.check("ks_excess_over_small_n", large.ks_distance - small.ks_distance, std::nullopt,
               margin);
}

void gaussian_regime(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                     Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const std::uint64_t n = spec.size("n");
  const rng::Streams streams(spec.seed, spec.id);
  const auto stop = walk::StopRule::for_steps(n);
  const auto positions = parallel_map(spec.size("reps"), spec.workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    return static_cast<double>(walk::simulate_walk(law, stop, rng).final_position);
  });
  for (std::size_t r = 0; r < positions.size() && sink.enabled(); ++r)
    sink.sample(row({{"rep", r}, {"seed", streams.token(r)}, {"n", n},
                     {"X_n", static_cast<std::int64_t>(positions[r])}})
                    .dump());
  const auto g = stats::gaussian_regime_check(positions, n, spec.threshold("max_ks"));
  report.measure("delta", delta_of_law(law));
  report.measure("speed", g.speed);
  report.measure("sd", g.sd);
  report.check("ks_normal", g.ks_distance, std::nullopt, spec.threshold("max_ks"));
}

void recurrence(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr, Report& report,
                Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  walk::StopRule stop;
  stop.horizon = spec.size("horizon");
  stop.stop_on_return = true;
  const rng::Streams streams(spec.seed, spec.id);
  const auto records = parallel_map(spec.size("reps"), spec.workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    auto rec = walk::simulate_walk(law, stop, rng);
    rec.seed = streams.token(r);
    return rec;
  });
  std::size_t returned = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].stop_reason == walk::StopReason::ReturnedToOrigin) ++returned;
    sink.sample(walk::to_jsonl(records[r], r));
  }
  report.measure("delta", delta_of_law(law));
  report.add_censored("no_return_within_horizon", records.size() - returned);
  report.check("return_fraction",
               static_cast<double>(returned) / static_cast<double>(records.size()),
               spec.threshold("min_return_fraction"), std::nullopt);
}

void boundary_diagnostic(const ExperimentSpec& spec, const EnvironmentLaw* law_ptr,
                         Report& report, Sink& sink) {
  const auto& law = need_law(law_ptr, spec);
  const double delta = delta_of_law(law);
  const rng::Streams streams(spec.seed, spec.id);
  const std::vector<std::uint64_t> levels = {spec.size("n"), spec.size("n2")};
  std::vector<double> sds;
  for (std::uint64_t n : levels) {
    const auto sub = streams.sub("n=" + std::to_string(n));
    auto [t, dropped] = stats::passage_time_samples(law, n, spec.size("reps"), sub,
                                                    stats::PassageMethod::Branching,
                                                    100'000'000ULL, spec.workers);
    report.add_censored("n=" + std::to_string(n), dropped);
    dump_passage_times(sink, sub, n, t);
    const double v = static_cast<double>(n) / stats::summarize(t).mean;
    const auto z = stats::normalize_passage_times(t, n, v, delta);
    const double sd = stats::summarize(z).sd;
    report.measure("speed_n=" + std::to_string(n), v);
    report.measure("sd_n=" + std::to_string(n), sd);
    sds.push_back(sd);
  }
  report.measure("delta", delta);
  const double ratio = std::max(sds[0], sds[1]) / std::min(sds[0], sds[1]);
  report.check("sd_ratio", ratio, std::nullopt, spec.threshold("max_sd_ratio"));
}

std::vector<Experiment> build_registry() {
  std::vector<Experiment> r;
  auto add = [&](ExperimentSpec spec, Body body) { r.push_back({std::move(spec), std::move(body)}); };

  add({.id = "AC1",
       .title = "drift identity of the immigrant block",
       .law_file = "drift_M3.json",
       .modules = {"branching"},
       .sizes = {{"reps", 1'000'000}, {"block", 1000}},
       .thresholds = {{"max_z", 4.0}}},
      drift_identity);
  add({.id = "AC2",
       .title = "one-step law of V against the exact pmf",
       .modules = {"branching", "stats"},
       .sizes = {{"reps", 1'000'000}, {"cells", 80}},
       .thresholds = {{"min_p", 1e-3}}},
      one_step_oracle);
  add({.id = "AC3",
       .title = "extinction-time tail exponent",
       .law_file = "L1.5.json",
       .modules = {"branching", "stats"},
       .sizes = {{"reps", 2'000'000}},
       .thresholds = {{"fit_lo", 30},
                      {"fit_hi", 3000},
                      {"exponent_lo", 1.2},
                      {"exponent_hi", 1.8},
                      {"max_censored_fraction", 1e-3}}},
      [](const ExperimentSpec& s, const EnvironmentLaw* l, Report& rep, Sink& k) {
        extinction_tail(s, l, rep, k, false);
      });
  add({.id = "AC4",
       .title = "total-progeny tail exponent",
       .law_file = "L1.5.json",
       .modules = {"branching", "stats"},
       .sizes = {{"reps", 2'000'000}},
       .thresholds = {{"fit_lo", 1e2},
                      {"fit_hi", 1e5},
                      {"exponent_lo", 0.60},
                      {"exponent_hi", 0.90},
                      {"max_censored_fraction", 1e-3}}},
      [](const ExperimentSpec& s, const EnvironmentLaw* l, Report& rep, Sink& k) {
        extinction_tail(s, l, rep, k, true);
      });
  add({.id = "AC5",
       .title = "reversed backtrack array against the branching chain",
       .law_file = "L1.5.json",
       .modules = {"walk", "branching"},
       .sizes = {{"reps", 100'000}, {"n", 20}},
       .thresholds = {{"max_ks", 0.01}}},
      reversed_identity);
  add({.id = "AC6",
       .title = "speed from positions against the renewal estimate",
       .law_file = "L2.4.json",
       .modules = {"walk", "branching"},
       .sizes = {{"reps", 100}, {"n", 1'000'000}, {"cycle_reps", 50'000'000}, {"placebo_reps", 100}},
       .thresholds = {{"max_relative_difference", 0.02}, {"max_placebo_z", 4.0}}},
      speed_cross_check);
  add({.id = "AC7",
       .title = "stable normalisation of first-passage times",
       .law_file = "L2.4.json",
       .modules = {"walk", "branching", "stats"},
       .sizes = {{"reps", 100'000},
                 {"n", 10'000},
                 {"n2", 40'000},
                 {"cross_n", 1000},
                 {"cross_reps", 20'000}},
       .thresholds = {{"fit_lo", 1.0},
                      {"fit_hi", 20.0},
                      {"exponent_lo", 0.9},
                      {"exponent_hi", 1.5},
                      {"max_ks", 0.05},
                      {"min_sampler_p", 1e-3}}},
      stable_normalization);
  add({.id = "AC8",
       .title = "sub-ballistic growth exponent",
       .law_file = "L1.5.json",
       .modules = {"walk", "stats"},
       .sizes = {{"reps", 10'000}, {"n1", 1000}, {"n2", 10'000}, {"n3", 100'000}, {"bootstrap_reps", 200}},
       .thresholds = {{"slope_lo", 0.70}, {"slope_hi", 0.80}, {"max_joint_z", 2.0}}},
      subballistic_growth);
  add({.id = "AC9",
       .title = "diffusion hitting probabilities",
       .delta = 2.5,
       .modules = {"diffusion"},
       .sizes = {{"reps", 100'000}},
       .thresholds = {{"y", 1.0}, {"a", 0.5}, {"b", 2.0}, {"max_abs_error", 0.01}, {"max_shift_z", 2.0}}},
      hitting_probabilities);
  add({.id = "AC10",
       .title = "diffusion absorption-time and area tails",
       .delta = 1.5,
       .modules = {"diffusion", "stats"},
       .sizes = {{"reps", 100'000}},
       .thresholds = {{"tau0_fit_lo", 3.0},
                      {"tau0_fit_hi", 100.0},
                      {"tau0_exponent_lo", 1.3},
                      {"tau0_exponent_hi", 1.7},
                      {"area_fit_lo", 2.0},
                      {"area_fit_hi", 30.0},
                      {"area_exponent_lo", 1.3},
                      {"area_exponent_hi", 1.7}}},
      diffusion_tails);
  add({.id = "AC11",
       .title = "diffusion scaling",
       .delta = 1.5,
       .modules = {"diffusion"},
       .sizes = {{"reps", 100'000}},
       .thresholds = {{"y", 4.0}, {"max_ks", 0.02}}},
      diffusion_scaling);
  add({.id = "AC12",
       .title = "diffusion approximation of the branching chain",
       .law_file = "L1.5.json",
       .modules = {"branching", "diffusion"},
       .sizes = {{"reps", 10'000}, {"n", 10'000}, {"n_small", 1000}},
       .thresholds = {{"y", 1.0}, {"epsilon", 0.1}, {"max_ks", 0.05}, {"noise_coefficient", 1.358}}},
      diffusion_approximation);
  add({.id = "AC13",
       .title = "Gaussian fluctuations of the position",
       .law_file = "L4.5.json",
       .modules = {"walk", "stats"},
       .sizes = {{"reps", 10'000}, {"n", 100'000}},
       .thresholds = {{"max_ks", 0.02}}},
      gaussian_regime);
  add({.id = "AC14",
       .title = "recurrence: returns to the origin",
       .law_file = "recurrent_0.5.json",
       .modules = {"walk"},
       .sizes = {{"reps", 10'000}, {"horizon", 1'000'000}},
       .thresholds = {{"min_return_fraction", 0.95}}},
      recurrence);
  add({.id = "AC15",
       .title = "boundary normalisation",
       .law_file = "L4.0.json",
       .modules = {"walk", "branching", "stats"},
       .sizes = {{"reps", 10'000}, {"n", 10'000}, {"n2", 100'000}},
       .thresholds = {{"max_sd_ratio", 1.5}},
       .gating = false},
      boundary_diagnostic);
  return r;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_sample_size(const std::string& key) {
  return key == "reps" || (key.size() > 5 && key.ends_with("_reps"));
}

} // namespace

const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> r = build_registry();
  return r;
}

const Experiment* find(const std::string& id) {
  const auto& r = registry();
  const auto it = std::find_if(r.begin(), r.end(),
                               [&](const Experiment& e) { return lower(e.spec.id) == lower(id); });
  return it == r.end() ? nullptr : &*it;
}

std::string listing() {
  std::ostringstream out;
  for (const auto& e : registry()) {
    out << std::left << std::setw(6) << e.spec.id << e.spec.title;
    if (!e.spec.gating) out << " [diagnostic]";
    out << '\n';
  }
  return out.str();
}

ExperimentSpec configure(const ExperimentSpec& spec, const Options& options) {
  ExperimentSpec s = spec;
  if (options.seed) s.seed = *options.seed;
  if (options.workers) s.workers = *options.workers;
  if (!(options.scale > 0.0)) throw UsageError("scale must be positive");
  if (options.scale != 1.0)
    for (auto& [key, n] : s.sizes)
      if (is_sample_size(key))
        n = std::max<std::uint64_t>(
            1, static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * options.scale)));
  if (options.reps && s.sizes.count("reps")) s.sizes["reps"] = *options.reps;
  for (const auto& [key, v] : options.threshold_overrides)
    if (s.thresholds.count(key)) s.thresholds[key] = v;
  return s;
}

Report run_experiment(const Experiment& experiment, const Options& options) {
  const ExperimentSpec spec = configure(experiment.spec, options);
  const auto law_dir = options.law_dir.empty() ? default_law_dir() : options.law_dir;
  spec.validate(law_dir);

  std::optional<EnvironmentLaw> law;
  if (options.law_override)
    law = EnvironmentLaw::from_file(options.law_override->string());
  else if (!spec.law_file.empty())
    law = load_law(law_dir, spec.law_file);

  Report report(spec.id, spec.seed, spec.workers, spec.gating);
  Sink sink = options.write_files ? Sink(options.out_dir / spec.id) : Sink();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    experiment.body(spec, law ? &*law : nullptr, report, sink);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    report.error = e.what();
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (sink.enabled()) {
    std::ofstream(sink.dir() / "report.json", std::ios::trunc) << report.to_json() << '\n';
    json timing{{"experiment", spec.id}, {"runtime_seconds", report.runtime_seconds}};
    std::ofstream(sink.dir() / "timing.json", std::ios::trunc) << timing.dump(2) << '\n';
  }
  return report;
}

Report run_experiment(const std::string& id, const Options& options) {
  const Experiment* e = find(id);
  if (!e) throw UsageError("unknown experiment '" + id + "'; registered:\n" + listing());
  return run_experiment(*e, options);
}

int Summary::exit_code() const {
  for (const auto& r : reports)
    if (r.gating() && !r.pass()) return 1;
  return 0;
}

std::string verdict_line(const Report& report) {
  std::ostringstream out;
  out << std::left << std::setw(6) << report.id() << (report.pass() ? "PASS" : "FAIL");
  if (!report.gating()) out << " (diagnostic)";
  out << std::setprecision(4);
  if (report.error) out << "  error: " << *report.error;
  for (const auto& c : report.checks()) {
    out << "  " << c.name << '=' << c.value;
    if (c.lo && c.hi)
      out << " in [" << *c.lo << ", " << *c.hi << (c.closed ? ']' : ')');
    else if (c.lo)
      out << " >= " << *c.lo;
    else if (c.hi)
      out << " < " << *c.hi;
    if (!c.pass) out << " [x]";
  }
  return out.str();
}

std::string Summary::table() const {
  std::ostringstream out;
  out << std::left << std::setw(6) << "id" << std::setw(8) << "result" << std::setw(10) << "seconds"
      << "checks\n";
  for (const auto& r : reports) {
    std::size_t passed = 0;
    for (const auto& c : r.checks()) passed += c.pass ? 1 : 0;
    out << std::setw(6) << r.id() << std::setw(8)
        << (r.pass() ? "PASS" : r.gating() ? "FAIL" : "FAIL*") << std::setw(10)
        << std::fixed << std::setprecision(1) << r.runtime_seconds << passed << '/'
        << r.checks().size() << '\n';
  }
  out << reports.size() << " experiments, exit " << exit_code() << '\n';
  return out.str();
}

Summary verify_all(const std::vector<Experiment>& experiments,
                   const std::optional<std::string>& filter, const Options& options,
                   const std::function<void(const Report&)>& progress) {
  Summary summary;
  for (const auto& e : experiments) {
    if (filter && !filter->empty()) {
      const auto f = lower(*filter);
      const bool id_match = lower(e.spec.id) == f;
      const bool module_match = std::any_of(e.spec.modules.begin(), e.spec.modules.end(),
                                            [&](const std::string& m) { return lower(m) == f; });
      if (!id_match && !module_match) continue;
    }
    Report report;
    try {
      report = run_experiment(e, options);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& ex) {
      report = Report(e.spec.id, e.spec.seed, e.spec.workers, e.spec.gating);
      report.error = ex.what();
    }
    if (progress) progress(report);
    summary.reports.push_back(std::move(report));
  }
  return summary;
}

Summary verify_all(const std::optional<std::string>& filter, const Options& options,
                   const std::function<void(const Report&)>& progress) {
  return verify_all(registry(), filter, options, progress);
}

} // namespace erw::harness
