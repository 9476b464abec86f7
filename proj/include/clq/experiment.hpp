#pragma once

// Batch experiments: config parsing, the seed fan-out, aggregation and the
// verification suite used by the command-line tool.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "clq/engine.hpp"
#include "clq/errors.hpp"
#include "clq/instances.hpp"
#include "clq/io.hpp"
#include "clq/metrics.hpp"
#include "clq/policy.hpp"
#include "clq/slackness.hpp"
#include "clq/stats.hpp"

namespace clq {

inline constexpr const char* kVersion = "0.1.0";

struct CouplingTest {
  std::size_t seeds = 10000;
  std::size_t horizon = 5;
  std::string policy = "ucb";
};

struct ExperimentConfig {
  json instance;  // string path (already resolved) or family object
  std::vector<std::string> policies;
  std::size_t horizon = 0;
  std::vector<std::uint64_t> seeds;
  std::size_t snapshot_stride = 0;
  std::string output_dir = "out";
  std::optional<std::string> benchmark;
  bool write_traces = true;
  std::vector<std::string> traces;  // extra trace files to replay in verify
  std::optional<CouplingTest> coupling;
  json source;  // the config document as given
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path.string() : (base / path).lexically_normal().string();
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  ExperimentConfig c;
  c.source = j;
  if (!j.contains("instance")) throw ParseError("missing field 'instance'");
  c.instance = j.at("instance");
  if (c.instance.is_string()) {
    c.instance = detail::resolve_path(c.instance.get<std::string>(), base_dir);
  } else if (!c.instance.is_object()) {
    throw ParseError("instance must be a path or a family object");
  }
  c.policies = detail::get_field<std::vector<std::string>>(j, "policies");
  if (c.policies.empty()) throw ParseError("at least one policy is required");
  for (const auto& p : c.policies) make_policy(p, std::vector<double>{});
  c.horizon = detail::get_field<std::size_t>(j, "horizon");
  if (c.horizon == 0) throw ParseError("horizon must be at least 1");
  if (j.contains("seeds")) {
    c.seeds = detail::get_field<std::vector<std::uint64_t>>(j, "seeds");
  } else {
    const auto base = j.contains("base_seed") ? detail::get_field<std::uint64_t>(j, "base_seed") : 0;
    const auto count = detail::get_field<std::size_t>(j, "seed_count");
    for (std::size_t i = 0; i < count; ++i) c.seeds.push_back(base + i);
  }
  if (c.seeds.empty()) throw ParseError("at least one seed is required");
  if (j.contains("snapshot_stride")) c.snapshot_stride = detail::get_field<std::size_t>(j, "snapshot_stride");
  if (j.contains("output_dir")) c.output_dir = detail::resolve_path(detail::get_field<std::string>(j, "output_dir"), base_dir);
  if (j.contains("benchmark") && !j.at("benchmark").is_null()) {
    c.benchmark = detail::get_field<std::string>(j, "benchmark");
    make_policy(*c.benchmark, std::vector<double>{});
  }
  if (j.contains("write_traces")) c.write_traces = detail::get_field<bool>(j, "write_traces");
  if (j.contains("traces")) {
    for (const auto& p : detail::get_field<std::vector<std::string>>(j, "traces")) {
      c.traces.push_back(detail::resolve_path(p, base_dir));
    }
  }
  if (j.contains("coupling_test")) {
    const auto& ct = j.at("coupling_test");
    CouplingTest t;
    if (ct.contains("seeds")) t.seeds = detail::get_field<std::size_t>(ct, "seeds");
    if (ct.contains("horizon")) t.horizon = detail::get_field<std::size_t>(ct, "horizon");
    if (ct.contains("policy")) t.policy = detail::get_field<std::string>(ct, "policy");
    if (t.seeds < 2 || t.horizon == 0) throw ParseError("coupling_test needs seeds >= 2 and horizon >= 1");
    c.coupling = t;
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

/// The instances an experiment runs on. The lower-bound family without a
/// chosen member expands to all K members; their runs are pooled.
struct ResolvedInstances {
  std::vector<InstanceDocument> members;
  bool family_average = false;
};

inline InstanceDocument single_document(const SingleQueueInstance& s) {
  InstanceDocument d;
  d.kind = InstanceKind::single;
  d.single = s;
  d.network = embed(s);
  return d;
}

inline InstanceDocument network_document(NetworkInstance net) {
  InstanceDocument d;
  d.kind = net.exit_only() ? InstanceKind::multi : InstanceKind::network;
  d.network = std::move(net);
  return d;
}

inline ResolvedInstances resolve_instances(const json& spec) {
  ResolvedInstances r;
  if (spec.is_string()) {
    r.members.push_back(load_instance(spec.get<std::string>()));
    return r;
  }
  const auto family = detail::get_field<std::string>(spec, "family");
  if (family == "figure1") {
    r.members.push_back(single_document(figure1_instance()));
  } else if (family == "lower_bound") {
    const auto f = lower_bound_family(detail::get_field<std::size_t>(spec, "k"), detail::get_field<double>(spec, "epsilon"));
    if (spec.contains("uniform") && spec.at("uniform").get<bool>()) {
      r.members.push_back(single_document(f.uniform));
    } else if (spec.contains("member")) {
      const auto m = detail::get_field<std::size_t>(spec, "member");
      if (m >= f.members.size()) throw ParameterError("member index out of range");
      r.members.push_back(single_document(f.members[m]));
    } else {
      for (const auto& m : f.members) r.members.push_back(single_document(m));
      r.family_average = true;
    }
  } else if (family == "tandem") {
    r.members.push_back(network_document(tandem_instance(detail::get_field<std::size_t>(spec, "n"),
                                                         detail::get_field<std::vector<double>>(spec, "mu"),
                                                         detail::get_field<double>(spec, "lambda0"))));
  } else if (family == "random") {
    const auto kind = parse_random_kind(detail::get_field<std::string>(spec, "kind"));
    auto net = random_with_slackness(spec.contains("n") ? detail::get_field<std::size_t>(spec, "n") : 1,
                                     detail::get_field<std::size_t>(spec, "k"),
                                     detail::get_field<double>(spec, "epsilon"),
                                     detail::get_field<std::uint64_t>(spec, "seed"), kind);
    if (kind == RandomKind::single) {
      r.members.push_back(single_document(SingleQueueInstance{net.lambda()[0], net.mu}));
    } else {
      InstanceDocument d = network_document(std::move(net));
      d.kind = kind == RandomKind::multi ? InstanceKind::multi : InstanceKind::network;
      r.members.push_back(std::move(d));
    }
  } else {
    throw ParseError("unknown instance family '" + family + "'");
  }
  return r;
}

/// One failed check with enough context to find the offending period.
struct Failure {
  std::string check;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t member = 0;
  std::size_t period = 0;
  std::string detail;
};

inline std::string describe(const Failure& f, bool with_member) {
  std::ostringstream os;
  os << f.check << " failed: policy=" << f.policy << " seed=" << f.seed;
  if (with_member) os << " member=" << f.member;
  os << " t=" << f.period;
  if (!f.detail.empty()) os << " (" << f.detail << ")";
  return os.str();
}

struct BatchOptions {
  bool verify = false;
  bool compute_sar = true;
  std::optional<std::string> trace_dir;  // write trace CSVs here when set
  std::size_t workers = 0;               // 0: CLQ_WORKERS or hardware concurrency
};

struct BatchResult {
  std::vector<std::string> policies;
  std::vector<MetricSeries> series;  // parallel to policies
  std::vector<Failure> failures;
  std::size_t traces = 0;
  std::vector<double> epsilon;  // slackness per member
};

inline std::size_t worker_count(std::size_t requested, std::size_t items) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("CLQ_WORKERS")) {
      try {
        n = static_cast<std::size_t>(std::stoul(env));
      } catch (const std::exception&) {
        n = 0;
      }
    }
  }
  if (n == 0) n = std::max(1U, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, items));
}

inline std::string file_safe(std::string s) {
  for (auto& ch : s) {
    if (ch == ':' || ch == '/' || ch == ' ') ch = '-';
  }
  return s;
}

namespace detail {

struct ItemResult {
  std::vector<TraceSummary> summaries;  // per policy
  std::vector<Failure> failures;
};

inline Trace run_member(const InstanceDocument& doc, const std::string& policy_name, std::size_t horizon,
                        std::uint64_t seed, const RunOptions& options) {
  if (doc.single) {
    auto policy = make_policy(policy_name, *doc.single);
    return run_single(*doc.single, *policy, horizon, seed, options);
  }
  auto policy = make_policy(policy_name, doc.network);
  return run_network(doc.network, *policy, horizon, seed, options);
}

inline void verify_trace(const Trace& trace, const InstanceDocument& doc, Failure base, std::vector<Failure>& out) {
  if (auto m = replay_check(trace, doc.network.server_queue)) {
    base.check = "replay";
    base.period = m->period;
    base.detail = m->detail;
    out.push_back(base);
  }
  const auto report = lyapunov_report(trace, doc.network);
  for (const auto& c : report.checks) {
    if (c.pass) continue;
    Failure f = base;
    f.check = c.name;
    f.period = c.first_failure;
    std::ostringstream os;
    os << "margin " << format_double(c.margin);
    f.detail = os.str();
    out.push_back(f);
  }
}

}  // namespace detail

/// Runs every policy on every (member, seed) pair. Work items are seeds (times
/// members); results are folded into the accumulators strictly in item order,
/// so output does not depend on the worker count.
inline BatchResult run_batch(const ResolvedInstances& inst, const std::vector<std::string>& policies,
                             std::size_t horizon, const std::vector<std::uint64_t>& seeds, std::size_t snapshot_stride,
                             const BatchOptions& options = {}) {
  if (inst.members.empty()) throw EmptyInput("no instances");
  if (seeds.empty()) throw EmptyInput("no seeds");
  BatchResult result;
  result.policies = policies;
  for (const auto& m : inst.members) {
    const auto v = m.violations();
    if (!v.empty()) throw InvalidInstance("invalid instance: " + v.front());
    result.epsilon.push_back(m.single ? slackness_single(*m.single) : traffic_slackness(m.network).epsilon);
  }

  const std::size_t P = policies.size();
  const std::size_t items = inst.members.size() * seeds.size();
  const std::size_t workers = worker_count(options.workers, items);
  std::vector<SeriesAccumulator> acc(P, SeriesAccumulator(horizon));

  RunOptions run_options;
  run_options.snapshot_stride = snapshot_stride;

  std::mutex merge_mutex, write_mutex;
  std::condition_variable merged;
  std::map<std::size_t, detail::ItemResult> pending;
  std::size_t next_merge = 0;
  std::atomic<std::size_t> next_item{0};
  std::optional<std::string> error;
  const std::size_t window = 2 * workers;

  auto compute = [&](std::size_t item) {
    const std::size_t member = item / seeds.size();
    const std::uint64_t seed = seeds[item % seeds.size()];
    const auto& doc = inst.members[member];
    const double eps = result.epsilon[member];
    detail::ItemResult out;
    for (const auto& name : policies) {
      Trace trace;
      try {
        trace = detail::run_member(doc, name, horizon, seed, run_options);
      } catch (const Error& e) {
        throw Error("policy " + name + ", seed " + std::to_string(seed) + ": " + e.what());
      }
      TraceSummary s = queue_summary(trace);
      const bool networked = !doc.network.exit_only();
      s.delta = delta_series(trace, doc.network, networked);
      if (options.compute_sar && eps > 0.0) {
        s.sar = doc.single ? sar_single(trace, *doc.single, eps) : sar_multi(trace, doc.network, eps, networked);
      }
      if (options.verify) {
        Failure base;
        base.policy = name;
        base.seed = seed;
        base.member = member;
        detail::verify_trace(trace, doc, base, out.failures);
      }
      if (options.trace_dir) {
        std::string file = file_safe(name);
        if (inst.members.size() > 1) file += "_m" + std::to_string(member);
        file += "_s" + std::to_string(seed) + ".csv";
        std::ostringstream buffer;
        write_trace_csv(buffer, trace);
        const std::lock_guard lock(write_mutex);
        std::ofstream f(std::filesystem::path(*options.trace_dir) / file, std::ios::binary);
        f << buffer.str();
        if (!f) throw Error("cannot write trace " + file);
      }
      out.summaries.push_back(std::move(s));
    }
    return out;
  };

  auto worker = [&] {
    for (;;) {
      const std::size_t item = next_item.fetch_add(1);
      if (item >= items) return;
      {
        std::unique_lock lock(merge_mutex);
        merged.wait(lock, [&] { return item < next_merge + window || error.has_value(); });
        if (error) return;
      }
      detail::ItemResult r;
      try {
        r = compute(item);
      } catch (const std::exception& e) {
        const std::lock_guard lock(merge_mutex);
        if (!error) error = e.what();
        merged.notify_all();
        return;
      }
      const std::lock_guard lock(merge_mutex);
      pending.emplace(item, std::move(r));
      while (!pending.empty() && pending.begin()->first == next_merge) {
        auto& ready = pending.begin()->second;
        for (std::size_t p = 0; p < P; ++p) acc[p].add(ready.summaries[p]);
        result.failures.insert(result.failures.end(), ready.failures.begin(), ready.failures.end());
        result.traces += P;
        pending.erase(pending.begin());
        ++next_merge;
      }
      merged.notify_all();
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) throw Error(*error);
  for (auto& a : acc) result.series.push_back(a.finish());
  return result;
}

inline std::vector<std::string> with_benchmark(const ExperimentConfig& c) {
  auto p = c.policies;
  if (c.benchmark && std::find(p.begin(), p.end(), *c.benchmark) == p.end()) p.push_back(*c.benchmark);
  return p;
}

/// FNV-1a over the canonical dump of the config document.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xF];
  return out;
}

inline json manifest(const ExperimentConfig& c, const ResolvedInstances& inst, const std::vector<std::string>& policies) {
  json instances = json::array();
  for (const auto& m : inst.members) instances.push_back(to_json(m));
  return json{{"version", kVersion},
              {"config_hash", config_hash(c.source)},
              {"config", c.source},
              {"policies", policies},
              {"seeds", c.seeds},
              {"horizon", c.horizon},
              {"snapshot_stride", c.snapshot_stride},
              {"family_average", inst.family_average},
              {"instances", instances}};
}

struct SimulateOutput {
  BatchResult batch;
  std::filesystem::path dir;
};

/// Writes series_<policy>.csv, queue_<policy>.csv, manifest.json and, when
/// enabled, traces/<policy>_s<seed>.csv under the output directory.
inline SimulateOutput simulate(const ExperimentConfig& c) {
  const auto inst = resolve_instances(c.instance);
  const auto policies = with_benchmark(c);
  SimulateOutput out;
  out.dir = c.output_dir;
  std::filesystem::create_directories(out.dir);
  BatchOptions options;
  if (c.write_traces) {
    std::filesystem::create_directories(out.dir / "traces");
    options.trace_dir = (out.dir / "traces").string();
  }
  out.batch = run_batch(inst, policies, c.horizon, c.seeds, c.snapshot_stride, options);
  const MetricSeries* bench = nullptr;
  if (c.benchmark) {
    const auto it = std::find(policies.begin(), policies.end(), *c.benchmark);
    bench = &out.batch.series[static_cast<std::size_t>(it - policies.begin())];
  }
  for (std::size_t p = 0; p < policies.size(); ++p) {
    std::ofstream s(out.dir / ("series_" + file_safe(policies[p]) + ".csv"), std::ios::binary);
    write_series_csv(s, out.batch.series[p], bench);
    std::ofstream q(out.dir / ("queue_" + file_safe(policies[p]) + ".csv"), std::ios::binary);
    write_queue_csv(q, out.batch.series[p]);
  }
  std::ofstream m(out.dir / "manifest.json", std::ios::binary);
  m << manifest(c, inst, policies).dump(2) << '\n';
  return out;
}

struct ClqRow {
  std::string policy;
  ClqEstimate estimate;
};

struct ClqReport {
  std::vector<ClqRow> rows;
  std::optional<std::string> benchmark;
  double epsilon = 0.0;  // slackness (members share it in the family protocol)
  std::optional<TheoremBounds> bounds;
  bool family_average = false;
  std::size_t members = 1;
};

inline ClqReport clq_report(const ExperimentConfig& c) {
  const auto inst = resolve_instances(c.instance);
  const auto policies = with_benchmark(c);
  BatchOptions options;
  options.compute_sar = false;
  const auto batch = run_batch(inst, policies, c.horizon, c.seeds, c.snapshot_stride, options);
  ClqReport r;
  r.benchmark = c.benchmark;
  r.family_average = inst.family_average;
  r.members = inst.members.size();
  r.epsilon = *std::min_element(batch.epsilon.begin(), batch.epsilon.end());
  const MetricSeries* bench = nullptr;
  if (c.benchmark) {
    const auto it = std::find(policies.begin(), policies.end(), *c.benchmark);
    bench = &batch.series[static_cast<std::size_t>(it - policies.begin())];
  }
  for (std::size_t p = 0; p < policies.size(); ++p) {
    r.rows.push_back(ClqRow{policies[p], clq_estimate(batch.series[p], bench)});
  }
  if (r.epsilon > 0.0) {
    const auto& doc = inst.members.front();
    r.bounds = doc.single ? theorem_bounds(*doc.single, r.epsilon) : theorem_bounds(doc.network, r.epsilon);
  }
  return r;
}

inline json to_json(const ClqReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back(json{{"policy", row.policy},
                        {"clq", row.estimate.value},
                        {"se", row.estimate.se},
                        {"peak_horizon", row.estimate.peak_horizon},
                        {"late_peak", row.estimate.late_peak}});
  }
  json j{{"rows", rows},
         {"benchmark", r.benchmark ? json(*r.benchmark) : json(nullptr)},
         {"epsilon", r.epsilon},
         {"family_average", r.family_average},
         {"members", r.members}};
  if (r.bounds) {
    j["bounds"] = json{{"ucb_clq_upper", r.bounds->ucb_clq_upper},
                       {"mw_clq_upper", r.bounds->mw_clq_upper},
                       {"bp_clq_upper", r.bounds->bp_clq_upper},
                       {"single_lower", r.bounds->single_lower ? json(*r.bounds->single_lower) : json(nullptr)},
                       {"optimal_avg_upper",
                        r.bounds->optimal_avg_upper ? json(*r.bounds->optimal_avg_upper) : json(nullptr)}};
  }
  return j;
}

struct CouplingResult {
  ChiSquareResult test;
  std::vector<std::uint64_t> shared, independent;  // histograms of ||Q(T)||_1
  bool pass = false;
};

/// Compares the law of Q(T) under shared-uniform and independent service
/// draws. The two arms use disjoint seed ranges.
inline CouplingResult coupling_check(const SingleQueueInstance& inst, const std::string& policy_name,
                                     std::size_t seeds, std::size_t horizon, double alpha = 0.001) {
  CouplingResult r;
  r.shared.assign(horizon + 1, 0);
  r.independent.assign(horizon + 1, 0);
  RunOptions shared, indep;
  shared.snapshot_stride = indep.snapshot_stride = 0;
  indep.coupling = ServiceCoupling::independent;
  const std::uint64_t offset = 1ULL << 40;
  for (std::size_t s = 0; s < seeds; ++s) {
    auto p1 = make_policy(policy_name, inst);
    const auto a = run_single(inst, *p1, horizon, s, shared);
    ++r.shared[static_cast<std::size_t>(a.total_queue(horizon + 1))];
    auto p2 = make_policy(policy_name, inst);
    const auto b = run_single(inst, *p2, horizon, offset + s, indep);
    ++r.independent[static_cast<std::size_t>(b.total_queue(horizon + 1))];
  }
  r.test = chi_square_homogeneity(r.shared, r.independent);
  r.pass = r.test.p_value > alpha;
  return r;
}

struct VerifyReport {
  std::size_t traces = 0;
  std::vector<Failure> failures;
  std::optional<CouplingResult> coupling;
  std::size_t replayed_files = 0;
  bool family = false;

  bool pass() const { return failures.empty() && (!coupling || coupling->pass); }
};

inline VerifyReport verify(const ExperimentConfig& c) {
  const auto inst = resolve_instances(c.instance);
  BatchOptions options;
  options.verify = true;
  const auto batch = run_batch(inst, with_benchmark(c), c.horizon, c.seeds, c.snapshot_stride, options);
  VerifyReport r;
  r.family = inst.members.size() > 1;
  r.traces = batch.traces;
  r.failures = batch.failures;
  const auto& doc = inst.members.front();
  for (const auto& path : c.traces) {
    Failure base;
    base.policy = "file:" + path;
    std::ifstream in(path);
    if (!in) {
      base.check = "replay";
      base.detail = "cannot open trace file";
      r.failures.push_back(base);
      continue;
    }
    try {
      const auto trace = read_trace_csv(in, doc.network.server_count);
      detail::verify_trace(trace, doc, base, r.failures);
    } catch (const ParseError& e) {
      base.check = "replay";
      base.detail = e.what();
      r.failures.push_back(base);
    }
    ++r.replayed_files;
  }
  if (c.coupling) {
    if (!doc.single) throw ParameterError("coupling_test needs a single-queue instance");
    r.coupling = coupling_check(*doc.single, c.coupling->policy, c.coupling->seeds, c.coupling->horizon);
  }
  return r;
}

}  // namespace clq
