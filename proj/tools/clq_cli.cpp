// clq: command-line driver for slackness, simulation, CLQ estimation and
// invariant verification.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clq/clq.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUnstable = 2;
constexpr int kExitInvariant = 3;

int cmd_slackness(const std::string& path) {
  clq::InstanceDocument doc;
  try {
    doc = clq::load_instance(path);
  } catch (const clq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  const auto violations = doc.violations();
  if (!violations.empty()) {
    std::cerr << "invalid instance:\n";
    for (const auto& v : violations) std::cerr << "  - " << v << '\n';
    return kExitError;
  }
  const auto r = clq::traffic_slackness(doc.network);
  std::cout << "epsilon: " << clq::format_double(r.epsilon) << '\n';
  std::cout << "witness:\n";
  for (std::size_t i = 0; i < r.witness.size(); ++i) {
    if (r.witness[i] <= 1e-12) continue;
    std::cout << "  " << clq::detail::describe(doc.network.schedules[i]) << "  " << clq::format_double(r.witness[i]) << '\n';
  }
  std::cout << "stabilizable: " << (r.stabilizable() ? "yes" : "no") << '\n';
  return r.stabilizable() ? kExitOk : kExitUnstable;
}

int cmd_simulate(const std::string& config_path) {
  const auto config = clq::load_config(config_path);
  const auto out = clq::simulate(config);
  std::cout << "wrote " << out.batch.policies.size() << " series and " << (config.write_traces ? out.batch.traces : 0)
            << " traces to " << out.dir.string() << '\n';
  return kExitOk;
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

int cmd_clq(const std::string& config_path) {
  const auto config = clq::load_config(config_path);
  const auto report = clq::clq_report(config);
  std::cout << "benchmark: " << (report.benchmark ? *report.benchmark : std::string("zero")) << '\n';
  if (report.family_average) {
    std::cout << "lower-bound family: averaged over " << report.members << " members\n";
  }
  std::cout << "epsilon: " << clq::format_double(report.epsilon) << "\n\n";
  std::cout << std::left << std::setw(14) << "policy" << std::setw(14) << "CLQ" << std::setw(14) << "+-3SE"
            << std::setw(10) << "T*" << "note\n";
  for (const auto& row : report.rows) {
    std::cout << std::setw(14) << row.policy << std::setw(14) << fmt(row.estimate.value) << std::setw(14)
              << fmt(3.0 * row.estimate.se) << std::setw(10) << row.estimate.peak_horizon
              << (row.estimate.late_peak ? "late peak: horizon may be too short" : "") << '\n';
  }
  std::cout << '\n';
  if (report.bounds) {
    const auto& b = *report.bounds;
    std::cout << "theorem bounds\n";
    std::cout << "  ucb_clq_upper      " << fmt(b.ucb_clq_upper, 6) << '\n';
    std::cout << "  mw_clq_upper       " << fmt(b.mw_clq_upper, 6) << '\n';
    std::cout << "  bp_clq_upper       " << fmt(b.bp_clq_upper, 6) << '\n';
    std::cout << "  single_lower       " << (b.single_lower ? fmt(*b.single_lower, 6) : "n/a (needs K >= 16384)") << '\n';
    if (b.optimal_avg_upper) std::cout << "  optimal_avg_upper  " << fmt(*b.optimal_avg_upper, 6) << '\n';
  } else {
    std::cout << "theorem bounds: n/a (instance not stabilizable)\n";
  }
  std::filesystem::create_directories(config.output_dir);
  std::ofstream j(std::filesystem::path(config.output_dir) / "clq_report.json", std::ios::binary);
  j << clq::to_json(report).dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(const std::string& config_path) {
  const auto config = clq::load_config(config_path);
  const auto report = clq::verify(config);
  std::cout << "checked " << report.traces << " traces";
  if (report.replayed_files) std::cout << " and " << report.replayed_files << " trace files";
  std::cout << '\n';
  for (const auto& f : report.failures) std::cout << "FAIL " << clq::describe(f, report.family) << '\n';
  if (report.coupling) {
    const auto& c = *report.coupling;
    std::cout << (c.pass ? "PASS" : "FAIL") << " coupling: chi2=" << fmt(c.test.statistic) << " dof=" << c.test.dof
              << " p=" << fmt(c.test.p_value) << '\n';
  }
  if (!report.pass()) return kExitInvariant;
  std::cout << "all checks passed\n";
  return kExitOk;
}

struct MakeArgs {
  std::string family;
  std::size_t k = 5;
  std::size_t n = 1;
  double epsilon = 0.1;
  std::uint64_t seed = 0;
  std::string kind = "multi";
  std::vector<double> mu;
  double lambda0 = 0.4;
  std::optional<std::size_t> member;
  bool uniform = false;
  std::string output;
};

int cmd_make_instance(const MakeArgs& a) {
  clq::json doc;
  if (a.family == "figure1") {
    doc = clq::to_json(clq::figure1_instance());
  } else if (a.family == "lower_bound") {
    const auto f = clq::lower_bound_family(a.k, a.epsilon);
    if (a.uniform) {
      doc = clq::to_json(f.uniform);
    } else {
      if (!a.member) throw clq::ParameterError("lower_bound needs --member or --uniform");
      if (*a.member >= f.members.size()) throw clq::ParameterError("member index out of range");
      doc = clq::to_json(f.members[*a.member]);
    }
  } else if (a.family == "tandem") {
    doc = clq::to_json(clq::tandem_instance(a.n, a.mu, a.lambda0), clq::InstanceKind::network);
  } else if (a.family == "random") {
    const auto kind = clq::parse_random_kind(a.kind);
    const auto net = clq::random_with_slackness(a.n, a.k, a.epsilon, a.seed, kind);
    if (kind == clq::RandomKind::single) {
      doc = clq::to_json(clq::SingleQueueInstance{net.lambda()[0], net.mu});
    } else {
      doc = clq::to_json(net, kind == clq::RandomKind::multi ? clq::InstanceKind::multi : clq::InstanceKind::network);
    }
  } else {
    throw clq::ParseError("unknown family '" + a.family + "'");
  }
  const std::string text = doc.dump(2) + "\n";
  if (a.output.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(a.output, std::ios::binary);
    f << text;
    if (!f) throw clq::Error("cannot write " + a.output);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queueing-bandit simulator: slackness, simulation, CLQ estimates, invariant checks"};
  app.require_subcommand(1);

  std::string instance_path;
  auto* slack = app.add_subcommand("slackness", "Traffic slackness of an instance file");
  slack->add_option("file", instance_path, "Instance JSON")->required();

  std::string config_path;
  auto* sim = app.add_subcommand("simulate", "Run all (policy, seed) pairs and write CSV output");
  sim->add_option("-c,--config", config_path, "Experiment config JSON")->required();
  auto* clq_cmd = app.add_subcommand("clq", "Estimate the cost of learning in queueing");
  clq_cmd->add_option("-c,--config", config_path, "Experiment config JSON")->required();
  auto* ver = app.add_subcommand("verify", "Run the sample-path invariant suite");
  ver->add_option("-c,--config", config_path, "Experiment config JSON")->required();

  MakeArgs make;
  auto* mk = app.add_subcommand("make-instance", "Write an instance from a named family");
  mk->add_option("family", make.family, "figure1 | lower_bound | tandem | random")->required();
  mk->add_option("--k", make.k, "Number of servers");
  mk->add_option("--n", make.n, "Number of queues");
  mk->add_option("--epsilon", make.epsilon, "Slackness parameter");
  mk->add_option("--seed", make.seed, "Generator seed");
  mk->add_option("--kind", make.kind, "single | multi | network (random family)");
  mk->add_option("--mu", make.mu, "Service rates (tandem)")->delimiter(',');
  mk->add_option("--lambda0", make.lambda0, "Arrival rate into queue 0 (tandem)");
  mk->add_option("--member", make.member, "Lower-bound family member k");
  mk->add_flag("--uniform", make.uniform, "Lower-bound uniform instance");
  mk->add_option("-o,--output", make.output, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*slack) return cmd_slackness(instance_path);
    if (*sim) return cmd_simulate(config_path);
    if (*clq_cmd) return cmd_clq(config_path);
    if (*ver) return cmd_verify(config_path);
    if (*mk) return cmd_make_instance(make);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
