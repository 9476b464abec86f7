#pragma once

// File formats: JSON instance documents, trace CSV, series CSV and the
// diagnostic JSON record. Floats are written as shortest round-trip decimals.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "clq/errors.hpp"
#include "clq/metrics.hpp"
#include "clq/model.hpp"
#include "clq/trace.hpp"

namespace clq {

using json = nlohmann::json;

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

enum class InstanceKind { single, multi, network };

inline std::string to_string(InstanceKind k) {
  switch (k) {
    case InstanceKind::single: return "single";
    case InstanceKind::multi: return "multi";
    case InstanceKind::network: return "network";
  }
  return "network";
}

/// A parsed instance file. `network` is always populated (the embedding for
/// single-queue documents).
struct InstanceDocument {
  InstanceKind kind = InstanceKind::network;
  std::optional<SingleQueueInstance> single;
  NetworkInstance network;

  std::vector<std::string> violations() const {
    std::vector<std::string> v = single ? validate_instance(*single) : std::vector<std::string>{};
    const auto net = validate_instance(network);
    v.insert(v.end(), net.begin(), net.end());
    if (kind == InstanceKind::multi && v.empty() && !network.exit_only()) {
      v.push_back("multi-queue instance has non-exit transitions");
    }
    return v;
  }
};

namespace detail {

template <class T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad field '") + key + "': " + e.what());
  }
}

inline ArrivalModel parse_arrivals(const json& lambda, std::size_t queue_count) {
  if (lambda.is_number()) {
    if (queue_count != 1) throw ParseError("scalar lambda needs n = 1");
    return ArrivalModel::single_stream(1, 0, lambda.get<double>());
  }
  if (lambda.is_array()) {
    const auto rates = lambda.get<std::vector<double>>();
    if (rates.size() != queue_count) throw ParseError("lambda array length must equal n");
    return ArrivalModel::independent(rates);
  }
  if (lambda.is_object()) {
    ArrivalModel m;
    for (const auto& row : get_field<std::vector<std::vector<int>>>(lambda, "support")) {
      std::vector<std::uint8_t> a;
      for (int x : row) {
        if (x != 0 && x != 1) throw ParseError("arrival support entries must be 0 or 1");
        a.push_back(static_cast<std::uint8_t>(x));
      }
      m.support.push_back(std::move(a));
    }
    m.probabilities = get_field<std::vector<double>>(lambda, "probs");
    return m;
  }
  throw ParseError("lambda must be a number, an array, or {support, probs}");
}

}  // namespace detail

inline InstanceDocument parse_instance(const json& j) {
  if (!j.is_object()) throw ParseError("instance document must be a JSON object");
  InstanceDocument doc;
  const auto kind = detail::get_field<std::string>(j, "kind");
  if (kind == "single") {
    doc.kind = InstanceKind::single;
    SingleQueueInstance s;
    s.lambda = detail::get_field<double>(j, "lambda");
    s.mu = detail::get_field<std::vector<double>>(j, "mu");
    if (j.contains("k") && detail::get_field<std::size_t>(j, "k") != s.mu.size()) {
      throw ParseError("k does not match the length of mu");
    }
    doc.single = s;
    doc.network = embed(s);
    return doc;
  }
  if (kind == "multi") {
    doc.kind = InstanceKind::multi;
  } else if (kind == "network") {
    doc.kind = InstanceKind::network;
  } else {
    throw ParseError("unknown kind '" + kind + "'");
  }
  const auto n = detail::get_field<std::size_t>(j, "n");
  auto mu = detail::get_field<std::vector<double>>(j, "mu");
  const std::size_t k = j.contains("k") ? detail::get_field<std::size_t>(j, "k") : mu.size();
  if (k != mu.size()) throw ParseError("k does not match the length of mu");
  if (!j.contains("lambda")) throw ParseError("missing field 'lambda'");
  auto arrivals = detail::parse_arrivals(j.at("lambda"), n);
  std::vector<Schedule> schedules;
  for (const auto& row : detail::get_field<std::vector<std::vector<int>>>(j, "schedules")) {
    if (row.size() != k) throw ParseError("each schedule must have k entries");
    for (int x : row) {
      if (x != 0 && x != 1) throw ParseError("schedule entries must be 0 or 1");
    }
    schedules.push_back(Schedule::from_indicator(row));
  }
  auto owner = detail::get_field<std::vector<std::size_t>>(j, "server_queue");
  std::vector<std::vector<double>> transitions;
  if (j.contains("transitions")) transitions = detail::get_field<std::vector<std::vector<double>>>(j, "transitions");
  doc.network = make_network(n, std::move(arrivals), std::move(mu), ScheduleSet(std::move(schedules)),
                             std::move(owner), std::move(transitions));
  return doc;
}

inline InstanceDocument parse_instance_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return parse_instance(j);
}

inline InstanceDocument load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_instance_text(ss.str());
}

inline json to_json(const SingleQueueInstance& s) {
  return json{{"kind", "single"}, {"n", 1}, {"k", s.mu.size()}, {"lambda", s.lambda}, {"mu", s.mu}};
}

inline json to_json(const NetworkInstance& net, InstanceKind kind = InstanceKind::network) {
  json support = json::array();
  for (const auto& a : net.arrivals.support) {
    json row = json::array();
    for (auto x : a) row.push_back(int(x));
    support.push_back(row);
  }
  json schedules = json::array();
  for (const auto& s : net.schedules) schedules.push_back(s.to_indicator(net.server_count));
  json j{{"kind", to_string(kind)},
         {"n", net.queue_count},
         {"k", net.server_count},
         {"lambda", json{{"support", support}, {"probs", net.arrivals.probabilities}}},
         {"mu", net.mu},
         {"schedules", schedules},
         {"server_queue", net.server_queue}};
  if (!net.exit_only()) j["transitions"] = net.transitions;
  return j;
}

inline json to_json(const InstanceDocument& doc) {
  return doc.single ? to_json(*doc.single) : to_json(doc.network, doc.kind);
}

// ---------------------------------------------------------------------------
// Trace CSV

namespace detail {

/// Hex bitmask, most significant digit first, fixed width ceil(bits / 4).
inline std::string encode_mask(const std::vector<bool>& bits) {
  const std::size_t digits = std::max<std::size_t>(1, (bits.size() + 3) / 4);
  std::string out(digits, '0');
  for (std::size_t d = 0; d < digits; ++d) {
    unsigned v = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t i = d * 4 + b;
      if (i < bits.size() && bits[i]) v |= 1U << b;
    }
    out[digits - 1 - d] = "0123456789abcdef"[v];
  }
  return out;
}

inline std::vector<bool> decode_mask(std::string_view s, std::size_t bits) {
  std::vector<bool> out(bits, false);
  const std::size_t digits = s.size();
  for (std::size_t d = 0; d < digits; ++d) {
    const char c = s[digits - 1 - d];
    unsigned v;
    if (c >= '0' && c <= '9') v = unsigned(c - '0');
    else if (c >= 'a' && c <= 'f') v = unsigned(c - 'a' + 10);
    else throw ParseError("bad bitmask digit");
    for (std::size_t b = 0; b < 4; ++b) {
      if (!(v & (1U << b))) continue;
      const std::size_t i = d * 4 + b;
      if (i >= bits) throw ParseError("bitmask names an out-of-range index");
      out[i] = true;
    }
  }
  return out;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_int(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad integer '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Columns: t, q_0..q_{N-1}, schedule, arrivals, services, transitions.
/// Masks are hex with bit k for server (or queue) k; transitions lists `k>n`
/// for every success that moved to queue n, a success not listed left the
/// system. A final row t = T+1 carries Q(T+1) with empty event fields.
inline void write_trace_csv(std::ostream& out, const Trace& trace) {
  const std::size_t N = trace.queue_count();
  const std::size_t K = trace.server_count();
  out << "t";
  for (std::size_t n = 0; n < N; ++n) out << ",q_" << n;
  out << ",schedule,arrivals,services,transitions\n";
  std::vector<bool> sched(K), serv(K), arr(N);
  for (std::size_t t = 1; t <= trace.horizon() + 1; ++t) {
    out << t;
    for (auto q : trace.queue(t)) out << ',' << q;
    if (t > trace.horizon()) {
      out << ",,,,\n";
      break;
    }
    std::fill(sched.begin(), sched.end(), false);
    std::fill(serv.begin(), serv.end(), false);
    std::string moves;
    for (const auto& e : trace.events(t)) {
      sched[e.server] = true;
      if (e.success) {
        serv[e.server] = true;
        if (e.target < N) {
          if (!moves.empty()) moves += ';';
          moves += std::to_string(e.server) + '>' + std::to_string(e.target);
        }
      }
    }
    const auto a = trace.arrivals(t);
    for (std::size_t n = 0; n < N; ++n) arr[n] = a[n] != 0;
    out << ',' << detail::encode_mask(sched) << ',' << detail::encode_mask(arr) << ','
        << detail::encode_mask(serv) << ',' << moves << '\n';
  }
}

inline Trace read_trace_csv(std::istream& in, std::size_t server_count) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace file");
  const auto header = detail::split(line, ',');
  if (header.size() < 6 || header[0] != "t") throw ParseError("bad trace header");
  const std::size_t N = header.size() - 5;
  Trace trace(N, server_count);
  std::vector<std::int64_t> q(N);
  std::vector<ServiceEvent> events;
  std::vector<std::uint8_t> arrivals(N);
  std::size_t expected_t = 1;
  bool finished = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (finished) throw ParseError("rows after the final state row");
    const auto f = detail::split(line, ',');
    if (f.size() != N + 5) throw ParseError("row has " + std::to_string(f.size()) + " fields");
    if (detail::parse_int<std::size_t>(f[0]) != expected_t) throw ParseError("periods out of order");
    for (std::size_t n = 0; n < N; ++n) q[n] = detail::parse_int<std::int64_t>(f[1 + n]);
    if (expected_t == 1) {
      trace.raw_queues().assign(q.begin(), q.end());
    } else {
      auto& raw = trace.raw_queues();
      std::copy(q.begin(), q.end(), raw.end() - static_cast<std::ptrdiff_t>(N));
    }
    if (f[N + 1].empty()) {
      finished = true;
      continue;
    }
    const auto sched = detail::decode_mask(f[N + 1], server_count);
    const auto arr = detail::decode_mask(f[N + 2], N);
    const auto serv = detail::decode_mask(f[N + 3], server_count);
    std::vector<std::size_t> target(server_count, N);
    if (!f[N + 4].empty()) {
      for (const auto& pair : detail::split(f[N + 4], ';')) {
        const auto gt = pair.find('>');
        if (gt == std::string::npos) throw ParseError("bad transition '" + pair + "'");
        const auto k = detail::parse_int<std::size_t>(std::string_view(pair).substr(0, gt));
        const auto n = detail::parse_int<std::size_t>(std::string_view(pair).substr(gt + 1));
        if (k >= server_count || n >= N) throw ParseError("transition index out of range");
        target[k] = n;
      }
    }
    events.clear();
    for (std::size_t k = 0; k < server_count; ++k) {
      if (sched[k]) events.push_back(ServiceEvent{k, serv[k], serv[k] ? target[k] : N});
    }
    for (std::size_t n = 0; n < N; ++n) arrivals[n] = arr[n] ? 1 : 0;
    // Q(t+1) is unknown until the next row; append a placeholder and patch it.
    trace.append(events, arrivals, q);
    ++expected_t;
  }
  if (!finished) throw ParseError("trace file lacks the final state row");
  return trace;
}

// ---------------------------------------------------------------------------
// Series and diagnostics

/// Columns: T, avg_queue_mean, avg_queue_se, clq_running, sar_mean, sar_se,
/// delta_mean. Columns not computed for the run are left empty.
inline void write_series_csv(std::ostream& out, const MetricSeries& s, const MetricSeries* benchmark = nullptr) {
  const auto clq = running_clq(s, benchmark);
  out << "T,avg_queue_mean,avg_queue_se,clq_running,sar_mean,sar_se,delta_mean\n";
  for (std::size_t i = 0; i < s.horizon; ++i) {
    out << (i + 1) << ',' << format_double(s.avg_queue_mean[i]) << ',' << format_double(s.avg_queue_se[i]) << ','
        << format_double(clq[i]) << ',';
    if (!s.sar_mean.empty()) out << format_double(s.sar_mean[i]) << ',' << format_double(s.sar_se[i]);
    else out << ',';
    out << ',';
    if (!s.delta_mean.empty()) out << format_double(s.delta_mean[i]);
    out << '\n';
  }
}

/// Columns: T, queue_mean, queue_se (per-period total queue length).
inline void write_queue_csv(std::ostream& out, const MetricSeries& s) {
  out << "T,queue_mean,queue_se\n";
  for (std::size_t i = 0; i < s.horizon; ++i) {
    out << (i + 1) << ',' << format_double(s.queue_mean[i]) << ',' << format_double(s.queue_se[i]) << '\n';
  }
}

inline json to_json(const LyapunovReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back(json{{"name", c.name}, {"pass", c.pass}, {"margin", c.margin}, {"first_failure", c.first_failure}});
  }
  return json{{"checks", checks}, {"drift_estimate", r.drift_estimate}, {"pass", r.all_pass()}};
}

}  // namespace clq
