#pragma once

// Simulation trace: one record per task start/end, packet, reconfiguration,
// workload signal and ADAM tick. Serialized as line-delimited JSON
// {"t_s": ..., "kind": ..., "detail": {...}}.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace wobble {

struct TraceRecord {
  std::int64_t t_ns = 0;
  std::string kind;
  nlohmann::json detail = nlohmann::json::object();

  double t_s() const { return static_cast<double>(t_ns) * 1e-9; }
  bool operator==(const TraceRecord&) const = default;
};

struct Trace {
  std::vector<TraceRecord> records;

  void add(std::int64_t t_ns, std::string kind, nlohmann::json detail = nlohmann::json::object()) {
    records.push_back({t_ns, std::move(kind), std::move(detail)});
  }
};

void write_jsonl(std::ostream& os, const Trace& trace);
std::string to_jsonl(const Trace& trace);

/// Throws std::runtime_error on malformed lines.
Trace read_jsonl(std::istream& is);

}  // namespace wobble
