#include "wobble/trace.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wobble {

void write_jsonl(std::ostream& os, const Trace& trace) {
  for (const TraceRecord& r : trace.records) {
    nlohmann::ordered_json line;
    line["t_s"] = r.t_s();
    line["kind"] = r.kind;
    line["detail"] = r.detail;
    os << line.dump() << '\n';
  }
}

std::string to_jsonl(const Trace& trace) {
  std::ostringstream os;
  write_jsonl(os, trace);
  return os.str();
}

Trace read_jsonl(std::istream& is) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.t_ns = std::llround(j.at("t_s").get<double>() * 1e9);
      r.kind = j.at("kind").get<std::string>();
      r.detail = j.at("detail");
      trace.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("malformed trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace wobble
