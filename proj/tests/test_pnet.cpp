#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "scenarios.hpp"
#include "support.hpp"
#include "wobble/pnet.hpp"

using namespace wobble;
using namespace wobble::pnet;
using OM = OperatingMode;
using TK = TaskKind;

namespace {

const model::ModelSpec& shared_model() {
  static const model::ModelSpec m = testing::random_model(21);
  return m;
}

SimOptions options(bool tasks = true) {
  SimOptions o;
  o.model = &shared_model();
  o.record_tasks = tasks;
  return o;
}

Scenario steady(OM mode, double horizon, std::optional<ExerciseClass> cls = ExerciseClass::kRotation) {
  Scenario sc;
  sc.horizon_s = horizon;
  sc.initial_mode = mode;
  sc.motion.push_back({0.0, horizon, cls, 5});
  return sc;
}

std::size_t count(const Trace& t, const std::string& kind) {
  std::size_t n = 0;
  for (const auto& r : t.records) n += r.kind == kind;
  return n;
}

}  // namespace

TEST_CASE("topologies per mode") {
  const auto raw = build_topology(OM::kRawData);
  CHECK(raw.tasks == std::vector<TK>{TK::kGetData, TK::kSend});
  CHECK(raw.edges == std::vector<Edge>{{TK::kGetData, TK::kSend}});

  const auto bal = build_topology(OM::kBasicBalance);
  CHECK(bal.tasks.size() == 4);
  CHECK_FALSE(bal.has_task(TK::kCnn));
  CHECK(bal.output_of(TK::kBalance) == Edge{TK::kBalance, TK::kThreshold});

  const auto cnn = build_topology(OM::kCnnProcessing);
  CHECK(cnn.tasks.size() == 5);
  CHECK(cnn.output_of(TK::kBalance) == Edge{TK::kBalance, TK::kCnn});
  CHECK(cnn.output_of(TK::kCnn) == Edge{TK::kCnn, TK::kThreshold});
  CHECK(cnn.fifo_capacity == 8);

  for (OM m : {OM::kRawData, OM::kBasicBalance, OM::kCnnProcessing}) CHECK(identify_mode(build_topology(m)) == m);
}

TEST_CASE("identify_mode rejects malformed topologies") {
  ProcessTopology t = build_topology(OM::kBasicBalance);
  t.edges.push_back({TK::kThreshold, TK::kCnn});
  CHECK_THROWS_AS(identify_mode(t), std::invalid_argument);

  t = build_topology(OM::kBasicBalance);
  t.edges.push_back({TK::kSend, TK::kGetData});
  CHECK_THROWS_AS(identify_mode(t), std::invalid_argument);

  t = build_topology(OM::kCnnProcessing);
  t.edges = {{TK::kGetData, TK::kCnn}, {TK::kCnn, TK::kSend}};
  t.tasks = {TK::kGetData, TK::kCnn, TK::kSend};
  CHECK_THROWS_AS(identify_mode(t), std::invalid_argument);
}

TEST_CASE("ADAM commands reconfigure the node") {
  const power::PowerParams p;
  const NodeState raw = initial_state(OM::kRawData, p);
  CHECK(raw.config.frequency_mhz == 8);
  CHECK(raw.config.sample_period_ns == 10'000'000);
  CHECK(raw.config.ble_batch == 4);

  const NodeState bal = adam_apply({1.0, ExternalCommand{OM::kBasicBalance, std::nullopt}}, raw, p);
  CHECK(bal.mode == OM::kBasicBalance);
  CHECK(bal.config.frequency_mhz == 2);
  CHECK(bal.config.sample_period_ns == 70'000'000);
  CHECK(bal.topology.has_task(TK::kBalance));
  CHECK(bal.topology.has_task(TK::kThreshold));

  const NodeState cnn = adam_apply({2.0, ExternalCommand{OM::kCnnProcessing, std::nullopt}}, bal, p);
  CHECK(cnn.config.frequency_mhz == 4);

  CHECK(adam_apply({3.0, ExternalCommand{OM::kCnnProcessing, std::nullopt}}, cnn, p) == cnn);
  CHECK_THROWS_AS(adam_apply({3.0, ExternalCommand{OM::kCnnProcessing, 2}}, bal, p), power::FeasibilityError);
  CHECK_THROWS_AS(adam_apply({3.0, ExternalCommand{static_cast<OM>(7), std::nullopt}}, bal, p), std::invalid_argument);
  CHECK_THROWS(adam_apply({3.0, ExternalCommand{OM::kCnnProcessing, 16}}, bal, p));
}

TEST_CASE("workload signals gate the CNN only in CNN mode") {
  const power::PowerParams p;
  const NodeState cnn = initial_state(OM::kCnnProcessing, p);
  const NodeState stopped = adam_apply({1.0, WorkloadSignal{true}}, cnn, p);
  CHECK(stopped.cnn_suppressed);
  CHECK_FALSE(adam_apply({2.0, WorkloadSignal{false}}, stopped, p).cnn_suppressed);
  const NodeState bal = initial_state(OM::kBasicBalance, p);
  CHECK_FALSE(adam_apply({1.0, WorkloadSignal{true}}, bal, p).cnn_suppressed);
}

TEST_CASE("raw packet layout") {
  const std::vector<signal::Sample> zeros(4);
  const auto z = pack_raw(zeros, 0);
  CHECK(z.bytes.size() == 20);
  CHECK(to_hex(z.bytes) == std::string(40, '0'));

  const std::vector<signal::Sample> ones(4, signal::Sample{0, 1, 2});
  CHECK(to_hex(pack_raw(ones, 1).bytes) == "01000000" + std::string("01000200") + "01000200" + "01000200" + "01000200");

  const std::vector<signal::Sample> neg(4, signal::Sample{0, -2, 300});
  CHECK(to_hex(pack_raw(neg, 0x01020304).bytes).substr(0, 16) == "04030201feff2c01");

  const std::vector<signal::Sample> three(3);
  CHECK_THROWS_AS(pack_raw(three, 0), std::invalid_argument);
}

TEST_CASE("result packet layout") {
  const auto b = pack_result(PacketKind::kBalanceResult, 1000, 75);
  CHECK(to_hex(b.bytes) == "00e80300004b");
  const auto c = pack_result(PacketKind::kCnnResult, 2, 3);
  CHECK(to_hex(c.bytes) == "010200000003");
  CHECK_THROWS(pack_result(PacketKind::kRaw, 0, 0));
}

TEST_CASE("scenario parsing") {
  const auto sc = parse_scenario(nlohmann::json::parse(R"({
    "horizon_s": 30, "initial_mode": "raw", "initial_frequency_mhz": 8,
    "events": [{"t_s": 5, "command": "cnn", "frequency_mhz": 8},
               {"t_s": 10, "motion": {"class": "R", "seed": 3}},
               {"t_s": 20, "motion": {"class": "still"}}],
    "motion": [{"t0": 0, "t1": 10, "class": "FB", "seed": 1}]})"));
  CHECK(sc.horizon_s == 30.0);
  CHECK(sc.initial_mode == OM::kRawData);
  CHECK(sc.initial_frequency_mhz == 8);
  REQUIRE(sc.commands.size() == 1);
  CHECK(std::get<ExternalCommand>(sc.commands[0].payload).target == OM::kCnnProcessing);
  REQUIRE(sc.motion.size() == 3);
  CHECK(sc.motion[1].t0_s == 10.0);
  CHECK(sc.motion[1].t1_s == 20.0);
  CHECK(sc.motion[2].cls == std::nullopt);
  CHECK(sc.motion[2].t1_s == 30.0);

  const auto empty = parse_scenario(nlohmann::json::object());
  CHECK(empty.horizon_s == 60.0);
  CHECK(empty.initial_mode == OM::kBasicBalance);
}

TEST_CASE("malformed scenarios") {
  auto bad = [](const char* text) { return parse_scenario(nlohmann::json::parse(text)); };
  CHECK_THROWS_AS(bad(R"({"horizon_s": 10, "events": [{"t_s": 11, "command": "raw"}]})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"events": [{"t_s": 5, "command": "raw"}, {"t_s": 4, "command": "cnn"}]})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"events": [{"t_s": 5}]})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"events": [{"t_s": 5, "command": "turbo"}]})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"horizon": 10})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"horizon_s": -1})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"motion": [{"t0": 5, "t1": 5, "class": "R"}]})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"horizon_s": "long"})"), std::invalid_argument);
  CHECK_THROWS(load_scenario("/nonexistent/scenario.json"));
}

TEST_CASE("scenario motion from a recording file") {
  const auto dir = std::filesystem::temp_directory_path() / "wobble_scenario_csv";
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "board.csv");
    signal::write_csv(os, signal::generate_recording(ExerciseClass::kSideTilt, 20.0, signal::GeneratorConfig{}));
    std::ofstream sc(dir / "scenario.json");
    sc << R"({"horizon_s": 20, "initial_mode": "raw", "motion": "board.csv"})";
  }
  const Scenario sc = load_scenario(dir / "scenario.json");
  REQUIRE(sc.recording.has_value());
  const auto r = run_scenario(sc, options(false));
  CHECK(r.raw_packets == 500);
  std::filesystem::remove_all(dir);
}

TEST_CASE("steady-state packet counts") {
  const auto raw = run_scenario(steady(OM::kRawData, 60.0), options(false));
  CHECK(raw.samples == 6000);
  CHECK(raw.raw_packets == 1500);
  CHECK(raw.result_packets == 0);

  const auto bal = run_scenario(steady(OM::kBasicBalance, 60.0), options(false));
  CHECK(bal.result_packets == 60);
  CHECK(bal.raw_packets == 0);

  const auto cnn = run_scenario(steady(OM::kCnnProcessing, 60.0), options(false));
  CHECK(cnn.cnn_inferences == 46);
  CHECK(cnn.result_packets == 46);
  CHECK(cnn.cnn_times_ns.front() == 15'000'000'000);
}

TEST_CASE("trace records task timing at the configured clock") {
  const auto r = run_scenario(steady(OM::kBasicBalance, 3.0), options(true));
  bool saw_send = false;
  std::int64_t start = -1;
  for (const auto& rec : r.trace.records) {
    if (rec.kind == "task_start" && rec.detail["task"] == "send") start = rec.t_ns;
    if (rec.kind == "task_end" && rec.detail["task"] == "send" && start >= 0) {
      CHECK(rec.t_ns - start == 12'500'000);  // 25,000 cycles at 2 MHz
      saw_send = true;
      start = -1;
    }
  }
  CHECK(saw_send);
  CHECK(count(r.trace, "tick") == 3);
  CHECK(count(r.trace, "end") == 1);
  CHECK(r.trace.records.front().kind == "reconfigure");
}

TEST_CASE("scenario suite invariants") {
  for (const auto& ns : testing::scenario_suite()) {
    CAPTURE(ns.name);
    const Scenario sc = parse_scenario(ns.doc);
    const SimResult a = run_scenario(sc, options());
    const SimResult b = run_scenario(sc, options());
    CHECK(to_jsonl(a.trace) == to_jsonl(b.trace));
    const auto rep = testing::check_invariants(a, ns.still);
    CHECK(rep.conservation);
    CHECK(rep.exclusivity);
    CHECK(rep.inferences_while_still == 0);
    CHECK(rep.packets > 0);
  }
}

TEST_CASE("stillness suppresses inference and drops the stopped results") {
  const auto suite = testing::scenario_suite();
  const auto& ns = suite[6];
  REQUIRE(ns.name == "cnn_stillness");
  const auto r = run_scenario(parse_scenario(ns.doc), options(false));
  CHECK(r.cnn_skipped == 10);
  CHECK(r.cnn_inferences == 46 - 10);
  CHECK(count(r.trace, "dropped") == 10);
  CHECK(r.result_packets == r.cnn_inferences);
}

TEST_CASE("mode switches drain FIFOs and restart the window") {
  Scenario sc = steady(OM::kBasicBalance, 60.0);
  sc.commands.push_back({20.0, ExternalCommand{OM::kCnnProcessing, std::nullopt}});
  const auto r = run_scenario(sc, options(false));
  CHECK(r.cnn_times_ns.front() == 35'000'000'000);
  CHECK(r.cnn_inferences == 26);
  // The command at 20 s precedes that second's tick, so its balance result is drained.
  CHECK(r.result_packets == 19 + 26);
  CHECK(count(r.trace, "reconfigure") == 2);
}

TEST_CASE("scheduler errors") {
  CHECK_THROWS_AS(run_scenario(steady(OM::kCnnProcessing, 10.0), SimOptions{}), std::invalid_argument);

  Scenario forced = steady(OM::kCnnProcessing, 10.0);
  forced.initial_frequency_mhz = 2;
  CHECK_THROWS_AS(run_scenario(forced, options()), power::FeasibilityError);

  SimOptions tiny = options();
  tiny.fifo_capacity = 2;
  CHECK_THROWS_AS(run_scenario(steady(OM::kRawData, 5.0), tiny), SchedulerError);

  // A CNN heavier than the 4 MHz clock can carry is rejected up front.
  SimOptions slow = options();
  slow.power.cycles_cnn = 4'500'000;
  Scenario sc = steady(OM::kCnnProcessing, 30.0);
  sc.initial_frequency_mhz = 4;
  CHECK_THROWS_AS(run_scenario(sc, slow), power::FeasibilityError);
}

TEST_CASE("independent scenarios can run on separate threads") {
  const auto suite = testing::scenario_suite();
  std::vector<std::string> serial;
  for (const auto& ns : suite) serial.push_back(to_jsonl(run_scenario(parse_scenario(ns.doc), options()).trace));
  std::vector<std::string> parallel(suite.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < suite.size(); ++i) {
      pool.emplace_back([&, i] { parallel[i] = to_jsonl(run_scenario(parse_scenario(suite[i].doc), options()).trace); });
    }
  }
  for (std::size_t i = 0; i < suite.size(); ++i) CHECK(parallel[i] == serial[i]);
}

TEST_CASE("trace jsonl round trip") {
  const auto r = run_scenario(steady(OM::kRawData, 2.0), options());
  std::istringstream is(to_jsonl(r.trace));
  const Trace back = read_jsonl(is);
  REQUIRE(back.records.size() == r.trace.records.size());
  CHECK(to_jsonl(back) == to_jsonl(r.trace));
  const auto first = nlohmann::json::parse(to_jsonl(r.trace).substr(0, to_jsonl(r.trace).find('\n')));
  CHECK(first.contains("t_s"));
  CHECK(first.contains("kind"));
  CHECK(first.contains("detail"));
}
