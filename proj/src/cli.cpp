#include "wobble/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "wobble/golden.hpp"
#include "wobble/model.hpp"
#include "wobble/pnet.hpp"

namespace wobble::cli {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j[key].get<T>();
}

void apply_balance(const json& j, balance::BalanceConfig& b) {
  reject_unknown(j, {"tolerance", "ground_magnitude", "stop_sigma", "result_period_s"}, "balance");
  take(j, "tolerance", b.tolerance);
  take(j, "ground_magnitude", b.ground_magnitude);
  take(j, "stop_sigma", b.stop_sigma);
  take(j, "result_period_s", b.result_period_s);
  b.validate();
}

void apply_power(const json& j, power::PowerParams& p) {
  reject_unknown(j,
                 {"e_get_uj", "e_get_balance_uj", "e_cnn_uj", "e_threshold_uj", "e_send_uj", "cycles_get",
                  "cycles_balance", "cycles_cnn", "cycles_threshold", "cycles_send", "idle_mw", "raw_batch",
                  "raw_sampling_hz", "processed_sampling_hz", "balance_result_hz", "cnn_result_hz",
                  "raw_min_frequency_mhz"},
                 "power");
  take(j, "e_get_uj", p.e_get_uj);
  take(j, "e_get_balance_uj", p.e_get_balance_uj);
  take(j, "e_cnn_uj", p.e_cnn_uj);
  take(j, "e_threshold_uj", p.e_threshold_uj);
  take(j, "e_send_uj", p.e_send_uj);
  take(j, "cycles_get", p.cycles_get);
  take(j, "cycles_balance", p.cycles_balance);
  take(j, "cycles_cnn", p.cycles_cnn);
  take(j, "cycles_threshold", p.cycles_threshold);
  take(j, "cycles_send", p.cycles_send);
  take(j, "raw_batch", p.raw_batch);
  take(j, "raw_sampling_hz", p.raw_sampling_hz);
  take(j, "processed_sampling_hz", p.processed_sampling_hz);
  take(j, "balance_result_hz", p.balance_result_hz);
  take(j, "cnn_result_hz", p.cnn_result_hz);
  take(j, "raw_min_frequency_mhz", p.raw_min_frequency_mhz);
  if (j.contains("idle_mw")) {
    // {"2": 2.609, "4": 3.101, ...}; replaces the whole table.
    p.idle_mw.clear();
    for (const auto& [mhz, mw] : j["idle_mw"].items()) {
      std::size_t used = 0;
      const int f = std::stoi(mhz, &used);
      if (used != mhz.size()) throw std::invalid_argument("config: idle_mw key '" + mhz + "' is not an integer");
      p.idle_mw[f] = mw.get<double>();
    }
  }
  p.validate();
}

void apply_generator(const json& j, signal::GeneratorConfig& g) {
  reject_unknown(j, {"amplitude", "period_s", "noise_sigma", "amplitude_jitter", "seed"}, "generator");
  if (j.contains("amplitude")) {
    const auto a = j["amplitude"].get<std::vector<double>>();
    if (a.size() != kNumClasses) throw std::invalid_argument("config: generator.amplitude needs 5 values");
    std::copy(a.begin(), a.end(), g.amplitude.begin());
  }
  if (j.contains("period_s")) {
    const auto ps = j["period_s"].get<std::vector<std::pair<double, double>>>();
    if (ps.size() != kNumClasses) throw std::invalid_argument("config: generator.period_s needs 5 [min, max] pairs");
    std::copy(ps.begin(), ps.end(), g.period_s.begin());
  }
  take(j, "noise_sigma", g.noise_sigma);
  take(j, "amplitude_jitter", g.amplitude_jitter);
  take(j, "seed", g.seed);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Thrown for a completed run whose outcome is a validation failure (exit 2).
struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// ---------------------------------------------------------------------------

struct GenArgs {
  std::vector<std::string> classes;
  int count = 12;
  double duration_s = 60.0;
  double train_fraction = 0.8;
};

int cmd_gen(const GenArgs& a, const Globals& g, const CliConfig& cfg, std::ostream& out) {
  if (a.count < 1) throw std::invalid_argument("--count must be at least 1");
  std::vector<ExerciseClass> classes;
  if (a.classes.empty()) {
    classes.assign(kAllClasses.begin(), kAllClasses.end());
  } else {
    for (const auto& label : a.classes) classes.push_back(class_from_label(label));
  }
  const std::uint64_t base = g.seed.value_or(cfg.generator.seed);
  const std::filesystem::path dir = g.out.empty() ? "dataset" : g.out;

  std::vector<signal::DatasetEntry> entries;
  for (ExerciseClass cls : classes) {
    for (int k = 0; k < a.count; ++k) {
      signal::GeneratorConfig gc = cfg.generator;
      gc.seed = signal::derive_seed(base, class_code(cls), static_cast<std::uint64_t>(k));
      signal::DatasetEntry e;
      e.id = fmt::format("{}_{:02d}", class_label(cls), k);
      e.recording = signal::generate_recording(cls, a.duration_s, gc);
      e.seed = gc.seed;
      e.provenance = {"synthetic", 0.0, signal::kDownsampleFactor};
      entries.push_back(std::move(e));
    }
  }

  std::vector<std::string> splits(entries.size());
  if (entries.size() >= 2) {
    const auto [train, validation] = signal::split_dataset(entries, a.train_fraction, base);
    std::set<std::string> train_ids;
    for (const auto& e : train) train_ids.insert(e.id);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      splits[i] = train_ids.contains(entries[i].id) ? "train" : "validation";
    }
  }
  const signal::Manifest m = signal::save_dataset(dir, entries, splits);
  fmt::print(out, "wrote {} recordings to {}\n", m.entries.size(), (dir / "manifest.json").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string weights;
  std::string report;
  bool no_task_records = false;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g, const CliConfig& cfg, std::ostream& out) {
  const pnet::Scenario sc = pnet::load_scenario(a.scenario);
  std::optional<model::ModelSpec> weights;
  if (!a.weights.empty()) weights = model::load_weights_file(a.weights);

  pnet::SimOptions opt;
  opt.power = cfg.power;
  opt.balance = cfg.balance;
  opt.generator = cfg.generator;
  if (g.seed) opt.generator.seed = *g.seed;
  opt.fifo_capacity = cfg.fifo_capacity;
  opt.model = weights ? &*weights : nullptr;
  opt.record_tasks = !a.no_task_records;

  const pnet::SimResult r = pnet::run_scenario(sc, opt);

  const std::filesystem::path trace_path = g.out.empty() ? "trace.jsonl" : g.out;
  write_text(trace_path, to_jsonl(r.trace));

  const double horizon = sc.horizon_s;
  json report = {{"horizon_s", horizon},
                 {"energy_uj", r.energy_uj},
                 {"average_mw", r.energy_uj / horizon / 1000.0},
                 {"idle_energy_uj", r.idle_energy_uj},
                 {"samples", r.samples},
                 {"raw_packets", r.raw_packets},
                 {"result_packets", r.result_packets},
                 {"cnn_inferences", r.cnn_inferences},
                 {"cnn_skipped", r.cnn_skipped},
                 {"max_second_load", r.max_second_load}};
  json tasks = json::object();
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    tasks[std::string(task_name(static_cast<TaskKind>(t)))] = r.task_energy_uj[t];
  }
  report["task_energy_uj"] = std::move(tasks);

  // Single-mode runs are compared with the analytic model. CNN mode is measured
  // after its first full window so the warm-up does not bias the average.
  std::optional<power::Reconciliation> rec;
  try {
    const bool cnn = sc.commands.empty() && sc.initial_mode == OperatingMode::kCnnProcessing;
    const double from = cnn && horizon > signal::kWindowSeconds + 1.0 ? signal::kWindowSeconds : 0.0;
    rec = power::reconcile(r.trace, cfg.power, from);
    report["reconciliation"] = power::to_json(*rec);
  } catch (const std::invalid_argument& e) {
    report["reconciliation"] = nullptr;
    report["reconciliation_note"] = e.what();
  }

  const std::filesystem::path report_path =
      a.report.empty() ? std::filesystem::path(trace_path.string() + ".report.json") : std::filesystem::path(a.report);
  write_text(report_path, report.dump(2) + "\n");

  fmt::print(out, "simulated {:.1f} s: {} samples, {} raw packets, {} result packets, {} inferences\n", horizon,
             r.samples, r.raw_packets, r.result_packets, r.cnn_inferences);
  fmt::print(out, "average power {:.3f} mW\n", r.energy_uj / horizon / 1000.0);
  if (rec) {
    fmt::print(out, "{} @ {} MHz: simulated {:.3f} mW over {:.1f} s, analytic {:.3f} mW ({:.2f}%)\n",
               mode_name(rec->mode), rec->frequency_mhz, rec->simulated_mw, rec->span_s, rec->analytic_mw,
               100.0 * rec->relative_error);
  }
  fmt::print(out, "trace: {}\nreport: {}\n", trace_path.string(), report_path.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string weights;
  std::string manifest;
  std::string split;
  double stride_s = 1.0;
  int threads = 0;
};

int cmd_infer(const InferArgs& a, const Globals& g, std::ostream& out) {
  const model::ModelSpec m = model::load_weights_file(a.weights);
  const std::filesystem::path manifest_path = a.manifest;
  const signal::Manifest manifest = signal::load_manifest(manifest_path);

  std::vector<const signal::ManifestEntry*> selected;
  for (const auto& e : manifest.entries) {
    if (a.split.empty() || e.split == a.split) selected.push_back(&e);
  }

  // Recordings are independent; each worker writes only its own slots.
  std::vector<std::vector<model::TimedClass>> results(selected.size());
  std::vector<std::string> errors(selected.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads =
      std::min<std::size_t>(selected.size(), a.threads > 0 ? static_cast<std::size_t>(a.threads) : hw);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < selected.size(); i += n_threads) {
          try {
            const signal::Recording r = signal::load_recording(manifest_path.parent_path(), *selected[i]);
            results[i] = model::classify_recording(m, r, a.stride_s);
          } catch (const std::exception& e) {
            errors[i] = selected[i]->id + ": " + e.what();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }

  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  json per_recording = json::array();
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto truth = class_code(selected[i]->cls);
    std::array<std::uint64_t, kNumClasses> row{};
    for (const auto& tc : results[i]) {
      const auto pred = class_code(tc.result.cls);
      ++confusion[truth][pred];
      ++row[pred];
      ++total;
      if (pred == truth) ++correct;
    }
    per_recording.push_back({{"id", selected[i]->id},
                             {"class", std::string(class_label(selected[i]->cls))},
                             {"windows", results[i].size()},
                             {"predictions", row}});
  }
  const double accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;

  fmt::print(out, "{} recordings, {} windows, accuracy {:.4f}\n", selected.size(), total, accuracy);
  fmt::print(out, "{:>6}", "truth");
  for (ExerciseClass c : kAllClasses) fmt::print(out, "{:>7}", class_label(c));
  fmt::print(out, "\n");
  for (ExerciseClass r : kAllClasses) {
    fmt::print(out, "{:>6}", class_label(r));
    for (ExerciseClass c : kAllClasses) fmt::print(out, "{:>7}", confusion[class_code(r)][class_code(c)]);
    fmt::print(out, "\n");
  }

  if (!g.out.empty()) {
    json labels = json::array();
    for (ExerciseClass c : kAllClasses) labels.push_back(std::string(class_label(c)));
    const json report = {{"labels", labels},
                         {"confusion", confusion},
                         {"windows", total},
                         {"accuracy", accuracy},
                         {"recordings", per_recording}};
    write_text(g.out, report.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GoldenArgs {
  std::string weights;
  std::string golden;
  int max_delta = 1;
};

int cmd_verify_golden(const GoldenArgs& a, std::ostream& out, std::ostream& err) {
  const auto bytes = read_bytes(a.weights);
  const model::ModelSpec m = model::load_weights(bytes);
  const model::GoldenSet gs = model::parse_golden(read_json_file(a.golden));

  for (const auto& w : gs.warnings) fmt::print(err, "warning (producer): {}\n", w);
  const std::string hash = model::sha256_hex(bytes);
  if (gs.weights_sha256.empty()) {
    fmt::print(err, "warning: golden file does not record a weight-file hash\n");
  } else if (gs.weights_sha256 != hash) {
    throw ValidationFailure("golden file was produced from weights " + gs.weights_sha256 + ", not " + hash);
  }

  const model::GoldenReport r = model::verify_golden(m, gs, a.max_delta);
  for (const auto& w : r.warnings) fmt::print(err, "warning: {}\n", w);
  for (const auto& mm : r.mismatches) fmt::print(out, "case {}: {}\n", mm.index, mm.reason);
  fmt::print(out, "{}: {} cases, argmax agreement {}/{}, max |logit delta| {}\n", r.passed() ? "PASS" : "FAIL",
             r.cases, r.argmax_agree, r.cases, r.max_logit_delta);
  return r.passed() ? kExitOk : kExitValidation;
}

// ---------------------------------------------------------------------------

struct PowerArgs {
  std::vector<std::string> modes;
  std::optional<int> frequency_mhz;
  bool as_json = false;
};

int cmd_power(const PowerArgs& a, const Globals& g, const CliConfig& cfg, std::ostream& out) {
  std::vector<OperatingMode> modes;
  if (a.modes.empty()) {
    modes = {OperatingMode::kRawData, OperatingMode::kBasicBalance, OperatingMode::kCnnProcessing};
  } else {
    for (const auto& name : a.modes) modes.push_back(mode_from_name(name));
  }

  std::vector<power::PowerReport> reports;
  for (OperatingMode mode : modes) {
    if (a.frequency_mhz) power::check_feasible(mode, *a.frequency_mhz, cfg.power);
    reports.push_back(power::om_power(mode, cfg.power, a.frequency_mhz));
  }

  json doc = {{"reports", json::array()}};
  for (const auto& r : reports) doc["reports"].push_back(power::to_json(r));
  const bool all_modes = modes.size() == 3 && !a.frequency_mhz;
  if (all_modes) {
    doc["savings"] = {
        {"raw_to_balance_pct", power::savings(OperatingMode::kRawData, OperatingMode::kBasicBalance, cfg.power)},
        {"raw_to_cnn_pct", power::savings(OperatingMode::kRawData, OperatingMode::kCnnProcessing, cfg.power)}};
  }

  if (a.as_json) {
    fmt::print(out, "{}\n", doc.dump(2));
  } else {
    fmt::print(out, "{:<8} {:>5} {:>10}\n", "mode", "MHz", "total mW");
    for (const auto& r : reports) fmt::print(out, "{:<8} {:>5} {:>10.3f}\n", mode_name(r.mode), r.frequency_mhz, r.total_mw);
    for (const auto& r : reports) {
      fmt::print(out, "\n{} breakdown\n", mode_name(r.mode));
      for (const auto& s : r.breakdown) fmt::print(out, "  {:<16} {:>8.3f} mW {:>6.1f}%\n", s.name, s.mw, s.percent);
    }
    if (all_modes) {
      fmt::print(out, "\nsavings raw->balance {:.1f}%, raw->cnn {:.1f}%\n",
                 doc["savings"]["raw_to_balance_pct"].get<double>(),
                 doc["savings"]["raw_to_cnn_pct"].get<double>());
    }
  }
  if (!g.out.empty()) write_text(g.out, doc.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

void apply_config(const json& j, CliConfig& cfg) {
  reject_unknown(j, {"balance", "power", "generator", "simulation"}, "config");
  if (j.contains("balance")) apply_balance(j["balance"], cfg.balance);
  if (j.contains("power")) apply_power(j["power"], cfg.power);
  if (j.contains("generator")) apply_generator(j["generator"], cfg.generator);
  if (j.contains("simulation")) {
    reject_unknown(j["simulation"], {"fifo_capacity"}, "simulation");
    take(j["simulation"], "fifo_capacity", cfg.fifo_capacity);
    if (cfg.fifo_capacity == 0) throw std::invalid_argument("config: simulation.fifo_capacity must be positive");
  }
}

CliConfig load_config(const std::filesystem::path& path) {
  CliConfig cfg;
  const json j = read_json_file(path);
  try {
    apply_config(j, cfg);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return cfg;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wobble-board sensor node toolkit", "wobble"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON config overriding balance/power/generator/simulation parameters");
  app.add_option("--seed", g.seed, "Base seed");
  app.add_option("--out", g.out, "Output path (dataset dir, trace file or report file)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset with manifest");
  gen_cmd->add_option("--classes", gen.classes, "Class labels (B FB S R G); default all");
  gen_cmd->add_option("--count", gen.count, "Recordings per class")->capture_default_str();
  gen_cmd->add_option("--duration", gen.duration_s, "Recording length in seconds")->capture_default_str();
  gen_cmd->add_option("--train-fraction", gen.train_fraction, "Recording-level train split")->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a scenario through the node simulator");
  sim_cmd->add_option("scenario", sim.scenario, "Scenario JSON")->required();
  sim_cmd->add_option("--weights", sim.weights, "Weight file (needed when the scenario enters CNN mode)");
  sim_cmd->add_option("--report", sim.report, "Report path (default <trace>.report.json)");
  sim_cmd->add_flag("--no-task-records", sim.no_task_records, "Omit task_start/task_end records from the trace");

  InferArgs inf;
  auto* inf_cmd = app.add_subcommand("infer", "Classify the recordings of a manifest");
  inf_cmd->add_option("--weights", inf.weights, "Weight file")->required();
  inf_cmd->add_option("--manifest", inf.manifest, "Dataset manifest.json")->required();
  inf_cmd->add_option("--split", inf.split, "Only recordings from this split");
  inf_cmd->add_option("--stride", inf.stride_s, "Window stride in seconds")->capture_default_str();
  inf_cmd->add_option("--threads", inf.threads, "Worker threads (0 = hardware)");

  GoldenArgs gold;
  auto* gold_cmd = app.add_subcommand("verify-golden", "Replay golden vectors through the inference engine");
  gold_cmd->add_option("--weights", gold.weights, "Weight file")->required();
  gold_cmd->add_option("--golden", gold.golden, "Golden JSON")->required();
  gold_cmd->add_option("--max-delta", gold.max_delta, "Allowed per-logit difference")->capture_default_str();

  PowerArgs pow;
  auto* pow_cmd = app.add_subcommand("power", "Analytic power per operating mode");
  pow_cmd->add_option("--mode", pow.modes, "raw, balance or cnn; default all");
  pow_cmd->add_option("--frequency", pow.frequency_mhz, "Clock override in MHz");
  pow_cmd->add_flag("--json", pow.as_json, "Emit JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitIo;
  }

  try {
    CliConfig cfg = g.config_path.empty() ? CliConfig{} : load_config(g.config_path);
    if (gen_cmd->parsed()) return cmd_gen(gen, g, cfg, out);
    if (sim_cmd->parsed()) return cmd_simulate(sim, g, cfg, out);
    if (inf_cmd->parsed()) return cmd_infer(inf, g, out);
    if (gold_cmd->parsed()) return cmd_verify_golden(gold, out, err);
    if (pow_cmd->parsed()) return cmd_power(pow, g, cfg, out);
    return kExitIo;
  } catch (const power::FeasibilityError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const pnet::SchedulerError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const ValidationFailure& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  }
}

}  // namespace wobble::cli
