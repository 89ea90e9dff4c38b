#include "wobble/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace wobble::signal {

namespace {

using json = nlohmann::json;

std::int16_t to_count(double v) {
  const double r = v < 0.0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5);
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t to_samples(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kSampleRateHz));
}

// Tilt trajectory of class G: a sequence of random-length segments, each one
// of a random walk, a motionless hold or a saturated slam against the floor.
void fill_other(std::vector<double>& xs, std::vector<double>& ys, double amp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> seg_len(2.0, 8.0);
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> step(0.0, 0.06 * amp);

  const std::size_t n = xs.size();
  double x = 0.0;
  double y = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const std::size_t len = std::max<std::size_t>(1, to_samples(seg_len(rng)));
    const std::size_t end = std::min(n, i + len);
    switch (kind_dist(rng)) {
      case 0: {  // random walk, reflected inside 1.5 A
        const double bound = 1.5 * amp;
        for (; i < end; ++i) {
          x = std::clamp(x + step(rng), -bound, bound);
          y = std::clamp(y + step(rng), -bound, bound);
          xs[i] = x;
          ys[i] = y;
        }
        break;
      }
      case 1: {  // stillness
        x = 0.0;
        y = 0.0;
        for (; i < end; ++i) xs[i] = ys[i] = 0.0;
        break;
      }
      default: {  // saturation bursts: edge pinned to the floor, direction changing abruptly
        double a = angle(rng);
        const double mag = 1.6 * amp;
        for (std::size_t k = 0; i < end; ++i, ++k) {
          if (k % 70 == 69) a = angle(rng);
          x = mag * std::cos(a);
          y = mag * std::sin(a);
          xs[i] = x;
          ys[i] = y;
        }
        break;
      }
    }
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

void AugmentConfig::validate() const {
  if (!(translation_stride_s > 0.0)) throw std::invalid_argument("translation stride must be positive");
  for (int f : dilation_factors) {
    if (f < 1) throw std::invalid_argument("dilation factor must be >= 1");
  }
}

Recording synthesize_motion(ExerciseClass cls, double duration_s, const GeneratorConfig& cfg) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw std::invalid_argument("duration must be positive");
  }
  const std::size_t n = to_samples(duration_s);
  const std::size_t code = class_code(cls);
  std::mt19937_64 rng(derive_seed(cfg.seed, code));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const auto [t_lo, t_hi] = cfg.period_s[code];
  std::uniform_real_distribution<double> period_dist(t_lo, std::max(t_lo, t_hi));

  const double amp = cfg.amplitude[code] * (1.0 + cfg.amplitude_jitter * unit(rng));
  const double period = period_dist(rng);
  const double phase = phase_dist(rng);
  const double omega = 2.0 * std::numbers::pi / period;

  std::vector<double> xs(n, 0.0);
  std::vector<double> ys(n, 0.0);
  switch (cls) {
    case ExerciseClass::kBasicStance: {
      // Small corrective wobble on both axes with independent periods.
      const double period_y = period_dist(rng);
      const double phase_y = phase_dist(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        xs[i] = amp * std::sin(omega * t + phase);
        ys[i] = amp * std::sin(2.0 * std::numbers::pi / period_y * t + phase_y);
      }
      break;
    }
    case ExerciseClass::kForwardBack:
      for (std::size_t i = 0; i < n; ++i) {
        ys[i] = amp * std::sin(omega * static_cast<double>(i) / kSampleRateHz + phase);
      }
      break;
    case ExerciseClass::kSideTilt:
      for (std::size_t i = 0; i < n; ++i) {
        xs[i] = amp * std::sin(omega * static_cast<double>(i) / kSampleRateHz + phase);
      }
      break;
    case ExerciseClass::kRotation: {
      // Circular roll, reversing direction half way through.
      double theta = phase;
      const double dt = 1.0 / kSampleRateHz;
      for (std::size_t i = 0; i < n; ++i) {
        xs[i] = amp * std::sin(theta);
        ys[i] = amp * std::cos(theta);
        theta += (2 * i < n ? omega : -omega) * dt;
      }
      break;
    }
    case ExerciseClass::kOther:
      fill_other(xs, ys, amp, rng);
      break;
  }

  Recording r;
  r.label = cls;
  r.samples.resize(n);
  const bool noisy = cfg.noise_sigma > 0.0;
  std::normal_distribution<double> noise(0.0, noisy ? cfg.noise_sigma : 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = xs[i];
    double y = ys[i];
    if (noisy) {
      x += noise(rng);
      y += noise(rng);
    }
    r.samples[i] = {static_cast<std::uint32_t>(i * kSamplePeriodMs), to_count(x), to_count(y)};
  }
  return r;
}

Recording generate_recording(ExerciseClass cls, double duration_s, const GeneratorConfig& cfg) {
  if (!(duration_s >= kWindowSeconds)) {
    throw std::invalid_argument("recording must last at least one 15 s window");
  }
  return synthesize_motion(cls, duration_s, cfg);
}

std::vector<Sample> downsample(std::span<const Sample> samples, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  std::vector<Sample> out;
  out.reserve(samples.size() / static_cast<std::size_t>(factor) + 1);
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(factor)) {
    out.push_back(samples[i]);
  }
  return out;
}

Recording rotate(const Recording& r, double theta_deg) {
  const double rad = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  Recording out = r;
  for (Sample& p : out.samples) {
    const double x = p.x;
    const double y = p.y;
    p.x = to_count(x * c - y * s);
    p.y = to_count(x * s + y * c);
  }
  return out;
}

std::size_t window_count(std::size_t n_samples, std::size_t window_samples, std::size_t stride_samples) {
  if (stride_samples == 0) throw std::invalid_argument("stride must be at least one sample");
  if (window_samples > n_samples) return 0;
  return (n_samples - window_samples) / stride_samples + 1;
}

double dilated_window_s(int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  const double span = static_cast<double>((kWindowSamples - 1) * static_cast<std::size_t>(factor) + 1);
  return std::max(kWindowSeconds, span / kSampleRateHz);
}

std::vector<Window> frame_windows(const Recording& r, double window_s, double stride_s, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (!(window_s > 0.0) || !(stride_s > 0.0)) {
    throw std::invalid_argument("window and stride must be positive");
  }
  const std::size_t window = to_samples(window_s);
  const std::size_t stride = std::max<std::size_t>(1, to_samples(stride_s));
  const std::size_t f = static_cast<std::size_t>(factor);
  if (window > r.samples.size()) throw std::invalid_argument("window longer than recording");
  if ((kWindowSamples - 1) * f >= window) {
    throw std::invalid_argument("window too short to yield 215 samples at this downsampling");
  }

  const std::size_t count = window_count(r.samples.size(), window, stride);
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    Window win;
    win.offset_s = static_cast<double>(start) / kSampleRateHz;
    win.x.resize(kWindowSamples);
    win.y.resize(kWindowSamples);
    for (std::size_t j = 0; j < kWindowSamples; ++j) {
      const Sample& s = r.samples[start + j * f];
      win.x[j] = s.x;
      win.y[j] = s.y;
    }
    out.push_back(std::move(win));
  }
  return out;
}

std::vector<DatasetEntry> augment_dataset(std::span<const DatasetEntry> entries, const AugmentConfig& cfg) {
  cfg.validate();
  std::vector<DatasetEntry> out;
  out.reserve(entries.size() * cfg.rotations_deg.size() * cfg.dilation_factors.size());
  for (const DatasetEntry& src : entries) {
    for (double theta : cfg.rotations_deg) {
      Recording rotated = theta == 0.0 ? src.recording : rotate(src.recording, theta);
      for (int f : cfg.dilation_factors) {
        DatasetEntry v;
        std::ostringstream id;
        id << src.id << "_r" << theta << "_d" << f;
        v.id = id.str();
        v.recording = rotated;
        v.seed = src.seed;
        v.provenance = {src.id, theta, f};
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

std::pair<std::vector<DatasetEntry>, std::vector<DatasetEntry>> split_dataset(
    std::vector<DatasetEntry> entries, double train_fraction, std::uint64_t seed) {
  if (entries.empty()) throw std::invalid_argument("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(derive_seed(seed, 0x5911u));
  std::shuffle(entries.begin(), entries.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(entries.size())));
  std::vector<DatasetEntry> train(std::make_move_iterator(entries.begin()),
                                  std::make_move_iterator(entries.begin() + static_cast<std::ptrdiff_t>(n_train)));
  std::vector<DatasetEntry> val(std::make_move_iterator(entries.begin() + static_cast<std::ptrdiff_t>(n_train)),
                                std::make_move_iterator(entries.end()));
  return {std::move(train), std::move(val)};
}

void write_csv(std::ostream& os, const Recording& r) {
  os << "t_ms,x,y\n";
  for (const Sample& s : r.samples) os << s.t_ms << ',' << s.x << ',' << s.y << '\n';
}

Recording read_csv(std::istream& is, ExerciseClass label) {
  Recording r;
  r.label = label;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("t_ms", 0) == 0) continue;

    long long fields[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 3; ++k) {
      auto [next, ec] = std::from_chars(p, end, fields[k]);
      if (ec != std::errc{} || (k < 2 && (next == end || *next != ',')) || (k == 2 && next != end)) {
        throw std::runtime_error("malformed CSV at line " + std::to_string(line_no));
      }
      p = next + 1;
    }
    if (fields[0] < 0 || fields[0] > 0xffffffffLL || fields[1] < -32768 || fields[1] > 32767 ||
        fields[2] < -32768 || fields[2] > 32767) {
      throw std::runtime_error("CSV value out of range at line " + std::to_string(line_no));
    }
    const Sample s{static_cast<std::uint32_t>(fields[0]), static_cast<std::int16_t>(fields[1]),
                   static_cast<std::int16_t>(fields[2])};
    if (!r.samples.empty() && s.t_ms <= r.samples.back().t_ms) {
      throw std::runtime_error("CSV timestamps not increasing at line " + std::to_string(line_no));
    }
    r.samples.push_back(s);
  }
  return r;
}

Manifest save_dataset(const std::filesystem::path& dir, std::span<const DatasetEntry> entries,
                      std::span<const std::string> splits) {
  std::filesystem::create_directories(dir / "recordings");
  Manifest m;
  json list = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const DatasetEntry& e = entries[i];
    ManifestEntry me;
    me.id = e.id;
    me.path = "recordings/" + e.id + ".csv";
    me.cls = e.recording.label;
    me.seed = e.seed;
    me.duration_s = e.recording.duration_s();
    me.split = i < splits.size() ? splits[i] : std::string{};
    me.provenance = e.provenance;

    std::ofstream os(dir / me.path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / me.path).string());
    write_csv(os, e.recording);
    if (!os) throw std::runtime_error("write failed for " + (dir / me.path).string());

    json j = {{"id", me.id},
              {"path", me.path},
              {"class", std::string(class_label(me.cls))},
              {"sample_rate_hz", me.sample_rate_hz},
              {"seed", me.seed},
              {"duration_s", me.duration_s},
              {"provenance",
               {{"source", me.provenance.source},
                {"rotation_deg", me.provenance.rotation_deg},
                {"downsample", me.provenance.downsample}}}};
    if (!me.split.empty()) j["split"] = me.split;
    list.push_back(std::move(j));
    m.entries.push_back(std::move(me));
  }
  json doc = {{"format", "wobble-dataset"}, {"version", 1}, {"recordings", std::move(list)}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  os << doc.dump(2) << '\n';
  return m;
}

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  Manifest m;
  try {
    const json doc = json::parse(is);
    for (const json& j : doc.at("recordings")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.cls = class_from_label(j.at("class").get<std::string>());
      e.sample_rate_hz = j.value("sample_rate_hz", kSampleRateHz);
      e.seed = j.value("seed", std::uint64_t{0});
      e.duration_s = j.value("duration_s", 0.0);
      e.split = j.value("split", std::string{});
      if (j.contains("provenance")) {
        const json& p = j["provenance"];
        e.provenance.source = p.value("source", std::string{});
        e.provenance.rotation_deg = p.value("rotation_deg", 0.0);
        e.provenance.downsample = p.value("downsample", kDownsampleFactor);
      }
      if (e.sample_rate_hz != kSampleRateHz) {
        throw std::runtime_error("recording " + e.id + " is not sampled at 100 Hz");
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + ex.what());
  }
  return m;
}

Recording load_recording(const std::filesystem::path& manifest_dir, const ManifestEntry& entry) {
  const auto path = manifest_dir / entry.path;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open recording " + path.string());
  return read_csv(is, entry.cls);
}

}  // namespace wobble::signal
