#pragma once

// Accelerometer recordings, the synthetic wobble-board generator, windowing
// and the training-set augmentations (translation, rotation, dilation).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wobble/exercise.hpp"

namespace wobble::signal {

inline constexpr double kSampleRateHz = 100.0;
inline constexpr std::uint32_t kSamplePeriodMs = 10;
inline constexpr std::size_t kWindowSamples = 215;
inline constexpr double kWindowSeconds = 15.0;
inline constexpr int kDownsampleFactor = 7;

struct Sample {
  std::uint32_t t_ms = 0;
  std::int16_t x = 0;
  std::int16_t y = 0;

  bool operator==(const Sample&) const = default;
};

struct Recording {
  std::vector<Sample> samples;  // 100 Hz, strictly increasing timestamps
  ExerciseClass label = ExerciseClass::kOther;

  /// Nominal duration: sample count / 100 Hz.
  double duration_s() const { return static_cast<double>(samples.size()) / kSampleRateHz; }

  bool operator==(const Recording&) const = default;
};

/// kWindowSamples downsampled pairs plus the offset of the first source sample.
struct Window {
  std::vector<std::int16_t> x;
  std::vector<std::int16_t> y;
  double offset_s = 0.0;
};

struct GeneratorConfig {
  // Indexed by class code.
  std::array<double, kNumClasses> amplitude{60.0, 900.0, 900.0, 900.0, 900.0};
  std::array<std::pair<double, double>, kNumClasses> period_s{
      {{2.0, 5.0}, {2.0, 5.0}, {2.0, 5.0}, {2.0, 5.0}, {2.0, 5.0}}};
  double noise_sigma = 40.0;
  double amplitude_jitter = 0.15;  // per-recording amplitude drawn from A * (1 +/- jitter)
  std::uint64_t seed = 1;
};

struct AugmentConfig {
  double translation_stride_s = 0.25;
  std::vector<double> rotations_deg{-4.0, 0.0, 4.0};
  std::vector<int> dilation_factors{6, 7, 8};

  void validate() const;
};

/// Where a dataset entry came from: the source recording id plus the transform applied.
struct Provenance {
  std::string source;  // "synthetic" for generated recordings, source id for variants
  double rotation_deg = 0.0;
  int downsample = kDownsampleFactor;

  bool operator==(const Provenance&) const = default;
};

struct DatasetEntry {
  std::string id;
  Recording recording;
  std::uint64_t seed = 0;
  Provenance provenance;
};

/// Class-shaped waveform plus Gaussian noise, deterministic for (class, duration, cfg).
/// Throws std::invalid_argument for durations shorter than one window.
Recording generate_recording(ExerciseClass cls, double duration_s, const GeneratorConfig& cfg);

/// Same generator without the one-window minimum; used for motion scripts.
Recording synthesize_motion(ExerciseClass cls, double duration_s, const GeneratorConfig& cfg);

/// Keeps samples 0, f, 2f, ...  Throws std::invalid_argument for factor < 1.
std::vector<Sample> downsample(std::span<const Sample> samples, int factor);

/// Rotates every (x, y) pair by theta degrees, rounding half away from zero with int16 saturation.
Recording rotate(const Recording& r, double theta_deg);

/// Number of window offsets i * stride with i * stride + window <= n (all in samples).
std::size_t window_count(std::size_t n_samples, std::size_t window_samples, std::size_t stride_samples);

/// Slides a window_s window by stride_s over r; every window is downsampled by
/// factor and truncated to kWindowSamples. Throws std::invalid_argument when the
/// window is longer than the recording or yields fewer than kWindowSamples.
std::vector<Window> frame_windows(const Recording& r, double window_s, double stride_s,
                                  int factor = kDownsampleFactor);

/// Window length whose downsampling by factor still yields kWindowSamples samples
/// (15 s at factor 7).
double dilated_window_s(int factor);

/// One variant per (source, rotation, dilation). Rotation is applied here; the
/// dilation factor is recorded in the provenance and applied at framing time.
std::vector<DatasetEntry> augment_dataset(std::span<const DatasetEntry> entries,
                                          const AugmentConfig& cfg);

/// Deterministic recording-level shuffle and split.
/// Throws std::invalid_argument on an empty set or fraction outside (0, 1).
std::pair<std::vector<DatasetEntry>, std::vector<DatasetEntry>> split_dataset(
    std::vector<DatasetEntry> entries, double train_fraction, std::uint64_t seed);

/// CSV lines "t_ms,x,y" with a header line.
void write_csv(std::ostream& os, const Recording& r);
Recording read_csv(std::istream& is, ExerciseClass label);

// Dataset on disk: <dir>/manifest.json plus one CSV per entry.
struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest directory
  ExerciseClass cls = ExerciseClass::kOther;
  double sample_rate_hz = kSampleRateHz;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::string split;  // "train", "validation" or empty
  Provenance provenance;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

/// Writes CSVs and manifest.json under dir, returns the manifest.
Manifest save_dataset(const std::filesystem::path& dir, std::span<const DatasetEntry> entries,
                      std::span<const std::string> splits = {});
Manifest load_manifest(const std::filesystem::path& manifest_path);
Recording load_recording(const std::filesystem::path& manifest_dir, const ManifestEntry& entry);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace wobble::signal
