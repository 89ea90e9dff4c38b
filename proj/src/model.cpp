#include "wobble/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace wobble::model {

namespace {

using Kind = WeightFileError::Kind;

constexpr std::array<std::uint8_t, 4> kMagic = {'W', 'B', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

enum LayerType : std::uint8_t { kConv = 1, kPool = 2, kFc = 3, kFlatten = 4 };

static_assert(std::endian::native == std::endian::little, "weight format I/O assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void pad(std::size_t n) { bytes_.insert(bytes_.end(), n, 0); }
  void put_bytes(std::span<const std::int8_t> data) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
    bytes_.insert(bytes_.end(), p, p + data.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void skip(std::size_t n) {
    require(n);
    pos_ += n;
  }
  std::vector<std::int8_t> get_bytes(std::size_t n) {
    require(n);
    std::vector<std::int8_t> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw WeightFileError(Kind::kTruncated, "weight file truncated at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; weight files are far below 4 GiB.
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_requant(ByteWriter& w, const qnn::RequantSpec& r, float out_scale) {
  w.put<std::int8_t>(static_cast<std::int8_t>(r.output_zero_point));
  w.pad(1);
  w.put<std::int32_t>(r.multiplier);
  w.put<std::int8_t>(static_cast<std::int8_t>(r.shift));
  w.pad(3);
  w.put<float>(out_scale);
}

qnn::RequantSpec read_requant(ByteReader& r, float& out_scale, std::size_t layer) {
  qnn::RequantSpec spec;
  spec.output_zero_point = r.get<std::int8_t>();
  r.skip(1);
  spec.multiplier = r.get<std::int32_t>();
  spec.shift = r.get<std::int8_t>();
  r.skip(3);
  out_scale = r.get<float>();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw WeightFileError(Kind::kBadLayer, "layer " + std::to_string(layer) + ": " + e.what());
  }
  return spec;
}

bool read_relu(ByteReader& r, std::size_t layer) {
  const auto v = r.get<std::uint8_t>();
  if (v > 1) throw WeightFileError(Kind::kBadLayer, "layer " + std::to_string(layer) + ": relu flag not 0/1");
  return v == 1;
}

[[noreturn]] void shape_error(std::size_t layer, const std::string& msg) {
  throw WeightFileError(Kind::kShapeMismatch, "layer " + std::to_string(layer) + ": " + msg);
}

template <typename T>
T narrow_dim(std::size_t v, const char* what) {
  if (v > std::numeric_limits<T>::max()) {
    throw std::invalid_argument(std::string(what) + " does not fit the weight file field");
  }
  return static_cast<T>(v);
}

}  // namespace

std::vector<Shape> shape_chain(const ModelSpec& m) {
  std::vector<Shape> chain{{m.input_channels, m.input_length}};
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Shape in = chain.back();
    Shape out = std::visit(
        [&](const auto& layer) -> Shape {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, ConvLayer>) {
            const auto& w = layer.weights;
            if (w.in_channels != in.channels) {
              shape_error(i, "conv expects " + std::to_string(w.in_channels) + " channels, got " +
                                 std::to_string(in.channels));
            }
            if (w.kernel_size == 0 || w.kernel_size > in.length) shape_error(i, "conv kernel longer than input");
            return {w.out_channels, in.length - w.kernel_size + 1};
          } else if constexpr (std::is_same_v<T, PoolLayer>) {
            if (layer.kernel == 0 || layer.stride == 0 || layer.kernel > in.length) {
              shape_error(i, "pool kernel invalid for input length");
            }
            return {in.channels, (in.length - layer.kernel) / layer.stride + 1};
          } else if constexpr (std::is_same_v<T, FlattenLayer>) {
            return {1, in.channels * in.length};
          } else {
            if (layer.weights.in_features != in.channels * in.length) {
              shape_error(i, "fc expects " + std::to_string(layer.weights.in_features) + " inputs, got " +
                                 std::to_string(in.channels * in.length));
            }
            return {1, layer.weights.out_features};
          }
        },
        m.layers[i]);
    chain.push_back(out);
  }
  return chain;
}

void check_reference_topology(const ModelSpec& m) {
  const auto chain = shape_chain(m);
  if (m.input_channels != 2 || m.input_length != signal::kWindowSamples) {
    throw WeightFileError(Kind::kShapeMismatch, "input must be 2 x 215");
  }
  if (m.layers.size() != 7) throw WeightFileError(Kind::kShapeMismatch, "expected 7 layers");

  auto conv = [&](std::size_t i, std::size_t in, std::size_t out) {
    const auto* c = std::get_if<ConvLayer>(&m.layers[i]);
    if (!c || c->weights.in_channels != in || c->weights.out_channels != out || c->weights.kernel_size != 9) {
      shape_error(i, "expected conv " + std::to_string(in) + "->" + std::to_string(out) + " k9");
    }
  };
  auto pool = [&](std::size_t i) {
    const auto* p = std::get_if<PoolLayer>(&m.layers[i]);
    if (!p || p->kernel != 2 || p->stride != 2) shape_error(i, "expected max pool 2/2");
  };
  auto fc = [&](std::size_t i, std::size_t in, std::size_t out) {
    const auto* f = std::get_if<FcLayer>(&m.layers[i]);
    if (!f || f->weights.in_features != in || f->weights.out_features != out) {
      shape_error(i, "expected fc " + std::to_string(in) + "->" + std::to_string(out));
    }
  };
  conv(0, 2, 20);
  pool(1);
  conv(2, 20, 20);
  pool(3);
  if (!std::holds_alternative<FlattenLayer>(m.layers[4])) shape_error(4, "expected flatten");
  fc(5, 940, 100);
  fc(6, 100, kNumClasses);

  const std::array<std::size_t, 8> lengths = {215, 207, 103, 95, 47, 940, 100, 5};
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (chain[i].length != lengths[i]) shape_error(i, "length chain differs from 215-207-103-95-47-940-100-5");
  }
}

std::vector<std::uint8_t> serialize(const ModelSpec& m) {
  ByteWriter w;
  for (auto b : kMagic) w.put<std::uint8_t>(b);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint16_t>(narrow_dim<std::uint16_t>(m.layers.size(), "layer count"));
  w.put<std::uint16_t>(narrow_dim<std::uint16_t>(m.input_channels, "input channels"));
  w.put<std::uint16_t>(narrow_dim<std::uint16_t>(m.input_length, "input length"));
  w.put<float>(m.input.scale);
  w.put<std::int8_t>(static_cast<std::int8_t>(m.input.zero_point));
  w.pad(3);

  for (const Layer& layer : m.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer>) {
            w.put<std::uint8_t>(kConv);
            w.put<std::uint8_t>(l.relu ? 1 : 0);
            w.put<std::uint16_t>(narrow_dim<std::uint16_t>(l.weights.in_channels, "conv in"));
            w.put<std::uint16_t>(narrow_dim<std::uint16_t>(l.weights.out_channels, "conv out"));
            w.put<std::uint16_t>(narrow_dim<std::uint16_t>(l.weights.kernel_size, "conv kernel"));
            write_requant(w, l.requant, l.output_scale);
            w.put_bytes(l.weights.weights);
          } else if constexpr (std::is_same_v<T, PoolLayer>) {
            w.put<std::uint8_t>(kPool);
            w.put<std::uint8_t>(0);
            w.put<std::uint16_t>(narrow_dim<std::uint16_t>(l.kernel, "pool kernel"));
            w.put<std::uint16_t>(narrow_dim<std::uint16_t>(l.stride, "pool stride"));
          } else if constexpr (std::is_same_v<T, FlattenLayer>) {
            w.put<std::uint8_t>(kFlatten);
            w.put<std::uint8_t>(0);
          } else {
            w.put<std::uint8_t>(kFc);
            w.put<std::uint8_t>(l.relu ? 1 : 0);
            w.put<std::uint32_t>(narrow_dim<std::uint32_t>(l.weights.in_features, "fc in"));
            w.put<std::uint32_t>(narrow_dim<std::uint32_t>(l.weights.out_features, "fc out"));
            write_requant(w, l.requant, l.output_scale);
            w.put_bytes(l.weights.weights);
          }
        },
        layer);
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.put<std::uint32_t>(crc);
  return w.take();
}

ModelSpec deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) throw WeightFileError(Kind::kTruncated, "weight file shorter than magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw WeightFileError(Kind::kBadMagic, "not a WBNN weight file");
  }
  if (bytes.size() < 4 + sizeof(std::uint32_t)) throw WeightFileError(Kind::kTruncated, "weight file truncated");

  ByteReader r(bytes.first(bytes.size() - sizeof(std::uint32_t)));
  r.skip(kMagic.size());
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) {
    throw WeightFileError(Kind::kBadVersion, "unsupported weight file version " + std::to_string(version));
  }
  const auto layer_count = r.get<std::uint16_t>();

  ModelSpec m;
  m.input_channels = r.get<std::uint16_t>();
  m.input_length = r.get<std::uint16_t>();
  m.input.scale = r.get<float>();
  m.input.zero_point = r.get<std::int8_t>();
  r.skip(3);
  try {
    m.input.validate();
  } catch (const std::invalid_argument& e) {
    throw WeightFileError(Kind::kBadLayer, std::string("input: ") + e.what());
  }

  for (std::size_t i = 0; i < layer_count; ++i) {
    const auto type = r.get<std::uint8_t>();
    switch (type) {
      case kConv: {
        ConvLayer l;
        l.relu = read_relu(r, i);
        const std::size_t in = r.get<std::uint16_t>();
        const std::size_t out = r.get<std::uint16_t>();
        const std::size_t k = r.get<std::uint16_t>();
        l.requant = read_requant(r, l.output_scale, i);
        l.weights = qnn::ConvWeights(out, in, k, r.get_bytes(out * in * k));
        m.layers.emplace_back(std::move(l));
        break;
      }
      case kPool: {
        r.skip(1);
        PoolLayer l;
        l.kernel = r.get<std::uint16_t>();
        l.stride = r.get<std::uint16_t>();
        if (l.kernel == 0 || l.stride == 0) {
          throw WeightFileError(Kind::kBadLayer, "layer " + std::to_string(i) + ": zero pool kernel/stride");
        }
        m.layers.emplace_back(l);
        break;
      }
      case kFc: {
        FcLayer l;
        l.relu = read_relu(r, i);
        const std::size_t in = r.get<std::uint32_t>();
        const std::size_t out = r.get<std::uint32_t>();
        l.requant = read_requant(r, l.output_scale, i);
        if (in != 0 && out > r.remaining() / in) {
          throw WeightFileError(Kind::kTruncated, "layer " + std::to_string(i) + ": weights exceed file");
        }
        l.weights = qnn::FcWeights(out, in, r.get_bytes(out * in));
        m.layers.emplace_back(std::move(l));
        break;
      }
      case kFlatten:
        r.skip(1);
        m.layers.emplace_back(FlattenLayer{});
        break;
      default:
        throw WeightFileError(Kind::kBadLayer, "layer " + std::to_string(i) + ": unknown type " +
                                                    std::to_string(type));
    }
  }
  if (r.remaining() != 0) throw WeightFileError(Kind::kBadLayer, "unexpected bytes after last layer");

  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(stored), sizeof(stored));
  if (stored != crc32_of(bytes.first(bytes.size() - sizeof(stored)))) {
    throw WeightFileError(Kind::kBadChecksum, "weight file checksum mismatch");
  }

  shape_chain(m);
  return m;
}

ModelSpec load_weights(std::span<const std::uint8_t> bytes) {
  ModelSpec m = deserialize(bytes);
  check_reference_topology(m);
  return m;
}

ModelSpec load_weights_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open weight file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return load_weights(bytes);
}

void save_weights_file(const std::filesystem::path& path, const ModelSpec& m) {
  const auto bytes = serialize(m);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write weight file " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

ModelSpec make_reference_model(qnn::QuantParams input, double factor) {
  const auto requant = qnn::RequantSpec::from_real(factor, 0);
  ModelSpec m;
  m.input = input;
  m.layers.emplace_back(ConvLayer{qnn::ConvWeights(20, 2, 9), requant, 1.0f, true});
  m.layers.emplace_back(PoolLayer{2, 2});
  m.layers.emplace_back(ConvLayer{qnn::ConvWeights(20, 20, 9), requant, 1.0f, true});
  m.layers.emplace_back(PoolLayer{2, 2});
  m.layers.emplace_back(FlattenLayer{});
  m.layers.emplace_back(FcLayer{qnn::FcWeights(100, 940), requant, 1.0f, true});
  m.layers.emplace_back(FcLayer{qnn::FcWeights(kNumClasses, 100), requant, 1.0f, false});
  return m;
}

qnn::QuantizedTensor forward(const ModelSpec& m, const qnn::QuantizedTensor& input) {
  if (input.channels != m.input_channels || input.length != m.input_length) {
    throw qnn::DimensionError("input is " + std::to_string(input.channels) + "x" + std::to_string(input.length) +
                              ", model expects " + std::to_string(m.input_channels) + "x" +
                              std::to_string(m.input_length));
  }
  qnn::QuantizedTensor t = input;
  for (const Layer& layer : m.layers) {
    t = std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer>) {
            return qnn::conv1d(t, l.weights, l.requant, l.relu, l.output_scale);
          } else if constexpr (std::is_same_v<T, PoolLayer>) {
            return qnn::maxpool1d(t, l.kernel, l.stride);
          } else if constexpr (std::is_same_v<T, FlattenLayer>) {
            return qnn::flatten(t);
          } else {
            return qnn::fully_connected(t, l.weights, l.requant, l.relu, l.output_scale);
          }
        },
        layer);
  }
  return t;
}

ExerciseClass argmax_class(std::span<const std::int8_t> logits) {
  if (logits.size() != kNumClasses) throw qnn::DimensionError("expected 5 logits");
  // max_element returns the first maximum, i.e. the lowest class code.
  const auto it = std::max_element(logits.begin(), logits.end());
  return class_from_code(static_cast<int>(it - logits.begin()));
}

Inference infer_window(const ModelSpec& m, const qnn::QuantizedTensor& window) {
  const qnn::QuantizedTensor out = forward(m, window);
  if (out.size() != kNumClasses) {
    throw qnn::DimensionError("model produces " + std::to_string(out.size()) + " outputs, expected 5");
  }
  Inference inf;
  std::copy(out.data.begin(), out.data.end(), inf.logits.begin());
  inf.cls = argmax_class(inf.logits);
  return inf;
}

qnn::QuantizedTensor quantize_window(const ModelSpec& m, std::span<const std::int16_t> x,
                                     std::span<const std::int16_t> y) {
  if (x.size() != y.size()) throw qnn::DimensionError("window axes differ in length");
  std::vector<double> values;
  values.reserve(2 * x.size());
  values.insert(values.end(), x.begin(), x.end());
  values.insert(values.end(), y.begin(), y.end());
  return qnn::quantize(values, m.input, 2, x.size());
}

qnn::QuantizedTensor quantize_window(const ModelSpec& m, const signal::Window& w) {
  return quantize_window(m, w.x, w.y);
}

std::vector<TimedClass> classify_recording(const ModelSpec& m, const signal::Recording& r, double stride_s) {
  if (r.duration_s() < signal::kWindowSeconds) {
    throw std::invalid_argument("recording shorter than one 15 s window");
  }
  const auto windows = signal::frame_windows(r, signal::kWindowSeconds, stride_s, signal::kDownsampleFactor);
  std::vector<TimedClass> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    out.push_back({w.offset_s + signal::kWindowSeconds, infer_window(m, quantize_window(m, w))});
  }
  return out;
}

}  // namespace wobble::model
