#include "wobble/golden.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

#include <openssl/evp.h>

namespace wobble::model {

namespace {

constexpr std::size_t kInputBytes = 2 * signal::kWindowSamples;

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("malformed base64");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

GoldenSet parse_golden(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "wobble-golden") throw std::invalid_argument("not a wobble-golden document");
    if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported golden version");
    GoldenSet g;
    g.weights_sha256 = j.value("weights_sha256", std::string{});
    for (const auto& w : j.value("warnings", nlohmann::json::array())) g.warnings.push_back(w.get<std::string>());
    for (const auto& c : j.at("cases")) {
      GoldenCase gc;
      const auto raw = base64_decode(c.at("input").get<std::string>());
      if (raw.size() != kInputBytes) {
        throw std::invalid_argument("golden input has " + std::to_string(raw.size()) + " bytes, expected 430");
      }
      gc.input.assign(raw.begin(), raw.end());
      const auto logits = c.at("logits").get<std::vector<int>>();
      if (logits.size() != kNumClasses) throw std::invalid_argument("golden case needs 5 logits");
      for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (logits[i] < -128 || logits[i] > 127) throw std::invalid_argument("golden logit outside int8");
        gc.logits[i] = static_cast<std::int8_t>(logits[i]);
      }
      gc.cls = class_from_code(c.at("class").get<int>());
      g.cases.push_back(std::move(gc));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed golden file: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw std::invalid_argument(std::string("malformed golden file: ") + e.what());
  }
}

nlohmann::json to_json(const GoldenSet& g) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : g.cases) {
    const std::span<const std::uint8_t> raw(reinterpret_cast<const std::uint8_t*>(c.input.data()), c.input.size());
    std::vector<int> logits(c.logits.begin(), c.logits.end());
    cases.push_back({{"input", base64_encode(raw)}, {"logits", logits}, {"class", class_code(c.cls)}});
  }
  return {{"format", "wobble-golden"},
          {"version", 1},
          {"weights_sha256", g.weights_sha256},
          {"warnings", g.warnings},
          {"cases", std::move(cases)}};
}

GoldenReport verify_golden(const ModelSpec& m, const GoldenSet& g, int max_delta) {
  GoldenReport r;
  r.cases = g.cases.size();
  if (g.cases.empty()) r.warnings.push_back("golden set is empty; nothing verified");
  for (std::size_t i = 0; i < g.cases.size(); ++i) {
    const GoldenCase& c = g.cases[i];
    const qnn::QuantizedTensor input(c.input, m.input_channels, m.input_length, m.input);
    const Inference inf = infer_window(m, input);
    int worst = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      worst = std::max(worst, std::abs(static_cast<int>(inf.logits[k]) - static_cast<int>(c.logits[k])));
    }
    r.max_logit_delta = std::max(r.max_logit_delta, worst);
    if (inf.cls == c.cls) ++r.argmax_agree;
    if (inf.cls != c.cls) {
      r.mismatches.push_back({i, "class " + std::string(class_label(inf.cls)) + " != expected " +
                                     std::string(class_label(c.cls))});
    } else if (worst > max_delta) {
      r.mismatches.push_back({i, "logit delta " + std::to_string(worst) + " exceeds " + std::to_string(max_delta)});
    }
  }
  return r;
}

GoldenSet make_golden(const ModelSpec& m, std::span<const qnn::QuantizedTensor> inputs) {
  GoldenSet g;
  g.weights_sha256 = sha256_hex(serialize(m));
  for (const auto& in : inputs) {
    const Inference inf = infer_window(m, in);
    g.cases.push_back({in.data, inf.logits, inf.cls});
  }
  return g;
}

}  // namespace wobble::model
