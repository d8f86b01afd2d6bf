#pragma once

// Text checkpoint format, version 1:
//
//   uavmarl-checkpoint 1
//   meta <key> <value>          (zero or more; value runs to end of line)
//   tensor <name> <rows> <cols>
//   <rows*cols hexfloat values, row-major, space separated>
//   ...
//   end
//
// Values are written with std::to_chars in hex form, so a load reproduces
// every bit on any IEEE-754 platform.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uavmarl/error.hpp"
#include "uavmarl/nn.hpp"

namespace uavmarl {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<ParamTensor> tensors;

  const std::string& require(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IncompatibleError("checkpoint is missing meta key '" + key + "'");
    return it->second;
  }

  const ParamTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline std::string hexfloat(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, end);
}

inline double parse_hexfloat(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  if (ec != std::errc() || end != s.data() + s.size()) {
    // from_chars does not accept the textual inf/nan forms in hex mode.
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw IncompatibleError("checkpoint: malformed value '" + s + "'");
  }
  return v;
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out = "uavmarl-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  for (const auto& [key, value] : ckpt.meta) out += "meta " + key + " " + value + "\n";
  for (const auto& t : ckpt.tensors) {
    out += "tensor " + t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      if (k) out += ' ';
      out += hexfloat(t.values[k]);
    }
    out += "\n";
  }
  out += "end\n";
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "uavmarl-checkpoint " + std::to_string(kCheckpointVersion)) {
    throw IncompatibleError("checkpoint: unsupported or missing header");
  }
  Checkpoint ckpt;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      const auto sep = line.find(' ', 5);
      if (sep == std::string::npos) throw IncompatibleError("checkpoint: malformed meta line");
      ckpt.meta[line.substr(5, sep - 5)] = line.substr(sep + 1);
    } else if (line.rfind("tensor ", 0) == 0) {
      std::istringstream head(line.substr(7));
      std::string name;
      std::size_t rows = 0;
      std::size_t cols = 0;
      if (!(head >> name >> rows >> cols)) throw IncompatibleError("checkpoint: malformed tensor header");
      ParamTensor t(name, rows, cols);
      std::string values;
      std::getline(in, values);
      std::istringstream vs(values);
      std::string tok;
      std::size_t k = 0;
      while (vs >> tok) {
        if (k >= t.size()) throw IncompatibleError("checkpoint: too many values for tensor " + name);
        t.values[k++] = parse_hexfloat(tok);
      }
      if (k != t.size()) throw IncompatibleError("checkpoint: too few values for tensor " + name);
      ckpt.tensors.push_back(std::move(t));
    } else if (!line.empty()) {
      throw IncompatibleError("checkpoint: unexpected line '" + line + "'");
    }
  }
  if (!ended) throw IncompatibleError("checkpoint: truncated (no end marker)");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << serialize_checkpoint(ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace uavmarl
