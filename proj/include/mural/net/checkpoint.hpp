#pragma once

// Parameter checkpoints.
//
//   mlp-v1 <input_dim> <hidden sizes, comma separated, "-" if none> <seed>\n
//   <parameter_count little-endian IEEE-754 doubles>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mural/net/mlp.hpp"

namespace mural::net {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// In-memory copy of a model in checkpoint format.
struct ModelSnapshot {
  std::string bytes;
};

inline std::string encode_checkpoint(const MlpModel& m) {
  std::string out = "mlp-v1 " + std::to_string(m.arch.input_dim) + ' ';
  if (m.arch.hidden_sizes.empty()) out += '-';
  for (std::size_t i = 0; i < m.arch.hidden_sizes.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(m.arch.hidden_sizes[i]);
  }
  out += ' ' + std::to_string(m.seed) + '\n';
  out.reserve(out.size() + 8 * m.params.size());
  for (double p : m.params) {
    auto u = std::bit_cast<std::uint64_t>(p);
    for (int b = 0; b < 8; ++b) out += static_cast<char>((u >> (8 * b)) & 0xff);
  }
  return out;
}

inline MlpModel decode_checkpoint(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw CheckpointError("checkpoint: missing header line");
  std::istringstream header{std::string(bytes.substr(0, nl))};
  std::string magic, hidden, extra;
  MlpModel m;
  if (!(header >> magic >> m.arch.input_dim >> hidden >> m.seed) || (header >> extra))
    throw CheckpointError("checkpoint: malformed header");
  if (magic != "mlp-v1") throw CheckpointError("checkpoint: unknown format '" + magic + "'");
  if (hidden != "-") {
    std::istringstream hs(hidden);
    std::string tok;
    while (std::getline(hs, tok, ',')) {
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(tok, &pos);
      } catch (const std::exception&) {
        throw CheckpointError("checkpoint: bad hidden size '" + tok + "'");
      }
      if (pos != tok.size()) throw CheckpointError("checkpoint: bad hidden size '" + tok + "'");
      m.arch.hidden_sizes.push_back(v);
    }
  }
  try {
    m.arch.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  const auto body = bytes.substr(nl + 1);
  const std::size_t n = m.arch.parameter_count();
  if (body.size() != 8 * n)
    throw CheckpointError("checkpoint: expected " + std::to_string(8 * n) +
                          " parameter bytes, found " + std::to_string(body.size()));
  m.params.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b)
      u |= static_cast<std::uint64_t>(static_cast<unsigned char>(body[8 * i + b])) << (8 * b);
    m.params[i] = std::bit_cast<double>(u);
  }
  return m;
}

inline ModelSnapshot snapshot(const MlpModel& m) { return {encode_checkpoint(m)}; }
inline MlpModel restore(const ModelSnapshot& s) { return decode_checkpoint(s.bytes); }

inline void save_checkpoint(const MlpModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  const auto bytes = encode_checkpoint(m);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

inline MlpModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace mural::net
