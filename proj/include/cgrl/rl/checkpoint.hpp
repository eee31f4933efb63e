#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/core/tensor.hpp"

namespace cgrl::rl {

inline constexpr char kCheckpointMagic[4] = {'C', 'G', 'R', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet params;
  std::uint64_t step = 0;
  std::string config_echo;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

/// Versioned binary checkpoint: 4-byte magic, version, step counter, config
/// echo, then ordered (name, shape, row-major f64 little-endian) records.
inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, ckpt.step);
  detail::write_pod(os, static_cast<std::uint32_t>(ckpt.config_echo.size()));
  os.write(ckpt.config_echo.data(), static_cast<std::streamsize>(ckpt.config_echo.size()));
  detail::write_pod(os, static_cast<std::uint64_t>(ckpt.params.size()));
  for (const auto& [name, tensor] : ckpt.params) {
    detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(tensor.shape().size()));
    for (std::size_t d : tensor.shape()) detail::write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!os) throw FormatError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.step = detail::read_pod<std::uint64_t>(is);
  const auto echo_len = detail::read_pod<std::uint32_t>(is);
  ckpt.config_echo.resize(echo_len);
  is.read(ckpt.config_echo.data(), echo_len);
  const auto n_params = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < n_params; ++k) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = detail::read_pod<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
      total *= d;
    }
    std::vector<double> data(total);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!is) throw FormatError("checkpoint: truncated tensor data");
    ckpt.params.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace cgrl::rl
