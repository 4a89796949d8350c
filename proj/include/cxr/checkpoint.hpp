#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "cxr/model.hpp"

namespace cxr {

// Little-endian layout:
//   "CXRF" | version u32 | header length u64 | header (JSON, UTF-8)
//   | per parameterized layer: u64 byte length + weight then bias elements
//   | CRC32 of all preceding bytes (u32)
inline constexpr char kCheckpointMagic[4] = {'C', 'X', 'R', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Version, Truncated, Checksum, Header, SpecMismatch };

  CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

template <typename T>
void save_checkpoint(const ModelGraph<T>& model, const std::filesystem::path& path);

template <typename T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace cxr
