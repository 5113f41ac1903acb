#ifndef UNETV2_CHECKPOINT_HPP
#define UNETV2_CHECKPOINT_HPP

#include "unetv2/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace unetv2 {

// File layout, all integers little-endian:
//   "UNV2" | u32 version (1) | u32 entry count
//   per entry: u16 name length | UTF-8 name | u8 rank | rank x u32 extent | f32 values, row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc { io, bad_magic, bad_version, truncated, duplicate_name, trailing_data };

const char* to_string(CheckpointErrc code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  CheckpointErrc code() const noexcept { return code_; }

 private:
  CheckpointErrc code_;
};

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& entries);
NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const NamedTensors& entries, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace unetv2

#endif  // UNETV2_CHECKPOINT_HPP
