#include "unetv2/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace unetv2 {
namespace {

constexpr std::uint8_t kMagic[4] = {'U', 'N', 'V', '2'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int s = 0; s < 16; s += 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint64_t uint(std::size_t width, const char* what) {
    need(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw CheckpointError(CheckpointErrc::truncated, std::string("file ends inside ") + what);
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* to_string(CheckpointErrc code) {
  switch (code) {
    case CheckpointErrc::io: return "checkpoint i/o error";
    case CheckpointErrc::bad_magic: return "not a checkpoint (bad magic)";
    case CheckpointErrc::bad_version: return "unsupported checkpoint version";
    case CheckpointErrc::truncated: return "truncated checkpoint";
    case CheckpointErrc::duplicate_name: return "duplicate tensor name";
    case CheckpointErrc::trailing_data: return "trailing bytes after last entry";
  }
  return "checkpoint error";
}

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& entries) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  std::set<std::string> seen;
  for (const auto& [name, tensor] : entries) {
    if (!seen.insert(name).second) throw CheckpointError(CheckpointErrc::duplicate_name, name);
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name longer than 65535 bytes");
    if (tensor.rank() > 0xff) throw std::invalid_argument("checkpoint: rank above 255 for " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) {
      if (e > 0xffffffffu) throw std::invalid_argument("checkpoint: extent too large in " + name);
      w.u32(static_cast<std::uint32_t>(e));
    }
    for (float v : tensor.values()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  return std::move(w.bytes);
}

NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrc::bad_magic, "expected \"UNV2\"");
  }
  const auto version = r.uint(4, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrc::bad_version, "version " + std::to_string(version) + ", this build reads " +
                                                           std::to_string(kCheckpointVersion));
  }
  const auto count = r.uint(4, "entry count");
  NamedTensors out;
  std::set<std::string> seen;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = r.uint(2, "name length");
    auto name_bytes = r.take(len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) throw CheckpointError(CheckpointErrc::duplicate_name, name);
    const auto rank = r.uint(1, "rank");
    Shape shape;
    std::size_t n = 1;
    bool overflow = false;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape.push_back(r.uint(4, "extents"));
      overflow = __builtin_mul_overflow(n, shape.back(), &n) || overflow;
    }
    if (overflow || n > r.remaining() / 4) {
      throw CheckpointError(CheckpointErrc::truncated, "values of '" + name + "' run past the end of the file");
    }
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4, "values")));
    out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) {
    throw CheckpointError(CheckpointErrc::trailing_data, std::to_string(r.remaining()) + " bytes");
  }
  return out;
}

void save_checkpoint(const NamedTensors& entries, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointErrc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointErrc::io, "write failed for " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointErrc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace unetv2
