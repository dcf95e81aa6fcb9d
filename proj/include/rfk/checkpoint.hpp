#pragma once

// Binary model files. Layout (all integers and floats little-endian):
//
//   "NRFK"  u32 version  u32 flags (bit 0: fine network, bit 1: optimizer state)
//   i32 L_position  i32 L_direction  u8 positional_encoding  u8 view_dependence
//   u8 include_raw  u8 reserved  u64 seed  i64 iteration
//   per network (coarse, then fine):
//     i32 position_dims direction_dims width depth skip_layer view_width
//     u64 parameter_count  f32[parameter_count] weights
//     [optimizer state]  i64 step_count  f32[n] first_moment  f32[n] second_moment

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfk/encoding.hpp"
#include "rfk/network.hpp"

namespace rfk {

inline constexpr char kCheckpointMagic[4] = {'N', 'R', 'F', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  EncodingConfig encoding;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  MlpParams<float> coarse;
  std::optional<MlpParams<float>> fine;
  std::optional<AdamState<float>> coarse_adam;
  std::optional<AdamState<float>> fine_adam;

  bool has_optimizer_state() const { return coarse_adam.has_value(); }
};

enum class CheckpointContents { weights_only, with_optimizer };

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_floats(const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* raw = reinterpret_cast<const unsigned char*>(data);
      bytes_.insert(bytes_.end(), raw, raw + n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) put(data[i]);
    }
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }
  void get_floats(float* out, std::size_t n) {
    need(n * sizeof(float));
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out, bytes_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = get<float>();
    }
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

inline void write_network(ByteWriter& w, const MlpParams<float>& p, const AdamState<float>* adam) {
  const MlpShape& s = p.shape();
  for (int v : {s.position_dims, s.direction_dims, s.width, s.depth, s.skip_layer, s.view_width})
    w.put<std::int32_t>(v);
  w.put<std::uint64_t>(p.size());
  w.put_floats(p.values().data(), p.size());
  if (adam) {
    if (static_cast<std::size_t>(adam->first_moment.size()) != p.size() ||
        static_cast<std::size_t>(adam->second_moment.size()) != p.size())
      throw CheckpointError("optimizer state does not match the network size");
    w.put<std::int64_t>(adam->step_count);
    w.put_floats(adam->first_moment.data(), p.size());
    w.put_floats(adam->second_moment.data(), p.size());
  }
}

inline MlpParams<float> read_network(ByteReader& r, std::optional<AdamState<float>>* adam) {
  MlpShape s;
  s.position_dims = r.get<std::int32_t>();
  s.direction_dims = r.get<std::int32_t>();
  s.width = r.get<std::int32_t>();
  s.depth = r.get<std::int32_t>();
  s.skip_layer = r.get<std::int32_t>();
  s.view_width = r.get<std::int32_t>();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint has an invalid layer shape: ") + e.what());
  }
  MlpParams<float> p(s);
  if (r.get<std::uint64_t>() != p.size()) throw CheckpointError("checkpoint parameter count disagrees with its shape");
  r.get_floats(p.values().data(), p.size());
  if (adam) {
    auto state = AdamState<float>::zeros(p.size());
    state.step_count = r.get<std::int64_t>();
    r.get_floats(state.first_moment.data(), p.size());
    r.get_floats(state.second_moment.data(), p.size());
    *adam = std::move(state);
  }
  return p;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ck, CheckpointContents contents) {
  const bool optimizer = contents == CheckpointContents::with_optimizer;
  if (optimizer && (!ck.coarse_adam || (ck.fine && !ck.fine_adam)))
    throw CheckpointError("checkpoint has no optimizer state to save");
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.put(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>((ck.fine ? 1u : 0u) | (optimizer ? 2u : 0u));
  w.put<std::int32_t>(ck.encoding.L_position);
  w.put<std::int32_t>(ck.encoding.L_direction);
  w.put<std::uint8_t>(ck.encoding.positional_encoding);
  w.put<std::uint8_t>(ck.encoding.view_dependence);
  w.put<std::uint8_t>(ck.encoding.include_raw);
  w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(ck.seed);
  w.put<std::int64_t>(ck.iteration);
  detail::write_network(w, ck.coarse, optimizer ? &*ck.coarse_adam : nullptr);
  if (ck.fine) detail::write_network(w, *ck.fine, optimizer ? &*ck.fine_adam : nullptr);
  return std::move(w.bytes());
}

inline Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  for (char c : kCheckpointMagic)
    if (r.get<char>() != c) throw CheckpointError("not a model checkpoint (bad magic bytes)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  const auto flags = r.get<std::uint32_t>();
  if (flags & ~3u) throw CheckpointError("checkpoint has unknown flags");
  const bool has_fine = flags & 1u, optimizer = flags & 2u;

  Checkpoint ck;
  ck.encoding.L_position = r.get<std::int32_t>();
  ck.encoding.L_direction = r.get<std::int32_t>();
  ck.encoding.positional_encoding = r.get<std::uint8_t>() != 0;
  ck.encoding.view_dependence = r.get<std::uint8_t>() != 0;
  ck.encoding.include_raw = r.get<std::uint8_t>() != 0;
  r.get<std::uint8_t>();
  ck.seed = r.get<std::uint64_t>();
  ck.iteration = r.get<std::int64_t>();
  ck.coarse = detail::read_network(r, optimizer ? &ck.coarse_adam : nullptr);
  if (has_fine) ck.fine = detail::read_network(r, optimizer ? &ck.fine_adam : nullptr);
  if (!r.at_end()) throw CheckpointError("checkpoint has trailing bytes");

  const MlpShape expected = MlpShape::for_encoding(ck.encoding);
  if (ck.coarse.shape().position_dims != expected.position_dims ||
      ck.coarse.shape().direction_dims != expected.direction_dims)
    throw CheckpointError("checkpoint network inputs do not match its encoding settings");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck,
                            CheckpointContents contents = CheckpointContents::with_optimizer) {
  const auto bytes = serialize_checkpoint(ck, contents);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint '" + path.string() + "' not found");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace rfk
