#pragma once

#include "lfsr/nn.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfsr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Named float32 arrays plus a free-form config echo and a step counter.
///
/// File layout: "LFSR1", u32 header length, JSON header, float32 payload in
/// header order, then a CRC-32 of everything before it. Integers and floats are
/// little endian.
struct Checkpoint {
  std::vector<CheckpointEntry> entries;
  nlohmann::json config = nlohmann::json::object();
  std::int64_t step = 0;

  const CheckpointEntry* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  /// CRC-32 of the serialized payload; a cheap identity for a parameter set.
  std::uint32_t digest() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_bytes(const void* data, std::size_t size);

/// Appends (or replaces) the current values of `params`.
void store_parameters(Checkpoint& ckpt, const ParameterList<float>& params);

/// Copies checkpoint values into `params` in place. Every parameter must be present with the same shape.
void restore_parameters(const Checkpoint& ckpt, const ParameterList<float>& params);

}  // namespace lfsr
