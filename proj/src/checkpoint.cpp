#include "lfsr/checkpoint.hpp"
#include "lfsr/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lfsr {

namespace {

constexpr char kMagic[] = "LFSR1";
constexpr std::size_t kMagicSize = 5;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::uint32_t crc32_bytes(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const CheckpointEntry& e) { return e.name.rfind(prefix, 0) == 0; });
}

std::string Checkpoint::serialize() const {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries) {
    if (static_cast<Index>(e.values.size()) != numel(e.shape))
      throw CheckpointError("checkpoint: entry " + e.name + " has the wrong number of values");
    tensors.push_back({{"name", e.name}, {"shape", e.shape}});
  }
  const nlohmann::json header{{"format", 1}, {"dtype", "float32"}, {"step", step}, {"config", config},
                              {"tensors", tensors}};
  const std::string text = header.dump();
  std::string out(kMagic, kMagicSize);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& e : entries)
    for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  put_u32(out, crc32_bytes(out.data(), out.size()));
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < kMagicSize + 8 || bytes.compare(0, kMagicSize, kMagic) != 0)
    throw CheckpointError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 4;
  if (crc32_bytes(bytes.data(), body) != get_u32(bytes, body)) throw CheckpointError("checkpoint: checksum mismatch");
  const std::size_t header_len = get_u32(bytes, kMagicSize);
  const std::size_t header_at = kMagicSize + 4;
  if (header_at + header_len > body) throw CheckpointError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("dtype", "") != "float32") throw CheckpointError("checkpoint: unsupported dtype");
  Checkpoint ckpt;
  ckpt.step = header.value("step", std::int64_t{0});
  ckpt.config = header.value("config", nlohmann::json::object());
  std::size_t at = header_at + header_len;
  for (const auto& t : header.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    const auto n = static_cast<std::size_t>(numel(e.shape));
    if (at + 4 * n > body) throw CheckpointError("checkpoint: truncated payload at " + e.name);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, at += 4) e.values[i] = std::bit_cast<float>(get_u32(bytes, at));
    ckpt.entries.push_back(std::move(e));
  }
  if (at != body) throw CheckpointError("checkpoint: trailing bytes after payload");
  return ckpt;
}

std::uint32_t Checkpoint::digest() const {
  const std::string bytes = serialize();
  return get_u32(bytes, bytes.size() - 4);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, ckpt.serialize());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Checkpoint::deserialize(bytes);
}

void store_parameters(Checkpoint& ckpt, const ParameterList<float>& params) {
  for (const auto& p : params) {
    CheckpointEntry e{p.name, p.tensor.shape(),
                      std::vector<float>(p.tensor.data(), p.tensor.data() + p.tensor.numel())};
    auto it = std::find_if(ckpt.entries.begin(), ckpt.entries.end(),
                           [&](const CheckpointEntry& x) { return x.name == p.name; });
    if (it != ckpt.entries.end())
      *it = std::move(e);
    else
      ckpt.entries.push_back(std::move(e));
  }
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList<float>& params) {
  for (const auto& p : params) {
    const CheckpointEntry* e = ckpt.find(p.name);
    if (!e) throw CheckpointError("checkpoint: missing parameter " + p.name);
    if (e->shape != p.tensor.shape())
      throw CheckpointError("checkpoint: " + p.name + " has shape " + to_string(e->shape) + ", model expects " +
                            to_string(p.tensor.shape()));
    Tensor<float> t = p.tensor;
    std::memcpy(t.data(), e->values.data(), e->values.size() * sizeof(float));
  }
}

}  // namespace lfsr
