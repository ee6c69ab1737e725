#include "acort/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace acort {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

std::uint64_t get_uint(std::istream& in, int width) {
  unsigned char bytes[8] = {};
  in.read(reinterpret_cast<char*>(bytes), width);
  if (in.gcount() != width) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const ParameterPtr> params) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.put(static_cast<char>(kCheckpointVersion));
  put_u64(out, params.size());
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name().size()));
    out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
    const auto& shape = p->value().shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_u64(out, d);
    for (double v : p->value().data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

std::vector<CheckpointRecord> read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = static_cast<unsigned char>(get_uint(in, 1));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = get_uint(in, 8);
  std::vector<CheckpointRecord> records;
  for (std::uint64_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    const auto name_len = get_uint(in, 4);
    rec.name.resize(name_len);
    in.read(rec.name.data(), static_cast<std::streamsize>(name_len));
    if (static_cast<std::uint64_t>(in.gcount()) != name_len) throw std::runtime_error("checkpoint: truncated name");
    const auto rank = get_uint(in, 4);
    Shape shape(rank);
    for (auto& d : shape) d = get_uint(in, 8);
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(get_uint(in, 8));
    rec.value = Tensor(std::move(shape), std::move(data));
    records.push_back(std::move(rec));
  }
  return records;
}

void load_checkpoint(std::istream& in, std::span<const ParameterPtr> params) {
  std::map<std::string, Tensor> by_name;
  for (auto& rec : read_checkpoint(in)) {
    if (!by_name.emplace(rec.name, std::move(rec.value)).second) {
      throw std::runtime_error("checkpoint: duplicate record '" + rec.name + "'");
    }
  }
  if (by_name.size() != params.size()) {
    throw std::runtime_error("checkpoint: holds " + std::to_string(by_name.size()) + " records, model has " +
                             std::to_string(params.size()) + " parameters");
  }
  for (const auto& p : params) {
    auto it = by_name.find(p->name());
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing parameter '" + p->name() + "'");
    if (!it->second.same_shape(p->value())) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + p->name() + "'");
    }
    p->value() = it->second;
  }
}

void save_checkpoint_file(const std::string& path, std::span<const ParameterPtr> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(out, params);
}

void load_checkpoint_file(const std::string& path, std::span<const ParameterPtr> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  load_checkpoint(in, params);
}

}  // namespace acort
