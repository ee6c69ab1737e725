#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "acort/autodiff.hpp"

namespace acort {

// Binary layout, all integers little-endian:
//   magic "ACORTCKP" (8 bytes), version byte, u64 record count,
//   then per record: u32 name length, name bytes, u32 rank, rank x u64 dims,
//   product(dims) x f64 payload.
inline constexpr char kCheckpointMagic[8] = {'A', 'C', 'O', 'R', 'T', 'C', 'K', 'P'};
inline constexpr unsigned char kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

void write_checkpoint(std::ostream& out, std::span<const ParameterPtr> params);
std::vector<CheckpointRecord> read_checkpoint(std::istream& in);

/// Copies records into same-named parameters. Every parameter needs exactly
/// one record of matching shape, and no record may be left over.
void load_checkpoint(std::istream& in, std::span<const ParameterPtr> params);

void save_checkpoint_file(const std::string& path, std::span<const ParameterPtr> params);
void load_checkpoint_file(const std::string& path, std::span<const ParameterPtr> params);

}  // namespace acort
