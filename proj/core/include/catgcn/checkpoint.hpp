#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "catgcn/model.hpp"
#include "catgcn/trainer.hpp"

namespace catgcn {

// Binary checkpoint layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "CATGCNCK"
//   offset 8   u32       format version (1)
//   offset 12  u64       header length H
//   offset 20  H bytes   UTF-8 JSON header
//   offset 20+H          tensor data, f64 little-endian, row-major,
//                        tensors concatenated in header order
//
// The header holds the training config, model shapes, dataset fingerprint,
// library version and a manifest of {name, rows, cols, offset} per tensor
// where offset counts bytes from the start of the data block.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  std::uint64_t dataset_fingerprint = 0;
  std::size_t best_epoch = 0;
  std::string library_version;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace catgcn
