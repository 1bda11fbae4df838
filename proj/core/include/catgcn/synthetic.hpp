#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "catgcn/dataset.hpp"

namespace catgcn {

enum class SyntheticKind {
  // Label is carried only by which pair of signal features co-occur.
  kLocalSignal,
  // Label is the feature group most of the node's features come from.
  kGlobalSignal,
  // Features are uninformative; labels are visible only through the graph.
  kHomophily,
};

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kLocalSignal;
  std::size_t n_nodes = 2000;
  std::size_t n_feats = 200;
  std::size_t n_classes = 4;
  std::size_t n_f = 10;  // features per node
  double p_in = 0.001;
  double p_out = 0.001;
  std::uint64_t seed = 0;
};

// Share of a global-signal node's features drawn from its label's group.
inline constexpr double kGlobalSignalShare = 0.7;

RawDataset generate_synthetic(const SyntheticSpec& spec);

// Writes edges.tsv, features.tsv, labels.tsv and meta.json into dir.
void write_synthetic(const RawDataset& dataset, const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace catgcn
