#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "catgcn/graph.hpp"

namespace catgcn {

using FeatureId = std::uint32_t;
using ClassId = std::int32_t;
inline constexpr ClassId kUnlabeled = -1;

struct FeatureEntry {
  FeatureId id = 0;
  double weight = 1.0;

  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

// Graph, multi-hot categorical features and labels as read from disk.
// Feature lists are sorted by id with duplicates removed.
struct RawDataset {
  std::size_t num_nodes = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<FeatureEntry>> features;
  std::vector<ClassId> labels;  // kUnlabeled for nodes absent from the labels file

  std::size_t num_labeled() const;
  // Throws InputError when an invariant is broken.
  void validate() const;
};

struct LoadDiagnostics {
  std::size_t nodes = 0;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t labeled = 0;
  std::size_t feature_tokens = 0;
  std::size_t duplicate_feature_tokens = 0;
  AdjacencyStats edges;
};

RawDataset load_dataset(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                        const std::filesystem::path& labels_path, LoadDiagnostics* diagnostics = nullptr);

// Same as load_dataset, reading from streams; names are used in error messages.
RawDataset read_dataset(std::istream& edges, std::istream& features, std::istream& labels,
                        LoadDiagnostics* diagnostics = nullptr, const std::string& edges_name = "edges",
                        const std::string& features_name = "features", const std::string& labels_name = "labels");

// Canonical form: edges as sorted, deduplicated u < v pairs; features sorted
// by id, weight omitted when it is exactly 1; labels for labeled nodes only.
void write_dataset(const RawDataset& dataset, std::ostream& edges, std::ostream& features, std::ostream& labels);
void write_dataset(const RawDataset& dataset, const std::filesystem::path& edges_path,
                   const std::filesystem::path& features_path, const std::filesystem::path& labels_path);

// Order-independent 64-bit FNV-1a digest of the canonical serialization.
std::uint64_t fingerprint(const RawDataset& dataset);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// 80/10/10 with validation and test floored and the remainder in train.
SplitSizes split_sizes(std::size_t labeled);

struct SplitAssignment {
  std::vector<NodeId> train_ids;
  std::vector<NodeId> val_ids;
  std::vector<NodeId> test_ids;
  std::uint64_t seed = 0;
};

// Random split of the labeled nodes; each id list is sorted ascending.
SplitAssignment make_split(const RawDataset& dataset, std::uint64_t seed);

// Fixed-length feature sample per node, stored row-major (node, slot).
struct FeatureSample {
  std::size_t num_nodes = 0;
  std::size_t n_f = 0;
  std::uint64_t seed = 0;
  std::vector<FeatureEntry> entries;

  std::span<const FeatureEntry> node(std::size_t u) const { return {entries.data() + u * n_f, n_f}; }
};

// Without replacement when |S_u| >= n_f; otherwise all of S_u followed by
// uniform draws with replacement from S_u.
FeatureSample sample_features(const RawDataset& dataset, std::size_t n_f, std::uint64_t seed);

// Everything a training run consumes: the raw data, the normalized
// adjacency, a fixed feature sample and the split.
struct Dataset {
  RawDataset raw;
  CsrMatrix norm_adj;
  DegreeVector degrees;
  AdjacencyStats adjacency_stats;
  FeatureSample sample;
  SplitAssignment split;

  std::size_t num_nodes() const noexcept { return raw.num_nodes; }
  std::size_t num_classes() const noexcept { return raw.num_classes; }
};

// Split and feature sample are both derived from `seed`.
Dataset prepare_dataset(RawDataset raw, std::size_t n_f, std::uint64_t seed);

}  // namespace catgcn
