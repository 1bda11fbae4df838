#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "catgcn/dataset.hpp"

namespace catgcn {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// Accuracy and macro-F1 over the nodes in `mask`. Macro-F1 averages F1 over
// all num_classes classes; a class with precision + recall == 0 (including
// one that is neither present nor predicted) contributes 0.
Metrics evaluate(std::span<const ClassId> predictions, std::span<const ClassId> labels,
                 std::span<const NodeId> mask, std::size_t num_classes);

// confusion[truth][prediction] counts over mask.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassId> predictions,
                                                       std::span<const ClassId> labels,
                                                       std::span<const NodeId> mask, std::size_t num_classes);

}  // namespace catgcn
