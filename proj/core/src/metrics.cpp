#include "catgcn/metrics.hpp"

#include "catgcn/error.hpp"

namespace catgcn {

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassId> predictions,
                                                       std::span<const ClassId> labels,
                                                       std::span<const NodeId> mask, std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (NodeId u : mask) {
    if (u >= labels.size() || u >= predictions.size()) throw ContractError("evaluate: mask index out of range");
    const ClassId t = labels[u];
    const ClassId p = predictions[u];
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes || p < 0 || static_cast<std::size_t>(p) >= num_classes) {
      throw ContractError("evaluate: class index out of range at node " + std::to_string(u));
    }
    ++cm[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

Metrics evaluate(std::span<const ClassId> predictions, std::span<const ClassId> labels,
                 std::span<const NodeId> mask, std::size_t num_classes) {
  if (mask.empty()) throw ContractError("evaluate: empty mask");
  if (num_classes == 0) throw ContractError("evaluate: no classes");
  const auto cm = confusion_matrix(predictions, labels, mask, num_classes);

  std::size_t correct = 0;
  for (std::size_t c = 0; c < num_classes; ++c) correct += cm[c][c];

  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t tp = cm[c][c];
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    const double precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    const double recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
    if (precision + recall > 0.0) f1_sum += 2.0 * precision * recall / (precision + recall);
  }

  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(mask.size());
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

}  // namespace catgcn
