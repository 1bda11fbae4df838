#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "catgcn/autodiff.hpp"
#include "catgcn/dataset.hpp"
#include "catgcn/interaction.hpp"

namespace catgcn {

enum class Mode { kTrain, kEval };
enum class DropoutSite { kEmbedding, kProjections, kBoth };

std::string_view to_string(DropoutSite s);
DropoutSite parse_dropout_site(std::string_view s);

struct ModelConfig {
  InteractionConfig interaction;
  std::size_t hops = 2;
  DropoutSite dropout_site = DropoutSite::kEmbedding;
};

struct ModelShapes {
  std::size_t num_features = 0;
  std::size_t emb_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 0;
  bool projection_hidden = false;

  friend bool operator==(const ModelShapes&, const ModelShapes&) = default;
};

struct ModelParams {
  EmbeddingTable embedding;
  InteractionParams interaction;
  double dropout = 0.0;

  // Trainable tensors in a fixed order; hidden-layer tensors only when present.
  std::vector<std::pair<std::string_view, DenseMatrix*>> tensors();
  std::vector<std::pair<std::string_view, const DenseMatrix*>> tensors() const;

  ModelShapes shapes() const;
  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct ModelOutput {
  DenseMatrix h;      // initial representations, N x C
  DenseMatrix y;      // after neighborhood aggregation, N x C
  DenseMatrix probs;  // row-wise softmax of y
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  // Keys the dropout masks in train mode.
  std::uint64_t dropout_seed = 0;
  // Overrides the dataset's feature sample (per-epoch resampling).
  const FeatureSample* sample = nullptr;
};

ModelOutput model_forward(const ModelParams& params, const Dataset& data, const ModelConfig& config,
                          const ForwardOptions& options = {});

// Tape handles of the trainable tensors, aligned with ModelParams::tensors().
struct ParamVars {
  std::vector<Var> all;
  Var embedding, conv_weight, global_proj, global_bias, local_proj, local_bias;
  Var global_hidden, global_hidden_bias, local_hidden, local_hidden_bias;
};

struct ForwardVars {
  Var h;
  Var y;
};

ParamVars record_params(Tape& tape, const ModelParams& params, bool requires_grad);

// Records the forward pass. The global branch is evaluated as
// relu(P~ gather(E_table W)) which equals relu(P~ E W) because both the
// gather and P~ act on rows while W acts on columns.
ForwardVars record_forward(Tape& tape, const ParamVars& vars, const ModelParams& params, const CsrMatrix& norm_adj,
                           const FeatureSample& sample, const ModelConfig& config, const ForwardOptions& options);

// Mean cross-entropy over train_ids plus eta * sum of squared Frobenius
// norms of every trainable tensor.
Var record_loss(Tape& tape, const ForwardVars& fwd, const ParamVars& vars, std::span<const ClassId> labels,
                std::span<const NodeId> train_ids, double eta);

double loss(const ModelOutput& output, std::span<const ClassId> labels, std::span<const NodeId> mask, double eta,
            const ModelParams& params);

// Arg-max per row, ties to the smallest class index.
std::vector<ClassId> predict(const DenseMatrix& probs);
inline std::vector<ClassId> predict(const ModelOutput& output) { return predict(output.probs); }

}  // namespace catgcn
