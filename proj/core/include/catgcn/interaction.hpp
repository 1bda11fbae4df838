#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "catgcn/dataset.hpp"
#include "catgcn/dense.hpp"

namespace catgcn {

// Row i is the embedding of categorical feature i.
struct EmbeddingTable {
  DenseMatrix table;

  std::size_t num_features() const noexcept { return table.rows(); }
  std::size_t dim() const noexcept { return table.cols(); }
};

enum class Activation { kIdentity, kRelu };
enum class LocalPooling {
  kBiInteraction,
  // Mean of embeddings: the linear bag-of-features baseline with interaction
  // modeling switched off.
  kMean,
};

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);
std::string_view to_string(LocalPooling p);
LocalPooling parse_local_pooling(std::string_view s);

struct InteractionConfig {
  double rho = 21.0;    // probe coefficient of the artificial graph
  double alpha = 0.5;   // weight of the global branch in the fusion
  std::size_t n_f = 10;
  std::size_t hidden_dim = 64;
  Activation final_activation = Activation::kIdentity;
  LocalPooling local_pooling = LocalPooling::kBiInteraction;
  // Adds a relu hidden layer of width hidden_dim to both projections.
  bool projection_hidden = false;

  void validate() const;
};

struct InteractionParams {
  DenseMatrix conv_weight;   // emb_dim x hidden_dim, global graph convolution
  DenseMatrix global_proj;   // hidden_dim x C
  DenseMatrix global_bias;   // 1 x C
  DenseMatrix local_proj;    // emb_dim x C, or hidden_dim x C with a hidden layer
  DenseMatrix local_bias;    // 1 x C
  // Present only when InteractionConfig::projection_hidden is set.
  DenseMatrix global_hidden;       // hidden_dim x hidden_dim
  DenseMatrix global_hidden_bias;  // 1 x hidden_dim
  DenseMatrix local_hidden;        // emb_dim x hidden_dim
  DenseMatrix local_hidden_bias;   // 1 x hidden_dim

  bool has_hidden() const noexcept { return !global_hidden.empty(); }
};

// E with row k = weight_k * table[id_k].
DenseMatrix embed(const EmbeddingTable& table, std::span<const FeatureEntry> features);

// Sum over unordered pairs of e_i (*) e_j, in the linear-time form
// 0.5 * ((sum e)^2 - sum e^2).
std::vector<double> local_biinteraction(const DenseMatrix& e);

// Closed form of ((P + rho I) / (n + rho)) E for the all-ones P:
// row i = (sum_j e_j + rho e_i) / (n + rho).
DenseMatrix artificial_propagate(const DenseMatrix& e, double rho);

// Column mean of relu(artificial_propagate(E) W).
std::vector<double> global_interaction(const DenseMatrix& e, const DenseMatrix& w, double rho);

// Projects both branches into label space and mixes them with alpha.
// h_l has emb_dim entries, h_g hidden_dim entries.
std::vector<double> fuse(std::span<const double> h_l, std::span<const double> h_g, const InteractionParams& params,
                         const InteractionConfig& config);

// Initial representation H (N x C), one independent row per node.
DenseMatrix forward_all_nodes(const EmbeddingTable& table, const InteractionParams& params,
                              const InteractionConfig& config, const FeatureSample& sample);

// Batched kernels over x holding consecutive groups of `group` rows (one
// group per node). These back the differentiable primitives.
DenseMatrix biinteraction_grouped(const DenseMatrix& x, std::size_t group);
// grad_x += d/dx of <upstream, biinteraction_grouped(x)>.
void biinteraction_grouped_backward(const DenseMatrix& x, std::size_t group, const DenseMatrix& upstream,
                                    DenseMatrix& grad_x);
// The per-group operator is symmetric, so it is also its own adjoint.
DenseMatrix artificial_propagate_grouped(const DenseMatrix& x, std::size_t group, double rho);

// Sampled feature slots of every node: slot k holds weights[k] * table[ids[k]]
// and node u owns slots [u * group, (u + 1) * group).
struct SlotRows {
  std::vector<FeatureId> ids;
  std::vector<double> weights;
  std::size_t group = 0;

  std::size_t nodes() const noexcept { return group == 0 ? 0 : ids.size() / group; }
};

// Fused kernels that read slot rows straight from the table instead of
// materializing the (nodes * group) x dim slot matrix. Forward passes are
// parallel over nodes; backward passes scatter into the table gradient in
// node order so results do not depend on the worker count.
DenseMatrix pooled_biinteraction(const DenseMatrix& table, const SlotRows& slots);
void pooled_biinteraction_backward(const DenseMatrix& table, const SlotRows& slots, const DenseMatrix& upstream,
                                   DenseMatrix& grad_table);
DenseMatrix pooled_mean(const DenseMatrix& table, const SlotRows& slots);
void pooled_mean_backward(const SlotRows& slots, const DenseMatrix& upstream, DenseMatrix& grad_table);
// Per node: mean over slots of relu(artificial_propagate(slots, rho)).
// `margin`, when given, receives the smallest |pre-activation|.
DenseMatrix pooled_global(const DenseMatrix& table_w, const SlotRows& slots, double rho, double* margin = nullptr);
void pooled_global_backward(const DenseMatrix& table_w, const SlotRows& slots, double rho,
                            const DenseMatrix& upstream, DenseMatrix& grad_table_w);

}  // namespace catgcn
