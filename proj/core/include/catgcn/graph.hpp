#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "catgcn/dense.hpp"

namespace catgcn {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

// Compressed sparse row matrix. Column indices are strictly increasing
// within each row.
struct CsrMatrix {
  std::size_t num_rows = 0;
  std::size_t num_cols = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<NodeId> col_indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return col_indices.size(); }

  // Stored value at (i, j), 0 when absent.
  double at(std::size_t i, std::size_t j) const;

  // Checks the structural invariants (offsets, canonical column order).
  bool is_canonical() const;
  // Exact (bitwise) symmetry of stored values.
  bool is_symmetric() const;

  DenseMatrix to_dense() const;
};

// Degrees of A + I.
struct DegreeVector {
  std::vector<double> degrees;
};

struct AdjacencyStats {
  std::size_t input_edges = 0;
  std::size_t self_edges = 0;
  std::size_t duplicate_edges = 0;
  std::size_t undirected_edges = 0;
};

// Symmetric binary adjacency from an undirected edge list. Duplicates and
// reversed copies collapse; self edges are dropped.
CsrMatrix build_adjacency(std::span<const Edge> edges, std::size_t num_nodes);
CsrMatrix build_adjacency(std::span<const Edge> edges, std::size_t num_nodes, AdjacencyStats& stats);

struct NormalizedAdjacency {
  CsrMatrix matrix;
  DegreeVector degrees;
};

// D^{-1/2} (A + I) D^{-1/2}, with D the degree matrix of A + I.
NormalizedAdjacency normalize_sym(const CsrMatrix& adj);

// m * x. Each output row is accumulated in ascending column order.
DenseMatrix spmm(const CsrMatrix& m, const DenseMatrix& x);

// norm_adj^hops * h as `hops` successive products; hops == 0 returns h.
DenseMatrix propagate(const CsrMatrix& norm_adj, const DenseMatrix& h, std::size_t hops);

}  // namespace catgcn
