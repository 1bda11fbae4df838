#include "catgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "catgcn/error.hpp"
#include "catgcn/parallel.hpp"

namespace catgcn {

namespace {

// Position of (i, j) in the value array, or nnz when absent.
std::size_t find_entry(const CsrMatrix& m, std::size_t i, std::size_t j) {
  const auto first = m.col_indices.begin() + static_cast<std::ptrdiff_t>(m.row_offsets[i]);
  const auto last = m.col_indices.begin() + static_cast<std::ptrdiff_t>(m.row_offsets[i + 1]);
  const auto it = std::lower_bound(first, last, static_cast<NodeId>(j));
  if (it == last || *it != j) return m.nnz();
  return static_cast<std::size_t>(it - m.col_indices.begin());
}

}  // namespace

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const std::size_t k = find_entry(*this, i, j);
  return k == nnz() ? 0.0 : values[k];
}

bool CsrMatrix::is_canonical() const {
  if (row_offsets.size() != num_rows + 1 || row_offsets.front() != 0) return false;
  if (row_offsets.back() != col_indices.size() || col_indices.size() != values.size()) return false;
  for (std::size_t i = 0; i < num_rows; ++i) {
    if (row_offsets[i + 1] < row_offsets[i]) return false;
    for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
      if (col_indices[k] >= num_cols) return false;
      if (k > row_offsets[i] && col_indices[k] <= col_indices[k - 1]) return false;
    }
  }
  return true;
}

bool CsrMatrix::is_symmetric() const {
  if (num_rows != num_cols) return false;
  for (std::size_t i = 0; i < num_rows; ++i) {
    for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
      const std::size_t mirror = find_entry(*this, col_indices[k], i);
      if (mirror == nnz() || values[mirror] != values[k]) return false;
    }
  }
  return true;
}

DenseMatrix CsrMatrix::to_dense() const {
  DenseMatrix d(num_rows, num_cols);
  for (std::size_t i = 0; i < num_rows; ++i)
    for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) d(i, col_indices[k]) = values[k];
  return d;
}

CsrMatrix build_adjacency(std::span<const Edge> edges, std::size_t num_nodes) {
  AdjacencyStats stats;
  return build_adjacency(edges, num_nodes, stats);
}

CsrMatrix build_adjacency(std::span<const Edge> edges, std::size_t num_nodes, AdjacencyStats& stats) {
  stats = AdjacencyStats{};
  stats.input_edges = edges.size();

  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [u, v] = edges[k];
    if (u >= num_nodes || v >= num_nodes) {
      throw InputError("edge " + std::to_string(k) + " (" + std::to_string(u) + ", " + std::to_string(v) +
                       "): node index out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (u == v) {
      ++stats.self_edges;
      continue;
    }
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  const std::size_t before = directed.size();
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  stats.duplicate_edges = (before - directed.size()) / 2;
  stats.undirected_edges = directed.size() / 2;

  CsrMatrix m;
  m.num_rows = num_nodes;
  m.num_cols = num_nodes;
  m.row_offsets.assign(num_nodes + 1, 0);
  m.col_indices.reserve(directed.size());
  m.values.assign(directed.size(), 1.0);
  for (const auto& [u, v] : directed) {
    ++m.row_offsets[u + 1];
    m.col_indices.push_back(v);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) m.row_offsets[i + 1] += m.row_offsets[i];
  return m;
}

NormalizedAdjacency normalize_sym(const CsrMatrix& adj) {
  if (adj.num_rows != adj.num_cols) throw ContractError("normalize_sym: adjacency is not square");
  const std::size_t n = adj.num_rows;

  NormalizedAdjacency out;
  auto& deg = out.degrees.degrees;
  deg.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = adj.row_offsets[i]; k < adj.row_offsets[i + 1]; ++k)
      if (adj.col_indices[k] != i) deg[i] += adj.values[k];

  CsrMatrix& m = out.matrix;
  m.num_rows = n;
  m.num_cols = n;
  m.row_offsets.assign(n + 1, 0);
  m.col_indices.reserve(adj.nnz() + n);
  m.values.reserve(adj.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool diagonal_done = false;
    auto emit_diagonal = [&] {
      m.col_indices.push_back(static_cast<NodeId>(i));
      m.values.push_back(1.0 / std::sqrt(deg[i] * deg[i]));
      diagonal_done = true;
    };
    for (std::size_t k = adj.row_offsets[i]; k < adj.row_offsets[i + 1]; ++k) {
      const std::size_t j = adj.col_indices[k];
      if (j == i) continue;
      if (!diagonal_done && j > i) emit_diagonal();
      m.col_indices.push_back(static_cast<NodeId>(j));
      // deg[i] * deg[j] is commutative, so (i, j) and (j, i) are bit-equal.
      m.values.push_back(adj.values[k] / std::sqrt(deg[i] * deg[j]));
    }
    if (!diagonal_done) emit_diagonal();
    m.row_offsets[i + 1] = m.col_indices.size();
  }
  return out;
}

DenseMatrix spmm(const CsrMatrix& m, const DenseMatrix& x) {
  if (m.num_cols != x.rows()) {
    throw ContractError("spmm: matrix has " + std::to_string(m.num_cols) + " columns but operand has " +
                        std::to_string(x.rows()) + " rows");
  }
  DenseMatrix y(m.num_rows, x.cols());
  const std::size_t cols = x.cols();
  parallel_for(m.num_rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* out = y.data() + i * cols;
      for (std::size_t k = m.row_offsets[i]; k < m.row_offsets[i + 1]; ++k) {
        const double a = m.values[k];
        const double* xr = x.data() + static_cast<std::size_t>(m.col_indices[k]) * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += a * xr[c];
      }
    }
  });
  return y;
}

DenseMatrix propagate(const CsrMatrix& norm_adj, const DenseMatrix& h, std::size_t hops) {
  if (norm_adj.num_rows != norm_adj.num_cols) throw ContractError("propagate: adjacency is not square");
  if (norm_adj.num_cols != h.rows()) {
    throw ContractError("propagate: adjacency is " + std::to_string(norm_adj.num_rows) + "x" +
                        std::to_string(norm_adj.num_cols) + " but features have " + std::to_string(h.rows()) +
                        " rows");
  }
  DenseMatrix y = h;
  for (std::size_t l = 0; l < hops; ++l) y = spmm(norm_adj, y);
  return y;
}

}  // namespace catgcn
