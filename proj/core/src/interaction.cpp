#include "catgcn/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "catgcn/error.hpp"
#include "catgcn/parallel.hpp"

namespace catgcn {

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ContractError("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(LocalPooling p) { return p == LocalPooling::kMean ? "mean" : "bi-interaction"; }

LocalPooling parse_local_pooling(std::string_view s) {
  if (s == "bi-interaction") return LocalPooling::kBiInteraction;
  if (s == "mean") return LocalPooling::kMean;
  throw ContractError("unknown local pooling '" + std::string(s) + "'");
}

void InteractionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  if (!(rho >= 0.0)) throw ContractError("rho must be non-negative");
  if (n_f < 1) throw ContractError("n_f must be at least 1");
  if (hidden_dim < 1) throw ContractError("hidden_dim must be at least 1");
}

DenseMatrix embed(const EmbeddingTable& table, std::span<const FeatureEntry> features) {
  DenseMatrix e(features.size(), table.dim());
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto& f = features[k];
    if (f.id >= table.num_features()) {
      throw ContractError("embed: feature id " + std::to_string(f.id) + " outside table of " +
                          std::to_string(table.num_features()));
    }
    const auto src = table.table.row(f.id);
    auto dst = e.row(k);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = f.weight * src[j];
  }
  return e;
}

DenseMatrix biinteraction_grouped(const DenseMatrix& x, std::size_t group) {
  if (group == 0 || x.rows() % group != 0) throw ContractError("biinteraction: rows not divisible by group");
  const std::size_t groups = x.rows() / group;
  const std::size_t d = x.cols();
  DenseMatrix out(groups, d);
  parallel_for(groups, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(d), sq(d);
    for (std::size_t g = begin; g < end; ++g) {
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(sq.begin(), sq.end(), 0.0);
      for (std::size_t i = 0; i < group; ++i) {
        const double* row = x.data() + (g * group + i) * d;
        for (std::size_t j = 0; j < d; ++j) {
          sum[j] += row[j];
          sq[j] += row[j] * row[j];
        }
      }
      double* o = out.data() + g * d;
      for (std::size_t j = 0; j < d; ++j) o[j] = 0.5 * (sum[j] * sum[j] - sq[j]);
    }
  });
  return out;
}

void biinteraction_grouped_backward(const DenseMatrix& x, std::size_t group, const DenseMatrix& upstream,
                                    DenseMatrix& grad_x) {
  const std::size_t d = x.cols();
  const std::size_t groups = x.rows() / group;
  parallel_for(groups, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(d);
    for (std::size_t g = begin; g < end; ++g) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t i = 0; i < group; ++i) {
        const double* row = x.data() + (g * group + i) * d;
        for (std::size_t j = 0; j < d; ++j) sum[j] += row[j];
      }
      const double* up = upstream.data() + g * d;
      for (std::size_t i = 0; i < group; ++i) {
        const double* row = x.data() + (g * group + i) * d;
        double* gr = grad_x.data() + (g * group + i) * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += (sum[j] - row[j]) * up[j];
      }
    }
  });
}

DenseMatrix artificial_propagate_grouped(const DenseMatrix& x, std::size_t group, double rho) {
  if (group == 0 || x.rows() % group != 0) throw ContractError("artificial_propagate: rows not divisible by group");
  const std::size_t groups = x.rows() / group;
  const std::size_t d = x.cols();
  const double denom = static_cast<double>(group) + rho;
  DenseMatrix out(x.rows(), d);
  parallel_for(groups, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(d);
    for (std::size_t g = begin; g < end; ++g) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t i = 0; i < group; ++i) {
        const double* row = x.data() + (g * group + i) * d;
        for (std::size_t j = 0; j < d; ++j) sum[j] += row[j];
      }
      for (std::size_t i = 0; i < group; ++i) {
        const double* row = x.data() + (g * group + i) * d;
        double* o = out.data() + (g * group + i) * d;
        for (std::size_t j = 0; j < d; ++j) o[j] = (sum[j] + rho * row[j]) / denom;
      }
    }
  });
  return out;
}

namespace {

void check_slots(const DenseMatrix& table, const SlotRows& slots, const char* op) {
  if (slots.group == 0 || slots.ids.size() % slots.group != 0 || slots.weights.size() != slots.ids.size()) {
    throw ContractError(std::string(op) + ": malformed slot layout");
  }
  for (FeatureId id : slots.ids)
    if (id >= table.rows()) throw ContractError(std::string(op) + ": feature id " + std::to_string(id) + " out of range");
}

// Sum of the slot rows of node u into sum (length d).
void slot_sum(const DenseMatrix& table, const SlotRows& slots, std::size_t u, std::span<double> sum) {
  const std::size_t d = table.cols();
  std::fill(sum.begin(), sum.end(), 0.0);
  for (std::size_t k = u * slots.group; k < (u + 1) * slots.group; ++k) {
    const double w = slots.weights[k];
    const double* row = table.data() + static_cast<std::size_t>(slots.ids[k]) * d;
    for (std::size_t j = 0; j < d; ++j) sum[j] += w * row[j];
  }
}

}  // namespace

DenseMatrix pooled_biinteraction(const DenseMatrix& table, const SlotRows& slots) {
  check_slots(table, slots, "pooled_biinteraction");
  const std::size_t d = table.cols();
  DenseMatrix out(slots.nodes(), d);
  parallel_for(slots.nodes(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(d), sq(d);
    for (std::size_t u = begin; u < end; ++u) {
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(sq.begin(), sq.end(), 0.0);
      for (std::size_t k = u * slots.group; k < (u + 1) * slots.group; ++k) {
        const double w = slots.weights[k];
        const double* row = table.data() + static_cast<std::size_t>(slots.ids[k]) * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double e = w * row[j];
          sum[j] += e;
          sq[j] += e * e;
        }
      }
      double* o = out.data() + u * d;
      for (std::size_t j = 0; j < d; ++j) o[j] = 0.5 * (sum[j] * sum[j] - sq[j]);
    }
  });
  return out;
}

void pooled_biinteraction_backward(const DenseMatrix& table, const SlotRows& slots, const DenseMatrix& upstream,
                                   DenseMatrix& grad_table) {
  const std::size_t d = table.cols();
  std::vector<double> sum(d);
  for (std::size_t u = 0; u < slots.nodes(); ++u) {
    slot_sum(table, slots, u, sum);
    const double* up = upstream.data() + u * d;
    for (std::size_t k = u * slots.group; k < (u + 1) * slots.group; ++k) {
      const double w = slots.weights[k];
      if (w == 0.0) continue;
      const std::size_t id = slots.ids[k];
      const double* row = table.data() + id * d;
      double* g = grad_table.data() + id * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += w * ((sum[j] - w * row[j]) * up[j]);
    }
  }
}

DenseMatrix pooled_mean(const DenseMatrix& table, const SlotRows& slots) {
  check_slots(table, slots, "pooled_mean");
  const std::size_t d = table.cols();
  const double inv = 1.0 / static_cast<double>(slots.group);
  DenseMatrix out(slots.nodes(), d);
  parallel_for(slots.nodes(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      auto o = out.row(u);
      slot_sum(table, slots, u, o);
      for (double& v : o) v *= inv;
    }
  });
  return out;
}

void pooled_mean_backward(const SlotRows& slots, const DenseMatrix& upstream, DenseMatrix& grad_table) {
  const std::size_t d = grad_table.cols();
  const double inv = 1.0 / static_cast<double>(slots.group);
  for (std::size_t k = 0; k < slots.ids.size(); ++k) {
    const double w = slots.weights[k] * inv;
    const double* up = upstream.data() + (k / slots.group) * d;
    double* g = grad_table.data() + static_cast<std::size_t>(slots.ids[k]) * d;
    for (std::size_t j = 0; j < d; ++j) g[j] += w * up[j];
  }
}

DenseMatrix pooled_global(const DenseMatrix& table_w, const SlotRows& slots, double rho, double* margin) {
  check_slots(table_w, slots, "pooled_global");
  if (!(rho >= 0.0)) throw ContractError("pooled_global: rho must be non-negative");
  const std::size_t h = table_w.cols();
  const std::size_t nodes = slots.nodes();
  const double scale = 1.0 / (static_cast<double>(slots.group) + rho);
  const double inv = 1.0 / static_cast<double>(slots.group);
  DenseMatrix out(nodes, h);
  std::vector<double> node_margin(margin ? nodes : 0, std::numeric_limits<double>::infinity());
  parallel_for(nodes, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(h), z(h);
    for (std::size_t u = begin; u < end; ++u) {
      slot_sum(table_w, slots, u, sum);
      double* o = out.data() + u * h;
      for (std::size_t k = u * slots.group; k < (u + 1) * slots.group; ++k) {
        const double w = rho * slots.weights[k];
        const double* row = table_w.data() + static_cast<std::size_t>(slots.ids[k]) * h;
        for (std::size_t j = 0; j < h; ++j) z[j] = (sum[j] + w * row[j]) * scale;
        for (std::size_t j = 0; j < h; ++j) o[j] += std::max(z[j], 0.0);
        if (margin) {
          for (std::size_t j = 0; j < h; ++j) node_margin[u] = std::min(node_margin[u], std::abs(z[j]));
        }
      }
      for (std::size_t j = 0; j < h; ++j) o[j] *= inv;
    }
  });
  if (margin) {
    *margin = std::numeric_limits<double>::infinity();
    for (double m : node_margin) *margin = std::min(*margin, m);
  }
  return out;
}

void pooled_global_backward(const DenseMatrix& table_w, const SlotRows& slots, double rho,
                            const DenseMatrix& upstream, DenseMatrix& grad_table_w) {
  const std::size_t h = table_w.cols();
  const std::size_t n = slots.group;
  const double scale = 1.0 / (static_cast<double>(n) + rho);
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> sum(h), dsum(h), drow(n * h);
  for (std::size_t u = 0; u < slots.nodes(); ++u) {
    slot_sum(table_w, slots, u, sum);
    const double* up = upstream.data() + u * h;
    std::fill(dsum.begin(), dsum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = u * n + i;
      const double w = rho * slots.weights[k];
      const double* row = table_w.data() + static_cast<std::size_t>(slots.ids[k]) * h;
      double* dr = drow.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) {
        dr[j] = (sum[j] + w * row[j]) * scale > 0.0 ? inv * up[j] : 0.0;
        dsum[j] += dr[j];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = u * n + i;
      const double w = slots.weights[k];
      if (w == 0.0) continue;
      const double* dr = drow.data() + i * h;
      double* g = grad_table_w.data() + static_cast<std::size_t>(slots.ids[k]) * h;
      for (std::size_t j = 0; j < h; ++j) g[j] += w * ((dsum[j] + rho * dr[j]) * scale);
    }
  }
}

std::vector<double> local_biinteraction(const DenseMatrix& e) {
  if (e.rows() == 0) throw ContractError("local_biinteraction: empty feature set");
  const DenseMatrix h = biinteraction_grouped(e, e.rows());
  return {h.values().begin(), h.values().end()};
}

DenseMatrix artificial_propagate(const DenseMatrix& e, double rho) {
  if (e.rows() == 0) throw ContractError("artificial_propagate: empty feature set");
  if (!(rho >= 0.0)) throw ContractError("artificial_propagate: rho must be non-negative");
  return artificial_propagate_grouped(e, e.rows(), rho);
}

std::vector<double> global_interaction(const DenseMatrix& e, const DenseMatrix& w, double rho) {
  DenseMatrix z = matmul(artificial_propagate(e, rho), w);
  std::vector<double> h(z.cols(), 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) h[j] += std::max(0.0, z(i, j));
  for (double& v : h) v /= static_cast<double>(z.rows());
  return h;
}

namespace {

// act(x W + b) for a single row vector.
std::vector<double> dense_layer(std::span<const double> x, const DenseMatrix& w, const DenseMatrix& b,
                                Activation act) {
  if (x.size() != w.rows() || b.cols() != w.cols()) throw ContractError("fuse: projection shape mismatch");
  std::vector<double> y(b.values().begin(), b.values().end());
  std::vector<double> acc(w.cols(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k)
    for (std::size_t j = 0; j < w.cols(); ++j) acc[j] += x[k] * w(k, j);
  for (std::size_t j = 0; j < y.size(); ++j) {
    y[j] = acc[j] + y[j];
    if (act == Activation::kRelu) y[j] = std::max(0.0, y[j]);
  }
  return y;
}

std::vector<double> project(std::span<const double> x, const DenseMatrix& hidden, const DenseMatrix& hidden_bias,
                            const DenseMatrix& proj, const DenseMatrix& bias, bool use_hidden, Activation act) {
  if (!use_hidden) return dense_layer(x, proj, bias, act);
  const std::vector<double> z = dense_layer(x, hidden, hidden_bias, Activation::kRelu);
  return dense_layer(z, proj, bias, act);
}

}  // namespace

std::vector<double> fuse(std::span<const double> h_l, std::span<const double> h_g, const InteractionParams& params,
                         const InteractionConfig& config) {
  const bool hidden = config.projection_hidden;
  const double alpha = config.alpha;
  // The unused branch is skipped at the endpoints so alpha = 0 / 1 are exact.
  if (alpha == 1.0) {
    return project(h_g, params.global_hidden, params.global_hidden_bias, params.global_proj, params.global_bias,
                   hidden, config.final_activation);
  }
  std::vector<double> local = project(h_l, params.local_hidden, params.local_hidden_bias, params.local_proj,
                                      params.local_bias, hidden, config.final_activation);
  if (alpha == 0.0) return local;
  const std::vector<double> global = project(h_g, params.global_hidden, params.global_hidden_bias,
                                             params.global_proj, params.global_bias, hidden, config.final_activation);
  for (std::size_t j = 0; j < local.size(); ++j) local[j] = alpha * global[j] + (1.0 - alpha) * local[j];
  return local;
}

DenseMatrix forward_all_nodes(const EmbeddingTable& table, const InteractionParams& params,
                              const InteractionConfig& config, const FeatureSample& sample) {
  config.validate();
  const std::size_t classes = params.local_bias.cols();
  DenseMatrix h(sample.num_nodes, classes);
  for (std::size_t u = 0; u < sample.num_nodes; ++u) {
    const DenseMatrix e = embed(table, sample.node(u));
    std::vector<double> h_l;
    if (config.local_pooling == LocalPooling::kMean) {
      h_l.assign(e.cols(), 0.0);
      for (std::size_t i = 0; i < e.rows(); ++i)
        for (std::size_t j = 0; j < e.cols(); ++j) h_l[j] += e(i, j);
      for (double& v : h_l) v /= static_cast<double>(e.rows());
    } else {
      h_l = local_biinteraction(e);
    }
    std::vector<double> h_g;
    if (config.alpha != 0.0) h_g = global_interaction(e, params.conv_weight, config.rho);
    const std::vector<double> row = fuse(h_l, h_g, params, config);
    std::copy(row.begin(), row.end(), h.row(u).begin());
  }
  return h;
}

}  // namespace catgcn
