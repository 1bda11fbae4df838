#include "catgcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "catgcn/error.hpp"
#include "catgcn/interaction.hpp"

namespace catgcn {

const DenseMatrix& GradientSet::of(Var v) const {
  for (const auto& [var, g] : entries_)
    if (var == v) return g;
  throw ContractError("GradientSet: no gradient for tape value " + std::to_string(v.id));
}

bool GradientSet::contains(Var v) const {
  return std::any_of(entries_.begin(), entries_.end(), [v](const auto& e) { return e.first == v; });
}

namespace {

void require_shape(bool ok, const char* op, const DenseMatrix& a, const DenseMatrix& b) {
  if (!ok) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void check_group(const DenseMatrix& x, std::size_t group, const char* op) {
  if (group == 0 || x.rows() % group != 0) {
    throw ContractError(std::string(op) + ": " + std::to_string(x.rows()) + " rows not divisible by group " +
                        std::to_string(group));
  }
}

}  // namespace

Var Tape::leaf(DenseMatrix value, bool requires_grad) {
  Node n;
  n.tensor = Tensor{std::move(value), requires_grad};
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(DenseMatrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool rg = false;
  for (Var v : inputs) rg = rg || node(v).tensor.requires_grad;
  Node n;
  n.tensor = Tensor{std::move(value), rg};
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

DenseMatrix& Tape::grad(Var v) {
  DenseMatrix& g = grads_[v.id];
  if (g.empty() && !node(v).tensor.value.empty()) {
    const auto& val = node(v).tensor.value;
    g = DenseMatrix(val.rows(), val.cols());
  }
  return g;
}

Var Tape::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_shape(av.cols() == bv.rows(), "matmul", av, bv);
  return record(catgcn::matmul(av, bv), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(a)) add_into(t.grad(a), matmul_nt(g, t.value(b)));
    if (t.requires_grad(b)) add_into(t.grad(b), matmul_tn(t.value(a), g));
  });
}

Var Tape::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_shape(av.same_shape(bv), "add", av, bv);
  DenseMatrix out = av;
  add_into(out, bv);
  return record(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(a)) add_into(t.grad(a), g);
    if (t.requires_grad(b)) add_into(t.grad(b), g);
  });
}

Var Tape::add_bias(Var x, Var bias) {
  const auto& xv = value(x);
  const auto& bv = value(bias);
  require_shape(bv.rows() == 1 && bv.cols() == xv.cols(), "add_bias", xv, bv);
  DenseMatrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return record(std::move(out), {x, bias}, [x, bias](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(x)) add_into(t.grad(x), g);
    if (t.requires_grad(bias)) {
      DenseMatrix& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_shape(av.same_shape(bv), "mul", av, bv);
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  return record(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(a)) {
      DenseMatrix& ga = t.grad(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (t.requires_grad(b)) {
      DenseMatrix& gb = t.grad(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var Tape::square(Var a) {
  const auto& av = value(a);
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * av.data()[i];
  return record(std::move(out), {a}, [a](Tape& t, const DenseMatrix& g) {
    DenseMatrix& ga = t.grad(a);
    const auto& av = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += 2.0 * av.data()[i] * g.data()[i];
  });
}

Var Tape::relu(Var a) {
  const auto& av = value(a);
  DenseMatrix out(av.rows(), av.cols());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(0.0, av.data()[i]);
    if (track_margin_) margin = std::min(margin, std::abs(av.data()[i]));
  }
  Var v = record(std::move(out), {a}, [a](Tape& t, const DenseMatrix& g) {
    DenseMatrix& ga = t.grad(a);
    const auto& av = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data()[i] > 0.0) ga.data()[i] += g.data()[i];
  });
  nodes_.back().relu_margin = margin;
  return v;
}

Var Tape::scale(Var a, double c) {
  const auto& av = value(a);
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = c * av.data()[i];
  return record(std::move(out), {a}, [a, c](Tape& t, const DenseMatrix& g) {
    DenseMatrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += c * g.data()[i];
  });
}

Var Tape::sum_rows(Var x, std::size_t group) {
  const auto& xv = value(x);
  check_group(xv, group, "sum_rows");
  const std::size_t d = xv.cols();
  DenseMatrix out(xv.rows() / group, d);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double* o = out.data() + (r / group) * d;
    const double* in = xv.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += in[j];
  }
  return record(std::move(out), {x}, [x, group](Tape& t, const DenseMatrix& g) {
    DenseMatrix& gx = t.grad(x);
    const std::size_t d = gx.cols();
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      const double* up = g.data() + (r / group) * d;
      double* o = gx.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += up[j];
    }
  });
}

Var Tape::mean_rows(Var x, std::size_t group) {
  const auto& xv = value(x);
  check_group(xv, group, "mean_rows");
  const std::size_t d = xv.cols();
  const double inv = 1.0 / static_cast<double>(group);
  DenseMatrix out(xv.rows() / group, d);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double* o = out.data() + (r / group) * d;
    const double* in = xv.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += in[j];
  }
  for (double& v : out.values()) v *= inv;
  return record(std::move(out), {x}, [x, group, inv](Tape& t, const DenseMatrix& g) {
    DenseMatrix& gx = t.grad(x);
    const std::size_t d = gx.cols();
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      const double* up = g.data() + (r / group) * d;
      double* o = gx.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += inv * up[j];
    }
  });
}

Var Tape::sum(Var x) {
  const auto& xv = value(x);
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return record(DenseMatrix(1, 1, s), {x}, [x](Tape& t, const DenseMatrix& g) {
    DenseMatrix& gx = t.grad(x);
    const double up = g(0, 0);
    for (double& v : gx.values()) v += up;
  });
}

Var Tape::gather_rows(Var table, std::vector<FeatureId> ids, std::vector<double> weights) {
  const auto& tv = value(table);
  if (ids.size() != weights.size()) throw ContractError("gather_rows: ids and weights differ in length");
  const std::size_t d = tv.cols();
  DenseMatrix out(ids.size(), d);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= tv.rows()) throw ContractError("gather_rows: id " + std::to_string(ids[k]) + " out of range");
    const double w = weights[k];
    const double* src = tv.data() + static_cast<std::size_t>(ids[k]) * d;
    double* dst = out.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = w * src[j];
  }
  return record(std::move(out), {table},
                [table, ids = std::move(ids), weights = std::move(weights)](Tape& t, const DenseMatrix& g) {
                  DenseMatrix& gt = t.grad(table);
                  const std::size_t d = gt.cols();
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    const double w = weights[k];
                    const double* up = g.data() + k * d;
                    double* dst = gt.data() + static_cast<std::size_t>(ids[k]) * d;
                    for (std::size_t j = 0; j < d; ++j) dst[j] += w * up[j];
                  }
                });
}

Var Tape::biinteraction(Var x, std::size_t group) {
  const auto& xv = value(x);
  check_group(xv, group, "biinteraction");
  return record(biinteraction_grouped(xv, group), {x}, [x, group](Tape& t, const DenseMatrix& g) {
    biinteraction_grouped_backward(t.value(x), group, g, t.grad(x));
  });
}

Var Tape::artificial_prop(Var x, std::size_t group, double rho) {
  const auto& xv = value(x);
  check_group(xv, group, "artificial_prop");
  if (!(rho >= 0.0)) throw ContractError("artificial_prop: rho must be non-negative");
  return record(artificial_propagate_grouped(xv, group, rho), {x}, [x, group, rho](Tape& t, const DenseMatrix& g) {
    add_into(t.grad(x), artificial_propagate_grouped(g, group, rho));
  });
}

Var Tape::pooled_biinteraction(Var table, std::shared_ptr<const SlotRows> slots) {
  DenseMatrix out = catgcn::pooled_biinteraction(value(table), *slots);
  return record(std::move(out), {table}, [table, slots](Tape& t, const DenseMatrix& g) {
    catgcn::pooled_biinteraction_backward(t.value(table), *slots, g, t.grad(table));
  });
}

Var Tape::pooled_mean(Var table, std::shared_ptr<const SlotRows> slots) {
  DenseMatrix out = catgcn::pooled_mean(value(table), *slots);
  return record(std::move(out), {table}, [table, slots](Tape& t, const DenseMatrix& g) {
    catgcn::pooled_mean_backward(*slots, g, t.grad(table));
  });
}

Var Tape::pooled_global(Var table_w, std::shared_ptr<const SlotRows> slots, double rho) {
  double margin = std::numeric_limits<double>::infinity();
  DenseMatrix out = catgcn::pooled_global(value(table_w), *slots, rho, track_margin_ ? &margin : nullptr);
  Var v = record(std::move(out), {table_w}, [table_w, slots, rho](Tape& t, const DenseMatrix& g) {
    catgcn::pooled_global_backward(t.value(table_w), *slots, rho, g, t.grad(table_w));
  });
  nodes_.back().relu_margin = margin;
  return v;
}

Var Tape::sparse_propagate(const CsrMatrix& adj, Var x, std::size_t hops) {
  const CsrMatrix* m = &adj;
  return record(propagate(adj, value(x), hops), {x}, [m, x, hops](Tape& t, const DenseMatrix& g) {
    add_into(t.grad(x), propagate(*m, g, hops));
  });
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    auto out = p.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out[j] = std::exp(row[j] - m);
      z += out[j];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

namespace {

// -log softmax(row)[label] as (max - row[label]) + log1p(sum over non-max
// entries of exp(row - max)).
double row_cross_entropy(std::span<const double> row, std::size_t label) {
  const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  const double m = row[top];
  double rest = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j)
    if (j != top) rest += std::exp(row[j] - m);
  return (m - row[label]) + std::log1p(rest);
}

}  // namespace

Var Tape::softmax_cross_entropy(Var logits, std::span<const ClassId> labels, std::span<const NodeId> rows) {
  const auto& y = value(logits);
  if (labels.size() != y.rows()) throw ContractError("softmax_cross_entropy: one label per logit row required");
  if (rows.empty()) throw ContractError("softmax_cross_entropy: empty mask");
  for (NodeId r : rows) {
    if (r >= y.rows()) throw ContractError("softmax_cross_entropy: row out of range");
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= y.cols()) {
      throw ContractError("softmax_cross_entropy: masked row " + std::to_string(r) + " has no valid label");
    }
  }
  double total = 0.0;
  for (NodeId r : rows) total += row_cross_entropy(y.row(r), static_cast<std::size_t>(labels[r]));
  const double inv = 1.0 / static_cast<double>(rows.size());

  std::vector<ClassId> lab(labels.begin(), labels.end());
  std::vector<NodeId> idx(rows.begin(), rows.end());
  return record(DenseMatrix(1, 1, total * inv), {logits},
                [logits, inv, lab = std::move(lab), idx = std::move(idx)](Tape& t, const DenseMatrix& g) {
                  DenseMatrix& gy = t.grad(logits);
                  const auto& y = t.value(logits);
                  const double up = g(0, 0) * inv;
                  std::vector<double> p(y.cols());
                  for (NodeId r : idx) {
                    const auto row = y.row(r);
                    const double m = *std::max_element(row.begin(), row.end());
                    double z = 0.0;
                    for (std::size_t j = 0; j < row.size(); ++j) z += (p[j] = std::exp(row[j] - m));
                    auto out = gy.row(r);
                    for (std::size_t j = 0; j < row.size(); ++j) {
                      const double target = static_cast<ClassId>(j) == lab[r] ? 1.0 : 0.0;
                      out[j] += up * (p[j] / z - target);
                    }
                  }
                });
}

GradientSet Tape::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + std::to_string(lv.rows()) + "x" +
                        std::to_string(lv.cols()));
  }
  grads_.assign(nodes_.size(), DenseMatrix{});
  grads_[loss.id] = DenseMatrix(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.leaf || !n.backward || grads_[i].empty()) continue;
    n.backward(*this, grads_[i]);
    grads_[i] = DenseMatrix{};
  }
  GradientSet out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf || !nodes_[i].tensor.requires_grad) continue;
    grad(Var{i});
    out.entries_.emplace_back(Var{i}, std::move(grads_[i]));
  }
  grads_.clear();
  return out;
}

double Tape::relu_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& n : nodes_) m = std::min(m, n.relu_margin);
  return m;
}

FiniteDiffReport finite_diff_check(const ScalarBuilder& f, const std::vector<DenseMatrix>& point, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  auto evaluate = [&](const std::vector<DenseMatrix>& at) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(at.size());
    for (const auto& m : at) leaves.push_back(tape.leaf(m, false));
    const DenseMatrix& v = tape.value(f(tape, leaves));
    if (v.size() != 1) throw ContractError("finite_diff_check: function is not scalar");
    if (!std::isfinite(v(0, 0))) throw NumericError("finite_diff_check: non-finite function value");
    return v(0, 0);
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : point) leaves.push_back(tape.leaf(m, true));
  const Var out = f(tape, leaves);
  if (!std::isfinite(tape.value(out)(0, 0))) throw NumericError("finite_diff_check: non-finite function value");
  const GradientSet grads = tape.backward(out);

  FiniteDiffReport report;
  std::vector<DenseMatrix> probe = point;
  for (std::size_t t = 0; t < point.size(); ++t) {
    const DenseMatrix& analytic = grads.of(leaves[t]);
    for (std::size_t i = 0; i < point[t].size(); ++i) {
      const double x0 = point[t].data()[i];
      probe[t].data()[i] = x0 + step;
      const double fp = evaluate(probe);
      probe[t].data()[i] = x0 - step;
      const double fm = evaluate(probe);
      probe[t].data()[i] = x0;

      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace catgcn
