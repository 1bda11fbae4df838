#include "catgcn/model.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "catgcn/error.hpp"
#include "catgcn/rng.hpp"

namespace catgcn {

std::string_view to_string(DropoutSite s) {
  switch (s) {
    case DropoutSite::kEmbedding: return "embedding";
    case DropoutSite::kProjections: return "projections";
    case DropoutSite::kBoth: return "both";
  }
  return "embedding";
}

DropoutSite parse_dropout_site(std::string_view s) {
  if (s == "embedding") return DropoutSite::kEmbedding;
  if (s == "projections") return DropoutSite::kProjections;
  if (s == "both") return DropoutSite::kBoth;
  throw ContractError("unknown dropout site '" + std::string(s) + "'");
}

std::vector<std::pair<std::string_view, DenseMatrix*>> ModelParams::tensors() {
  auto& p = interaction;
  std::vector<std::pair<std::string_view, DenseMatrix*>> t = {
      {"embedding", &embedding.table}, {"conv_weight", &p.conv_weight}, {"global_proj", &p.global_proj},
      {"global_bias", &p.global_bias}, {"local_proj", &p.local_proj},   {"local_bias", &p.local_bias},
  };
  if (p.has_hidden()) {
    t.insert(t.end(), {{"global_hidden", &p.global_hidden},
                       {"global_hidden_bias", &p.global_hidden_bias},
                       {"local_hidden", &p.local_hidden},
                       {"local_hidden_bias", &p.local_hidden_bias}});
  }
  return t;
}

std::vector<std::pair<std::string_view, const DenseMatrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string_view, const DenseMatrix*>> out;
  for (auto [name, ptr] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, ptr);
  return out;
}

ModelShapes ModelParams::shapes() const {
  ModelShapes s;
  s.num_features = embedding.num_features();
  s.emb_dim = embedding.dim();
  s.hidden_dim = interaction.conv_weight.cols();
  s.num_classes = interaction.local_bias.cols();
  s.projection_hidden = interaction.has_hidden();
  return s;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : tensors())
    if (!t->all_finite()) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size() || a.dropout != b.dropout) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].first != tb[i].first || !(*ta[i].second == *tb[i].second)) return false;
  return true;
}

ParamVars record_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars v;
  for (const auto& [name, t] : params.tensors()) v.all.push_back(tape.leaf(*t, requires_grad));
  v.embedding = v.all[0];
  v.conv_weight = v.all[1];
  v.global_proj = v.all[2];
  v.global_bias = v.all[3];
  v.local_proj = v.all[4];
  v.local_bias = v.all[5];
  if (params.interaction.has_hidden()) {
    v.global_hidden = v.all[6];
    v.global_hidden_bias = v.all[7];
    v.local_hidden = v.all[8];
    v.local_hidden_bias = v.all[9];
  }
  return v;
}

namespace {

// Inverted dropout multipliers: 0 with probability rate, else 1 / (1 - rate).
std::vector<double> dropout_scales(std::size_t count, double rate, CounterRng rng) {
  std::vector<double> s(count, 1.0);
  if (rate <= 0.0) return s;
  const double keep = 1.0 / (1.0 - rate);
  for (double& v : s) v = rng.uniform() < rate ? 0.0 : keep;
  return s;
}

Var apply_dropout(Tape& tape, Var x, double rate, CounterRng rng) {
  const auto& xv = tape.value(x);
  const std::vector<double> s = dropout_scales(xv.size(), rate, rng);
  return tape.mul(x, tape.constant(DenseMatrix(xv.rows(), xv.cols(), s)));
}

Var project(Tape& tape, Var x, Var hidden, Var hidden_bias, Var proj, Var bias, bool use_hidden, Activation act) {
  if (use_hidden) x = tape.relu(tape.add_bias(tape.matmul(x, hidden), hidden_bias));
  Var z = tape.add_bias(tape.matmul(x, proj), bias);
  return act == Activation::kRelu ? tape.relu(z) : z;
}

}  // namespace

ForwardVars record_forward(Tape& tape, const ParamVars& vars, const ModelParams& params, const CsrMatrix& norm_adj,
                           const FeatureSample& sample, const ModelConfig& config, const ForwardOptions& options) {
  const InteractionConfig& ic = config.interaction;
  ic.validate();
  if (sample.n_f == 0 || sample.num_nodes != norm_adj.num_rows) {
    throw ContractError("model_forward: feature sample does not cover the graph's " +
                        std::to_string(norm_adj.num_rows) + " nodes");
  }
  const bool train = options.mode == Mode::kTrain && params.dropout > 0.0;
  const bool drop_embedding = train && config.dropout_site != DropoutSite::kProjections;
  const bool drop_projections = train && config.dropout_site != DropoutSite::kEmbedding;
  const CounterRng dropout_rng = CounterRng(options.dropout_seed).split(streams::kDropout);

  const std::size_t rows = sample.entries.size();
  auto slots = std::make_shared<SlotRows>();
  slots->group = sample.n_f;
  slots->ids.resize(rows);
  slots->weights.resize(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    slots->ids[k] = sample.entries[k].id;
    slots->weights[k] = sample.entries[k].weight;
  }
  if (drop_embedding) {
    // Whole sampled-feature rows are dropped.
    const std::vector<double> s = dropout_scales(rows, params.dropout, dropout_rng.split(0));
    for (std::size_t k = 0; k < rows; ++k) slots->weights[k] *= s[k];
  }

  const double alpha = ic.alpha;
  const bool hidden = ic.projection_hidden;

  Var h_local{}, h_global{};
  if (alpha != 1.0) {
    Var pooled = ic.local_pooling == LocalPooling::kMean ? tape.pooled_mean(vars.embedding, slots)
                                                         : tape.pooled_biinteraction(vars.embedding, slots);
    if (drop_projections) pooled = apply_dropout(tape, pooled, params.dropout, dropout_rng.split(1));
    h_local = project(tape, pooled, vars.local_hidden, vars.local_hidden_bias, vars.local_proj, vars.local_bias,
                      hidden, ic.final_activation);
  }
  if (alpha != 0.0) {
    Var table_w = tape.matmul(vars.embedding, vars.conv_weight);
    Var pooled = tape.pooled_global(table_w, slots, ic.rho);
    if (drop_projections) pooled = apply_dropout(tape, pooled, params.dropout, dropout_rng.split(2));
    h_global = project(tape, pooled, vars.global_hidden, vars.global_hidden_bias, vars.global_proj,
                       vars.global_bias, hidden, ic.final_activation);
  }

  Var h;
  if (alpha == 0.0) {
    h = h_local;
  } else if (alpha == 1.0) {
    h = h_global;
  } else {
    h = tape.add(tape.scale(h_global, alpha), tape.scale(h_local, 1.0 - alpha));
  }
  Var y = config.hops == 0 ? h : tape.sparse_propagate(norm_adj, h, config.hops);
  return {h, y};
}

Var record_loss(Tape& tape, const ForwardVars& fwd, const ParamVars& vars, std::span<const ClassId> labels,
                std::span<const NodeId> train_ids, double eta) {
  Var total = tape.softmax_cross_entropy(fwd.y, labels, train_ids);
  if (eta != 0.0) {
    Var reg = tape.sum(tape.square(vars.all.front()));
    for (std::size_t i = 1; i < vars.all.size(); ++i) reg = tape.add(reg, tape.sum(tape.square(vars.all[i])));
    total = tape.add(total, tape.scale(reg, eta));
  }
  return total;
}

ModelOutput model_forward(const ModelParams& params, const Dataset& data, const ModelConfig& config,
                          const ForwardOptions& options) {
  Tape tape;
  const ParamVars vars = record_params(tape, params, false);
  const FeatureSample& sample = options.sample ? *options.sample : data.sample;
  const ForwardVars fwd = record_forward(tape, vars, params, data.norm_adj, sample, config, options);
  ModelOutput out;
  out.h = tape.value(fwd.h);
  out.y = tape.value(fwd.y);
  out.probs = softmax_rows(out.y);
  return out;
}

double loss(const ModelOutput& output, std::span<const ClassId> labels, std::span<const NodeId> mask, double eta,
            const ModelParams& params) {
  if (mask.empty()) throw ContractError("loss: empty mask");
  Tape tape;
  const Var y = tape.constant(output.y);
  double value = tape.value(tape.softmax_cross_entropy(y, labels, mask))(0, 0);
  if (eta != 0.0) {
    double reg = 0.0;
    for (const auto& [name, t] : params.tensors()) {
      double s = 0.0;
      for (double v : t->values()) s += v * v;
      reg += s;
    }
    value += eta * reg;
  }
  return value;
}

std::vector<ClassId> predict(const DenseMatrix& probs) {
  std::vector<ClassId> out(probs.rows(), 0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[i] = static_cast<ClassId>(best);
  }
  return out;
}

}  // namespace catgcn
