#include "catgcn/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "catgcn/error.hpp"
#include "catgcn/rng.hpp"
#include "json.hpp"

namespace catgcn {

using nlohmann::ordered_json;

std::string_view to_string(Monitor m) {
  switch (m) {
    case Monitor::kMacroF1: return "macro_f1";
    case Monitor::kAccuracy: return "accuracy";
    case Monitor::kLoss: return "loss";
  }
  return "macro_f1";
}

Monitor parse_monitor(std::string_view s) {
  if (s == "macro_f1") return Monitor::kMacroF1;
  if (s == "accuracy") return Monitor::kAccuracy;
  if (s == "loss") return Monitor::kLoss;
  throw ContractError("unknown monitor '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be > 0");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ContractError("eta must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
  if (patience < 1) throw ContractError("patience must be >= 1");
  if (max_epochs < 1) throw ContractError("max_epochs must be >= 1");
  if (emb_dim < 1 || hidden_dim < 1) throw ContractError("emb_dim and hidden_dim must be >= 1");
  model_config().interaction.validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.interaction.rho = rho;
  m.interaction.alpha = alpha;
  m.interaction.n_f = n_f;
  m.interaction.hidden_dim = hidden_dim;
  m.interaction.final_activation = final_activation;
  m.interaction.local_pooling = local_pooling;
  m.interaction.projection_hidden = projection_hidden;
  m.hops = hops;
  m.dropout_site = dropout_site;
  return m;
}

namespace {

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["eta"] = c.eta;
  j["dropout"] = c.dropout;
  j["alpha"] = c.alpha;
  j["rho"] = c.rho;
  j["hops"] = c.hops;
  j["n_f"] = c.n_f;
  j["emb_dim"] = c.emb_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["monitor"] = to_string(c.monitor);
  j["dropout_site"] = to_string(c.dropout_site);
  j["final_activation"] = to_string(c.final_activation);
  j["local_pooling"] = to_string(c.local_pooling);
  j["projection_hidden"] = c.projection_hidden;
  j["resample_per_epoch"] = c.resample_per_epoch;
  return j;
}

ordered_json metrics_json(const Metrics& m) { return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}}; }

}  // namespace

std::string to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig train_config_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("config JSON: expected an object");
  TrainConfig c;
  try {
    // Missing keys keep their defaults.
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("learning_rate", c.learning_rate);
    get("eta", c.eta);
    get("dropout", c.dropout);
    get("alpha", c.alpha);
    get("rho", c.rho);
    get("hops", c.hops);
    get("n_f", c.n_f);
    get("emb_dim", c.emb_dim);
    get("hidden_dim", c.hidden_dim);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("seed", c.seed);
    get("projection_hidden", c.projection_hidden);
    get("resample_per_epoch", c.resample_per_epoch);
    if (j.contains("monitor")) c.monitor = parse_monitor(j.at("monitor").get<std::string>());
    if (j.contains("dropout_site")) c.dropout_site = parse_dropout_site(j.at("dropout_site").get<std::string>());
    if (j.contains("final_activation"))
      c.final_activation = parse_activation(j.at("final_activation").get<std::string>());
    if (j.contains("local_pooling")) c.local_pooling = parse_local_pooling(j.at("local_pooling").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config JSON: ") + e.what());
  }
  return c;
}

ModelParams xavier_init(const ModelShapes& shapes, std::uint64_t seed) {
  if (shapes.num_features == 0 || shapes.emb_dim == 0 || shapes.hidden_dim == 0 || shapes.num_classes == 0) {
    throw ContractError("xavier_init: every dimension must be positive");
  }
  const std::size_t d = shapes.num_features, e = shapes.emb_dim, h = shapes.hidden_dim, c = shapes.num_classes;
  ModelParams p;
  auto& ip = p.interaction;
  p.embedding.table = DenseMatrix(d, e);
  ip.conv_weight = DenseMatrix(e, h);
  ip.global_proj = DenseMatrix(h, c);
  ip.global_bias = DenseMatrix(1, c);
  ip.local_proj = DenseMatrix(shapes.projection_hidden ? h : e, c);
  ip.local_bias = DenseMatrix(1, c);
  if (shapes.projection_hidden) {
    ip.global_hidden = DenseMatrix(h, h);
    ip.global_hidden_bias = DenseMatrix(1, h);
    ip.local_hidden = DenseMatrix(e, h);
    ip.local_hidden_bias = DenseMatrix(1, h);
  }

  const CounterRng root = CounterRng(seed).split(streams::kInit);
  std::size_t index = 0;
  for (auto [name, t] : p.tensors()) {
    CounterRng rng = root.split(index++);
    if (name.ends_with("bias")) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
    for (double& v : t->values()) v = rng.uniform(-bound, bound);
  }
  return p;
}

AdamState AdamState::zeros_like(std::span<DenseMatrix* const> params) {
  AdamState s;
  for (const DenseMatrix* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ContractError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i]) ||
        !params[i]->same_shape(state.second_moment[i])) {
      throw ContractError("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient in tensor " + std::to_string(i));
  }

  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      if (lr == 0.0) continue;
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.epsilon);
    }
  }
}

std::string to_json_line(const EpochRecord& r, bool include_wall_time) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_accuracy"] = r.val_accuracy;
  j["val_macro_f1"] = r.val_macro_f1;
  j["val_loss"] = r.val_loss;
  if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
  return j.dump();
}

bool EarlyStopping::update(std::size_t epoch, double value) {
  const bool improved =
      best_epoch_ == 0 || (higher_is_better_ ? value > best_value_ : value < best_value_);
  if (improved) {
    best_epoch_ = epoch;
    best_value_ = value;
  }
  return improved;
}

Metrics evaluate_params(const ModelParams& params, const Dataset& data, const ModelConfig& config,
                        std::span<const NodeId> ids) {
  const ModelOutput out = model_forward(params, data, config);
  return evaluate(predict(out), data.raw.labels, ids, data.num_classes());
}

TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  config.validate();
  if (data.sample.n_f != config.n_f) {
    throw ContractError("train: dataset was sampled with n_f=" + std::to_string(data.sample.n_f) +
                        " but the config asks for " + std::to_string(config.n_f));
  }
  if (data.split.train_ids.empty() || data.split.val_ids.empty()) throw ContractError("train: empty split");

  const ModelConfig mcfg = config.model_config();
  ModelShapes shapes;
  shapes.num_features = data.raw.num_features;
  shapes.emb_dim = config.emb_dim;
  shapes.hidden_dim = config.hidden_dim;
  shapes.num_classes = data.num_classes();
  shapes.projection_hidden = config.projection_hidden;

  TrainResult result;
  ModelParams params = xavier_init(shapes, config.seed);
  params.dropout = config.dropout;
  std::vector<DenseMatrix*> tensors;
  for (auto [name, t] : params.tensors()) tensors.push_back(t);
  AdamState adam = AdamState::zeros_like(tensors);

  EarlyStopping stopper(config.patience, config.monitor != Monitor::kLoss);
  const CounterRng epoch_root(config.seed);
  const std::span<const ClassId> labels = data.raw.labels;
  FeatureSample resampled;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto last_finite = static_cast<int>(epoch) - 1;

    ForwardOptions opts;
    opts.mode = Mode::kTrain;
    opts.dropout_seed = epoch_root.split(streams::kDropout).split(epoch).key();
    if (config.resample_per_epoch) {
      resampled = sample_features(data.raw, config.n_f, epoch_root.split(streams::kResample).split(epoch).key());
      opts.sample = &resampled;
    }
    const FeatureSample& sample = opts.sample ? *opts.sample : data.sample;

    Tape tape;
    const ParamVars vars = record_params(tape, params, true);
    const ForwardVars fwd = record_forward(tape, vars, params, data.norm_adj, sample, mcfg, opts);
    const Var loss_var = record_loss(tape, fwd, vars, labels, data.split.train_ids, config.eta);
    const double train_loss = tape.value(loss_var)(0, 0);
    if (!std::isfinite(train_loss)) {
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch), last_finite);
    }
    const GradientSet grads = tape.backward(loss_var);
    std::vector<DenseMatrix> grad_list;
    grad_list.reserve(vars.all.size());
    for (Var v : vars.all) grad_list.push_back(grads.of(v));
    try {
      adam_step(tensors, grad_list, adam, config.learning_rate);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch), last_finite);
    }

    const ModelOutput out = model_forward(params, data, mcfg);
    const Metrics val = evaluate(predict(out), labels, data.split.val_ids, data.num_classes());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.val_accuracy = val.accuracy;
    rec.val_macro_f1 = val.macro_f1;
    rec.val_loss = loss(out, labels, data.split.val_ids, 0.0, params);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    double monitored = val.macro_f1;
    if (config.monitor == Monitor::kAccuracy) monitored = val.accuracy;
    if (config.monitor == Monitor::kLoss) monitored = rec.val_loss;
    if (stopper.update(epoch, monitored)) {
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_val = val;
    }
    if (stopper.should_stop(epoch)) break;
  }
  return result;
}

std::vector<TrainConfig> expand_grid(const TrainConfig& base, const GridAxes& axes) {
  auto or_base = []<typename T>(const std::vector<T>& axis, T fallback) {
    return axis.empty() ? std::vector<T>{fallback} : axis;
  };
  const auto lrs = or_base(axes.learning_rate, base.learning_rate);
  const auto etas = or_base(axes.eta, base.eta);
  const auto drops = or_base(axes.dropout, base.dropout);
  const auto alphas = or_base(axes.alpha, base.alpha);
  const auto rhos = or_base(axes.rho, base.rho);
  const auto hops = or_base(axes.hops, base.hops);

  std::vector<TrainConfig> cells;
  cells.reserve(lrs.size() * etas.size() * drops.size() * alphas.size() * rhos.size() * hops.size());
  for (double lr : lrs)
    for (double eta : etas)
      for (double dr : drops)
        for (double a : alphas)
          for (double r : rhos)
            for (std::size_t l : hops) {
              TrainConfig c = base;
              c.learning_rate = lr;
              c.eta = eta;
              c.dropout = dr;
              c.alpha = a;
              c.rho = r;
              c.hops = l;
              c.seed = base.seed + cells.size();
              cells.push_back(c);
            }
  return cells;
}

GridResult grid_search(const Dataset& data, const TrainConfig& base, const GridAxes& axes, std::size_t jobs) {
  const std::vector<TrainConfig> configs = expand_grid(base, axes);
  if (configs.empty()) throw ContractError("grid_search: empty grid");
  for (const TrainConfig& c : configs) c.validate();

  GridResult result;
  result.cells.resize(configs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      GridCell& cell = result.cells[i];
      cell.config = configs[i];
      try {
        const TrainResult r = train(configs[i], data);
        const ModelConfig mcfg = configs[i].model_config();
        cell.best_epoch = r.best_epoch;
        cell.val = r.best_val;
        cell.test = evaluate_params(r.best_params, data, mcfg, data.split.test_ids);
      } catch (const NumericError& e) {
        cell.failed = true;
        cell.error = e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = configs.size();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, configs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const GridCell& c = result.cells[i];
    if (c.failed) continue;
    if (!result.best_index || c.val.macro_f1 > result.cells[*result.best_index].val.macro_f1) result.best_index = i;
  }
  return result;
}

std::string to_json(const GridResult& result) {
  ordered_json cells = ordered_json::array();
  for (const GridCell& c : result.cells) {
    ordered_json j;
    j["config"] = config_json(c.config);
    j["failed"] = c.failed;
    if (c.failed) {
      j["error"] = c.error;
    } else {
      j["best_epoch"] = c.best_epoch;
      j["best_val"] = metrics_json(c.val);
      j["test"] = metrics_json(c.test);
    }
    cells.push_back(std::move(j));
  }
  ordered_json out;
  if (result.best_index) {
    out["best_index"] = *result.best_index;
  } else {
    out["best_index"] = nullptr;
  }
  out["cells"] = std::move(cells);
  return out.dump(2);
}

}  // namespace catgcn
