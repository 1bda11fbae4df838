#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catgcn/dataset.hpp"
#include "catgcn/metrics.hpp"
#include "catgcn/model.hpp"

namespace catgcn {

enum class Monitor { kMacroF1, kAccuracy, kLoss };

std::string_view to_string(Monitor m);
Monitor parse_monitor(std::string_view s);

struct TrainConfig {
  double learning_rate = 0.01;
  double eta = 0.0;  // L2 coefficient
  double dropout = 0.0;
  double alpha = 0.5;
  double rho = 21.0;
  std::size_t hops = 2;
  std::size_t n_f = 10;
  std::size_t emb_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::kMacroF1;
  DropoutSite dropout_site = DropoutSite::kEmbedding;
  Activation final_activation = Activation::kIdentity;
  LocalPooling local_pooling = LocalPooling::kBiInteraction;
  bool projection_hidden = false;
  bool resample_per_epoch = false;

  void validate() const;
  ModelConfig model_config() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string to_json(const TrainConfig& config);
TrainConfig train_config_from_json(std::string_view json);

// Uniform Xavier/Glorot: entries in +-sqrt(6 / (fan_in + fan_out)), biases 0.
// Each tensor draws from its own stream of `seed`.
ModelParams xavier_init(const ModelShapes& shapes, std::uint64_t seed);

struct AdamState {
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros_like(std::span<DenseMatrix* const> params);
};

// Bias-corrected Adam update in place. Throws NumericError on a non-finite
// gradient before touching any parameter.
void adam_step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads, AdamState& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double val_loss = 0.0;
  double wall_time_s = 0.0;
};

// One JSON object per line. Wall time is left out unless requested so that
// logs from identical runs compare equal byte for byte.
std::string to_json_line(const EpochRecord& record, bool include_wall_time = false);

// Patience-based early stopping on a monitored value.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool higher_is_better)
      : patience_(patience), higher_is_better_(higher_is_better) {}

  // Returns true when `value` strictly improves on the best so far.
  bool update(std::size_t epoch, double value);
  bool should_stop(std::size_t epoch) const { return best_epoch_ != 0 && epoch - best_epoch_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_value() const noexcept { return best_value_; }

 private:
  std::size_t patience_;
  bool higher_is_better_;
  std::size_t best_epoch_ = 0;
  double best_value_ = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  Metrics best_val;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full-batch training with Adam and early stopping. `data` must have been
// prepared with config.n_f. Returns the parameters of the best epoch.
TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

Metrics evaluate_params(const ModelParams& params, const Dataset& data, const ModelConfig& config,
                        std::span<const NodeId> ids);

// Grid axes; an empty axis keeps the base config's value.
struct GridAxes {
  std::vector<double> learning_rate{0.1, 0.01, 0.001};
  std::vector<double> eta{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.0};
  std::vector<double> dropout{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> alpha{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> rho{};
  std::vector<std::size_t> hops{};
};

// Cells in row-major order over (learning_rate, eta, dropout, alpha, rho,
// hops). Cell i trains with seed base.seed + i.
std::vector<TrainConfig> expand_grid(const TrainConfig& base, const GridAxes& axes);

struct GridCell {
  TrainConfig config;
  bool failed = false;
  std::string error;
  std::size_t best_epoch = 0;
  Metrics val;
  Metrics test;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::optional<std::size_t> best_index;
};

// Trains every cell (up to `jobs` at a time) and selects the highest
// validation macro-F1, ties to the earliest cell.
GridResult grid_search(const Dataset& data, const TrainConfig& base, const GridAxes& axes, std::size_t jobs = 1);

std::string to_json(const GridResult& result);

}  // namespace catgcn
