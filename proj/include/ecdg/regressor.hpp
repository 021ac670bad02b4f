#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/circuit.hpp"
#include "ecdg/currents.hpp"
#include "ecdg/potentials.hpp"

namespace ecdg {

inline constexpr std::array<int, 3> kHiddenWidths{128, 128, 128};
inline constexpr int kEmbeddingWidth = 2;

/// MLP I_theta(x, y, l): input (2D normalized categories, embedding of l),
/// three ReLU hidden layers, linear scalar head. Layer k maps
/// weights[k].cols() inputs to weights[k].rows() outputs.
struct RegressorParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd embedding;  // L x 2

  std::size_t parameter_count() const;
  /// Weights (column-major), then biases, then the embedding, per layer in order.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  /// Same shapes, all zeros.
  RegressorParams zeros_like() const;
};

int input_size(const CircuitConfig& cfg);

/// He-uniform hidden weights, zero biases, U(-0.1, 0.1) embedding, zero head.
RegressorParams init_params(const CircuitConfig& cfg, std::uint64_t seed);

/// (c + 0.5) / S per dimension for x then y, then the embedding row of l.
Eigen::VectorXd encode(const CircuitConfig& cfg, const RegressorParams& params, StateIndex x,
                       StateIndex y, int layer);

struct Example {
  int layer = 0;
  StateIndex x = 0;
  StateIndex y = 0;
  double target = 0.0;
};

/// Raw network output for each example (targets ignored).
Eigen::VectorXd predict(const CircuitConfig& cfg, const RegressorParams& params,
                        std::span<const Example> batch);
double predict(const CircuitConfig& cfg, const RegressorParams& params, int layer, StateIndex x,
               StateIndex y);

/// Mean squared error over the batch and its exact gradient, written into
/// `grad` (resized to match). Throws NumericalError on non-finite values.
double loss_and_gradient(const CircuitConfig& cfg, const RegressorParams& params,
                         std::span<const Example> batch, RegressorParams& grad);

/// theta <- theta - lr grad, then W <- W - lr wd W on weight matrices only.
void sgd_step(RegressorParams& params, const RegressorParams& grad, double learning_rate,
              double weight_decay);

struct TrainConfig {
  int steps = 5000;
  int batch = 256;
  double learning_rate = 2e-4;
  double weight_decay = 1e-4;
  int pair_batch = 256;       // (x0, xL) pairs per step for the Monte Carlo targets
  double target_scale = 1.0;  // network learns target_scale * I
  std::uint64_t seed = 0;
};

struct TrainResult {
  RegressorParams params;
  std::vector<double> loss;  // one entry per step
};

/// Per step: one shared pair batch from the coupling, then `batch` edges with
/// l ~ U{0..L-1} and x, y ~ U(S^D), Monte Carlo targets, one SGD step.
TrainResult train(const CircuitConfig& cfg, const Coupling& coupling, const TrainConfig& tc);

/// Mean of the first and last `window` entries.
std::pair<double, double> loss_window_means(const std::vector<double>& loss, std::size_t window = 100);

// Versioned JSON checkpoint with the circuit, train config, and flat
// per-layer weight arrays (row-major).
void save_checkpoint(const std::filesystem::path& path, const CircuitConfig& cfg,
                     const RegressorParams& params, const TrainConfig& tc);
struct Checkpoint {
  CircuitConfig cfg;
  RegressorParams params;
  TrainConfig train;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loss trace CSV: "step,loss".
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss);

/// Current field backed by a trained regressor. Predictions are divided by
/// the target scale. Rows are computed in one batched pass and cached.
class LearnedCurrentField final : public CurrentField {
 public:
  LearnedCurrentField(const CircuitConfig& cfg, RegressorParams params, double target_scale,
                      const DiscreteDistribution& sinks);

  const CircuitConfig& config() const override { return cfg_; }
  double current(int layer, StateIndex x, StateIndex y) const override;
  double sink_current(StateIndex x) const override { return sink_[static_cast<Eigen::Index>(x)]; }
  void forward_currents(int layer, StateIndex x, std::span<double> out) const override;
  void backward_currents(int layer, StateIndex x, std::span<double> out) const override;

 private:
  const std::vector<double>& row(bool forward, int layer, StateIndex x) const;

  CircuitConfig cfg_;
  RegressorParams params_;
  double scale_;
  Eigen::VectorXd sink_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<bool, int, StateIndex>, std::shared_ptr<const std::vector<double>>> cache_;
};

}  // namespace ecdg
