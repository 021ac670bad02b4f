#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/circuit.hpp"
#include "ecdg/distribution.hpp"
#include "ecdg/oracle.hpp"
#include "ecdg/potentials.hpp"

namespace ecdg {

/// I(l, x, y): current on the edge (l, x) -> (l+1, y), positive when it flows
/// toward layer l+1. Implementations are immutable after construction, or
/// internally synchronized, so one field can serve many threads.
class CurrentField {
 public:
  virtual ~CurrentField() = default;

  virtual const CircuitConfig& config() const = 0;
  virtual double current(int layer, StateIndex x, StateIndex y) const = 0;

  /// Current leaving the circuit at the sink node (L, x).
  virtual double sink_current(StateIndex x) const = 0;

  /// out[y] = I(layer, x, y) for every y; layer in [0, L-1].
  virtual void forward_currents(int layer, StateIndex x, std::span<double> out) const;
  /// out[y] = I(layer-1, y, x) for every y; layer in [1, L].
  virtual void backward_currents(int layer, StateIndex x, std::span<double> out) const;
};

/// Potentials of the closed form superposed over a coupling, tabulated once.
class AnalyticCurrentField final : public CurrentField {
 public:
  AnalyticCurrentField(const CircuitConfig& cfg, const Coupling& coupling,
                       std::size_t support_cap = kDefaultSupportCap);

  const CircuitConfig& config() const override { return cfg_; }
  double current(int layer, StateIndex x, StateIndex y) const override;
  double sink_current(StateIndex x) const override { return sink_[static_cast<Eigen::Index>(x)]; }
  void forward_currents(int layer, StateIndex x, std::span<double> out) const override;
  void backward_currents(int layer, StateIndex x, std::span<double> out) const override;

  /// (L+1) x n superposed potentials.
  const Eigen::MatrixXd& potentials() const { return phi_; }

 private:
  CircuitConfig cfg_;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd sink_;
};

/// Exact node-voltage currents from the oracle.
class OracleCurrentField final : public CurrentField {
 public:
  OracleCurrentField(const CircuitConfig& cfg, CurrentTable table, const DiscreteDistribution& sinks);
  /// Builds and solves the system for marginals p, q.
  OracleCurrentField(const CircuitConfig& cfg, const DiscreteDistribution& sources,
                     const DiscreteDistribution& sinks);

  const CircuitConfig& config() const override { return cfg_; }
  double current(int layer, StateIndex x, StateIndex y) const override;
  double sink_current(StateIndex x) const override { return sink_[static_cast<Eigen::Index>(x)]; }
  void forward_currents(int layer, StateIndex x, std::span<double> out) const override;
  void backward_currents(int layer, StateIndex x, std::span<double> out) const override;

  const CurrentTable& table() const { return table_; }

 private:
  CircuitConfig cfg_;
  CurrentTable table_;
  Eigen::VectorXd sink_;
};

/// Every edge gets its own Monte Carlo estimate with B pairs, seeded by
/// derive_seed(seed, layer, x, y), so results do not depend on query order.
class MonteCarloCurrentField final : public CurrentField {
 public:
  MonteCarloCurrentField(const CircuitConfig& cfg, Coupling coupling, std::size_t batch,
                         std::uint64_t seed);

  const CircuitConfig& config() const override { return cfg_; }
  double current(int layer, StateIndex x, StateIndex y) const override;
  double sink_current(StateIndex x) const override { return coupling_.target_marginal()(x); }

 private:
  CircuitConfig cfg_;
  Coupling coupling_;
  PairPotentials<double> memo_;
  std::size_t batch_;
  std::uint64_t seed_;
};

/// Literal sum over coupling pairs touching x or y of
/// pi(s, t) (phi_l(x | s, t) - phi_{l+1}(y | s, t)) / R(x, y).
double exact_current(const CircuitConfig& cfg, const Coupling& coupling, int layer, StateIndex x,
                     StateIndex y, std::size_t support_cap = kDefaultSupportCap);

/// Mean of the single-pair integrand over B draws from the coupling.
double mc_current(const CircuitConfig& cfg, const Coupling& coupling, int layer, StateIndex x,
                  StateIndex y, std::size_t batch, std::uint64_t seed);

/// One batch of (source, sink) draws shared by every edge queried in a
/// training step. Stores per-state counts, so each edge costs O(1).
class PairBatch {
 public:
  static PairBatch draw(const Coupling& coupling, std::size_t batch, std::uint64_t seed);
  static PairBatch from_pairs(const std::vector<std::pair<StateIndex, StateIndex>>& pairs, StateIndex n);

  std::size_t size() const { return size_; }

  /// Batch mean of phi_l(x | s, t).
  double potential(const PairPotentials<double>& memo, int layer, StateIndex x) const;
  /// Batch mean of the current integrand on edge (layer, x) -> (layer+1, y).
  double current(const PairPotentials<double>& memo, const CircuitConfig& cfg, int layer,
                 StateIndex x, StateIndex y) const;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint32_t> as_source_;      // pairs with s == x, t != x
  std::vector<std::uint32_t> as_sink_;        // pairs with t == x, s != x
  std::vector<std::uint32_t> as_coincident_;  // pairs with s == t == x
};

/// Current dump, header "ell,x_flat,y_flat,current". Edges with
/// |I| < min_abs are skipped.
void write_currents_csv(const std::filesystem::path& path, const CurrentField& field,
                        double min_abs = 0.0);

}  // namespace ecdg
