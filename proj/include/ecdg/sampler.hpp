#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/currents.hpp"
#include "ecdg/distribution.hpp"
#include "ecdg/rng.hpp"

namespace ecdg {

inline constexpr double kDegenerateCurrent = 1e-12;

struct Node {
  int layer = 0;
  StateIndex state = 0;
  friend bool operator==(const Node&, const Node&) = default;
};

/// Outgoing options of one node under the movement rule: neighbours whose
/// edge current flows away from the node, weighted by its magnitude, plus
/// termination at layer L weighted by the sink current. Order: neighbours
/// in layer-1 (ascending state), then layer+1 (ascending), then terminate.
struct TransitionRow {
  std::vector<Node> targets;
  std::vector<double> weights;
  double terminate_weight = 0.0;

  double total() const;
  /// weights / total, with termination last.
  std::vector<double> probabilities() const;
};

TransitionRow transition_row(const CurrentField& field, Node node);

struct Move {
  bool terminate = false;
  Node to;
};

/// One step of the general walk. Throws NumericalError if the node has less
/// than kDegenerateCurrent of outgoing current.
Move step_general(const CurrentField& field, Node node, Rng& rng);

struct Trajectory {
  std::vector<Node> nodes;
  bool terminated = false;
  std::size_t steps = 0;
  std::size_t fallbacks = 0;  // forward mode: steps that used the same-state edge

  StateIndex final_state() const { return nodes.back().state; }
};

/// Walks from (0, x0) until termination. max_steps = 0 means 100 L; going
/// past it throws NumericalError (a physical field cannot cycle).
Trajectory transport(const CurrentField& field, StateIndex x0, Rng& rng, std::size_t max_steps = 0);

/// Exactly L forward steps. Negative currents are clamped to zero; if the
/// whole clamped row is <= kDegenerateCurrent the walk keeps its state.
Trajectory transport_forward(const CurrentField& field, StateIndex x0, Rng& rng);

struct AbsorptionResult {
  DiscreteDistribution distribution;  // absorbed mass, normalized
  Eigen::VectorXd absorbed;           // raw absorbed mass per sink state
  double transient_mass = 0.0;        // left in the circuit when iteration stopped
  double max_accounting_error = 0.0;  // max |absorbed + transient - 1| over iterations
  int iterations = 0;
};

/// Propagates the mass of p placed on layer 0 through the exact transition
/// rows until less than `tolerance` remains in transit.
AbsorptionResult absorption_distribution(const CurrentField& field, const DiscreteDistribution& p,
                                         double tolerance = 1e-12, int max_iterations = 100000,
                                         std::size_t node_cap = 20000);

enum class WalkMode { Forward, General };

struct TransportOptions {
  WalkMode mode = WalkMode::Forward;
  std::uint64_t seed = 0;
  unsigned threads = 0;           // 0: ECDG_THREADS or hardware concurrency
  bool keep_trajectories = true;
  std::size_t max_steps = 0;      // general mode only
};

struct TransportBatch {
  std::vector<StateIndex> finals;
  std::vector<Trajectory> trajectories;  // empty unless kept
  std::size_t fallbacks = 0;
};

/// Sample i walks with Rng(derive_seed(seed, i)); results are independent of
/// the thread count.
TransportBatch transport_batch(const CurrentField& field, const std::vector<StateIndex>& sources,
                               const TransportOptions& options);

/// ECDG_THREADS if set to a positive integer, else hardware concurrency.
unsigned default_thread_count();

/// Occupancy of every layer over a batch of forward trajectories.
std::vector<DiscreteDistribution> layer_histograms(const TransportBatch& batch, const CircuitConfig& cfg);

// "sample_id,step,layer,state_flat" for the first `limit` trajectories.
void write_trajectories_csv(const std::filesystem::path& path, const TransportBatch& batch,
                            std::size_t limit = SIZE_MAX);

}  // namespace ecdg
