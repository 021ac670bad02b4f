#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/circuit.hpp"
#include "ecdg/distribution.hpp"

namespace ecdg {

inline constexpr std::size_t kDefaultNodeCap = 20000;
inline constexpr std::size_t kDenseSolveLimit = 2000;

/// Node-voltage system G phi = i of a layered circuit. Node index is
/// layer * n + state. G is block tridiagonal,
///   [ D  B          ]
///   [ B  2D  B      ]
///   [     ...    B  ]
///   [         B  D  ]
/// with D = (1/r + (n-1)/R) I and B = -1/r on the diagonal, -1/R elsewhere.
class ConductanceSystem {
 public:
  ConductanceSystem(CircuitConfig cfg, Eigen::VectorXd injection);

  const CircuitConfig& config() const { return cfg_; }
  std::size_t size() const { return cfg_.node_count(); }
  const Eigen::VectorXd& injection() const { return injection_; }

  /// Diagonal entry of G for nodes of `layer`.
  double self_conductance(int layer) const;

  /// Dense G. Meant for small systems and debugging dumps.
  Eigen::MatrixXd matrix() const;
  /// The n x n off-diagonal block B.
  Eigen::MatrixXd coupling_block() const;
  /// G phi without forming G.
  Eigen::VectorXd apply(const Eigen::VectorXd& phi) const;

 private:
  CircuitConfig cfg_;
  Eigen::VectorXd injection_;
};

/// Injects +p on layer 0 and -q on layer L. Throws SizeError above `node_cap`
/// nodes and ValidationError on unnormalized or mis-sized marginals.
ConductanceSystem build_system(const CircuitConfig& cfg, const DiscreteDistribution& sources,
                               const DiscreteDistribution& sinks,
                               std::size_t node_cap = kDefaultNodeCap);

enum class SolvePath { Automatic, Dense, BlockTridiagonal };

struct PotentialSolution {
  Eigen::VectorXd phi;
  std::size_t grounded_node = 0;
  double residual = 0.0;  // ||G phi - i||_inf

  /// (L+1) x n view of phi.
  Eigen::MatrixXd by_layer(const CircuitConfig& cfg) const;
};

/// Solves G phi = i with one zero-injection node held at potential 0.
/// Automatic uses a dense Cholesky up to kDenseSolveLimit nodes and block
/// elimination (blocks of size n) above. Throws NumericalError if the reduced
/// system is singular or the residual exceeds 1e-9 max(1, ||i||_inf).
PotentialSolution solve(const ConductanceSystem& system, SolvePath path = SolvePath::Automatic);

/// Single unit source at (0, source) and sink at (L, sink), solved on the
/// exact finite-n symmetry classes {source, sink, every other state}.
/// Tracks are indexed by layer; sink_track equals source_track when the two
/// coincide and generic_track is empty when no other state exists. The
/// generic track is pinned to 0 at layer L/2.
struct ReducedSolution {
  Eigen::VectorXd source_track;
  Eigen::VectorXd sink_track;
  Eigen::VectorXd generic_track;
};
ReducedSolution solve_reduced(const CircuitConfig& cfg, StateIndex source, StateIndex sink);

/// currents[l](x, y) is the current from (l, x) to (l+1, y); negative values
/// flow back toward layer l.
using CurrentTable = std::vector<Eigen::MatrixXd>;

CurrentTable edge_currents(const PotentialSolution& solution, const CircuitConfig& cfg);
CurrentTable edge_currents(const Eigen::MatrixXd& potentials_by_layer, const CircuitConfig& cfg);

struct KirchhoffReport {
  double residual = 0.0;              // node-voltage residual
  double max_interior_imbalance = 0.0;
  double max_source_error = 0.0;      // |sum_y I_0(x, y) - p(x)|
  double max_sink_error = 0.0;        // |sum_x I_{L-1}(x, y) - q(y)|
  double total_source_outflow = 0.0;
  double total_sink_inflow = 0.0;
};

KirchhoffReport kirchhoff_report(const CurrentTable& currents, const DiscreteDistribution& sources,
                                 const DiscreteDistribution& sinks, double residual = 0.0);

// Debug dumps. G as "row,col,value" triplets of the nonzero entries; phi as
// "layer,state_flat,potential".
void write_system_csv(const std::filesystem::path& path, const ConductanceSystem& system);
void write_potentials_csv(const std::filesystem::path& path, const Eigen::MatrixXd& potentials_by_layer);

}  // namespace ecdg
