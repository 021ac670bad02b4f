#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ecdg {

using StateIndex = std::size_t;

/// Layered circuit G_L(n, R, r): L+1 copies of the state space S^D, with
/// resistors between every pair of states in neighbouring layers. Edges that
/// keep the state use the forward resistance r, all others the lateral R.
class CircuitConfig {
 public:
  CircuitConfig(int layers, int categories, int dims, double forward_resistance,
                double lateral_resistance);

  int layers() const { return layers_; }
  int categories() const { return categories_; }
  int dims() const { return dims_; }
  StateIndex states() const { return states_; }
  double forward_resistance() const { return r_; }
  double lateral_resistance() const { return R_; }
  double gamma() const { return gamma_; }

  std::size_t node_count() const { return (static_cast<std::size_t>(layers_) + 1) * states_; }
  std::size_t node(int layer, StateIndex x) const {
    return static_cast<std::size_t>(layer) * states_ + x;
  }

  friend bool operator==(const CircuitConfig&, const CircuitConfig&) = default;

 private:
  int layers_;
  int categories_;
  int dims_;
  StateIndex states_;
  double r_;
  double R_;
  double gamma_;
};

/// A point of S^D. Dimension 0 varies fastest in the flat index.
struct State {
  std::vector<int> categories;
  StateIndex flat = 0;

  friend bool operator==(const State& a, const State& b) { return a.flat == b.flat; }
};

State flatten(const CircuitConfig& cfg, std::span<const int> categories);
State unflatten(const CircuitConfig& cfg, StateIndex flat);

/// 1 + r n / R.
double gamma_of(const CircuitConfig& cfg);
double gamma_of(double forward_resistance, double lateral_resistance, double states);

inline double resistance(const CircuitConfig& cfg, StateIndex x, StateIndex y) {
  return x == y ? cfg.forward_resistance() : cfg.lateral_resistance();
}
inline double resistance(const CircuitConfig& cfg, const State& x, const State& y) {
  return resistance(cfg, x.flat, y.flat);
}

void to_json(nlohmann::json& j, const CircuitConfig& cfg);
CircuitConfig circuit_from_json(const nlohmann::json& j);

}  // namespace ecdg
