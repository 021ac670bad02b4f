#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/chebyshev.hpp"
#include "ecdg/circuit.hpp"
#include "ecdg/distribution.hpp"
#include "ecdg/rng.hpp"

namespace ecdg {

/// Where to evaluate a single source-sink potential: `state` at `layer`, for a
/// unit current entering at (0, source) and leaving at (L, sink).
struct PairPotentialQuery {
  int layer = 0;
  StateIndex state = 0;
  StateIndex source = 0;
  StateIndex sink = 0;
};

/// Closed-form single source-sink potentials (large-n limit, generic columns
/// pinned to zero), evaluated directly from Chebyshev recurrences.
double pair_potential(const CircuitConfig& cfg, const PairPotentialQuery& query);

/// Per-layer memo of the three potential tracks. With D = gamma T_L - T_{L-1}:
///   source(l)     = r T_{L-l} / D                        state == source != sink
///   sink(l)       = -r T_l / D                           state == sink != source
///   coincident(l) = r (T_l (gamma U_{L-1} - U_{L-2} - 1) / D - U_{l-1})
///                                                        state == source == sink
/// The coincident track is the sum of the other two (same tridiagonal system,
/// summed right-hand sides) and is evaluated as r (T_{L-l} - T_l) / D; the
/// U-form above cancels catastrophically once gamma^L is large.
template <typename Scalar = double>
class PairPotentials {
 public:
  explicit PairPotentials(const CircuitConfig& cfg)
      : forward_r_(static_cast<Scalar>(cfg.forward_resistance())) {
    const int L = cfg.layers();
    const ChebyshevTable<Scalar> cheb(L, static_cast<Scalar>(cfg.gamma()));
    const Scalar g = cheb.gamma();
    const Scalar denom = g * cheb.t(L) - cheb.t(L - 1);
    source_.resize(static_cast<std::size_t>(L) + 1);
    sink_.resize(source_.size());
    coincident_.resize(source_.size());
    for (int l = 0; l <= L; ++l) {
      source_[l] = forward_r_ * cheb.t(L - l) / denom;
      sink_[l] = -forward_r_ * cheb.t(l) / denom;
      coincident_[l] = forward_r_ * (cheb.t(L - l) - cheb.t(l)) / denom;
    }
  }

  Scalar source(int l) const { return source_[static_cast<std::size_t>(l)]; }
  Scalar sink(int l) const { return sink_[static_cast<std::size_t>(l)]; }
  Scalar coincident(int l) const { return coincident_[static_cast<std::size_t>(l)]; }

  Scalar at(int l, StateIndex x, StateIndex source_state, StateIndex sink_state) const {
    if (source_state == sink_state) return x == source_state ? coincident(l) : Scalar(0);
    if (x == source_state) return source(l);
    if (x == sink_state) return sink(l);
    return Scalar(0);
  }

 private:
  Scalar forward_r_;
  std::vector<Scalar> source_;
  std::vector<Scalar> sink_;
  std::vector<Scalar> coincident_;
};

/// Joint law pi(x0, xL) of source and sink states.
class Coupling {
 public:
  enum class Kind { Independent, Paired, Explicit };

  struct Entry {
    StateIndex source;
    StateIndex sink;
    double weight;
  };

  /// pi = p x q.
  static Coupling independent(DiscreteDistribution p, DiscreteDistribution q);
  /// Uniform weight over a list of (source, sink) pairs; repeats add up.
  static Coupling paired(const std::vector<std::pair<StateIndex, StateIndex>>& pairs, StateIndex n);
  /// Dense joint table, rows = source state, columns = sink state.
  static Coupling explicit_plan(Eigen::MatrixXd joint);
  /// North-west-corner (monotone) plan with the given marginals.
  static Coupling comonotone(const DiscreteDistribution& p, const DiscreteDistribution& q);
  /// alpha a + (1 - alpha) b as an explicit table.
  static Coupling mixture(double alpha, const Coupling& a, const Coupling& b);

  Kind kind() const { return kind_; }
  StateIndex states() const { return n_; }
  const DiscreteDistribution& source_marginal() const { return p_; }
  const DiscreteDistribution& target_marginal() const { return q_; }

  /// Number of (source, sink) pairs with positive weight.
  std::size_t support_size() const;

  double weight(StateIndex source, StateIndex sink) const;
  Eigen::MatrixXd dense() const;

  /// Visits positive-weight pairs in ascending (source, sink) order.
  template <typename Fn>
  void for_each_pair(Fn&& fn) const;

  /// Visits, in ascending order and once each, the positive-weight pairs whose
  /// source or sink is `a` or `b`. Every other pair has identically zero
  /// potential at states a and b.
  template <typename Fn>
  void for_each_pair_touching(StateIndex a, StateIndex b, Fn&& fn) const;

  std::pair<StateIndex, StateIndex> sample(Rng& rng) const;

 private:
  Coupling() = default;

  Kind kind_ = Kind::Independent;
  StateIndex n_ = 0;
  DiscreteDistribution p_;
  DiscreteDistribution q_;
  std::vector<StateIndex> p_support_;
  std::vector<StateIndex> q_support_;
  std::vector<Entry> entries_;                 // Paired: aggregated, sorted
  std::vector<std::pair<StateIndex, StateIndex>> draws_;  // Paired: original list
  Eigen::MatrixXd joint_;                      // Explicit
  std::vector<double> joint_cdf_;              // Explicit, row-major
};

inline constexpr std::size_t kDefaultSupportCap = 10'000'000;

/// sum over (x0, xL) of pi(x0, xL) phi_l(x | x0, xL), summed in ascending pair
/// order. Throws SizeError when the coupling support exceeds `support_cap`.
double superposed_potential(const CircuitConfig& cfg, int layer, StateIndex x,
                            const Coupling& coupling,
                            std::size_t support_cap = kDefaultSupportCap);

/// Same sum, reusing a prebuilt memo.
double superposed_potential(const PairPotentials<double>& memo, int layer, StateIndex x,
                            const Coupling& coupling);

/// (L+1) x n table of superposed potentials.
Eigen::MatrixXd superposed_potential_table(const CircuitConfig& cfg, const Coupling& coupling,
                                           std::size_t support_cap = kDefaultSupportCap);

// ---------------------------------------------------------------------------

template <typename Fn>
void Coupling::for_each_pair(Fn&& fn) const {
  switch (kind_) {
    case Kind::Independent:
      for (StateIndex s : p_support_)
        for (StateIndex t : q_support_) fn(s, t, p_(s) * q_(t));
      break;
    case Kind::Paired:
      for (const auto& e : entries_) fn(e.source, e.sink, e.weight);
      break;
    case Kind::Explicit:
      for (Eigen::Index s = 0; s < joint_.rows(); ++s)
        for (Eigen::Index t = 0; t < joint_.cols(); ++t)
          if (joint_(s, t) > 0.0) fn(static_cast<StateIndex>(s), static_cast<StateIndex>(t), joint_(s, t));
      break;
  }
}

template <typename Fn>
void Coupling::for_each_pair_touching(StateIndex a, StateIndex b, Fn&& fn) const {
  std::array<StateIndex, 2> cols{a < b ? a : b, a < b ? b : a};
  const std::size_t ncols = a == b ? 1 : 2;
  auto is_hit = [&](StateIndex v) { return v == a || v == b; };
  switch (kind_) {
    case Kind::Independent:
      for (StateIndex s : p_support_) {
        const double ps = p_(s);
        if (is_hit(s)) {
          for (StateIndex t : q_support_) fn(s, t, ps * q_(t));
        } else {
          for (std::size_t k = 0; k < ncols; ++k)
            if (q_(cols[k]) > 0.0) fn(s, cols[k], ps * q_(cols[k]));
        }
      }
      break;
    case Kind::Paired:
      for (const auto& e : entries_)
        if (is_hit(e.source) || is_hit(e.sink)) fn(e.source, e.sink, e.weight);
      break;
    case Kind::Explicit:
      for (Eigen::Index s = 0; s < joint_.rows(); ++s) {
        const auto su = static_cast<StateIndex>(s);
        if (is_hit(su)) {
          for (Eigen::Index t = 0; t < joint_.cols(); ++t)
            if (joint_(s, t) > 0.0) fn(su, static_cast<StateIndex>(t), joint_(s, t));
        } else {
          for (std::size_t k = 0; k < ncols; ++k) {
            const double w = joint_(s, static_cast<Eigen::Index>(cols[k]));
            if (w > 0.0) fn(su, cols[k], w);
          }
        }
      }
      break;
  }
}

}  // namespace ecdg
