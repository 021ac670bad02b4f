#include "ecdg/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecdg/error.hpp"

namespace ecdg {

namespace {

void check_query(const CircuitConfig& cfg, const PairPotentialQuery& q) {
  if (q.layer < 0 || q.layer > cfg.layers()) throw ValidationError("pair_potential: layer out of range");
  const StateIndex n = cfg.states();
  if (q.state >= n || q.source >= n || q.sink >= n)
    throw ValidationError("pair_potential: state out of range");
}

}  // namespace

double pair_potential(const CircuitConfig& cfg, const PairPotentialQuery& query) {
  check_query(cfg, query);
  const int L = cfg.layers();
  const int l = query.layer;
  const double g = cfg.gamma();
  const double r = cfg.forward_resistance();
  const double denom = g * chebyshev_t(L, g) - chebyshev_t(L - 1, g);
  if (query.source != query.sink) {
    if (query.state == query.source) return r * chebyshev_t(L - l, g) / denom;
    if (query.state == query.sink) return -r * chebyshev_t(l, g) / denom;
    return 0.0;
  }
  if (query.state != query.source) return 0.0;
  return r * (chebyshev_t(L - l, g) - chebyshev_t(l, g)) / denom;
}

Coupling Coupling::independent(DiscreteDistribution p, DiscreteDistribution q) {
  if (p.size() != q.size()) throw ValidationError("coupling: marginal sizes differ");
  Coupling c;
  c.kind_ = Kind::Independent;
  c.n_ = p.size();
  c.p_support_ = p.support();
  c.q_support_ = q.support();
  c.p_ = std::move(p);
  c.q_ = std::move(q);
  return c;
}

Coupling Coupling::paired(const std::vector<std::pair<StateIndex, StateIndex>>& pairs, StateIndex n) {
  if (pairs.empty()) throw ValidationError("coupling: empty pair list");
  Coupling c;
  c.kind_ = Kind::Paired;
  c.n_ = n;
  c.draws_ = pairs;
  auto sorted = pairs;
  std::sort(sorted.begin(), sorted.end());
  const double w = 1.0 / static_cast<double>(pairs.size());
  Eigen::VectorXd pm = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd qm = pm;
  for (std::size_t i = 0; i < sorted.size();) {
    const auto [s, t] = sorted[i];
    if (s >= n || t >= n) throw ValidationError("coupling: pair state out of range");
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double weight = w * static_cast<double>(j - i);
    c.entries_.push_back({s, t, weight});
    pm[static_cast<Eigen::Index>(s)] += weight;
    qm[static_cast<Eigen::Index>(t)] += weight;
    i = j;
  }
  c.p_ = DiscreteDistribution::from_weights(std::move(pm));
  c.q_ = DiscreteDistribution::from_weights(std::move(qm));
  c.p_support_ = c.p_.support();
  c.q_support_ = c.q_.support();
  return c;
}

Coupling Coupling::explicit_plan(Eigen::MatrixXd joint) {
  if (joint.rows() != joint.cols() || joint.rows() == 0)
    throw ValidationError("coupling: joint table must be square and non-empty");
  if ((joint.array() < 0.0).any() || !joint.allFinite())
    throw ValidationError("coupling: joint weights must be finite and non-negative");
  if (std::abs(joint.sum() - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "coupling: joint table sums to " << joint.sum() << ", expected 1";
    throw ValidationError(msg.str());
  }
  Coupling c;
  c.kind_ = Kind::Explicit;
  c.n_ = static_cast<StateIndex>(joint.rows());
  c.p_ = DiscreteDistribution::from_weights(joint.rowwise().sum());
  c.q_ = DiscreteDistribution::from_weights(joint.colwise().sum().transpose());
  c.p_support_ = c.p_.support();
  c.q_support_ = c.q_.support();
  c.joint_cdf_.reserve(static_cast<std::size_t>(joint.size()));
  double acc = 0.0;
  for (Eigen::Index s = 0; s < joint.rows(); ++s)
    for (Eigen::Index t = 0; t < joint.cols(); ++t) c.joint_cdf_.push_back(acc += joint(s, t));
  c.joint_ = std::move(joint);
  return c;
}

Coupling Coupling::comonotone(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.size() != q.size()) throw ValidationError("coupling: marginal sizes differ");
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index i = 0, j = 0;
  double row_left = p(0), col_left = q(0);
  while (i < n && j < n) {
    if (row_left <= col_left) {
      joint(i, j) += row_left;
      col_left -= row_left;
      if (++i < n) row_left = p(static_cast<StateIndex>(i));
    } else {
      joint(i, j) += col_left;
      row_left -= col_left;
      if (++j < n) col_left = q(static_cast<StateIndex>(j));
    }
  }
  // Leftover from rounding goes to the last cell, keeping the total at 1.
  joint(n - 1, n - 1) += 1.0 - joint.sum();
  if (joint(n - 1, n - 1) < 0.0) joint(n - 1, n - 1) = 0.0;
  return explicit_plan(std::move(joint));
}

Coupling Coupling::mixture(double alpha, const Coupling& a, const Coupling& b) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("coupling: mixture weight outside [0,1]");
  if (a.states() != b.states()) throw ValidationError("coupling: mixture of different state spaces");
  return explicit_plan(alpha * a.dense() + (1.0 - alpha) * b.dense());
}

std::size_t Coupling::support_size() const {
  switch (kind_) {
    case Kind::Independent:
      return p_support_.size() * q_support_.size();
    case Kind::Paired:
      return entries_.size();
    case Kind::Explicit:
      return static_cast<std::size_t>((joint_.array() > 0.0).count());
  }
  return 0;
}

double Coupling::weight(StateIndex source, StateIndex sink) const {
  if (source >= n_ || sink >= n_) throw ValidationError("coupling: state out of range");
  switch (kind_) {
    case Kind::Independent:
      return p_(source) * q_(sink);
    case Kind::Paired: {
      auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{source, sink},
                                 [](const Entry& e, const std::pair<StateIndex, StateIndex>& k) {
                                   return std::pair{e.source, e.sink} < k;
                                 });
      return (it != entries_.end() && it->source == source && it->sink == sink) ? it->weight : 0.0;
    }
    case Kind::Explicit:
      return joint_(static_cast<Eigen::Index>(source), static_cast<Eigen::Index>(sink));
  }
  return 0.0;
}

Eigen::MatrixXd Coupling::dense() const {
  if (kind_ == Kind::Explicit) return joint_;
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for_each_pair([&](StateIndex s, StateIndex t, double w) {
    m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = w;
  });
  return m;
}

std::pair<StateIndex, StateIndex> Coupling::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::Independent: {
      const StateIndex s = p_.sample(rng);
      const StateIndex t = q_.sample(rng);
      return {s, t};
    }
    case Kind::Paired:
      return draws_[rng.uniform_index(draws_.size())];
    case Kind::Explicit: {
      const double u = rng.uniform() * joint_cdf_.back();
      auto it = std::upper_bound(joint_cdf_.begin(), joint_cdf_.end(), u);
      if (it == joint_cdf_.end()) --it;
      auto k = static_cast<std::size_t>(it - joint_cdf_.begin());
      const auto n = static_cast<std::size_t>(n_);
      while (joint_(static_cast<Eigen::Index>(k / n), static_cast<Eigen::Index>(k % n)) <= 0.0 && k > 0) --k;
      return {static_cast<StateIndex>(k / n), static_cast<StateIndex>(k % n)};
    }
  }
  return {0, 0};
}

double superposed_potential(const PairPotentials<double>& memo, int layer, StateIndex x,
                            const Coupling& coupling) {
  double acc = 0.0;
  coupling.for_each_pair_touching(x, x, [&](StateIndex s, StateIndex t, double w) {
    acc += w * memo.at(layer, x, s, t);
  });
  return acc;
}

namespace {

void check_support(const Coupling& coupling, std::size_t support_cap) {
  const std::size_t support = coupling.support_size();
  if (support > support_cap) {
    std::ostringstream msg;
    msg << "coupling support of " << support << " pairs exceeds the cap of " << support_cap;
    throw SizeError(msg.str());
  }
}

}  // namespace

double superposed_potential(const CircuitConfig& cfg, int layer, StateIndex x,
                            const Coupling& coupling, std::size_t support_cap) {
  if (layer < 0 || layer > cfg.layers()) throw ValidationError("superposed_potential: layer out of range");
  if (coupling.states() != cfg.states()) throw ValidationError("superposed_potential: coupling size mismatch");
  if (x >= cfg.states()) throw ValidationError("superposed_potential: state out of range");
  check_support(coupling, support_cap);
  const PairPotentials<double> memo(cfg);
  return superposed_potential(memo, layer, x, coupling);
}

Eigen::MatrixXd superposed_potential_table(const CircuitConfig& cfg, const Coupling& coupling,
                                           std::size_t support_cap) {
  if (coupling.states() != cfg.states()) throw ValidationError("superposed_potential: coupling size mismatch");
  check_support(coupling, support_cap);
  const PairPotentials<double> memo(cfg);
  const auto n = static_cast<Eigen::Index>(cfg.states());
  Eigen::MatrixXd table(cfg.layers() + 1, n);
  for (int l = 0; l <= cfg.layers(); ++l)
    for (Eigen::Index x = 0; x < n; ++x)
      table(l, x) = superposed_potential(memo, l, static_cast<StateIndex>(x), coupling);
  return table;
}

}  // namespace ecdg
