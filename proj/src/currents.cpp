#include "ecdg/currents.hpp"

#include <cmath>
#include <sstream>

#include "csv.hpp"
#include "ecdg/error.hpp"

namespace ecdg {

namespace {

using Eigen::Index;

void check_edge(const CircuitConfig& cfg, int layer, StateIndex x, StateIndex y) {
  if (layer < 0 || layer >= cfg.layers()) {
    std::ostringstream msg;
    msg << "current: layer " << layer << " outside [0, " << cfg.layers() - 1 << "]";
    throw ValidationError(msg.str());
  }
  if (x >= cfg.states() || y >= cfg.states()) throw ValidationError("current: state out of range");
}

void check_row(const CircuitConfig& cfg, StateIndex x, std::span<double> out) {
  if (x >= cfg.states()) throw ValidationError("current: state out of range");
  if (out.size() != cfg.states()) throw ValidationError("current: output row has the wrong size");
}

// (phi_from - phi_to) / R, with the diagonal using r.
void ohm_row(const CircuitConfig& cfg, double from, const Eigen::VectorXd& to, StateIndex diag,
             double sign, std::span<double> out) {
  const double R = cfg.lateral_resistance();
  for (Index y = 0; y < to.size(); ++y) out[static_cast<std::size_t>(y)] = sign * (from - to[y]) / R;
  const auto d = static_cast<Index>(diag);
  out[diag] = sign * (from - to[d]) / cfg.forward_resistance();
}

}  // namespace

void CurrentField::forward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_row(config(), x, out);
  for (StateIndex y = 0; y < out.size(); ++y) out[y] = current(layer, x, y);
}

void CurrentField::backward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_row(config(), x, out);
  for (StateIndex y = 0; y < out.size(); ++y) out[y] = current(layer - 1, y, x);
}

AnalyticCurrentField::AnalyticCurrentField(const CircuitConfig& cfg, const Coupling& coupling,
                                           std::size_t support_cap)
    : cfg_(cfg),
      phi_(superposed_potential_table(cfg, coupling, support_cap)),
      sink_(coupling.target_marginal().mass()) {}

double AnalyticCurrentField::current(int layer, StateIndex x, StateIndex y) const {
  check_edge(cfg_, layer, x, y);
  return (phi_(layer, static_cast<Index>(x)) - phi_(layer + 1, static_cast<Index>(y))) /
         resistance(cfg_, x, y);
}

void AnalyticCurrentField::forward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_edge(cfg_, layer, x, 0);
  check_row(cfg_, x, out);
  ohm_row(cfg_, phi_(layer, static_cast<Index>(x)), phi_.row(layer + 1).transpose(), x, 1.0, out);
}

void AnalyticCurrentField::backward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_edge(cfg_, layer - 1, x, 0);
  check_row(cfg_, x, out);
  // I(l-1, y, x) = (phi_{l-1}(y) - phi_l(x)) / R = -(phi_l(x) - phi_{l-1}(y)) / R
  ohm_row(cfg_, phi_(layer, static_cast<Index>(x)), phi_.row(layer - 1).transpose(), x, -1.0, out);
}

OracleCurrentField::OracleCurrentField(const CircuitConfig& cfg, CurrentTable table,
                                       const DiscreteDistribution& sinks)
    : cfg_(cfg), table_(std::move(table)), sink_(sinks.mass()) {
  const auto n = static_cast<Index>(cfg.states());
  if (table_.size() != static_cast<std::size_t>(cfg.layers()))
    throw ValidationError("oracle field: one current matrix per layer gap expected");
  for (const auto& m : table_)
    if (m.rows() != n || m.cols() != n) throw ValidationError("oracle field: current matrix has the wrong shape");
  if (sink_.size() != n) throw ValidationError("oracle field: sink table has the wrong size");
}

OracleCurrentField::OracleCurrentField(const CircuitConfig& cfg, const DiscreteDistribution& sources,
                                       const DiscreteDistribution& sinks)
    : OracleCurrentField(cfg, edge_currents(solve(build_system(cfg, sources, sinks)), cfg), sinks) {}

double OracleCurrentField::current(int layer, StateIndex x, StateIndex y) const {
  check_edge(cfg_, layer, x, y);
  return table_[static_cast<std::size_t>(layer)](static_cast<Index>(x), static_cast<Index>(y));
}

void OracleCurrentField::forward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_edge(cfg_, layer, x, 0);
  check_row(cfg_, x, out);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), static_cast<Index>(out.size())) =
      table_[static_cast<std::size_t>(layer)].row(static_cast<Index>(x));
}

void OracleCurrentField::backward_currents(int layer, StateIndex x, std::span<double> out) const {
  check_edge(cfg_, layer - 1, x, 0);
  check_row(cfg_, x, out);
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Index>(out.size())) =
      table_[static_cast<std::size_t>(layer - 1)].col(static_cast<Index>(x));
}

MonteCarloCurrentField::MonteCarloCurrentField(const CircuitConfig& cfg, Coupling coupling,
                                               std::size_t batch, std::uint64_t seed)
    : cfg_(cfg), coupling_(std::move(coupling)), memo_(cfg), batch_(batch), seed_(seed) {
  if (batch_ == 0) throw ValidationError("monte carlo field: batch must be >= 1");
  if (coupling_.states() != cfg_.states()) throw ValidationError("monte carlo field: coupling size mismatch");
}

double MonteCarloCurrentField::current(int layer, StateIndex x, StateIndex y) const {
  check_edge(cfg_, layer, x, y);
  Rng rng(derive_seed(seed_, layer, x, y));
  double acc = 0.0;
  for (std::size_t b = 0; b < batch_; ++b) {
    const auto [s, t] = coupling_.sample(rng);
    acc += memo_.at(layer, x, s, t) - memo_.at(layer + 1, y, s, t);
  }
  return acc / static_cast<double>(batch_) / resistance(cfg_, x, y);
}

double exact_current(const CircuitConfig& cfg, const Coupling& coupling, int layer, StateIndex x,
                     StateIndex y, std::size_t support_cap) {
  check_edge(cfg, layer, x, y);
  if (coupling.states() != cfg.states()) throw ValidationError("exact_current: coupling size mismatch");
  if (coupling.support_size() > support_cap) {
    std::ostringstream msg;
    msg << "exact_current: coupling support of " << coupling.support_size() << " pairs exceeds the cap of "
        << support_cap;
    throw SizeError(msg.str());
  }
  const PairPotentials<double> memo(cfg);
  double acc = 0.0;
  coupling.for_each_pair_touching(x, y, [&](StateIndex s, StateIndex t, double w) {
    acc += w * (memo.at(layer, x, s, t) - memo.at(layer + 1, y, s, t));
  });
  return acc / resistance(cfg, x, y);
}

double mc_current(const CircuitConfig& cfg, const Coupling& coupling, int layer, StateIndex x,
                  StateIndex y, std::size_t batch, std::uint64_t seed) {
  return MonteCarloCurrentField(cfg, coupling, batch, seed).current(layer, x, y);
}

PairBatch PairBatch::from_pairs(const std::vector<std::pair<StateIndex, StateIndex>>& pairs, StateIndex n) {
  if (pairs.empty()) throw ValidationError("pair batch: empty");
  PairBatch b;
  b.size_ = pairs.size();
  b.as_source_.assign(n, 0);
  b.as_sink_.assign(n, 0);
  b.as_coincident_.assign(n, 0);
  for (const auto& [s, t] : pairs) {
    if (s >= n || t >= n) throw ValidationError("pair batch: state out of range");
    if (s == t) {
      ++b.as_coincident_[s];
    } else {
      ++b.as_source_[s];
      ++b.as_sink_[t];
    }
  }
  return b;
}

PairBatch PairBatch::draw(const Coupling& coupling, std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw ValidationError("pair batch: size must be >= 1");
  Rng rng(seed);
  std::vector<std::pair<StateIndex, StateIndex>> pairs(batch);
  for (auto& p : pairs) p = coupling.sample(rng);
  return from_pairs(pairs, coupling.states());
}

double PairBatch::potential(const PairPotentials<double>& memo, int layer, StateIndex x) const {
  const double sum = as_source_[x] * memo.source(layer) + as_sink_[x] * memo.sink(layer) +
                     as_coincident_[x] * memo.coincident(layer);
  return sum / static_cast<double>(size_);
}

double PairBatch::current(const PairPotentials<double>& memo, const CircuitConfig& cfg, int layer,
                          StateIndex x, StateIndex y) const {
  return (potential(memo, layer, x) - potential(memo, layer + 1, y)) / resistance(cfg, x, y);
}

void write_currents_csv(const std::filesystem::path& path, const CurrentField& field, double min_abs) {
  const CircuitConfig& cfg = field.config();
  const StateIndex n = cfg.states();
  auto out = detail::open_for_write(path);
  out << "ell,x_flat,y_flat,current\n";
  std::vector<double> row(n);
  for (int l = 0; l < cfg.layers(); ++l)
    for (StateIndex x = 0; x < n; ++x) {
      field.forward_currents(l, x, row);
      for (StateIndex y = 0; y < n; ++y)
        if (std::abs(row[y]) >= min_abs)
          out << l << ',' << x << ',' << y << ',' << detail::format_double(row[y]) << '\n';
    }
}

}  // namespace ecdg
