#include "ecdg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csv.hpp"
#include "ecdg/error.hpp"

namespace ecdg {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct CouplingShape {
  double diag;     // -1/r
  double offdiag;  // -1/R
};

CouplingShape coupling_shape(const CircuitConfig& cfg) {
  return {-1.0 / cfg.forward_resistance(), -1.0 / cfg.lateral_resistance()};
}

// B v, using B = (diag - offdiag) I + offdiag 11^T.
VectorXd apply_block(const CouplingShape& b, const VectorXd& v) {
  VectorXd out = (b.diag - b.offdiag) * v;
  out.array() += b.offdiag * v.sum();
  return out;
}

// B X B for symmetric X, in O(n^2).
MatrixXd sandwich_block(const CouplingShape& b, const MatrixXd& x) {
  const double c = b.diag - b.offdiag;
  const VectorXd col = x.colwise().sum().transpose();  // 1^T X
  const VectorXd row = x.rowwise().sum();              // X 1
  const double total = col.sum();
  MatrixXd out = c * c * x;
  out.rowwise() += (c * b.offdiag * col).transpose();
  out.colwise() += c * b.offdiag * row;
  out.array() += b.offdiag * b.offdiag * total;
  return out;
}

// A node with no injection, preferring a state outside both supports and an
// interior layer, so the gauge matches the closed form's zero columns.
std::size_t pick_ground(const CircuitConfig& cfg, const VectorXd& injection) {
  const StateIndex n = cfg.states();
  const int L = cfg.layers();
  StateIndex best_state = n - 1;
  double best = INFINITY;
  for (StateIndex x = n; x-- > 0;) {
    const double load = std::abs(injection[static_cast<Index>(cfg.node(0, x))]) +
                        std::abs(injection[static_cast<Index>(cfg.node(L, x))]);
    if (load < best) {
      best = load;
      best_state = x;
      if (load == 0.0) break;
    }
  }
  int layer = L / 2;
  if (injection[static_cast<Index>(cfg.node(layer, best_state))] != 0.0) {
    // Only possible for L == 1; try the other layer before giving up.
    const int other = layer == 0 ? L : 0;
    if (injection[static_cast<Index>(cfg.node(other, best_state))] == 0.0) layer = other;
  }
  return cfg.node(layer, best_state);
}

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

VectorXd solve_dense(const ConductanceSystem& system, std::size_t ground) {
  const MatrixXd g = system.matrix();
  const auto N = static_cast<Index>(system.size());
  const auto gi = static_cast<Index>(ground);
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(N - 1));
  for (Index i = 0; i < N; ++i)
    if (i != gi) keep.push_back(i);
  const auto m = static_cast<Index>(keep.size());
  MatrixXd reduced(m, m);
  VectorXd rhs(m);
  for (Index a = 0; a < m; ++a) {
    rhs[a] = system.injection()[keep[static_cast<std::size_t>(a)]];
    for (Index b = 0; b < m; ++b) reduced(a, b) = g(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
  }
  VectorXd phi = VectorXd::Zero(N);
  if (m == 0) return phi;
  Eigen::LLT<MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success)
    throw NumericalError("oracle: grounded conductance matrix is not positive definite");
  const VectorXd sol = llt.solve(rhs);
  for (Index a = 0; a < m; ++a) phi[keep[static_cast<std::size_t>(a)]] = sol[a];
  return phi;
}

// Block Cholesky-style elimination over layers. Grounding is done by adding a
// conductance to ground at one node: since 1^T G = 0 and 1^T i = 0, the
// modified system forces that node to exactly 0 and leaves G phi = i intact.
VectorXd solve_block(const ConductanceSystem& system, std::size_t ground) {
  const CircuitConfig& cfg = system.config();
  const int L = cfg.layers();
  const auto n = static_cast<Index>(cfg.states());
  const CouplingShape b = coupling_shape(cfg);
  const int ground_layer = static_cast<int>(ground / cfg.states());
  const Index ground_state = static_cast<Index>(ground % cfg.states());
  const double ground_g = system.self_conductance(0);

  auto diag_block = [&](int layer) {
    MatrixXd d = MatrixXd::Identity(n, n) * system.self_conductance(layer);
    if (layer == ground_layer) d(ground_state, ground_state) += ground_g;
    return d;
  };
  auto segment = [&](const VectorXd& v, int layer) { return v.segment(static_cast<Index>(layer) * n, n); };

  std::vector<Eigen::LLT<MatrixXd>> pivots;
  pivots.reserve(static_cast<std::size_t>(L) + 1);
  std::vector<VectorXd> y;
  y.reserve(static_cast<std::size_t>(L) + 1);

  pivots.emplace_back(diag_block(0));
  y.emplace_back(segment(system.injection(), 0));
  for (int l = 1; l <= L; ++l) {
    const auto& prev = pivots.back();
    if (prev.info() != Eigen::Success)
      throw NumericalError("oracle: block pivot is not positive definite");
    const MatrixXd inv = prev.solve(MatrixXd::Identity(n, n));
    MatrixXd schur = diag_block(l) - sandwich_block(b, inv);
    schur = 0.5 * (schur + schur.transpose());
    y.emplace_back(segment(system.injection(), l) - apply_block(b, prev.solve(y.back())));
    pivots.emplace_back(schur);
  }
  if (pivots.back().info() != Eigen::Success)
    throw NumericalError("oracle: block pivot is not positive definite");

  VectorXd phi(static_cast<Index>(system.size()));
  VectorXd next = pivots[static_cast<std::size_t>(L)].solve(y[static_cast<std::size_t>(L)]);
  phi.segment(static_cast<Index>(L) * n, n) = next;
  for (int l = L - 1; l >= 0; --l) {
    next = pivots[static_cast<std::size_t>(l)].solve(y[static_cast<std::size_t>(l)] - apply_block(b, next));
    phi.segment(static_cast<Index>(l) * n, n) = next;
  }
  return phi;
}

}  // namespace

ConductanceSystem::ConductanceSystem(CircuitConfig cfg, Eigen::VectorXd injection)
    : cfg_(std::move(cfg)), injection_(std::move(injection)) {
  if (static_cast<std::size_t>(injection_.size()) != cfg_.node_count())
    throw ValidationError("conductance system: injection vector has the wrong size");
}

double ConductanceSystem::self_conductance(int layer) const {
  const double d = 1.0 / cfg_.forward_resistance() +
                   static_cast<double>(cfg_.states() - 1) / cfg_.lateral_resistance();
  return (layer == 0 || layer == cfg_.layers()) ? d : 2.0 * d;
}

Eigen::MatrixXd ConductanceSystem::coupling_block() const {
  const auto n = static_cast<Index>(cfg_.states());
  const CouplingShape b = coupling_shape(cfg_);
  MatrixXd block = MatrixXd::Constant(n, n, b.offdiag);
  block.diagonal().setConstant(b.diag);
  return block;
}

Eigen::MatrixXd ConductanceSystem::matrix() const {
  if (size() > kDefaultNodeCap) throw SizeError("conductance system: too large to assemble densely");
  const auto N = static_cast<Index>(size());
  const auto n = static_cast<Index>(cfg_.states());
  MatrixXd g = MatrixXd::Zero(N, N);
  const MatrixXd block = coupling_block();
  for (int l = 0; l <= cfg_.layers(); ++l) {
    const Index o = static_cast<Index>(l) * n;
    g.block(o, o, n, n).diagonal().setConstant(self_conductance(l));
    if (l < cfg_.layers()) {
      g.block(o, o + n, n, n) = block;
      g.block(o + n, o, n, n) = block;
    }
  }
  return g;
}

Eigen::VectorXd ConductanceSystem::apply(const Eigen::VectorXd& phi) const {
  if (static_cast<std::size_t>(phi.size()) != size()) throw ValidationError("apply: size mismatch");
  const auto n = static_cast<Index>(cfg_.states());
  const int L = cfg_.layers();
  const CouplingShape b = coupling_shape(cfg_);
  VectorXd out(phi.size());
  for (int l = 0; l <= L; ++l) {
    const Index o = static_cast<Index>(l) * n;
    VectorXd acc = self_conductance(l) * phi.segment(o, n);
    if (l > 0) acc += apply_block(b, phi.segment(o - n, n));
    if (l < L) acc += apply_block(b, phi.segment(o + n, n));
    out.segment(o, n) = acc;
  }
  return out;
}

ConductanceSystem build_system(const CircuitConfig& cfg, const DiscreteDistribution& sources,
                               const DiscreteDistribution& sinks, std::size_t node_cap) {
  if (cfg.node_count() > node_cap) {
    std::ostringstream msg;
    msg << "oracle: " << cfg.node_count() << " nodes exceed the exact-solver cap of " << node_cap
        << "; use a smaller instance";
    throw SizeError(msg.str());
  }
  if (sources.size() != cfg.states() || sinks.size() != cfg.states())
    throw ValidationError("oracle: source/sink tables must have one entry per state");
  const auto n = static_cast<Index>(cfg.states());
  VectorXd injection = VectorXd::Zero(static_cast<Index>(cfg.node_count()));
  injection.head(n) = sources.mass();
  injection.tail(n) -= sinks.mass();
  return ConductanceSystem(cfg, std::move(injection));
}

PotentialSolution solve(const ConductanceSystem& system, SolvePath path) {
  if (path == SolvePath::Automatic)
    path = system.size() <= kDenseSolveLimit ? SolvePath::Dense : SolvePath::BlockTridiagonal;

  PotentialSolution sol;
  sol.grounded_node = pick_ground(system.config(), system.injection());
  sol.phi = path == SolvePath::Dense ? solve_dense(system, sol.grounded_node)
                                     : solve_block(system, sol.grounded_node);
  sol.phi.array() -= sol.phi[static_cast<Index>(sol.grounded_node)];
  if (!sol.phi.allFinite()) throw NumericalError("oracle: non-finite potentials");

  sol.residual = inf_norm(system.apply(sol.phi) - system.injection());
  const double gate = 1e-9 * std::max(1.0, inf_norm(system.injection()));
  if (!(sol.residual <= gate)) {
    std::ostringstream msg;
    msg << "oracle: residual " << sol.residual << " exceeds " << gate;
    throw NumericalError(msg.str());
  }
  return sol;
}

Eigen::MatrixXd PotentialSolution::by_layer(const CircuitConfig& cfg) const {
  const auto n = static_cast<Index>(cfg.states());
  MatrixXd out(cfg.layers() + 1, n);
  for (int l = 0; l <= cfg.layers(); ++l) out.row(l) = phi.segment(static_cast<Index>(l) * n, n).transpose();
  return out;
}

ReducedSolution solve_reduced(const CircuitConfig& cfg, StateIndex source, StateIndex sink) {
  const StateIndex n = cfg.states();
  if (source >= n || sink >= n) throw ValidationError("solve_reduced: state out of range");
  const int L = cfg.layers();
  const bool coincident = source == sink;

  // Symmetry classes and their sizes within one layer.
  std::vector<double> count;
  const int src_class = 0;
  const int snk_class = coincident ? 0 : 1;
  count.push_back(1.0);
  if (!coincident) count.push_back(1.0);
  const double generic = static_cast<double>(n) - static_cast<double>(count.size());
  const int gen_class = generic > 0.0 ? static_cast<int>(count.size()) : -1;
  if (gen_class >= 0) count.push_back(generic);

  const int K = static_cast<int>(count.size());
  const int unknowns = (L + 1) * K;
  auto idx = [K](int layer, int cls) { return layer * K + cls; };
  const double inv_r = 1.0 / cfg.forward_resistance();
  const double inv_R = 1.0 / cfg.lateral_resistance();

  MatrixXd a = MatrixXd::Zero(unknowns, unknowns);
  VectorXd rhs = VectorXd::Zero(unknowns);
  for (int l = 0; l <= L; ++l) {
    for (int k = 0; k < K; ++k) {
      const int row = idx(l, k);
      for (int nb : {l - 1, l + 1}) {
        if (nb < 0 || nb > L) continue;
        a(row, row) += inv_r + static_cast<double>(n - 1) * inv_R;
        a(row, idx(nb, k)) -= inv_r;
        for (int j = 0; j < K; ++j) a(row, idx(nb, j)) -= (count[j] - (j == k ? 1.0 : 0.0)) * inv_R;
      }
    }
  }
  rhs[idx(0, src_class)] += 1.0;
  rhs[idx(L, snk_class)] -= 1.0;

  // Drop one representative equation (implied by the others) for the gauge.
  const int pin = gen_class >= 0 ? idx(L / 2, gen_class) : idx(L, snk_class);
  a.row(pin).setZero();
  a(pin, pin) = 1.0;
  rhs[pin] = 0.0;

  const VectorXd x = a.fullPivLu().solve(rhs);
  if (!x.allFinite()) throw NumericalError("solve_reduced: singular reduced system");

  ReducedSolution out;
  out.source_track.resize(L + 1);
  out.sink_track.resize(L + 1);
  if (gen_class >= 0) out.generic_track.resize(L + 1);
  for (int l = 0; l <= L; ++l) {
    out.source_track[l] = x[idx(l, src_class)];
    out.sink_track[l] = x[idx(l, snk_class)];
    if (gen_class >= 0) out.generic_track[l] = x[idx(l, gen_class)];
  }
  return out;
}

CurrentTable edge_currents(const Eigen::MatrixXd& potentials, const CircuitConfig& cfg) {
  const int L = cfg.layers();
  const auto n = static_cast<Index>(cfg.states());
  if (potentials.rows() != L + 1 || potentials.cols() != n)
    throw ValidationError("edge_currents: potential table has the wrong shape");
  CurrentTable out;
  out.reserve(static_cast<std::size_t>(L));
  const double inv_R = 1.0 / cfg.lateral_resistance();
  const double inv_r = 1.0 / cfg.forward_resistance();
  for (int l = 0; l < L; ++l) {
    const VectorXd from = potentials.row(l).transpose();
    const VectorXd to = potentials.row(l + 1).transpose();
    MatrixXd cur = (from.replicate(1, n) - to.transpose().replicate(n, 1)) * inv_R;
    cur.diagonal() = (from - to) * inv_r;
    out.push_back(std::move(cur));
  }
  return out;
}

CurrentTable edge_currents(const PotentialSolution& solution, const CircuitConfig& cfg) {
  return edge_currents(solution.by_layer(cfg), cfg);
}

KirchhoffReport kirchhoff_report(const CurrentTable& currents, const DiscreteDistribution& sources,
                                 const DiscreteDistribution& sinks, double residual) {
  KirchhoffReport rep;
  rep.residual = residual;
  if (currents.empty()) return rep;
  const Index n = currents.front().rows();
  const VectorXd out0 = currents.front().rowwise().sum();
  const VectorXd inL = currents.back().colwise().sum().transpose();
  rep.max_source_error = (out0 - sources.mass()).cwiseAbs().maxCoeff();
  rep.max_sink_error = (inL - sinks.mass()).cwiseAbs().maxCoeff();
  rep.total_source_outflow = out0.sum();
  rep.total_sink_inflow = inL.sum();
  for (std::size_t l = 1; l < currents.size(); ++l) {
    const VectorXd in = currents[l - 1].colwise().sum().transpose();
    const VectorXd out = currents[l].rowwise().sum();
    rep.max_interior_imbalance = std::max(rep.max_interior_imbalance, (in - out).cwiseAbs().maxCoeff());
  }
  (void)n;
  return rep;
}

void write_system_csv(const std::filesystem::path& path, const ConductanceSystem& system) {
  auto out = detail::open_for_write(path);
  out << "row,col,value\n";
  const CircuitConfig& cfg = system.config();
  const auto n = cfg.states();
  const double inv_r = 1.0 / cfg.forward_resistance();
  const double inv_R = 1.0 / cfg.lateral_resistance();
  for (int l = 0; l <= cfg.layers(); ++l) {
    for (StateIndex x = 0; x < n; ++x) {
      const std::size_t row = cfg.node(l, x);
      auto neighbours = [&](int nb) {
        for (StateIndex y = 0; y < n; ++y)
          out << row << ',' << cfg.node(nb, y) << ',' << detail::format_double(-(x == y ? inv_r : inv_R)) << '\n';
      };
      if (l > 0) neighbours(l - 1);
      out << row << ',' << row << ',' << detail::format_double(system.self_conductance(l)) << '\n';
      if (l < cfg.layers()) neighbours(l + 1);
    }
  }
}

void write_potentials_csv(const std::filesystem::path& path, const Eigen::MatrixXd& potentials) {
  auto out = detail::open_for_write(path);
  out << "layer,state_flat,potential\n";
  for (Index l = 0; l < potentials.rows(); ++l)
    for (Index x = 0; x < potentials.cols(); ++x)
      out << l << ',' << x << ',' << detail::format_double(potentials(l, x)) << '\n';
}

}  // namespace ecdg
