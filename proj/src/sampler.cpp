#include "ecdg/sampler.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "ecdg/error.hpp"

namespace ecdg {

namespace {

void check_node(const CircuitConfig& cfg, Node node) {
  if (node.layer < 0 || node.layer > cfg.layers() || node.state >= cfg.states())
    throw ValidationError("sampler: node out of range");
}

[[noreturn]] void degenerate(Node node, double total) {
  std::ostringstream msg;
  msg << "sampler: degenerate node (layer " << node.layer << ", state " << node.state
      << ") with total outgoing current " << total;
  throw NumericalError(msg.str());
}

// Inverse CDF over `weights` (then `tail`) in order; returns weights.size()
// for the tail. Zero-weight entries are never chosen.
std::size_t pick(const std::vector<double>& weights, double tail, double total, Rng& rng) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = SIZE_MAX;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  if (tail > 0.0) return weights.size();
  return last;  // u landed past the rounded sum
}

}  // namespace

double TransitionRow::total() const {
  double t = terminate_weight;
  for (double w : weights) t += w;
  return t;
}

std::vector<double> TransitionRow::probabilities() const {
  const double t = total();
  std::vector<double> p;
  p.reserve(weights.size() + 1);
  for (double w : weights) p.push_back(w / t);
  p.push_back(terminate_weight / t);
  return p;
}

TransitionRow transition_row(const CurrentField& field, Node node) {
  const CircuitConfig& cfg = field.config();
  check_node(cfg, node);
  const StateIndex n = cfg.states();
  TransitionRow row;
  std::vector<double> buf(n);
  if (node.layer > 0) {
    // I(l-1, y, x) < 0 flows from (l, x) down to (l-1, y).
    field.backward_currents(node.layer, node.state, buf);
    for (StateIndex y = 0; y < n; ++y)
      if (buf[y] < 0.0) {
        row.targets.push_back({node.layer - 1, y});
        row.weights.push_back(-buf[y]);
      }
  }
  if (node.layer < cfg.layers()) {
    field.forward_currents(node.layer, node.state, buf);
    for (StateIndex y = 0; y < n; ++y)
      if (buf[y] > 0.0) {
        row.targets.push_back({node.layer + 1, y});
        row.weights.push_back(buf[y]);
      }
  } else {
    row.terminate_weight = std::max(0.0, field.sink_current(node.state));
  }
  return row;
}

Move step_general(const CurrentField& field, Node node, Rng& rng) {
  const TransitionRow row = transition_row(field, node);
  const double total = row.total();
  if (!(total >= kDegenerateCurrent)) degenerate(node, total);
  const std::size_t k = pick(row.weights, row.terminate_weight, total, rng);
  if (k == row.weights.size()) return {true, node};
  return {false, row.targets[k]};
}

Trajectory transport(const CurrentField& field, StateIndex x0, Rng& rng, std::size_t max_steps) {
  const CircuitConfig& cfg = field.config();
  check_node(cfg, {0, x0});
  if (max_steps == 0) max_steps = 100 * static_cast<std::size_t>(cfg.layers());
  Trajectory t;
  t.nodes.push_back({0, x0});
  while (true) {
    const Move m = step_general(field, t.nodes.back(), rng);
    if (m.terminate) {
      t.terminated = true;
      return t;
    }
    t.nodes.push_back(m.to);
    if (++t.steps > max_steps) {
      std::ostringstream msg;
      msg << "sampler: trajectory from state " << x0 << " exceeded " << max_steps
          << " steps without terminating (suspected cycle); last node (layer " << m.to.layer << ", state "
          << m.to.state << ")";
      throw NumericalError(msg.str());
    }
  }
}

Trajectory transport_forward(const CurrentField& field, StateIndex x0, Rng& rng) {
  const CircuitConfig& cfg = field.config();
  check_node(cfg, {0, x0});
  const StateIndex n = cfg.states();
  std::vector<double> row(n);
  Trajectory t;
  t.nodes.reserve(static_cast<std::size_t>(cfg.layers()) + 1);
  t.nodes.push_back({0, x0});
  StateIndex x = x0;
  for (int l = 0; l < cfg.layers(); ++l) {
    field.forward_currents(l, x, row);
    double total = 0.0;
    bool any = false;
    for (double& v : row) {
      v = std::max(v, 0.0);
      total += v;
      any = any || v > kDegenerateCurrent;
    }
    if (!any) {
      ++t.fallbacks;
    } else {
      x = pick(row, 0.0, total, rng);
    }
    t.nodes.push_back({l + 1, x});
    ++t.steps;
  }
  t.terminated = true;
  return t;
}

AbsorptionResult absorption_distribution(const CurrentField& field, const DiscreteDistribution& p,
                                         double tolerance, int max_iterations, std::size_t node_cap) {
  const CircuitConfig& cfg = field.config();
  if (cfg.node_count() > node_cap) {
    std::ostringstream msg;
    msg << "absorption: " << cfg.node_count() << " chain states exceed the cap of " << node_cap;
    throw SizeError(msg.str());
  }
  if (p.size() != cfg.states()) throw ValidationError("absorption: source table has the wrong size");
  const auto n = static_cast<Eigen::Index>(cfg.states());
  const int L = cfg.layers();

  // Rows are built once per node on first use.
  std::vector<std::vector<double>> probs(cfg.node_count());
  std::vector<TransitionRow> rows(cfg.node_count());
  std::vector<char> built(cfg.node_count(), 0);

  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(L + 1, n);
  mass.row(0) = p.mass().transpose();
  AbsorptionResult res;
  res.absorbed = Eigen::VectorXd::Zero(n);
  res.transient_mass = 1.0;

  while (res.transient_mass >= tolerance) {
    if (res.iterations >= max_iterations) {
      std::ostringstream msg;
      msg << "absorption: " << res.transient_mass << " mass still in transit after " << max_iterations
          << " iterations";
      throw NumericalError(msg.str());
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(L + 1, n);
    for (int l = 0; l <= L; ++l)
      for (Eigen::Index x = 0; x < n; ++x) {
        const double m = mass(l, x);
        if (m == 0.0) continue;
        const Node node{l, static_cast<StateIndex>(x)};
        const std::size_t id = cfg.node(l, node.state);
        if (!built[id]) {
          rows[id] = transition_row(field, node);
          const double total = rows[id].total();
          if (!(total >= kDegenerateCurrent)) degenerate(node, total);
          probs[id] = rows[id].probabilities();
          built[id] = 1;
        }
        const auto& row = rows[id];
        const auto& pr = probs[id];
        for (std::size_t k = 0; k < row.targets.size(); ++k)
          next(row.targets[k].layer, static_cast<Eigen::Index>(row.targets[k].state)) += m * pr[k];
        res.absorbed[x] += m * pr.back();
      }
    mass = std::move(next);
    res.transient_mass = mass.sum();
    res.max_accounting_error =
        std::max(res.max_accounting_error, std::abs(res.absorbed.sum() + res.transient_mass - 1.0));
    ++res.iterations;
  }
  res.distribution = DiscreteDistribution::from_weights(res.absorbed);
  return res;
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("ECDG_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

TransportBatch transport_batch(const CurrentField& field, const std::vector<StateIndex>& sources,
                               const TransportOptions& options) {
  const std::size_t N = sources.size();
  TransportBatch batch;
  batch.finals.resize(N);
  std::vector<Trajectory> trajectories(N);
  std::vector<std::size_t> fallbacks(N, 0);

  auto run = [&](std::size_t i) {
    Rng rng(derive_seed(options.seed, i));
    Trajectory t = options.mode == WalkMode::Forward ? transport_forward(field, sources[i], rng)
                                                     : transport(field, sources[i], rng, options.max_steps);
    batch.finals[i] = t.final_state();
    fallbacks[i] = t.fallbacks;
    if (options.keep_trajectories) trajectories[i] = std::move(t);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads ? options.threads : default_thread_count(),
                                                           static_cast<unsigned>(std::max<std::size_t>(N, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < N; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < N; i += threads) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (std::size_t f : fallbacks) batch.fallbacks += f;
  if (options.keep_trajectories) batch.trajectories = std::move(trajectories);
  return batch;
}

std::vector<DiscreteDistribution> layer_histograms(const TransportBatch& batch, const CircuitConfig& cfg) {
  if (batch.trajectories.empty()) throw ValidationError("layer histograms need kept trajectories");
  const auto n = static_cast<Eigen::Index>(cfg.states());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(cfg.layers() + 1, n);
  for (const auto& t : batch.trajectories)
    for (const Node& v : t.nodes) counts(v.layer, static_cast<Eigen::Index>(v.state)) += 1.0;
  std::vector<DiscreteDistribution> out;
  for (int l = 0; l <= cfg.layers(); ++l) out.push_back(DiscreteDistribution::from_weights(counts.row(l).transpose()));
  return out;
}

void write_trajectories_csv(const std::filesystem::path& path, const TransportBatch& batch, std::size_t limit) {
  auto out = detail::open_for_write(path);
  out << "sample_id,step,layer,state_flat\n";
  const std::size_t count = std::min(limit, batch.trajectories.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& nodes = batch.trajectories[i].nodes;
    for (std::size_t s = 0; s < nodes.size(); ++s)
      out << i << ',' << s << ',' << nodes[s].layer << ',' << nodes[s].state << '\n';
  }
}

}  // namespace ecdg
