#include "ecdg/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "ecdg/error.hpp"
#include "ecdg/oracle.hpp"
#include "ecdg/svg.hpp"

#ifndef ECDG_VERSION
#define ECDG_VERSION "0.0.0"
#endif

namespace ecdg {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Current dumps are skipped above this many edges.
constexpr std::size_t kCurrentDumpLimit = 1'000'000;

std::string walk_name(WalkMode w) { return w == WalkMode::Forward ? "forward" : "general"; }

WalkMode parse_walk(const std::string& s) {
  if (s == "forward") return WalkMode::Forward;
  if (s == "general") return WalkMode::General;
  throw ValidationError("unknown walk mode '" + s + "' (expected forward|general)");
}

template <typename T>
void read_if(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_for_write(path);
  out << j.dump(2) << '\n';
}

void write_manifest(const ExperimentSpec& spec, const std::string& command, Clock::time_point started,
                    const json& summary) {
  json m;
  m["command"] = command;
  m["version"] = ECDG_VERSION;
  m["spec"] = spec;
  m["seeds"] = {{"seed", spec.seed},
                {"data", spec.data_seed()},
                {"train", spec.train_seed()},
                {"eval", spec.eval_seed()}};
  m["summary"] = summary;
  m["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
  m["finished_at_unix"] = static_cast<std::int64_t>(std::time(nullptr));
  write_json(spec.out / ("manifest_" + command + ".json"), m);
}

std::unique_ptr<CurrentField> make_field(const ExperimentSpec& spec, const Marginals& m, std::ostream& log) {
  const CircuitConfig& cfg = spec.circuit;
  switch (spec.eval.mode) {
    case CurrentMode::Exact:
      return std::make_unique<AnalyticCurrentField>(cfg, make_coupling(spec, m));
    case CurrentMode::Oracle:
      return std::make_unique<OracleCurrentField>(cfg, m.source, m.target);
    case CurrentMode::Learned: {
      const auto path = spec.eval.checkpoint.empty() ? spec.out / "checkpoint.json" : spec.eval.checkpoint;
      if (!std::filesystem::exists(path))
        throw ValidationError("learned mode needs a checkpoint; not found: " + path.string());
      const Checkpoint ck = load_checkpoint(path);
      if (!(ck.cfg == cfg)) throw ValidationError("checkpoint circuit does not match the spec circuit");
      log << "loaded checkpoint " << path.string() << '\n';
      return std::make_unique<LearnedCurrentField>(cfg, ck.params, ck.train.target_scale, m.target);
    }
  }
  throw ValidationError("unknown current mode");
}

}  // namespace

CurrentMode parse_mode(const std::string& s) {
  if (s == "exact") return CurrentMode::Exact;
  if (s == "learned") return CurrentMode::Learned;
  if (s == "oracle") return CurrentMode::Oracle;
  throw ValidationError("unknown mode '" + s + "' (expected exact|learned|oracle)");
}

std::string to_string(CurrentMode mode) {
  switch (mode) {
    case CurrentMode::Exact: return "exact";
    case CurrentMode::Learned: return "learned";
    case CurrentMode::Oracle: return "oracle";
  }
  return "?";
}

ExperimentSpec default_1d_spec() {
  ExperimentSpec s;
  s.circuit = CircuitConfig(10, 50, 1, 0.1, 100.0);
  s.dataset.kind = "oned";
  s.out = "out/experiment-1d";
  return s;
}

ExperimentSpec default_2d_spec() {
  ExperimentSpec s;
  s.circuit = CircuitConfig(4, 50, 2, 0.1, 10.0);
  s.dataset.kind = "twod";
  s.out = "out/experiment-2d";
  return s;
}

ExperimentSpec spec_from_json(const json& j, ExperimentSpec s) {
  try {
    if (!j.is_object()) throw ValidationError("spec: top level must be an object");
    if (j.contains("circuit")) s.circuit = circuit_from_json(j.at("circuit"));
    read_if(j, "seed", s.seed);
    read_if(j, "coupling", s.coupling);
    if (s.coupling != "independent" && s.coupling != "comonotone")
      throw ValidationError("spec: coupling must be independent|comonotone");
    if (j.contains("out")) s.out = j.at("out").get<std::string>();

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      read_if(d, "kind", s.dataset.kind);
      read_if(d, "points", s.dataset.points);
      if (d.contains("source")) s.dataset.source = d.at("source").get<std::string>();
      if (d.contains("target")) s.dataset.target = d.at("target").get<std::string>();
    }
    const auto& k = s.dataset.kind;
    if (k != "oned" && k != "twod" && k != "random" && k != "uniform" && k != "custom")
      throw ValidationError("spec: dataset.kind must be oned|twod|random|uniform|custom");
    if (k == "custom")
      for (const auto& p : {s.dataset.source, s.dataset.target})
        if (p.empty() || !std::filesystem::exists(p))
          throw ValidationError("spec: custom dataset file not found: " + p.string());
    if (k == "oned" && s.circuit.dims() != 1) throw ValidationError("spec: oned dataset needs D = 1");
    if (k == "twod" && s.circuit.dims() != 2) throw ValidationError("spec: twod dataset needs D = 2");

    if (j.contains("train")) {
      const json& t = j.at("train");
      read_if(t, "steps", s.train.steps);
      read_if(t, "batch", s.train.batch);
      read_if(t, "learning_rate", s.train.learning_rate);
      read_if(t, "weight_decay", s.train.weight_decay);
      read_if(t, "pair_batch", s.train.pair_batch);
      read_if(t, "target_scale", s.train.target_scale);
    }
    if (s.train.steps < 1 || s.train.batch < 1 || s.train.pair_batch < 1 || !(s.train.learning_rate >= 0) ||
        !(s.train.weight_decay >= 0) || !(s.train.target_scale > 0))
      throw ValidationError("spec: invalid train section");

    if (j.contains("eval")) {
      const json& e = j.at("eval");
      if (e.contains("mode")) s.eval.mode = parse_mode(e.at("mode").get<std::string>());
      if (e.contains("walk")) s.eval.walk = parse_walk(e.at("walk").get<std::string>());
      read_if(e, "samples", s.eval.samples);
      read_if(e, "trajectory_dump", s.eval.trajectory_dump);
      if (e.contains("checkpoint")) s.eval.checkpoint = e.at("checkpoint").get<std::string>();
    }
    if (s.eval.samples < 1) throw ValidationError("spec: eval.samples must be >= 1");
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
}

ExperimentSpec load_spec(const std::filesystem::path& path, ExperimentSpec base) {
  auto in = detail::open_for_read(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("spec " + path.string() + ": " + e.what());
  }
  return spec_from_json(j, std::move(base));
}

void to_json(json& j, const ExperimentSpec& s) {
  j = json{{"circuit", s.circuit},
           {"seed", s.seed},
           {"coupling", s.coupling},
           {"out", s.out.string()},
           {"dataset",
            {{"kind", s.dataset.kind},
             {"points", s.dataset.points},
             {"source", s.dataset.source.string()},
             {"target", s.dataset.target.string()}}},
           {"train",
            {{"steps", s.train.steps},
             {"batch", s.train.batch},
             {"learning_rate", s.train.learning_rate},
             {"weight_decay", s.train.weight_decay},
             {"pair_batch", s.train.pair_batch},
             {"target_scale", s.train.target_scale}}},
           {"eval",
            {{"mode", to_string(s.eval.mode)},
             {"walk", walk_name(s.eval.walk)},
             {"samples", s.eval.samples},
             {"checkpoint", s.eval.checkpoint.string()},
             {"trajectory_dump", s.eval.trajectory_dump}}}};
}

Marginals make_marginals(const ExperimentSpec& spec) {
  const CircuitConfig& cfg = spec.circuit;
  const std::string& kind = spec.dataset.kind;
  if (kind == "oned") {
    auto pair = make_1d_pair(cfg.categories(), spec.data_seed(), 1);
    return {pair.source, pair.target, 0.0, 0.0};
  }
  if (kind == "twod") {
    auto pair = make_2d_pair(cfg.categories(), spec.data_seed(), spec.dataset.points);
    return {pair.source, pair.target, pair.source_clamped_fraction, pair.target_clamped_fraction};
  }
  if (kind == "uniform") {
    const auto u = DiscreteDistribution::uniform(cfg.states());
    return {u, u, 0.0, 0.0};
  }
  if (kind == "random") {
    Rng rng(spec.data_seed());
    Eigen::VectorXd a(static_cast<Eigen::Index>(cfg.states())), b(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    return {DiscreteDistribution::from_weights(a), DiscreteDistribution::from_weights(b), 0.0, 0.0};
  }
  return {read_distribution_csv(spec.dataset.source, cfg.states()),
          read_distribution_csv(spec.dataset.target, cfg.states()), 0.0, 0.0};
}

Coupling make_coupling(const ExperimentSpec& spec, const Marginals& m) {
  if (spec.coupling == "comonotone") return Coupling::comonotone(m.source, m.target);
  return Coupling::independent(m.source, m.target);
}

SolveReport cmd_solve(const ExperimentSpec& spec, std::ostream& log) {
  const auto started = Clock::now();
  const CircuitConfig& cfg = spec.circuit;
  const Marginals m = make_marginals(spec);
  const ConductanceSystem system = build_system(cfg, m.source, m.target);
  log << "solving " << system.size() << " nodes\n";
  const PotentialSolution sol = solve(system);
  const Eigen::MatrixXd phi = sol.by_layer(cfg);
  const CurrentTable currents = edge_currents(phi, cfg);

  write_potentials_csv(spec.out / "potentials.csv", phi);
  write_currents_csv(spec.out / "currents.csv", OracleCurrentField(cfg, currents, m.target));
  if (system.size() <= kDenseSolveLimit) write_system_csv(spec.out / "system.csv", system);

  SolveReport rep{kirchhoff_report(currents, m.source, m.target, sol.residual), sol.grounded_node};
  const json summary{{"residual", rep.kirchhoff.residual},
                     {"max_interior_imbalance", rep.kirchhoff.max_interior_imbalance},
                     {"max_source_error", rep.kirchhoff.max_source_error},
                     {"max_sink_error", rep.kirchhoff.max_sink_error},
                     {"total_source_outflow", rep.kirchhoff.total_source_outflow},
                     {"total_sink_inflow", rep.kirchhoff.total_sink_inflow},
                     {"grounded_node", rep.grounded_node}};
  write_json(spec.out / "kirchhoff.json", summary);
  log << "residual " << rep.kirchhoff.residual << ", interior imbalance " << rep.kirchhoff.max_interior_imbalance
      << '\n';
  write_manifest(spec, "solve", started, summary);
  return rep;
}

TrainReport cmd_train(const ExperimentSpec& spec, std::ostream& log) {
  const auto started = Clock::now();
  const Marginals m = make_marginals(spec);
  TrainConfig tc = spec.train;
  tc.seed = spec.train_seed();
  log << "training " << tc.steps << " steps, batch " << tc.batch << ", lr " << tc.learning_rate << '\n';
  const TrainResult res = train(spec.circuit, make_coupling(spec, m), tc);
  save_checkpoint(spec.out / "checkpoint.json", spec.circuit, res.params, tc);
  write_loss_csv(spec.out / "loss.csv", res.loss);
  const auto [head, tail] = loss_window_means(res.loss);
  const json summary{{"initial_loss_mean", head}, {"final_loss_mean", tail}, {"steps", tc.steps}};
  write_json(spec.out / "train_report.json", summary);
  log << "loss " << head << " -> " << tail << '\n';
  write_manifest(spec, "train", started, summary);
  return {head, tail};
}

SampleReport cmd_sample(const ExperimentSpec& spec, std::ostream& log) {
  const auto started = Clock::now();
  const CircuitConfig& cfg = spec.circuit;
  const Marginals m = make_marginals(spec);
  const auto field = make_field(spec, m, log);

  const SampleSet sources = draw_samples(m.source, spec.eval.samples, derive_seed(spec.eval_seed(), 1), "source");
  TransportOptions opt;
  opt.mode = spec.eval.walk;
  opt.seed = derive_seed(spec.eval_seed(), 2);
  opt.keep_trajectories = true;
  log << "transporting " << sources.rows.size() << " samples (" << to_string(spec.eval.mode) << ", "
      << walk_name(spec.eval.walk) << ")\n";
  const TransportBatch batch = transport_batch(*field, sources.rows, opt);
  if (batch.fallbacks > 0)
    log << "warning: " << batch.fallbacks << " forward steps had no positive current and kept their state\n";

  SampleSet generated{batch.finals, {"transport-" + to_string(spec.eval.mode), spec.seed, batch.finals.size()}};
  const DiscreteDistribution gen = histogram(generated, cfg);
  SampleReport rep;
  rep.samples = generated.rows.size();
  rep.fallbacks = batch.fallbacks;
  rep.tv_to_target = total_variation(gen, m.target);

  write_samples_csv(spec.out / "generated_samples.csv", generated, cfg);
  write_distribution_csv(spec.out / "generated_distribution.csv", gen);
  write_trajectories_csv(spec.out / "trajectories.csv", batch, spec.eval.trajectory_dump);
  write_distribution_svg(spec.out / "generated.svg", gen, cfg, "generated (" + to_string(spec.eval.mode) + ")");
  if (spec.eval.walk == WalkMode::Forward) {
    const auto layers = layer_histograms(batch, cfg);
    for (int l = 1; l < cfg.layers(); ++l) {
      const auto& h = layers[static_cast<std::size_t>(l)];
      const std::string stem = "layer_" + std::to_string(l);
      write_distribution_csv(spec.out / (stem + "_distribution.csv"), h);
      write_distribution_svg(spec.out / (stem + ".svg"), h, cfg, "layer " + std::to_string(l));
    }
    for (const auto& h : layers) rep.layer_tv_to_target.push_back(total_variation(h, m.target));
  }
  if (spec.eval.mode != CurrentMode::Learned &&
      static_cast<std::size_t>(cfg.layers()) * cfg.states() * cfg.states() <= kCurrentDumpLimit)
    write_currents_csv(spec.out / "currents.csv", *field);

  const json summary{{"tv_to_target", rep.tv_to_target},
                     {"samples", rep.samples},
                     {"fallbacks", rep.fallbacks},
                     {"layer_tv_to_target", rep.layer_tv_to_target},
                     {"mode", to_string(spec.eval.mode)},
                     {"walk", walk_name(spec.eval.walk)}};
  write_json(spec.out / "sample_report.json", summary);
  log << "TV(generated, target) = " << rep.tv_to_target << '\n';
  write_manifest(spec, "sample", started, summary);
  return rep;
}

SampleReport cmd_experiment(const ExperimentSpec& spec, const std::string& name, std::ostream& log) {
  const auto started = Clock::now();
  const CircuitConfig& cfg = spec.circuit;
  const Marginals m = make_marginals(spec);
  log << name << ": L=" << cfg.layers() << " S=" << cfg.categories() << " D=" << cfg.dims()
      << " r=" << cfg.forward_resistance() << " R=" << cfg.lateral_resistance() << " gamma=" << cfg.gamma() << '\n';
  write_distribution_csv(spec.out / "source_distribution.csv", m.source);
  write_distribution_csv(spec.out / "target_distribution.csv", m.target);
  write_samples_csv(spec.out / "source_samples.csv",
                    draw_samples(m.source, spec.eval.samples, derive_seed(spec.data_seed(), 11), "source"), cfg);
  write_samples_csv(spec.out / "target_samples.csv",
                    draw_samples(m.target, spec.eval.samples, derive_seed(spec.data_seed(), 12), "target"), cfg);
  write_distribution_svg(spec.out / "source.svg", m.source, cfg, "source");
  write_distribution_svg(spec.out / "target.svg", m.target, cfg, "target");

  json summary;
  ExperimentSpec run = spec;
  if (spec.eval.mode == CurrentMode::Learned && spec.eval.checkpoint.empty()) {
    const TrainReport tr = cmd_train(run, log);
    summary["train"] = {{"initial_loss_mean", tr.initial_loss}, {"final_loss_mean", tr.final_loss}};
  }
  const SampleReport rep = cmd_sample(run, log);
  summary["tv_to_target"] = rep.tv_to_target;
  summary["fallbacks"] = rep.fallbacks;
  summary["source_clamped_fraction"] = m.source_clamped;
  summary["target_clamped_fraction"] = m.target_clamped;
  write_manifest(spec, name, started, summary);
  return rep;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e) ||
      dynamic_cast<const std::domain_error*>(&e) || dynamic_cast<const nlohmann::json::exception*>(&e))
    return 2;
  return 3;
}

}  // namespace ecdg
