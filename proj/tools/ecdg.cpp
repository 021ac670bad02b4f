#include <CLI11.hpp>

#include <iostream>

#include "ecdg/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::optional<std::size_t> samples;
  std::string out;
  std::string checkpoint;
  std::string walk;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment spec (JSON)");
  cmd->add_option("--seed", o.seed, "top-level seed");
  cmd->add_option("--mode", o.mode, "current mode")->check(CLI::IsMember({"exact", "learned", "oracle"}));
  cmd->add_option("--samples", o.samples, "number of transported samples");
  cmd->add_option("--out", o.out, "output directory");
}

ecdg::ExperimentSpec resolve(const Overrides& o, ecdg::ExperimentSpec base) {
  ecdg::ExperimentSpec spec = o.config.empty() ? base : ecdg::load_spec(o.config, base);
  if (o.seed) spec.seed = *o.seed;
  if (!o.mode.empty()) spec.eval.mode = ecdg::parse_mode(o.mode);
  if (o.samples) spec.eval.samples = *o.samples;
  if (!o.out.empty()) spec.out = o.out;
  if (!o.checkpoint.empty()) spec.eval.checkpoint = o.checkpoint;
  if (o.walk == "general") spec.eval.walk = ecdg::WalkMode::General;
  if (o.walk == "forward") spec.eval.walk = ecdg::WalkMode::Forward;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered-circuit current fields and transport between discrete distributions"};
  app.require_subcommand(1);

  Overrides o;
  auto* solve = app.add_subcommand("solve", "exact node-voltage solve; potentials, currents, Kirchhoff report");
  auto* train = app.add_subcommand("train", "fit the current regressor; checkpoint and loss trace");
  auto* sample = app.add_subcommand("sample", "transport samples with the selected current field");
  auto* exp1 = app.add_subcommand("experiment-1d", "uniform -> N(25,1) on G_10(50, 100, 0.1)");
  auto* exp2 = app.add_subcommand("experiment-2d", "moons -> swiss roll on G_4(2500, 10, 0.1)");
  for (auto* cmd : {solve, train, sample, exp1, exp2}) add_common(cmd, o);
  for (auto* cmd : {sample, exp1, exp2}) {
    cmd->add_option("--checkpoint", o.checkpoint, "regressor checkpoint for --mode learned");
    cmd->add_option("--walk", o.walk, "forward (default) or general")->check(CLI::IsMember({"forward", "general"}));
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      const auto rep = ecdg::cmd_solve(resolve(o, {}), std::cout);
      return rep.kirchhoff.residual <= 1e-9 ? 0 : 3;
    }
    if (train->parsed()) ecdg::cmd_train(resolve(o, {}), std::cout);
    if (sample->parsed()) ecdg::cmd_sample(resolve(o, {}), std::cout);
    if (exp1->parsed()) ecdg::cmd_experiment(resolve(o, ecdg::default_1d_spec()), "experiment-1d", std::cout);
    if (exp2->parsed()) ecdg::cmd_experiment(resolve(o, ecdg::default_2d_spec()), "experiment-2d", std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ecdg::exit_code_for(e);
  }
  return 0;
}
