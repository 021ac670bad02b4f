#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "ecdg/circuit.hpp"
#include "ecdg/distribution.hpp"
#include "ecdg/potentials.hpp"
#include "ecdg/regressor.hpp"
#include "ecdg/sampler.hpp"

namespace ecdg {

enum class CurrentMode { Exact, Learned, Oracle };

CurrentMode parse_mode(const std::string& s);
std::string to_string(CurrentMode mode);

struct DatasetSpec {
  std::string kind = "oned";  // oned | twod | random | uniform | custom
  std::size_t points = 100000;
  std::filesystem::path source;  // custom: distribution CSVs
  std::filesystem::path target;
};

struct EvalSpec {
  CurrentMode mode = CurrentMode::Exact;
  WalkMode walk = WalkMode::Forward;
  std::size_t samples = 100000;
  std::filesystem::path checkpoint;  // learned mode; defaults to <out>/checkpoint.json
  std::size_t trajectory_dump = 1000;
};

/// Everything a run needs. One top-level seed; data, training and sampling
/// use derive_seed(seed, 1 / 2 / 3).
struct ExperimentSpec {
  CircuitConfig circuit{10, 50, 1, 0.1, 100.0};
  DatasetSpec dataset;
  std::string coupling = "independent";  // independent | comonotone
  TrainConfig train;
  EvalSpec eval;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;

  std::uint64_t data_seed() const { return derive_seed(seed, 1); }
  std::uint64_t train_seed() const { return derive_seed(seed, 2); }
  std::uint64_t eval_seed() const { return derive_seed(seed, 3); }
};

ExperimentSpec default_1d_spec();
ExperimentSpec default_2d_spec();

/// Fields present in `j` override `base`. Throws ValidationError on bad
/// values or missing custom files.
ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec base = {});
ExperimentSpec load_spec(const std::filesystem::path& path, ExperimentSpec base = {});
void to_json(nlohmann::json& j, const ExperimentSpec& spec);

struct Marginals {
  DiscreteDistribution source;
  DiscreteDistribution target;
  double source_clamped = 0.0;
  double target_clamped = 0.0;
};

Marginals make_marginals(const ExperimentSpec& spec);
Coupling make_coupling(const ExperimentSpec& spec, const Marginals& m);

struct SolveReport {
  KirchhoffReport kirchhoff;
  std::size_t grounded_node = 0;
};

struct TrainReport {
  double initial_loss = 0.0;  // mean of the first 100 steps
  double final_loss = 0.0;    // mean of the last 100 steps
};

struct SampleReport {
  double tv_to_target = 0.0;
  std::size_t samples = 0;
  std::size_t fallbacks = 0;
  std::vector<double> layer_tv_to_target;  // forward mode, layers 0..L
};

// Commands. Each writes its artifacts under spec.out and returns a summary;
// `log` gets one-line progress notes.
SolveReport cmd_solve(const ExperimentSpec& spec, std::ostream& log);
TrainReport cmd_train(const ExperimentSpec& spec, std::ostream& log);
SampleReport cmd_sample(const ExperimentSpec& spec, std::ostream& log);
/// Data artifacts, training when the mode is learned, then sampling.
SampleReport cmd_experiment(const ExperimentSpec& spec, const std::string& name, std::ostream& log);

/// Maps the error families to exit codes: 0 ok, 2 validation, 3 numerical.
int exit_code_for(const std::exception& e);

}  // namespace ecdg
