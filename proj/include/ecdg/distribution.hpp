#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecdg/circuit.hpp"
#include "ecdg/rng.hpp"

namespace ecdg {

/// Probability table over the n = S^D states of a circuit layer.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;

  /// Takes an already-normalized table; rejects negatives and any sum off by
  /// more than 1e-12.
  explicit DiscreteDistribution(Eigen::VectorXd mass);

  /// Normalizes non-negative weights with a positive total.
  static DiscreteDistribution from_weights(Eigen::VectorXd weights);
  static DiscreteDistribution uniform(StateIndex n);
  static DiscreteDistribution point_mass(StateIndex n, StateIndex at);

  StateIndex size() const { return static_cast<StateIndex>(mass_.size()); }
  double operator()(StateIndex x) const { return mass_[static_cast<Eigen::Index>(x)]; }
  const Eigen::VectorXd& mass() const { return mass_; }

  /// Inverse-CDF draw over ascending state order.
  StateIndex sample(Rng& rng) const;

  /// States with positive mass, ascending.
  std::vector<StateIndex> support() const;

 private:
  Eigen::VectorXd mass_;
  std::vector<double> cdf_;
};

struct Provenance {
  std::string generator;
  std::uint64_t seed = 0;
  std::size_t size = 0;
};

/// Empirical samples as flat state indices.
struct SampleSet {
  std::vector<StateIndex> rows;
  Provenance provenance;
};

SampleSet draw_samples(const DiscreteDistribution& dist, std::size_t count, std::uint64_t seed,
                       const std::string& generator);

/// 0.5 * sum |p - q|. Throws ValidationError on a size mismatch.
double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q);
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Empirical frequencies over cfg.states(). Throws on an empty set or an
/// out-of-range row.
DiscreteDistribution histogram(const SampleSet& samples, const CircuitConfig& cfg);
DiscreteDistribution histogram(std::span<const StateIndex> rows, StateIndex n);

struct DataPair {
  DiscreteDistribution source;
  DiscreteDistribution target;
  SampleSet source_samples;
  SampleSet target_samples;
  double source_clamped_fraction = 0.0;
  double target_clamped_fraction = 0.0;
};

/// Uniform over S bins against N(S/2, 1) integrated over unit bins.
/// For S = 50 this is the U(0,50) -> N(25,1) pair.
DataPair make_1d_pair(int categories, std::uint64_t seed, std::size_t sample_count = 100000);

/// Two moons -> swiss roll, binned onto an S x S grid.
DataPair make_2d_pair(int categories, std::uint64_t seed, std::size_t point_count = 100000);

// Point-cloud generators behind make_2d_pair. Rows are (x, y).
Eigen::MatrixX2d two_moons(std::size_t count, double noise, Rng& rng);
Eigen::MatrixX2d swiss_roll_2d(std::size_t count, double noise, Rng& rng);

struct BinBox {
  double x_lo, x_hi, y_lo, y_hi;
};

/// Floor-bins points of `box` onto an S x S grid (dimension 0 = x fastest).
/// Out-of-box points are clamped to the border bins and counted.
std::vector<StateIndex> bin_points(const Eigen::MatrixX2d& points, const BinBox& box,
                                   int categories, std::size_t* clamped = nullptr);

// Fixed binning boxes, versioned with the generators.
inline constexpr BinBox kMoonsBox{-1.25, 2.25, -0.75, 1.25};
inline constexpr BinBox kSwissRollBox{-10.5, 13.5, -11.5, 14.5};
inline constexpr double kPointNoise = 0.05;

// Distribution CSV: header "state_flat,mass", one row per state.
void write_distribution_csv(const std::filesystem::path& path, const DiscreteDistribution& dist);
DiscreteDistribution read_distribution_csv(const std::filesystem::path& path, StateIndex n);

// Samples CSV: header "c0,...,c{D-1}", one row of category indices per sample.
void write_samples_csv(const std::filesystem::path& path, const SampleSet& samples,
                       const CircuitConfig& cfg);
SampleSet read_samples_csv(const std::filesystem::path& path, const CircuitConfig& cfg);

}  // namespace ecdg
