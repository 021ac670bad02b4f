#include "ecdg/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "csv.hpp"
#include "ecdg/error.hpp"

namespace ecdg {

namespace {

constexpr double kNormTol = 1e-12;

double normal_cdf(double x, double mean, double stddev) {
  return 0.5 * std::erfc(-(x - mean) / (stddev * std::numbers::sqrt2));
}

double normal_tail(double x, double mean, double stddev) {
  return 0.5 * std::erfc((x - mean) / (stddev * std::numbers::sqrt2));
}

// Mass of N(mean, stddev) on [lo, hi), taken from whichever tail avoids
// cancellation.
double normal_bin_mass(double lo, double hi, double mean, double stddev) {
  if (lo >= mean) return normal_tail(lo, mean, stddev) - normal_tail(hi, mean, stddev);
  return normal_cdf(hi, mean, stddev) - normal_cdf(lo, mean, stddev);
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(Eigen::VectorXd mass) : mass_(std::move(mass)) {
  if (mass_.size() == 0) throw ValidationError("distribution: empty table");
  double total = 0.0;
  cdf_.resize(static_cast<std::size_t>(mass_.size()));
  for (Eigen::Index i = 0; i < mass_.size(); ++i) {
    if (!(mass_[i] >= 0.0) || !std::isfinite(mass_[i])) {
      std::ostringstream msg;
      msg << "distribution: entry " << i << " is negative or not finite (" << mass_[i] << ")";
      throw ValidationError(msg.str());
    }
    total += mass_[i];
    cdf_[static_cast<std::size_t>(i)] = total;
  }
  if (std::abs(total - 1.0) > kNormTol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "distribution: mass sums to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }
}

DiscreteDistribution DiscreteDistribution::from_weights(Eigen::VectorXd weights) {
  if (weights.size() == 0) throw ValidationError("distribution: empty table");
  if ((weights.array() < 0.0).any() || !weights.allFinite())
    throw ValidationError("distribution: weights must be finite and non-negative");
  const double total = weights.sum();
  if (!(total > 0.0)) throw ValidationError("distribution: weights sum to zero");
  weights /= total;
  // One more pass absorbs the rounding left by the division.
  weights /= weights.sum();
  return DiscreteDistribution(std::move(weights));
}

DiscreteDistribution DiscreteDistribution::uniform(StateIndex n) {
  return from_weights(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)));
}

DiscreteDistribution DiscreteDistribution::point_mass(StateIndex n, StateIndex at) {
  if (at >= n) throw ValidationError("point_mass: index out of range");
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  m[static_cast<Eigen::Index>(at)] = 1.0;
  return DiscreteDistribution(std::move(m));
}

StateIndex DiscreteDistribution::sample(Rng& rng) const {
  const double u = rng.uniform() * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  auto idx = static_cast<StateIndex>(it - cdf_.begin());
  // Never return a zero-mass state, even when u lands on a flat CDF segment edge.
  while (mass_[static_cast<Eigen::Index>(idx)] <= 0.0 && idx > 0) --idx;
  return idx;
}

std::vector<StateIndex> DiscreteDistribution::support() const {
  std::vector<StateIndex> s;
  for (Eigen::Index i = 0; i < mass_.size(); ++i)
    if (mass_[i] > 0.0) s.push_back(static_cast<StateIndex>(i));
  return s;
}

SampleSet draw_samples(const DiscreteDistribution& dist, std::size_t count, std::uint64_t seed,
                       const std::string& generator) {
  SampleSet out;
  out.provenance = {generator, seed, count};
  out.rows.reserve(count);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) out.rows.push_back(dist.sample(rng));
  return out;
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) {
    std::ostringstream msg;
    msg << "total_variation: size mismatch " << p.size() << " vs " << q.size();
    throw ValidationError(msg.str());
  }
  return 0.5 * (p - q).cwiseAbs().sum();
}

double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  return total_variation(p.mass(), q.mass());
}

DiscreteDistribution histogram(std::span<const StateIndex> rows, StateIndex n) {
  if (rows.empty()) throw ValidationError("histogram: empty sample set");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (StateIndex s : rows) {
    if (s >= n) throw ValidationError("histogram: sample state out of range");
    counts[static_cast<Eigen::Index>(s)] += 1.0;
  }
  return DiscreteDistribution::from_weights(std::move(counts));
}

DiscreteDistribution histogram(const SampleSet& samples, const CircuitConfig& cfg) {
  return histogram(samples.rows, cfg.states());
}

DataPair make_1d_pair(int categories, std::uint64_t seed, std::size_t sample_count) {
  if (categories < 1) throw ValidationError("make_1d_pair: categories must be >= 1");
  const auto S = static_cast<Eigen::Index>(categories);
  const double mean = 0.5 * categories;
  Eigen::VectorXd q(S);
  for (Eigen::Index k = 0; k < S; ++k)
    q[k] = normal_bin_mass(static_cast<double>(k), static_cast<double>(k + 1), mean, 1.0);

  DataPair out;
  out.source = DiscreteDistribution::uniform(static_cast<StateIndex>(categories));
  out.target = DiscreteDistribution::from_weights(std::move(q));
  out.source_samples = draw_samples(out.source, sample_count, derive_seed(seed, 1), "uniform-1d");
  out.target_samples = draw_samples(out.target, sample_count, derive_seed(seed, 2), "gaussian-1d");
  return out;
}

Eigen::MatrixX2d two_moons(std::size_t count, double noise, Rng& rng) {
  Eigen::MatrixX2d pts(static_cast<Eigen::Index>(count), 2);
  const std::size_t outer = count / 2;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    double x, y;
    if (i < outer) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    const auto r = static_cast<Eigen::Index>(i);
    pts(r, 0) = x + rng.normal(0.0, noise);
    pts(r, 1) = y + rng.normal(0.0, noise);
  }
  return pts;
}

Eigen::MatrixX2d swiss_roll_2d(std::size_t count, double noise, Rng& rng) {
  Eigen::MatrixX2d pts(static_cast<Eigen::Index>(count), 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double t = rng.uniform(1.5 * std::numbers::pi, 4.5 * std::numbers::pi);
    pts(i, 0) = t * std::cos(t) + rng.normal(0.0, noise);
    pts(i, 1) = t * std::sin(t) + rng.normal(0.0, noise);
  }
  return pts;
}

std::vector<StateIndex> bin_points(const Eigen::MatrixX2d& points, const BinBox& box,
                                   int categories, std::size_t* clamped) {
  std::vector<StateIndex> rows;
  rows.reserve(static_cast<std::size_t>(points.rows()));
  std::size_t n_clamped = 0;
  auto bin = [&](double v, double lo, double hi, bool& was_clamped) {
    const double scaled = std::floor((v - lo) / (hi - lo) * categories);
    if (scaled < 0.0) {
      was_clamped = true;
      return 0;
    }
    if (scaled > categories - 1) {
      was_clamped = true;
      return categories - 1;
    }
    return static_cast<int>(scaled);
  };
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    bool was_clamped = false;
    const int bx = bin(points(i, 0), box.x_lo, box.x_hi, was_clamped);
    const int by = bin(points(i, 1), box.y_lo, box.y_hi, was_clamped);
    if (was_clamped) ++n_clamped;
    rows.push_back(static_cast<StateIndex>(bx) +
                   static_cast<StateIndex>(categories) * static_cast<StateIndex>(by));
  }
  if (clamped) *clamped = n_clamped;
  return rows;
}

DataPair make_2d_pair(int categories, std::uint64_t seed, std::size_t point_count) {
  if (categories < 1) throw ValidationError("make_2d_pair: categories must be >= 1");
  if (point_count == 0) throw ValidationError("make_2d_pair: point_count must be > 0");
  const auto n = static_cast<StateIndex>(categories) * static_cast<StateIndex>(categories);

  Rng moons_rng(derive_seed(seed, 1));
  Rng roll_rng(derive_seed(seed, 2));
  std::size_t moons_clamped = 0, roll_clamped = 0;

  DataPair out;
  out.source_samples.rows =
      bin_points(two_moons(point_count, kPointNoise, moons_rng), kMoonsBox, categories, &moons_clamped);
  out.source_samples.provenance = {"two-moons-v1", seed, point_count};
  out.target_samples.rows = bin_points(swiss_roll_2d(point_count, kPointNoise, roll_rng),
                                       kSwissRollBox, categories, &roll_clamped);
  out.target_samples.provenance = {"swiss-roll-2d-v1", seed, point_count};
  out.source = histogram(out.source_samples.rows, n);
  out.target = histogram(out.target_samples.rows, n);
  out.source_clamped_fraction = static_cast<double>(moons_clamped) / static_cast<double>(point_count);
  out.target_clamped_fraction = static_cast<double>(roll_clamped) / static_cast<double>(point_count);
  return out;
}

void write_distribution_csv(const std::filesystem::path& path, const DiscreteDistribution& dist) {
  auto out = detail::open_for_write(path);
  out << "state_flat,mass\n";
  for (StateIndex x = 0; x < dist.size(); ++x) out << x << ',' << detail::format_double(dist(x)) << '\n';
}

DiscreteDistribution read_distribution_csv(const std::filesystem::path& path, StateIndex n) {
  auto in = detail::open_for_read(path);
  std::string line;
  std::getline(in, line);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    try {
      if (f.size() != 2) throw std::invalid_argument("expected 2 fields");
      const auto x = static_cast<StateIndex>(std::stoull(f[0]));
      if (x >= n) throw std::invalid_argument("state out of range");
      mass[static_cast<Eigen::Index>(x)] += std::stod(f[1]);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << lineno << ": " << e.what();
      throw ValidationError(msg.str());
    }
  }
  // Files written elsewhere may carry printing round-off; accept it and renormalize.
  if (std::abs(mass.sum() - 1.0) > 1e-6)
    throw ValidationError(path.string() + ": masses do not sum to 1");
  return DiscreteDistribution::from_weights(std::move(mass));
}

void write_samples_csv(const std::filesystem::path& path, const SampleSet& samples,
                       const CircuitConfig& cfg) {
  auto out = detail::open_for_write(path);
  for (int d = 0; d < cfg.dims(); ++d) out << (d ? ",c" : "c") << d;
  out << '\n';
  for (StateIndex s : samples.rows) {
    const State st = unflatten(cfg, s);
    for (std::size_t d = 0; d < st.categories.size(); ++d) out << (d ? "," : "") << st.categories[d];
    out << '\n';
  }
}

SampleSet read_samples_csv(const std::filesystem::path& path, const CircuitConfig& cfg) {
  auto in = detail::open_for_read(path);
  std::string line;
  std::getline(in, line);
  SampleSet out;
  out.provenance.generator = "file:" + path.filename().string();
  std::vector<int> cats(static_cast<std::size_t>(cfg.dims()));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    try {
      if (f.size() != cats.size()) throw ValidationError("wrong column count");
      for (std::size_t d = 0; d < cats.size(); ++d) cats[d] = std::stoi(f[d]);
      out.rows.push_back(flatten(cfg, cats).flat);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << lineno << ": " << e.what();
      throw ValidationError(msg.str());
    }
  }
  out.provenance.size = out.rows.size();
  if (out.rows.empty()) throw ValidationError(path.string() + ": no samples");
  return out;
}

}  // namespace ecdg
