#include "ecdg/circuit.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ecdg/error.hpp"

namespace ecdg {

CircuitConfig::CircuitConfig(int layers, int categories, int dims, double forward_resistance,
                             double lateral_resistance)
    : layers_(layers),
      categories_(categories),
      dims_(dims),
      states_(1),
      r_(forward_resistance),
      R_(lateral_resistance) {
  if (layers < 1) throw ValidationError("circuit: L must be >= 1");
  if (categories < 1) throw ValidationError("circuit: S must be >= 1");
  if (dims < 1) throw ValidationError("circuit: D must be >= 1");
  if (!(forward_resistance > 0.0) || !std::isfinite(forward_resistance))
    throw ValidationError("circuit: r must be a positive finite number");
  if (!(lateral_resistance > 0.0) || !std::isfinite(lateral_resistance))
    throw ValidationError("circuit: R must be a positive finite number");
  constexpr StateIndex kMax = std::numeric_limits<std::int64_t>::max();
  for (int d = 0; d < dims; ++d) {
    if (states_ > kMax / static_cast<StateIndex>(categories)) {
      std::ostringstream msg;
      msg << "circuit: S^D = " << categories << "^" << dims << " does not fit a 64-bit index";
      throw SizeError(msg.str());
    }
    states_ *= static_cast<StateIndex>(categories);
  }
  if (states_ > kMax / (static_cast<StateIndex>(layers) + 1))
    throw SizeError("circuit: node count (L+1) S^D does not fit a 64-bit index");
  gamma_ = gamma_of(r_, R_, static_cast<double>(states_));
}

double gamma_of(double forward_resistance, double lateral_resistance, double states) {
  return 1.0 + forward_resistance * states / lateral_resistance;
}

double gamma_of(const CircuitConfig& cfg) { return cfg.gamma(); }

State flatten(const CircuitConfig& cfg, std::span<const int> categories) {
  if (categories.size() != static_cast<std::size_t>(cfg.dims())) {
    std::ostringstream msg;
    msg << "flatten: expected " << cfg.dims() << " categories, got " << categories.size();
    throw ValidationError(msg.str());
  }
  State s;
  s.categories.assign(categories.begin(), categories.end());
  StateIndex stride = 1;
  for (std::size_t d = 0; d < categories.size(); ++d) {
    const int c = categories[d];
    if (c < 0 || c >= cfg.categories()) {
      std::ostringstream msg;
      msg << "flatten: category " << c << " in dimension " << d << " outside [0, "
          << cfg.categories() << ")";
      throw ValidationError(msg.str());
    }
    s.flat += static_cast<StateIndex>(c) * stride;
    stride *= static_cast<StateIndex>(cfg.categories());
  }
  return s;
}

State unflatten(const CircuitConfig& cfg, StateIndex flat) {
  if (flat >= cfg.states()) {
    std::ostringstream msg;
    msg << "unflatten: index " << flat << " outside [0, " << cfg.states() << ")";
    throw ValidationError(msg.str());
  }
  State s;
  s.flat = flat;
  s.categories.resize(static_cast<std::size_t>(cfg.dims()));
  const auto S = static_cast<StateIndex>(cfg.categories());
  for (auto& c : s.categories) {
    c = static_cast<int>(flat % S);
    flat /= S;
  }
  return s;
}

void to_json(nlohmann::json& j, const CircuitConfig& cfg) {
  j = nlohmann::json{{"L", cfg.layers()},
                     {"S", cfg.categories()},
                     {"D", cfg.dims()},
                     {"r", cfg.forward_resistance()},
                     {"R", cfg.lateral_resistance()}};
}

CircuitConfig circuit_from_json(const nlohmann::json& j) {
  try {
    return CircuitConfig(j.at("L").get<int>(), j.at("S").get<int>(), j.at("D").get<int>(),
                         j.at("r").get<double>(), j.at("R").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("circuit config: ") + e.what());
  }
}

}  // namespace ecdg
