#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ecdg {

enum class PolyKind { First, Second };

namespace detail {

template <typename Scalar>
[[noreturn]] void chebyshev_overflow(const char* name, int l, Scalar gamma) {
  std::ostringstream msg;
  msg << name << " overflow at l=" << l << ", gamma=" << gamma;
  throw std::range_error(msg.str());
}

template <typename Scalar>
void check_gamma(Scalar gamma) {
  if (!(gamma >= Scalar(1))) {
    std::ostringstream msg;
    msg << "chebyshev: gamma must be >= 1, got " << gamma;
    throw std::domain_error(msg.str());
  }
}

}  // namespace detail

/// First-kind Chebyshev polynomial T_l(gamma) by forward recurrence.
/// Terms grow monotonically for gamma >= 1, so the recurrence is stable there.
/// Throws std::range_error if an intermediate value leaves the finite range.
template <typename Scalar = double>
Scalar chebyshev_t(int l, Scalar gamma) {
  if (l < 0) throw std::domain_error("chebyshev_t: degree must be >= 0");
  detail::check_gamma(gamma);
  if (l == 0) return Scalar(1);
  Scalar prev = Scalar(1);
  Scalar cur = gamma;
  for (int k = 1; k < l; ++k) {
    const Scalar next = Scalar(2) * gamma * cur - prev;
    if (!std::isfinite(next)) detail::chebyshev_overflow("chebyshev_t", k + 1, gamma);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Second-kind Chebyshev polynomial U_l(gamma), extended with U_{-1} = 0.
template <typename Scalar = double>
Scalar chebyshev_u(int l, Scalar gamma) {
  if (l < -1) throw std::domain_error("chebyshev_u: degree must be >= -1");
  detail::check_gamma(gamma);
  if (l == -1) return Scalar(0);
  Scalar prev = Scalar(0);
  Scalar cur = Scalar(1);
  for (int k = 0; k < l; ++k) {
    const Scalar next = Scalar(2) * gamma * cur - prev;
    if (!std::isfinite(next)) detail::chebyshev_overflow("chebyshev_u", k + 1, gamma);
    prev = cur;
    cur = next;
  }
  return cur;
}

template <typename Scalar = double>
Scalar chebyshev(PolyKind kind, int l, Scalar gamma) {
  return kind == PolyKind::First ? chebyshev_t(l, gamma) : chebyshev_u(l, gamma);
}

/// T_0..T_max and U_{-1}..U_max for one gamma, built once per circuit.
template <typename Scalar = double>
class ChebyshevTable {
 public:
  ChebyshevTable(int max_degree, Scalar gamma) : gamma_(gamma) {
    if (max_degree < 0) throw std::domain_error("ChebyshevTable: max_degree must be >= 0");
    detail::check_gamma(gamma);
    t_.resize(static_cast<std::size_t>(max_degree) + 1);
    u_.resize(static_cast<std::size_t>(max_degree) + 2);
    t_[0] = Scalar(1);
    if (max_degree >= 1) t_[1] = gamma;
    u_[0] = Scalar(0);  // U_{-1}
    u_[1] = Scalar(1);  // U_0
    for (int k = 2; k <= max_degree; ++k) {
      t_[k] = Scalar(2) * gamma * t_[k - 1] - t_[k - 2];
      if (!std::isfinite(t_[k])) detail::chebyshev_overflow("chebyshev_t", k, gamma);
    }
    for (int k = 1; k <= max_degree; ++k) {
      u_[k + 1] = Scalar(2) * gamma * u_[k] - u_[k - 1];
      if (!std::isfinite(u_[k + 1])) detail::chebyshev_overflow("chebyshev_u", k, gamma);
    }
  }

  Scalar gamma() const { return gamma_; }
  int max_degree() const { return static_cast<int>(t_.size()) - 1; }

  Scalar t(int l) const { return t_.at(static_cast<std::size_t>(l)); }
  Scalar u(int l) const { return u_.at(static_cast<std::size_t>(l + 1)); }

 private:
  Scalar gamma_;
  std::vector<Scalar> t_;
  std::vector<Scalar> u_;
};

}  // namespace ecdg
