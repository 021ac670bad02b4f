#include "ecdg/svg.hpp"

#include <algorithm>
#include <cstdio>

#include "csv.hpp"

namespace ecdg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_distribution_svg(const std::filesystem::path& path, const DiscreteDistribution& dist,
                            const CircuitConfig& cfg, const std::string& title) {
  auto out = detail::open_for_write(path);
  const double peak = std::max(dist.mass().maxCoeff(), 1e-300);

  if (cfg.dims() == 2 && dist.size() == cfg.states()) {
    const int S = cfg.categories();
    const double cell = std::max(2.0, 500.0 / S);
    const double side = cell * S;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(side + 20) << "\" height=\""
        << fmt(side + 50) << "\">\n";
    out << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";
    out << "<rect x=\"10\" y=\"30\" width=\"" << fmt(side) << "\" height=\"" << fmt(side) << "\" fill=\"white\" stroke=\"#888\"/>\n";
    for (int cy = 0; cy < S; ++cy)
      for (int cx = 0; cx < S; ++cx) {
        const double m = dist(static_cast<StateIndex>(cx) + static_cast<StateIndex>(S) * static_cast<StateIndex>(cy));
        if (m <= 0.0) continue;
        // y grows upward in data space
        out << "<rect x=\"" << fmt(10 + cx * cell) << "\" y=\"" << fmt(30 + (S - 1 - cy) * cell) << "\" width=\""
            << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\"#1f4e9c\" fill-opacity=\"" << fmt(m / peak)
            << "\"/>\n";
      }
    out << "</svg>\n";
    return;
  }

  const auto n = static_cast<double>(dist.size());
  const double width = std::clamp(n * 8.0, 300.0, 1200.0);
  const double height = 240.0;
  const double bar = width / n;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width + 20) << "\" height=\"" << fmt(height + 50)
      << "\">\n";
  out << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";
  out << "<line x1=\"10\" y1=\"" << fmt(30 + height) << "\" x2=\"" << fmt(10 + width) << "\" y2=\"" << fmt(30 + height)
      << "\" stroke=\"#888\"/>\n";
  for (StateIndex k = 0; k < dist.size(); ++k) {
    const double h = dist(k) / peak * height;
    if (h <= 0.0) continue;
    out << "<rect x=\"" << fmt(10 + static_cast<double>(k) * bar) << "\" y=\"" << fmt(30 + height - h)
        << "\" width=\"" << fmt(std::max(bar * 0.9, 0.5)) << "\" height=\"" << fmt(h) << "\" fill=\"#1f4e9c\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace ecdg
