#include "mvldp/levy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace mvldp::levy {

namespace {
constexpr std::uint64_t kLayerStream = 0x5a;
}

LiftedPrmSampler::LiftedPrmSampler(const IntensityMeasure& measure, double rate_scale,
                                   std::uint64_t seed, int n_layers)
    : measure_(&measure), rate_scale_(rate_scale) {
  require(rate_scale > 0.0 && std::isfinite(rate_scale), ErrorKind::invalid_argument,
          "rate_scale must be positive");
  require(n_layers >= 1, ErrorKind::invalid_argument, "need at least one layer");
  require(!measure.empty(), ErrorKind::invalid_argument, "empty intensity measure");
  layers_.reserve(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l)
    layers_.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(l), kLayerStream));
}

void LiftedPrmSampler::step(double t0, double t1, std::vector<Point>& out) {
  out.clear();
  const double width = t1 - t0;
  const double mean = rate_scale_ * measure_->total_mass() * width;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& rng = layers_[l];
    std::poisson_distribution<long> count_dist(mean);
    const long count = count_dist(rng);
    for (long e = 0; e < count; ++e) {
      const double time = t0 + (1.0 - rng.uniform()) * width;
      const std::size_t cell = measure_->pick(rng.uniform());
      const double lift = static_cast<double>(l) + (1.0 - rng.uniform());
      out.push_back({time, cell, lift});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Point& a, const Point& b) { return a.time < b.time; });
}

int layers_for(double max_psi) {
  return std::max(1, static_cast<int>(std::ceil(max_psi)));
}

JumpStream sample_prm(const IntensityMeasure& m, double rate_scale, const TimeGrid& grid,
                      std::uint64_t seed) {
  LiftedPrmSampler sampler(m, rate_scale, seed, 1);
  JumpStream stream;
  stream.rate_scale = rate_scale;
  std::vector<LiftedPrmSampler::Point> buf;
  for (int k = 0; k < grid.n_steps(); ++k) {
    sampler.step(grid.node(k), grid.node(k + 1), buf);
    for (const auto& p : buf) stream.events.push_back({p.time, p.cell});
  }
  return stream;
}

JumpStream sample_controlled_prm(const IntensityMeasure& m, const Control& control,
                                 double rate_scale, const TimeGrid& grid,
                                 std::uint64_t seed) {
  require(control.psi.width() == static_cast<int>(m.size()), ErrorKind::invalid_control,
          "psi must have one column per mark cell");
  for (double v : control.psi.values())
    require(v >= control.psi_lo && v <= control.psi_hi, ErrorKind::invalid_control,
            "psi cell value outside [lo, hi]");
  LiftedPrmSampler sampler(m, rate_scale, seed, layers_for(control.max_psi()));
  JumpStream stream;
  stream.rate_scale = rate_scale;
  std::vector<LiftedPrmSampler::Point> buf;
  for (int k = 0; k < grid.n_steps(); ++k) {
    sampler.step(grid.node(k), grid.node(k + 1), buf);
    for (const auto& p : buf)
      if (p.lift <= control.psi(p.time)[static_cast<Eigen::Index>(p.cell)])
        stream.events.push_back({p.time, p.cell});
  }
  return stream;
}

double cell_integral(const IntensityMeasure& m,
                     const std::function<double(const Vector& z)>& f) {
  double acc = 0.0;
  for (const auto& cell : m.cells()) {
    const double v = f(cell.mark);
    require(std::isfinite(v), ErrorKind::numeric_error,
            "integrand is not finite on a mark cell");
    acc += v * cell.mass;
  }
  return acc;
}

void write_csv(std::ostream& os, const JumpStream& stream, const IntensityMeasure& m) {
  os << "time,cell";
  for (int j = 0; j < m.mark_dim(); ++j) os << ",z" << j;
  os << '\n';
  os.precision(17);
  for (const auto& e : stream.events) {
    os << e.time << ',' << e.cell;
    for (int j = 0; j < m.mark_dim(); ++j) os << ',' << m.cell(e.cell).mark[j];
    os << '\n';
  }
}

}  // namespace mvldp::levy
