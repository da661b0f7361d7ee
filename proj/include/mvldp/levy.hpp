#pragma once

#include "mvldp/core.hpp"
#include "mvldp/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace mvldp::levy {

struct JumpEvent {
  double time = 0.0;
  std::size_t cell = 0;

  bool operator==(const JumpEvent&) const = default;
};

// Realized marked point process on (0,T] x Z; marks are looked up in the
// generating IntensityMeasure through the cell index.
struct JumpStream {
  std::vector<JumpEvent> events;
  double rate_scale = 1.0;

  std::size_t size() const noexcept { return events.size(); }
  bool operator==(const JumpStream&) const = default;
};

// Streaming sampler of the lifted Poisson random measure on
// (0,T] x Z x (0, n_layers] with intensity rate_scale * Leb x nu x Leb.
// The lift coordinate r is generated layer by layer, one RNG stream per unit
// slab (l, l+1], so the point set restricted to r <= c is the same for every
// n_layers >= c. Thinning by psi keeps points with r <= psi(s, z).
class LiftedPrmSampler {
 public:
  LiftedPrmSampler(const IntensityMeasure& measure, double rate_scale,
                   std::uint64_t seed, int n_layers);

  struct Point {
    double time;
    std::size_t cell;
    double lift;
  };

  // Points in (t0, t1] from every layer, sorted by time.
  void step(double t0, double t1, std::vector<Point>& out);

  int n_layers() const noexcept { return static_cast<int>(layers_.size()); }

 private:
  const IntensityMeasure* measure_;
  double rate_scale_;
  std::vector<Xoshiro256> layers_;
};

// Number of unit slabs needed to thin against tilts up to max_psi.
int layers_for(double max_psi);

JumpStream sample_prm(const IntensityMeasure& m, double rate_scale, const TimeGrid& grid,
                      std::uint64_t seed);

JumpStream sample_controlled_prm(const IntensityMeasure& m, const Control& control,
                                 double rate_scale, const TimeGrid& grid,
                                 std::uint64_t seed);

double cell_integral(const IntensityMeasure& m,
                     const std::function<double(const Vector& z)>& f);

void write_csv(std::ostream& os, const JumpStream& stream, const IntensityMeasure& m);

}  // namespace mvldp::levy
