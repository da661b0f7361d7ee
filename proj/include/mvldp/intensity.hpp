#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace mvldp {

struct IntensityCell {
  Eigen::VectorXd mark;
  double mass = 0.0;
};

// Finite atomic intensity measure nu on the mark space R^k.
class IntensityMeasure {
 public:
  IntensityMeasure() = default;
  explicit IntensityMeasure(std::vector<IntensityCell> cells);

  int mark_dim() const noexcept { return mark_dim_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }
  double total_mass() const noexcept { return total_mass_; }

  const IntensityCell& cell(std::size_t j) const { return cells_.at(j); }
  const std::vector<IntensityCell>& cells() const noexcept { return cells_; }
  const std::vector<double>& cumulative() const noexcept { return cumulative_; }

  // Index of the cell selected by a uniform variate u in [0, 1).
  std::size_t pick(double u) const noexcept;

 private:
  std::vector<IntensityCell> cells_;
  std::vector<double> cumulative_;  // normalized CDF over cells
  double total_mass_ = 0.0;
  int mark_dim_ = 0;
};

}  // namespace mvldp
