#pragma once

#include "mvldp/core.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mvldp::measure {

// Equal-weight empirical measure (1/N) sum_i delta_{x_i} on R^d.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> atoms, int dim);
  static EmpiricalMeasure from_points(const std::vector<Vector>& points);

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return atoms_.size() / dim_; }
  std::span<const double> data() const noexcept { return atoms_; }
  Eigen::Map<const Vector> atom(std::size_t i) const {
    return Eigen::Map<const Vector>(atoms_.data() + i * dim_, dim_);
  }

 private:
  std::vector<double> atoms_;
  int dim_;
};

Vector mean(const EmpiricalMeasure& mu);
double second_moment(const EmpiricalMeasure& mu);

// Exact minimum-cost perfect matching for a dense n x n cost matrix
// (Hungarian algorithm with potentials, O(n^3)). Returns column per row.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

struct W2Result {
  double value = 0.0;
  bool upper_bound = false;  // true when the greedy-refined matching was used
};

inline constexpr std::size_t kExactAssignmentLimit = 256;

W2Result wasserstein2_detailed(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

struct CouplingReport {
  double w2 = 0.0;
  double coupling_rms = 0.0;  // sqrt(mean_i |x_i - y_i|^2)
};

// W2(law x, law y) <= sqrt(E|x - y|^2) for index-aligned clouds. Throws
// invariant-failure when violated.
CouplingReport coupling_bound_check(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

}  // namespace mvldp::measure
