#include "mvldp/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mvldp::measure {

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms, int dim)
    : atoms_(std::move(atoms)), dim_(dim) {
  require(dim >= 1, ErrorKind::invalid_argument, "dimension must be >= 1");
  require(!atoms_.empty() && atoms_.size() % dim == 0, ErrorKind::invalid_argument,
          "empirical measure needs N >= 1 atoms");
  for (double v : atoms_)
    require(std::isfinite(v), ErrorKind::invalid_argument, "atoms must be finite");
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<Vector>& points) {
  require(!points.empty(), ErrorKind::invalid_argument, "empty point set");
  const int d = static_cast<int>(points.front().size());
  std::vector<double> flat;
  flat.reserve(points.size() * d);
  for (const auto& p : points) flat.insert(flat.end(), p.data(), p.data() + d);
  return EmpiricalMeasure(std::move(flat), d);
}

Vector mean(const EmpiricalMeasure& mu) {
  Vector m = Vector::Zero(mu.dim());
  for (std::size_t i = 0; i < mu.size(); ++i) m += mu.atom(i);
  return m / static_cast<double>(mu.size());
}

double second_moment(const EmpiricalMeasure& mu) {
  double acc = 0.0;
  for (double v : mu.data()) acc += v * v;
  return acc / static_cast<double>(mu.size());
}

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  // 1-based potentials formulation; p[j] = row matched to column j.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

namespace {

double sq_dist(const EmpiricalMeasure& a, std::size_t i, const EmpiricalMeasure& b,
               std::size_t j) {
  return (a.atom(i) - b.atom(j)).squaredNorm();
}

// Greedy nearest matching followed by pairwise-swap refinement.
double greedy_refined(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> match(n);
  std::vector<char> taken(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      const double c = sq_dist(a, i, b, j);
      if (c < best) {
        best = c;
        arg = j;
      }
    }
    taken[arg] = 1;
    match[i] = arg;
  }
  for (int pass = 0; pass < 20; ++pass) {
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = i + 1; k < n; ++k) {
        const double now = sq_dist(a, i, b, match[i]) + sq_dist(a, k, b, match[k]);
        const double swapped = sq_dist(a, i, b, match[k]) + sq_dist(a, k, b, match[i]);
        if (swapped < now - 1e-15 * (1.0 + now)) {
          std::swap(match[i], match[k]);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += sq_dist(a, i, b, match[i]);
  return total / static_cast<double>(n);
}

}  // namespace

W2Result wasserstein2_detailed(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  require(a.dim() == b.dim(), ErrorKind::invalid_argument, "dimension mismatch");
  require(a.size() == b.size(), ErrorKind::unsupported,
          "W2 is only supported for equal atom counts");
  const std::size_t n = a.size();
  if (a.dim() == 1) {
    std::vector<double> xa(a.data().begin(), a.data().end());
    std::vector<double> xb(b.data().begin(), b.data().end());
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (xa[i] - xb[i]) * (xa[i] - xb[i]);
    return {std::sqrt(total / static_cast<double>(n)), false};
  }
  if (n <= kExactAssignmentLimit) {
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = sq_dist(a, i, b, j);
    const auto match = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
    return {std::sqrt(total / static_cast<double>(n)), false};
  }
  return {std::sqrt(greedy_refined(a, b)), true};
}

double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return wasserstein2_detailed(a, b).value;
}

CouplingReport coupling_bound_check(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  require(x.size() == y.size() && x.dim() == y.dim(), ErrorKind::invalid_argument,
          "coupled clouds must be index-aligned");
  CouplingReport r;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x.atom(i) - y.atom(i)).squaredNorm();
  r.coupling_rms = std::sqrt(acc / static_cast<double>(x.size()));
  const W2Result w2 = wasserstein2_detailed(x, y);
  // The index coupling is itself admissible, so it caps any matching bound.
  r.w2 = w2.upper_bound ? std::min(w2.value, r.coupling_rms) : w2.value;
  if (r.w2 > r.coupling_rms + 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "coupling bound violated: W2 = " << r.w2 << " > rms = " << r.coupling_rms;
    fail(ErrorKind::invariant_failure, msg.str());
  }
  return r;
}

}  // namespace mvldp::measure
