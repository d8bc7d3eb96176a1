#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version that
// the tests compare against and an OpenMP version used by the runtime; both
// must produce bit-identical results because every output element is
// computed independently in the same arithmetic order.

#include <cstddef>
#include <span>

#include "airexo/geometry.hpp"

namespace airexo::kernels {

enum class Exec { kSerial, kOpenMP };

/// out[i] = |rows[i] - query|^2 for a row-major matrix with `dim` columns.
void squared_distances_serial(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                              std::span<double> out);
void squared_distances_omp(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out);
void squared_distances(Exec exec, std::span<const double> rows, std::size_t dim,
                       std::span<const double> query, std::span<double> out);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Table-plane footprint of a link: a 2-D capsule.
struct Footprint {
  Point2 a;
  Point2 b;
  double radius = 0.0;
};

struct Bounds2 {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  bool operator==(const Bounds2&) const = default;
};

/// Moves every point lying inside a footprint the minimal distance needed to
/// leave it, repeating up to `passes` times so that chains of footprints
/// resolve, then clamps to the bounds. Returns how many points moved.
std::size_t push_out_serial(std::span<Point2> points, std::span<const Footprint> footprints,
                            const Bounds2& bounds, int passes);
std::size_t push_out_omp(std::span<Point2> points, std::span<const Footprint> footprints,
                         const Bounds2& bounds, int passes);
std::size_t push_out(Exec exec, std::span<Point2> points, std::span<const Footprint> footprints,
                     const Bounds2& bounds, int passes);

/// Distance from p to footprint segment and the closest point on it.
double footprint_distance(const Point2& p, const Footprint& f, Point2* closest = nullptr);

/// out[i * b.size() + j] = capsule_distance(a[i], b[j]).
void capsule_pair_distances_serial(std::span<const Capsule> a, std::span<const Capsule> b, std::span<double> out);
void capsule_pair_distances_omp(std::span<const Capsule> a, std::span<const Capsule> b, std::span<double> out);

}  // namespace airexo::kernels
