#include "airexo/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "airexo/core.hpp"

namespace airexo::kernels {

namespace {

void check_distance_shapes(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out) {
  if (query.size() != dim) throw Error(ErrorKind::kSchema, "query dimension mismatch");
  if (dim == 0 ? !rows.empty() : rows.size() != out.size() * dim) {
    throw Error(ErrorKind::kSchema, "feature matrix shape mismatch");
  }
}

inline double row_distance(const double* row, const double* q, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = row[d] - q[d];
    acc += diff * diff;
  }
  return acc;
}

constexpr double kInsideTol = 1e-12;

// Minimal exit for one point and one footprint. Returns true if it moved.
inline bool push_one(Point2& p, const Footprint& f) {
  Point2 c;
  const double d = footprint_distance(p, f, &c);
  if (d >= f.radius - kInsideTol) return false;
  if (d > 1e-12) {
    const double s = f.radius / d;
    p = {c.x + (p.x - c.x) * s, c.y + (p.y - c.y) * s};
  } else {
    double nx = -(f.b.y - f.a.y), ny = f.b.x - f.a.x;
    const double n = std::hypot(nx, ny);
    if (n < 1e-15) {
      nx = 1.0;
      ny = 0.0;
    } else {
      nx /= n;
      ny /= n;
    }
    p = {c.x + nx * f.radius, c.y + ny * f.radius};
  }
  return true;
}

inline bool push_point(Point2& p, std::span<const Footprint> footprints, const Bounds2& bounds, int passes) {
  bool moved = false;
  for (int pass = 0; pass < passes; ++pass) {
    bool any = false;
    for (const auto& f : footprints) any |= push_one(p, f);
    moved |= any;
    if (!any) break;
  }
  const Point2 before = p;
  p.x = std::clamp(p.x, bounds.x_min, bounds.x_max);
  p.y = std::clamp(p.y, bounds.y_min, bounds.y_max);
  return moved || !(p == before);
}

}  // namespace

void squared_distances_serial(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                              std::span<double> out) {
  check_distance_shapes(rows, dim, query, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = row_distance(rows.data() + i * dim, query.data(), dim);
}

void squared_distances_omp(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out) {
  check_distance_shapes(rows, dim, query, out);
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  const double* base = rows.data();
  const double* q = query.data();
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = row_distance(base + i * dim, q, dim);
}

void squared_distances(Exec exec, std::span<const double> rows, std::size_t dim, std::span<const double> query,
                       std::span<double> out) {
  if (exec == Exec::kOpenMP) {
    squared_distances_omp(rows, dim, query, out);
  } else {
    squared_distances_serial(rows, dim, query, out);
  }
}

double footprint_distance(const Point2& p, const Footprint& f, Point2* closest) {
  const double abx = f.b.x - f.a.x, aby = f.b.y - f.a.y;
  const double len2 = abx * abx + aby * aby;
  double t = 0.0;
  if (len2 > 1e-30) t = std::clamp(((p.x - f.a.x) * abx + (p.y - f.a.y) * aby) / len2, 0.0, 1.0);
  const Point2 c{f.a.x + t * abx, f.a.y + t * aby};
  if (closest != nullptr) *closest = c;
  return std::hypot(p.x - c.x, p.y - c.y);
}

std::size_t push_out_serial(std::span<Point2> points, std::span<const Footprint> footprints,
                            const Bounds2& bounds, int passes) {
  std::size_t moved = 0;
  for (auto& p : points) moved += push_point(p, footprints, bounds, passes) ? 1 : 0;
  return moved;
}

std::size_t push_out_omp(std::span<Point2> points, std::span<const Footprint> footprints, const Bounds2& bounds,
                         int passes) {
  std::size_t moved = 0;
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static) reduction(+ : moved) if (n * static_cast<std::ptrdiff_t>(footprints.size()) > 8192)
  for (std::ptrdiff_t i = 0; i < n; ++i) moved += push_point(points[i], footprints, bounds, passes) ? 1 : 0;
  return moved;
}

std::size_t push_out(Exec exec, std::span<Point2> points, std::span<const Footprint> footprints,
                     const Bounds2& bounds, int passes) {
  return exec == Exec::kOpenMP ? push_out_omp(points, footprints, bounds, passes)
                               : push_out_serial(points, footprints, bounds, passes);
}

void capsule_pair_distances_serial(std::span<const Capsule> a, std::span<const Capsule> b, std::span<double> out) {
  if (out.size() != a.size() * b.size()) throw Error(ErrorKind::kSchema, "pair output size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = capsule_distance(a[i], b[j]);
}

void capsule_pair_distances_omp(std::span<const Capsule> a, std::span<const Capsule> b, std::span<double> out) {
  if (out.size() != a.size() * b.size()) throw Error(ErrorKind::kSchema, "pair output size mismatch");
  const auto na = static_cast<std::ptrdiff_t>(a.size());
  const auto nb = static_cast<std::ptrdiff_t>(b.size());
#pragma omp parallel for collapse(2) schedule(static) if (na * nb > 1024)
  for (std::ptrdiff_t i = 0; i < na; ++i)
    for (std::ptrdiff_t j = 0; j < nb; ++j) out[i * nb + j] = capsule_distance(a[i], b[j]);
}

}  // namespace airexo::kernels
